//! Downhill simplex minimiser with dimension-adaptive coefficients and a
//! stochastic refinement stage.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy)]
pub struct SimplexConfig {
    /// Objective evaluations allowed for one simplex run.
    pub max_evals: usize,
    /// Convergence threshold on the spread of vertex values.
    pub f_tol: f64,
    /// Convergence threshold on the largest vertex distance from the best.
    pub x_tol: f64,
}

impl Default for SimplexConfig {
    fn default() -> Self {
        Self {
            max_evals: 20_000,
            f_tol: 1e-8,
            x_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Axis-aligned simplex of edge `step` around `x0`.
pub fn axis_simplex(x0: &[f64], step: f64) -> Vec<Vec<f64>> {
    let mut simplex = vec![x0.to_vec()];
    for j in 0..x0.len() {
        let mut v = x0.to_vec();
        v[j] += step;
        simplex.push(v);
    }
    simplex
}

struct Vertex {
    x: Vec<f64>,
    f: f64,
}

/// Minimise `f` starting from the given `n + 1` vertices.
pub fn minimize(f: &dyn Fn(&[f64]) -> f64, simplex: Vec<Vec<f64>>, cfg: &SimplexConfig) -> Minimum {
    let n = simplex[0].len();
    if n == 0 {
        let value = f(&[]);
        return Minimum {
            x: Vec::new(),
            value,
            evaluations: 1,
            converged: true,
        };
    }
    let nf = n as f64;
    // Gao & Han coefficients keep the simplex from collapsing in higher dimensions.
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut verts: Vec<Vertex> = simplex
        .into_iter()
        .map(|x| {
            let f = eval(&x);
            Vertex { x, f }
        })
        .collect();

    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut converged = false;
    loop {
        verts.sort_by(|a, b| a.f.total_cmp(&b.f));
        let best = verts[0].f;
        let worst = verts[n].f;
        let spread = (worst - best).abs();
        let size = verts[1..]
            .iter()
            .map(|v| v.x.iter().zip(&verts[0].x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread.is_finite() && spread <= cfg.f_tol && size <= cfg.x_tol {
            converged = true;
            break;
        }
        if evals.get() >= cfg.max_evals {
            break;
        }

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for v in &verts[..n] {
            for (c, x) in centroid.iter_mut().zip(&v.x) {
                *c += x / nf;
            }
        }
        let along = |coef: f64, out: &mut Vec<f64>, worst_x: &[f64], centroid: &[f64]| {
            for ((o, c), w) in out.iter_mut().zip(centroid).zip(worst_x) {
                *o = c + coef * (c - w);
            }
        };

        along(alpha, &mut trial, &verts[n].x, &centroid);
        let f_r = eval(&trial);
        if f_r < verts[0].f {
            let mut expanded = vec![0.0; n];
            along(alpha * gamma, &mut expanded, &verts[n].x, &centroid);
            let f_e = eval(&expanded);
            if f_e < f_r {
                verts[n] = Vertex { x: expanded, f: f_e };
            } else {
                verts[n] = Vertex { x: trial.clone(), f: f_r };
            }
            continue;
        }
        if f_r < verts[n - 1].f {
            verts[n] = Vertex { x: trial.clone(), f: f_r };
            continue;
        }
        let (coef, reference) = if f_r < verts[n].f {
            (alpha * rho, f_r)
        } else {
            (-rho, verts[n].f)
        };
        let mut contracted = vec![0.0; n];
        along(coef, &mut contracted, &verts[n].x, &centroid);
        let f_c = eval(&contracted);
        if f_c <= reference {
            verts[n] = Vertex { x: contracted, f: f_c };
            continue;
        }
        let (head, tail) = verts.split_at_mut(1);
        let best_x = &head[0].x;
        for v in tail.iter_mut() {
            for (x, b) in v.x.iter_mut().zip(best_x) {
                *x = b + sigma * (*x - b);
            }
            v.f = eval(&v.x);
        }
    }
    verts.sort_by(|a, b| a.f.total_cmp(&b.f));
    let best = verts.swap_remove(0);
    Minimum {
        x: best.x,
        value: best.f,
        evaluations: evals.get(),
        converged,
    }
}

/// Schedule of the perturbation rounds run after the first convergence.
#[derive(Debug, Clone, Copy)]
pub struct Refinement {
    pub rounds: usize,
    pub initial_scale: f64,
    pub decay: f64,
}

impl Default for Refinement {
    fn default() -> Self {
        Self {
            rounds: 10,
            initial_scale: 0.1,
            decay: 0.7,
        }
    }
}

/// Simplex search followed by rounds of Gaussian jitter: each round rebuilds
/// the simplex around the incumbent with noise of decaying scale, reruns the
/// search and keeps any improvement.
pub fn minimize_with_refinement<R: Rng>(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    cfg: &SimplexConfig,
    refinement: &Refinement,
    rng: &mut R,
) -> Minimum {
    let mut best = minimize(f, axis_simplex(x0, step), cfg);
    let mut evaluations = best.evaluations;
    let mut scale = refinement.initial_scale;
    for _ in 0..refinement.rounds {
        let n = best.x.len();
        let mut simplex = vec![best.x.clone()];
        for _ in 0..n {
            simplex.push(
                best.x
                    .iter()
                    .map(|&c| {
                        let g: f64 = StandardNormal.sample(rng);
                        c + scale * g
                    })
                    .collect(),
            );
        }
        let candidate = minimize(f, simplex, cfg);
        evaluations += candidate.evaluations;
        log::trace!(
            "refinement scale {scale:.4}: {:.6} -> {:.6} in {} evaluations",
            best.value,
            candidate.value,
            candidate.evaluations
        );
        if candidate.value <= best.value {
            best = candidate;
        }
        scale *= refinement.decay;
    }
    best.evaluations = evaluations;
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rosenbrock(x: &[f64]) -> f64 {
        x.windows(2)
            .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
            .sum()
    }

    #[test]
    fn finds_quadratic_minimum() {
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * (v - 0.5).powi(2)).sum::<f64>();
        let m = minimize(&f, axis_simplex(&[3.0, -2.0, 1.0, 0.0], 1.0), &SimplexConfig::default());
        assert!(m.converged);
        for v in &m.x {
            assert!((v - 0.5).abs() < 1e-5, "{:?}", m.x);
        }
    }

    #[test]
    fn rosenbrock_with_refinement() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = minimize_with_refinement(
            &rosenbrock,
            &[-1.2, 1.0, -0.5, 0.8],
            0.5,
            &SimplexConfig::default(),
            &Refinement::default(),
            &mut rng,
        );
        for v in &m.x {
            assert!((v - 1.0).abs() < 1e-3, "{:?}", m.x);
        }
    }

    #[test]
    fn nan_regions_are_avoided() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 1.0).powi(2) + x[1] * x[1] };
        let m = minimize(&f, axis_simplex(&[0.5, 0.5], 0.3), &SimplexConfig::default());
        assert!((m.x[0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn evaluation_budget_is_respected() {
        let cfg = SimplexConfig {
            max_evals: 50,
            ..SimplexConfig::default()
        };
        let m = minimize(&rosenbrock, axis_simplex(&[-1.2, 1.0], 0.1), &cfg);
        assert!(!m.converged);
        assert!(m.evaluations <= 50 + 3);
    }
}
