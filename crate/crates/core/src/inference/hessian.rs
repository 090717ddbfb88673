//! Finite-difference curvature of the negative log-posterior.

use nalgebra::DMatrix;

/// Relative step used for parameter `j`: `1e-4 * max(1, |x_j|)`.
pub fn step_size(x: f64) -> f64 {
    1e-4 * x.abs().max(1.0)
}

#[derive(Debug, Clone)]
pub struct HessianEstimate {
    /// Symmetrised matrix `(H + H^T) / 2`.
    pub matrix: DMatrix<f64>,
    /// Largest relative difference between mirrored off-diagonal entries
    /// of the raw estimate.
    pub max_asymmetry: f64,
    /// Central-difference gradient at the expansion point.
    pub gradient: Vec<f64>,
}

impl HessianEstimate {
    pub fn max_abs_gradient(&self) -> f64 {
        self.gradient.iter().fold(0.0, |m, g| m.max(g.abs()))
    }
}

/// Central second differences of `f` around `x`.
///
/// Diagonal entries use the three-point stencil and off-diagonal entries the
/// four-point cross stencil, each mirrored pair computed independently.
pub fn finite_difference_hessian(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> HessianEstimate {
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|&v| step_size(v)).collect();
    let f0 = f(x);
    let mut probe = x.to_vec();
    let at = |probe: &mut Vec<f64>, shifts: &[(usize, f64)]| {
        for &(j, d) in shifts {
            probe[j] += d;
        }
        let v = f(probe);
        for &(j, d) in shifts {
            probe[j] -= d;
        }
        v
    };

    let mut gradient = vec![0.0; n];
    let mut raw = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let fp = at(&mut probe, &[(j, h[j])]);
        let fm = at(&mut probe, &[(j, -h[j])]);
        gradient[j] = (fp - fm) / (2.0 * h[j]);
        raw[(j, j)] = (fp - 2.0 * f0 + fm) / (h[j] * h[j]);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let pp = at(&mut probe, &[(i, h[i]), (j, h[j])]);
            let pm = at(&mut probe, &[(i, h[i]), (j, -h[j])]);
            let mp = at(&mut probe, &[(i, -h[i]), (j, h[j])]);
            let mm = at(&mut probe, &[(i, -h[i]), (j, -h[j])]);
            let v = (pp - pm - mp + mm) / (4.0 * h[i] * h[j]);
            raw[(i, j)] = v;
            raw[(j, i)] = v;
        }
    }
    let mut max_asymmetry: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let scale = raw[(i, j)].abs().max(raw[(j, i)].abs()).max(1e-300);
            max_asymmetry = max_asymmetry.max((raw[(i, j)] - raw[(j, i)]).abs() / scale);
        }
    }
    let matrix = (&raw + raw.transpose()) * 0.5;
    HessianEstimate {
        matrix,
        max_asymmetry,
        gradient,
    }
}

/// Central-difference gradient with the same step rule as the Hessian.
pub fn finite_difference_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|j| {
            let h = step_size(x[j]);
            probe[j] = x[j] + h;
            let fp = f(&probe);
            probe[j] = x[j] - h;
            let fm = f(&probe);
            probe[j] = x[j];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}
