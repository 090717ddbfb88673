use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evidence::laplace_evidence;
use super::hessian::{finite_difference_gradient, finite_difference_hessian, HessianEstimate};
use super::nelder_mead::{minimize_with_refinement, Minimum, Refinement, SimplexConfig};
use crate::cohort::Cohort;
use crate::error::{domain, Error, Result};
use crate::hazard::{CensoringChoice, Layout, ModelId, ParamSet};
use crate::likelihood::Posterior;

/// Edge length of the initial simplex in unconstrained coordinates.
const INITIAL_STEP: f64 = 0.5;
const START_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitConfig {
    pub restarts: usize,
    /// Evaluation budget of each simplex run; `None` scales with dimension.
    pub max_evals: Option<usize>,
    pub seed: u64,
    /// Convergence threshold on the spread of simplex values.
    pub tolerance: f64,
    /// Convergence threshold on the simplex diameter (max-norm).
    pub x_tolerance: f64,
    pub refine_rounds: usize,
    pub censoring: CensoringChoice,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_evals: None,
            seed: 0,
            tolerance: 1e-6,
            x_tolerance: 1e-4,
            refine_rounds: Refinement::default().rounds,
            censoring: CensoringChoice::Auto,
        }
    }
}

impl FitConfig {
    fn simplex(&self, dim: usize) -> SimplexConfig {
        SimplexConfig {
            max_evals: self.max_evals.unwrap_or(1000 + 60 * dim * dim),
            f_tol: self.tolerance,
            x_tol: self.x_tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convergence {
    Converged,
    MaxIter,
    DegenerateHessian,
}

/// Outcome of fitting one model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelId,
    pub layout: Layout,
    pub theta_star: ParamSet,
    /// Standard errors in packed (unconstrained) coordinates.
    pub sigma: Vec<f64>,
    /// Standard errors of the class weights (delta method).
    pub weight_sigma: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
    pub log_evidence: f64,
    pub restarts_used: usize,
    /// Minimum of `S = -log posterior` in packed coordinates.
    pub best_objective: f64,
    pub convergence: Convergence,
    /// Largest central-difference gradient component of `S` at the optimum.
    pub max_gradient: f64,
    pub evaluations: usize,
}

impl FitResult {
    pub fn dimension(&self) -> usize {
        self.sigma.len()
    }

    fn risk_block(&self, risk: usize) -> usize {
        self.layout.risk_offset(risk)
    }

    pub fn frailty_sigma(&self, risk: usize, class: usize) -> f64 {
        self.sigma[self.risk_block(risk) + class]
    }

    pub fn association_sigma(&self, risk: usize, class: usize, mu: usize) -> f64 {
        let m = self.model;
        let row = m.association_row(class);
        self.sigma[self.risk_block(risk) + m.l + row * self.layout.covariates + mu]
    }

    /// Standard error of free log knot `knot` (1-based, the pinned anchor is 0).
    pub fn knot_sigma(&self, risk: usize, class: usize, knot: usize) -> f64 {
        if knot == 0 {
            return 0.0;
        }
        let m = self.model;
        let base = self.risk_block(risk) + m.l + m.association_rows() * self.layout.covariates;
        self.sigma[base + m.spline_row(class) * (m.k - 1) + knot - 1]
    }

    pub fn converged(&self) -> bool {
        self.convergence == Convergence::Converged
    }
}

fn restart_rng(seed: u64, model: ModelId, restart: usize) -> ChaCha8Rng {
    let tag = (model.k as u64) << 40 ^ (model.l as u64) << 20 ^ model.m.index() as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(restart as u64);
    rng
}

/// Random start drawn from the prior-like initialisation scheme.
fn draw_start(layout: &Layout, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let unit = Normal::new(0.0, 1.0).unwrap();
    let knot = Normal::new(0.0, 0.5).unwrap();
    let m = layout.model;
    let mut x = Vec::with_capacity(layout.dimension());
    x.extend((0..m.l - 1).map(|_| unit.sample(rng)));
    for _ in 0..layout.risks {
        x.extend((0..m.l + m.association_rows() * layout.covariates).map(|_| unit.sample(rng)));
        x.extend((0..m.spline_rows() * (m.k - 1)).map(|_| knot.sample(rng)));
    }
    if layout.censoring == crate::hazard::CensoringMode::Parametric {
        x.extend((0..m.k).map(|_| knot.sample(rng)));
    }
    x
}

fn run_restart(posterior: &Posterior, config: &FitConfig, model: ModelId, restart: usize) -> Option<Minimum> {
    let layout = *posterior.layout();
    let mut rng = restart_rng(config.seed, model, restart);
    let energy = |x: &[f64]| posterior.energy(x);
    let start = (0..START_ATTEMPTS)
        .map(|_| draw_start(&layout, &mut rng))
        .find(|x| energy(x).is_finite())?;
    let refinement = Refinement {
        rounds: config.refine_rounds,
        ..Refinement::default()
    };
    let result = minimize_with_refinement(
        &energy,
        &start,
        INITIAL_STEP,
        &config.simplex(layout.dimension()),
        &refinement,
        &mut rng,
    );
    log::debug!(
        "{model} restart {restart}: S = {:.6} after {} evaluations",
        result.value,
        result.evaluations
    );
    result.value.is_finite().then_some(result)
}

/// Standard errors of the weights from the logit covariance block.
fn weight_sigma(weights: &[f64], covariance: &DMatrix<f64>) -> Vec<f64> {
    let l = weights.len();
    if l == 1 {
        return vec![0.0];
    }
    let jac = DMatrix::from_fn(l, l - 1, |a, k| weights[a] * (if a == k { 1.0 } else { 0.0 } - weights[k]));
    let block = covariance.view((0, 0), (l - 1, l - 1));
    let cov_w = &jac * block * jac.transpose();
    (0..l).map(|a| cov_w[(a, a)].max(0.0).sqrt()).collect()
}

/// Curvature of `S` at the packed parameter vector of `theta_star`.
pub fn estimate_hessian(theta_star: &ParamSet, cohort: &Cohort) -> Result<HessianEstimate> {
    let posterior = Posterior::new(cohort, theta_star.layout())?;
    let x = theta_star.pack();
    Ok(finite_difference_hessian(&|v: &[f64]| posterior.energy(v), &x))
}

/// Maximum a posteriori fit of one model with random restarts.
pub fn map_fit(model: ModelId, cohort: &Cohort, config: &FitConfig) -> Result<FitResult> {
    if config.restarts == 0 {
        return domain("at least one restart is required");
    }
    if !cohort.is_complete() {
        return domain("cohort has missing covariates; standardize it first");
    }
    let layout = Layout {
        model,
        risks: cohort.risks(),
        covariates: cohort.covariate_count(),
        horizon: cohort.horizon(),
        censoring: config.censoring.resolve(cohort),
    };
    if !(layout.horizon > 0.0) {
        return domain("cohort horizon must be positive");
    }
    let posterior = Posterior::new(cohort, layout)?;
    let runs: Vec<Option<Minimum>> = (0..config.restarts)
        .into_par_iter()
        .map(|r| run_restart(&posterior, config, model, r))
        .collect();
    let restarts_used = runs.iter().filter(|r| r.is_some()).count();
    let evaluations = runs.iter().flatten().map(|r| r.evaluations).sum();
    let best = runs
        .into_iter()
        .flatten()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or_else(|| Error::Fit(format!("{model}: every restart diverged")))?;

    let theta_star = ParamSet::unpack(&best.x, &layout)?.canonicalize();
    let x_star = theta_star.pack();
    let energy = |v: &[f64]| posterior.energy(v);
    let best_objective = energy(&x_star);
    let hess = finite_difference_hessian(&energy, &x_star);
    let evidence = laplace_evidence(best_objective, &hess.matrix)?;
    let sigma: Vec<f64> = evidence.covariance.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect();
    let weight_sigma = weight_sigma(&theta_star.weights, &evidence.covariance);
    let convergence = if evidence.floored {
        Convergence::DegenerateHessian
    } else if !best.converged {
        Convergence::MaxIter
    } else {
        Convergence::Converged
    };
    let max_gradient = hess.max_abs_gradient();
    log::info!(
        "{model}: S* = {best_objective:.4}, log Z = {:.4}, |grad| = {max_gradient:.2e}, {convergence:?}",
        evidence.log_evidence
    );
    Ok(FitResult {
        model,
        layout,
        theta_star,
        sigma,
        weight_sigma,
        hessian: hess.matrix.row_iter().map(|r| r.iter().copied().collect()).collect(),
        log_evidence: evidence.log_evidence,
        restarts_used,
        best_objective,
        convergence,
        max_gradient,
        evaluations,
    })
}

/// Central-difference gradient of `S` at the packed optimum of a fit.
pub fn posterior_gradient(fit: &FitResult, cohort: &Cohort) -> Result<Vec<f64>> {
    let posterior = Posterior::new(cohort, fit.layout)?;
    Ok(finite_difference_gradient(&|v: &[f64]| posterior.energy(v), &fit.theta_star.pack()))
}
