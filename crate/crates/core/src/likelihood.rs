//! Event densities, log-likelihood, priors and the log-posterior objective.

use rayon::prelude::*;

use crate::cohort::Cohort;
use crate::error::{domain, Error, Result};
use crate::hazard::{GridPosition, KnotGrid, Layout, ParamSet};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Standard deviation of the Gaussian prior on free log knot values.
pub const KNOT_PRIOR_SD: f64 = 2.0;
const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub log_likelihood: f64,
    pub log_prior: f64,
    pub log_posterior: f64,
}

/// Per-evaluation tables: cumulative rates at the anchors of every spline,
/// log weights and exponentiated frailties.
pub(crate) struct SplineTables {
    grid: KnotGrid,
    risks: Vec<Vec<Vec<f64>>>,
    censoring: Option<Vec<f64>>,
    log_weights: Vec<f64>,
    /// `[risk - 1][class]`
    exp_frailties: Vec<Vec<f64>>,
}

impl SplineTables {
    pub(crate) fn new(params: &ParamSet) -> Self {
        let grid = KnotGrid::new(params.model.k, params.horizon);
        let table = |logs: &[f64]| {
            let mut v = Vec::with_capacity(logs.len());
            grid.cumulative_at_knots(logs, &mut v);
            v
        };
        Self {
            grid,
            risks: params
                .splines
                .iter()
                .map(|rows| rows.iter().map(|s| table(&s.log_values)).collect())
                .collect(),
            censoring: params.censoring.as_ref().map(|s| table(&s.log_values)),
            log_weights: params.weights.iter().map(|w| w.ln()).collect(),
            exp_frailties: params
                .frailties
                .iter()
                .map(|row| row.iter().map(|f| f.exp()).collect())
                .collect(),
        }
    }

    pub(crate) fn grid(&self) -> KnotGrid {
        self.grid
    }

    /// Log rate and cumulative rate of the censoring spline, if any.
    pub(crate) fn censoring_at(&self, params: &ParamSet, pos: GridPosition) -> Option<(f64, f64)> {
        let c = params.censoring.as_ref()?;
        Some(self.grid.evaluate(pos, &c.log_values, self.censoring.as_ref()?))
    }

    #[inline]
    pub(crate) fn risk_at(&self, params: &ParamSet, risk: usize, row: usize, pos: GridPosition) -> (f64, f64) {
        self.grid.evaluate(pos, &params.splines[risk - 1][row].log_values, &self.risks[risk - 1][row])
    }
}

/// Reusable buffers for [`class_log_terms`].
#[derive(Debug, Clone, Default)]
pub(crate) struct Scratch {
    pub(crate) terms: Vec<f64>,
    exposure: Vec<f64>,
    dot: Vec<f64>,
    exp_dot: Vec<f64>,
    log_rate: Vec<f64>,
    cum: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(params: &ParamSet) -> Self {
        let m = params.model;
        Self {
            terms: vec![0.0; m.l],
            exposure: vec![0.0; m.l],
            dot: vec![0.0; m.association_rows()],
            exp_dot: vec![0.0; m.association_rows()],
            log_rate: vec![0.0; m.spline_rows()],
            cum: vec![0.0; m.spline_rows()],
        }
    }
}

/// Per-class log terms `log w_l + log P(t, r | z, l)` without the censoring
/// factors, which are common to all classes. Written to `scratch.terms`.
///
/// For `event = 0` only the survival factor of the true risks enters.
/// Shared association rows and splines are evaluated once per individual.
pub(crate) fn class_log_terms(
    params: &ParamSet,
    tables: &SplineTables,
    pos: GridPosition,
    z: &[f64],
    event: usize,
    scratch: &mut Scratch,
) {
    let m = params.model;
    let l = m.l;
    scratch.terms[..l].copy_from_slice(&tables.log_weights);
    scratch.exposure[..l].iter_mut().for_each(|e| *e = 0.0);
    for r in 1..=params.risks {
        for (row, beta) in params.associations[r - 1].iter().enumerate() {
            let d: f64 = beta.iter().zip(z).map(|(b, x)| b * x).sum();
            scratch.dot[row] = d;
            scratch.exp_dot[row] = d.exp();
        }
        for row in 0..m.spline_rows() {
            let (lr, cum) = tables.risk_at(params, r, row, pos);
            scratch.log_rate[row] = lr;
            scratch.cum[row] = cum;
        }
        let frail = &params.frailties[r - 1];
        let exp_frail = &tables.exp_frailties[r - 1];
        for c in 0..l {
            let a = m.association_row(c);
            let s = m.spline_row(c);
            scratch.exposure[c] += exp_frail[c] * scratch.exp_dot[a] * scratch.cum[s];
            if r == event {
                scratch.terms[c] += scratch.log_rate[s] + frail[c] + scratch.dot[a];
            }
        }
    }
    for c in 0..l {
        scratch.terms[c] -= scratch.exposure[c];
    }
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn log_density_at(params: &ParamSet, tables: &SplineTables, pos: GridPosition, z: &[f64], event: usize, scratch: &mut Scratch) -> f64 {
    class_log_terms(params, tables, pos, z, event, scratch);
    let mut value = log_sum_exp(&scratch.terms);
    if let Some((log_rate0, cum0)) = tables.censoring_at(params, pos) {
        value -= cum0;
        if event == 0 {
            value += log_rate0;
        }
    }
    value
}

/// Log of the probability density to report `(t, r)` given covariates `z`.
///
/// In administrative mode the censoring hazard factors are omitted and an
/// `r = 0` report contributes only the survival probability.
pub fn log_event_density(params: &ParamSet, z: &[f64], t: f64, risk: usize) -> Result<f64> {
    params.validate()?;
    if risk > params.risks {
        return domain(format!("risk {risk} outside 0..={}", params.risks));
    }
    if z.len() != params.covariates {
        return Err(Error::Dimension {
            expected: params.covariates,
            found: z.len(),
        });
    }
    if !(0.0..=params.horizon).contains(&t) {
        return domain(format!("time {t} outside [0, {}]", params.horizon));
    }
    let tables = SplineTables::new(params);
    let pos = tables.grid().locate(t);
    let mut scratch = Scratch::new(params);
    Ok(log_density_at(params, &tables, pos, z, risk, &mut scratch))
}

pub fn event_density(params: &ParamSet, z: &[f64], t: f64, risk: usize) -> Result<f64> {
    log_event_density(params, z, t, risk).map(f64::exp)
}

/// Cohort laid out for repeated likelihood evaluation at a fixed knot grid.
#[derive(Debug, Clone)]
pub struct LikelihoodData {
    grid: KnotGrid,
    positions: Vec<GridPosition>,
    events: Vec<usize>,
    covariates: Vec<f64>,
    ids: Vec<String>,
    p: usize,
    risks: usize,
}

impl LikelihoodData {
    pub fn new(cohort: &Cohort, k: usize, horizon: f64) -> Result<Self> {
        let rows = cohort.covariate_rows()?;
        let grid = KnotGrid::new(k, horizon);
        let mut clamped = 0usize;
        let positions = cohort
            .individuals()
            .iter()
            .map(|ind| {
                let t = if ind.time > horizon {
                    clamped += 1;
                    horizon
                } else {
                    ind.time
                };
                grid.locate(t)
            })
            .collect();
        if clamped > 0 {
            log::warn!("{clamped} event times beyond the horizon {horizon} were clamped");
        }
        Ok(Self {
            grid,
            positions,
            events: cohort.individuals().iter().map(|i| i.event).collect(),
            covariates: rows.into_iter().flatten().collect(),
            ids: cohort.individuals().iter().map(|i| i.id.clone()).collect(),
            p: cohort.covariate_count(),
            risks: cohort.risks(),
        })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    fn check(&self, params: &ParamSet) -> Result<()> {
        if params.risks != self.risks || params.covariates != self.p {
            return domain(format!(
                "parameters for R={}, P={} do not match cohort with R={}, P={}",
                params.risks, params.covariates, self.risks, self.p
            ));
        }
        if params.model.k != self.grid.k || params.horizon != self.grid.horizon {
            return domain("parameters and cohort layout use different knot grids");
        }
        Ok(())
    }

    fn chunk_sum(&self, params: &ParamSet, tables: &SplineTables, range: std::ops::Range<usize>) -> f64 {
        let mut scratch = Scratch::new(params);
        let mut sum = 0.0;
        for i in range {
            let z = &self.covariates[i * self.p..(i + 1) * self.p];
            sum += log_density_at(params, tables, self.positions[i], z, self.events[i], &mut scratch);
        }
        sum
    }

    /// Per-individual log densities in cohort order.
    pub fn individual_log_densities(&self, params: &ParamSet) -> Result<Vec<f64>> {
        self.check(params)?;
        let tables = SplineTables::new(params);
        let mut scratch = Scratch::new(params);
        Ok((0..self.len())
            .map(|i| {
                let z = &self.covariates[i * self.p..(i + 1) * self.p];
                log_density_at(params, &tables, self.positions[i], z, self.events[i], &mut scratch)
            })
            .collect())
    }

    /// Sum of log densities. Chunk boundaries are fixed, so the result is
    /// bit-identical for any number of worker threads.
    pub fn log_likelihood(&self, params: &ParamSet) -> Result<f64> {
        self.check(params)?;
        Ok(self.log_likelihood_unchecked(params))
    }

    pub(crate) fn log_likelihood_unchecked(&self, params: &ParamSet) -> f64 {
        let tables = SplineTables::new(params);
        let n = self.len();
        let partial: Vec<f64> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| self.chunk_sum(params, &tables, c * CHUNK..((c + 1) * CHUNK).min(n)))
            .collect();
        let total: f64 = partial.iter().sum();
        if total == f64::NEG_INFINITY {
            if let Ok(dens) = self.individual_log_densities(params) {
                if let Some(i) = dens.iter().position(|d| *d == f64::NEG_INFINITY) {
                    log::warn!("individual {} has zero density", self.ids[i]);
                }
            }
        }
        total
    }
}

/// Sum of log densities of every individual in `cohort`.
///
/// Zero-density individuals yield negative infinity and a warning naming
/// the first one.
pub fn log_likelihood(params: &ParamSet, cohort: &Cohort) -> Result<f64> {
    params.validate()?;
    LikelihoodData::new(cohort, params.model.k, params.horizon)?.log_likelihood(params)
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Log-prior density on the simplex: flat weights, standard normal frailties
/// and associations, Gaussian free log knots with sd [`KNOT_PRIOR_SD`].
pub fn log_prior(params: &ParamSet) -> f64 {
    let weights = ln_factorial(params.model.l - 1);
    let gaussian = |x: f64| -0.5 * x * x - 0.5 * LN_2PI;
    let knot = |y: f64| gaussian(y / KNOT_PRIOR_SD) - KNOT_PRIOR_SD.ln();
    let betas: f64 = params
        .frailties
        .iter()
        .flatten()
        .chain(params.associations.iter().flatten().flatten())
        .map(|&b| gaussian(b))
        .sum();
    let knots: f64 = params
        .splines
        .iter()
        .flatten()
        .flat_map(|s| s.log_values[1..].iter())
        .chain(params.censoring.iter().flat_map(|s| s.log_values.iter()))
        .map(|&y| knot(y))
        .sum();
    weights + betas + knots
}

/// Log-determinant of the softmax map from free logits to simplex
/// coordinates, `sum_l log w_l` (zero for a single class).
pub fn log_weight_jacobian(weights: &[f64]) -> f64 {
    if weights.len() < 2 {
        return 0.0;
    }
    weights.iter().map(|w| w.ln()).sum()
}

/// Log-prior density of the packed (unconstrained) parameter vector.
pub fn log_prior_unconstrained(params: &ParamSet) -> f64 {
    log_prior(params) + log_weight_jacobian(&params.weights)
}

pub fn evaluate(params: &ParamSet, cohort: &Cohort) -> Result<ObjectiveValue> {
    let log_likelihood = log_likelihood(params, cohort)?;
    let log_prior = log_prior(params);
    Ok(ObjectiveValue {
        log_likelihood,
        log_prior,
        log_posterior: log_likelihood + log_prior,
    })
}

/// Negative log-posterior over the packed parameter vector, the quantity the
/// optimiser minimises and whose curvature gives the evidence.
#[derive(Debug, Clone)]
pub struct Posterior {
    data: LikelihoodData,
    layout: Layout,
}

impl Posterior {
    pub fn new(cohort: &Cohort, layout: Layout) -> Result<Self> {
        if cohort.risks() != layout.risks || cohort.covariate_count() != layout.covariates {
            return domain("layout does not match the cohort");
        }
        Ok(Self {
            data: LikelihoodData::new(cohort, layout.model.k, layout.horizon)?,
            layout,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn data(&self) -> &LikelihoodData {
        &self.data
    }

    pub fn dimension(&self) -> usize {
        self.layout.dimension()
    }

    pub fn evaluate(&self, params: &ParamSet) -> Result<ObjectiveValue> {
        let log_likelihood = self.data.log_likelihood(params)?;
        let log_prior = log_prior_unconstrained(params);
        Ok(ObjectiveValue {
            log_likelihood,
            log_prior,
            log_posterior: log_likelihood + log_prior,
        })
    }

    /// `S(x) = -log posterior(x)`; non-finite values map to `+inf`.
    pub fn energy(&self, x: &[f64]) -> f64 {
        let Ok(params) = ParamSet::unpack(x, &self.layout) else {
            return f64::INFINITY;
        };
        let value = -(self.data.log_likelihood_unchecked(&params) + log_prior_unconstrained(&params));
        if value.is_finite() {
            value
        } else {
            f64::INFINITY
        }
    }
}
