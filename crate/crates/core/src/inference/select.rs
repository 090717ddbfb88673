use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{map_fit, Convergence, FitConfig, FitResult};
use crate::cohort::Cohort;
use crate::error::{domain, Error, Result};
use crate::hazard::{ModelId, Variant};

/// Cartesian grid of model triples, ordered by (K, L, M).
pub fn model_grid(ks: &[usize], ls: &[usize], ms: &[Variant]) -> Result<Vec<ModelId>> {
    let mut grid = Vec::with_capacity(ks.len() * ls.len() * ms.len());
    for &k in ks {
        for &l in ls {
            for &m in ms {
                grid.push(ModelId::new(k, l, m.index())?);
            }
        }
    }
    if grid.is_empty() {
        return domain("model grid is empty");
    }
    Ok(grid)
}

#[derive(Debug, Clone)]
pub struct SelectionReport {
    /// Successful fits in grid order.
    pub fits: Vec<FitResult>,
    pub failures: Vec<(ModelId, String)>,
    pub winner: ModelId,
}

impl SelectionReport {
    pub fn winner_fit(&self) -> &FitResult {
        self.fits
            .iter()
            .find(|f| f.model == self.winner)
            .expect("winner is among the fits")
    }

    pub fn fit(&self, model: ModelId) -> Option<&FitResult> {
        self.fits.iter().find(|f| f.model == model)
    }

    /// Models ordered by decreasing evidence.
    pub fn ranking(&self) -> Vec<(ModelId, f64)> {
        let mut r: Vec<_> = self.fits.iter().map(|f| (f.model, f.log_evidence)).collect();
        r.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        r
    }

    pub fn document(&self) -> SelectionDocument {
        SelectionDocument {
            models: self
                .fits
                .iter()
                .map(|f| ModelRow {
                    k: f.model.k,
                    l: f.model.l,
                    m: f.model.m.index(),
                    dimension: f.dimension(),
                    log_evidence: f.log_evidence,
                    best_objective: f.best_objective,
                    convergence: f.convergence,
                })
                .collect(),
            failures: self
                .failures
                .iter()
                .map(|(m, e)| FailureRow {
                    k: m.k,
                    l: m.l,
                    m: m.m.index(),
                    error: e.clone(),
                })
                .collect(),
            winner: self.winner_fit().clone(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(&self.document())?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelRow {
    pub k: usize,
    pub l: usize,
    pub m: u8,
    pub dimension: usize,
    pub log_evidence: f64,
    pub best_objective: f64,
    pub convergence: Convergence,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailureRow {
    pub k: usize,
    pub l: usize,
    pub m: u8,
    pub error: String,
}

/// Serialized form of a [`SelectionReport`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionDocument {
    pub models: Vec<ModelRow>,
    pub failures: Vec<FailureRow>,
    pub winner: FitResult,
}

/// Fit every model of the grid and pick the one with the largest evidence.
///
/// Only fits flagged as converged compete; if none converged, the best
/// finite fit is reported with a warning.
pub fn select_model(cohort: &Cohort, grid: &[ModelId], config: &FitConfig) -> Result<SelectionReport> {
    if grid.is_empty() {
        return domain("model grid is empty");
    }
    let outcomes: Vec<(ModelId, Result<FitResult>)> = grid
        .par_iter()
        .map(|&m| (m, map_fit(m, cohort, config)))
        .collect();
    let mut fits = Vec::new();
    let mut failures = Vec::new();
    for (m, outcome) in outcomes {
        match outcome {
            Ok(f) => fits.push(f),
            Err(e) => {
                log::warn!("{m} failed: {e}");
                failures.push((m, e.to_string()));
            }
        }
    }
    if fits.is_empty() {
        let detail: Vec<String> = failures.iter().map(|(m, e)| format!("{m}: {e}")).collect();
        return Err(Error::Fit(format!("every model failed: {}", detail.join("; "))));
    }
    let pick = |pool: &mut dyn Iterator<Item = &FitResult>| {
        pool.max_by(|a, b| a.log_evidence.total_cmp(&b.log_evidence).then(b.model.cmp(&a.model)))
            .map(|f| f.model)
    };
    let winner = match pick(&mut fits.iter().filter(|f| f.converged())) {
        Some(w) => w,
        None => {
            log::warn!("no fit converged cleanly; choosing among flagged fits");
            pick(&mut fits.iter()).expect("fits is non-empty")
        }
    };
    Ok(SelectionReport {
        fits,
        failures,
        winner,
    })
}
