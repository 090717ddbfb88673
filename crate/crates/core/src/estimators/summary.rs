use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::inference::FitResult;

/// Normal quantile used for the 95% interval.
pub const Z95: f64 = 1.96;

/// Hazard-ratio view of one association parameter. Covariates are
/// standardized, so a unit of `beta` corresponds to half an interquartile
/// range and `HR = exp(2 beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssociationSummary {
    pub beta: f64,
    pub sigma: f64,
    pub hr: f64,
    pub ci95: [f64; 2],
    pub p: f64,
}

pub fn association_summary(beta: f64, sigma: f64) -> Result<AssociationSummary> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return domain(format!("standard error {sigma} must be positive"));
    }
    if !beta.is_finite() {
        return domain("association must be finite");
    }
    Ok(AssociationSummary {
        beta,
        sigma,
        hr: (2.0 * beta).exp(),
        ci95: [(2.0 * (beta - Z95 * sigma)).exp(), (2.0 * (beta + Z95 * sigma)).exp()],
        p: libm::erfc(beta.abs() / (std::f64::consts::SQRT_2 * sigma)),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssociationRow {
    pub risk: usize,
    /// 1-based class label.
    pub class: usize,
    pub covariate: String,
    #[serde(flatten)]
    pub summary: AssociationSummary,
}

/// Summaries of every association of a fit; shared blocks are reported
/// once per class so each row is self-contained.
pub fn summarize_associations(fit: &FitResult, names: &[String]) -> Result<Vec<AssociationRow>> {
    let p = &fit.theta_star;
    let mut rows = Vec::new();
    for r in 1..=p.risks {
        for c in 0..p.model.l {
            for (mu, beta) in p.association(r, c).iter().enumerate() {
                rows.push(AssociationRow {
                    risk: r,
                    class: c + 1,
                    covariate: names.get(mu).cloned().unwrap_or_else(|| format!("z{}", mu + 1)),
                    summary: association_summary(*beta, fit.association_sigma(r, c, mu))?,
                });
            }
        }
    }
    Ok(rows)
}
