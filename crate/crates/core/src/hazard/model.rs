use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Which parameter blocks are allowed to differ between latent classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Variant {
    /// Class-specific frailties only.
    Frailty = 1,
    /// Class-specific frailties and associations.
    Association = 2,
    /// Class-specific frailties, associations and base hazards.
    BaseHazard = 3,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Frailty, Variant::Association, Variant::BaseHazard];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn class_associations(self) -> bool {
        self != Variant::Frailty
    }

    pub fn class_base_hazards(self) -> bool {
        self == Variant::BaseHazard
    }
}

impl TryFrom<u8> for Variant {
    type Error = Error;

    fn try_from(m: u8) -> Result<Self> {
        match m {
            1 => Ok(Variant::Frailty),
            2 => Ok(Variant::Association),
            3 => Ok(Variant::BaseHazard),
            other => domain(format!("hazard variant must be 1, 2 or 3, got {other}")),
        }
    }
}

impl From<Variant> for u8 {
    fn from(v: Variant) -> u8 {
        v.index()
    }
}

/// The model triple: spline anchor count, latent class count, hazard variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModelId {
    pub k: usize,
    pub l: usize,
    pub m: Variant,
}

impl ModelId {
    pub fn new(k: usize, l: usize, m: u8) -> Result<Self> {
        if k == 0 || l == 0 {
            return domain(format!("model needs K >= 1 and L >= 1, got K={k}, L={l}"));
        }
        Ok(Self {
            k,
            l,
            m: Variant::try_from(m)?,
        })
    }

    /// Rows in each risk's association block.
    pub fn association_rows(&self) -> usize {
        if self.m.class_associations() {
            self.l
        } else {
            1
        }
    }

    /// Base hazard splines per true risk.
    pub fn spline_rows(&self) -> usize {
        if self.m.class_base_hazards() {
            self.l
        } else {
            1
        }
    }

    pub fn association_row(&self, class: usize) -> usize {
        if self.m.class_associations() {
            class
        } else {
            0
        }
    }

    pub fn spline_row(&self, class: usize) -> usize {
        if self.m.class_base_hazards() {
            class
        } else {
            0
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(K={}, L={}, M={})", self.k, self.l, self.m.index())
    }
}

/// How end-of-trial censoring enters the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CensoringMode {
    /// The censoring risk has its own class-independent base hazard spline.
    Parametric,
    /// Censoring only happens at the trial end; its hazard factors drop out.
    Administrative,
}

/// User-facing censoring selection; `Auto` resolves against the cohort.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CensoringChoice {
    #[default]
    Auto,
    Parametric,
    Administrative,
}

impl CensoringChoice {
    /// Administrative when every censored individual sits at the horizon
    /// (within 1e-9), parametric otherwise.
    pub fn resolve(self, cohort: &crate::cohort::Cohort) -> CensoringMode {
        match self {
            CensoringChoice::Parametric => CensoringMode::Parametric,
            CensoringChoice::Administrative => CensoringMode::Administrative,
            CensoringChoice::Auto => {
                let end = cohort.horizon();
                let all_at_end = cohort
                    .individuals()
                    .iter()
                    .filter(|i| i.event == 0)
                    .all(|i| (i.time - end).abs() <= 1e-9);
                if all_at_end {
                    CensoringMode::Administrative
                } else {
                    CensoringMode::Parametric
                }
            }
        }
    }
}

impl FromStr for CensoringChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "parametric" => Ok(Self::Parametric),
            "administrative" => Ok(Self::Administrative),
            other => domain(format!("unknown censoring mode `{other}`")),
        }
    }
}

/// Fixed shape information needed to lay out a flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub model: ModelId,
    pub risks: usize,
    pub covariates: usize,
    pub horizon: f64,
    pub censoring: CensoringMode,
}

impl Layout {
    pub fn dimension(&self) -> usize {
        param_count(self.model, self.risks, self.covariates, self.censoring)
    }

    pub(crate) fn per_risk(&self) -> usize {
        let m = &self.model;
        m.l + m.association_rows() * self.covariates + m.spline_rows() * (m.k - 1)
    }

    pub(crate) fn risk_offset(&self, r: usize) -> usize {
        (self.model.l - 1) + (r - 1) * self.per_risk()
    }
}

/// Number of free parameters: `L-1` weight logits, then per true risk `L`
/// frailties, the association block and the free spline knots (the first
/// knot of each true-risk spline is pinned), plus `K` censoring knots in
/// parametric mode.
pub fn param_count(model: ModelId, risks: usize, covariates: usize, censoring: CensoringMode) -> usize {
    let per_risk =
        model.l + model.association_rows() * covariates + model.spline_rows() * (model.k - 1);
    let censoring_knots = match censoring {
        CensoringMode::Parametric => model.k,
        CensoringMode::Administrative => 0,
    };
    (model.l - 1) + risks * per_risk + censoring_knots
}
