//! Synthetic cohorts with latent classes and individually independent risks.
//!
//! Each individual is assigned a class, draws standard-normal covariates and
//! one latent event time per true risk by inverse-transform sampling; the
//! earliest time is reported, or end-of-trial censoring if it falls past
//! the trial end.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, Individual};
use crate::error::{domain, Result};
use crate::hazard::BaseHazardSpline;

/// Base hazard families available to the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum BaseRate {
    Constant { rate: f64 },
    /// `lambda0 * exp(alpha * t)`
    Exponential { lambda0: f64, alpha: f64 },
    Spline { spline: BaseHazardSpline },
}

impl BaseRate {
    pub fn validate(&self) -> Result<()> {
        match self {
            BaseRate::Constant { rate } if !(*rate > 0.0 && rate.is_finite()) => {
                domain(format!("constant rate {rate} must be positive"))
            }
            BaseRate::Exponential { lambda0, alpha } if !(*lambda0 > 0.0 && alpha.is_finite()) => {
                domain(format!("exponential rate needs lambda0 > 0, got {lambda0}"))
            }
            _ => Ok(()),
        }
    }

    pub fn rate(&self, t: f64) -> f64 {
        match self {
            BaseRate::Constant { rate } => *rate,
            BaseRate::Exponential { lambda0, alpha } => lambda0 * (alpha * t).exp(),
            BaseRate::Spline { spline } => spline.rate(t.min(spline.horizon)).unwrap_or(f64::NAN),
        }
    }

    pub fn cumulative(&self, t: f64) -> f64 {
        match self {
            BaseRate::Constant { rate } => rate * t,
            BaseRate::Exponential { lambda0, alpha } => lambda0 * t * crate::hazard::exprel(alpha * t),
            BaseRate::Spline { spline } => spline.cumulative(t.min(spline.horizon)).unwrap_or(f64::NAN),
        }
    }

    /// Time at which the cumulative rate reaches `target`; infinite when a
    /// spline never reaches it within its horizon.
    pub fn inverse_cumulative(&self, target: f64) -> f64 {
        match self {
            BaseRate::Constant { rate } => target / rate,
            BaseRate::Exponential { lambda0, alpha } => {
                if *alpha == 0.0 {
                    target / lambda0
                } else {
                    (alpha * target / lambda0).ln_1p() / alpha
                }
            }
            BaseRate::Spline { spline } => {
                let hi_value = spline.cumulative(spline.horizon).unwrap_or(f64::NAN);
                if target > hi_value {
                    return f64::INFINITY;
                }
                let (mut lo, mut hi) = (0.0, spline.horizon);
                while hi - lo > 1e-12 {
                    let mid = 0.5 * (lo + hi);
                    if spline.cumulative(mid).unwrap_or(f64::NAN) < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }
}

/// Hazard of one risk within one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassHazard {
    pub frailty: f64,
    pub associations: Vec<f64>,
    pub base: BaseRate,
}

impl ClassHazard {
    pub fn linear_predictor(&self, z: &[f64]) -> f64 {
        self.frailty + self.associations.iter().zip(z).map(|(b, x)| b * x).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub weights: Vec<f64>,
    pub covariates: usize,
    /// `[risk][class]`
    pub hazards: Vec<Vec<ClassHazard>>,
    pub trial_end: f64,
    pub n: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn classes(&self) -> usize {
        self.weights.len()
    }

    pub fn risks(&self) -> usize {
        self.hazards.len()
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.classes();
        if l == 0 || self.risks() == 0 {
            return domain("spec needs at least one class and one risk");
        }
        let total: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return domain(format!("weights {:?} are not on the simplex", self.weights));
        }
        if !(self.trial_end >= 0.0 && self.trial_end.is_finite()) {
            return domain(format!("trial end {} must be non-negative", self.trial_end));
        }
        for (r, row) in self.hazards.iter().enumerate() {
            if row.len() != l {
                return domain(format!("risk {} has {} class hazards, expected {l}", r + 1, row.len()));
            }
            for h in row {
                if h.associations.len() != self.covariates {
                    return domain(format!("risk {}: association length mismatch", r + 1));
                }
                h.base.validate()?;
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Self = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }
}

/// Inverse-transform draw for a given uniform `u` in (0, 1]:
/// `t = Lambda^{-1}(exp(-beta.z) * (-ln u))`.
pub fn event_time_from_uniform(base: &BaseRate, linear_predictor: f64, u: f64) -> f64 {
    base.inverse_cumulative((-linear_predictor).exp() * -u.ln())
}

pub fn sample_event_time<R: Rng + ?Sized>(base: &BaseRate, linear_predictor: f64, rng: &mut R) -> f64 {
    let u = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u;
        }
    };
    event_time_from_uniform(base, linear_predictor, u)
}

/// Hidden labels retained for scoring; never part of the cohort file.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub id: String,
    /// Zero-based class index.
    pub class: usize,
    pub latent_times: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub cohort: Cohort,
    pub truth: Vec<Truth>,
}

fn individual_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn draw_class(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (c, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return c;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

fn generate_one(spec: &SynthSpec, index: usize) -> (Individual, Truth) {
    let mut rng = individual_rng(spec.seed, index);
    let class = draw_class(&spec.weights, rng.random());
    let z: Vec<f64> = (0..spec.covariates).map(|_| StandardNormal.sample(&mut rng)).collect();
    let latent_times: Vec<f64> = spec
        .hazards
        .iter()
        .map(|row| {
            let h = &row[class];
            sample_event_time(&h.base, h.linear_predictor(&z), &mut rng)
        })
        .collect();
    let (first, t_min) = latent_times
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (r, &t)| if t < acc.1 { (r, t) } else { acc });
    let (time, event) = if t_min > spec.trial_end {
        (spec.trial_end, 0)
    } else {
        (t_min, first + 1)
    };
    let id = format!("{}", index + 1);
    (
        Individual {
            id: id.clone(),
            time,
            event,
            covariates: z.into_iter().map(Some).collect(),
        },
        Truth {
            id,
            class,
            latent_times,
        },
    )
}

/// Generate the cohort described by `spec`. Every individual has its own
/// random stream derived from `(seed, index)`.
pub fn generate_cohort(spec: &SynthSpec) -> Result<SyntheticCohort> {
    spec.validate()?;
    if spec.n == 0 {
        return domain("cohort size must be positive");
    }
    let (individuals, truth): (Vec<_>, Vec<_>) = {
        use rayon::prelude::*;
        (0..spec.n).into_par_iter().map(|i| generate_one(spec, i)).unzip()
    };
    let names = (1..=spec.covariates).map(|m| format!("z{m}")).collect();
    let trial_end = (spec.trial_end > 0.0).then_some(spec.trial_end);
    Ok(SyntheticCohort {
        cohort: Cohort::new(individuals, spec.risks(), names, trial_end)?,
        truth,
    })
}

/// Sidecar with true class (1-based) and latent times per risk.
pub fn write_truth<W: Write>(truth: &[Truth], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let risks = truth.first().map_or(0, |t| t.latent_times.len());
    let mut header = vec!["id".to_owned(), "true_class".to_owned()];
    header.extend((1..=risks).map(|r| format!("t{r}")));
    w.write_record(&header)?;
    for t in truth {
        let mut rec = vec![t.id.clone(), (t.class + 1).to_string()];
        rec.extend(t.latent_times.iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Read `(id, zero-based class)` pairs from a truth sidecar.
pub fn read_truth_classes<R: std::io::Read>(source: R) -> Result<Vec<(String, usize)>> {
    let mut r = csv::Reader::from_reader(source);
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let class: usize = rec.get(1).and_then(|s| s.parse().ok()).filter(|c| *c >= 1).ok_or_else(|| {
            crate::Error::Parse {
                line: k + 2,
                message: "true_class must be a positive integer".into(),
            }
        })?;
        out.push((rec.get(0).unwrap_or_default().to_owned(), class - 1));
    }
    Ok(out)
}

fn hazard(frailty: f64, associations: [f64; 3], base: BaseRate) -> ClassHazard {
    ClassHazard {
        frailty,
        associations: associations.to_vec(),
        base,
    }
}

/// Constant base rate used for both true risks of presets B and C.
pub const PRESET_BC_RATE: f64 = 0.1;
pub const PRESET_BC_TRIAL_END: f64 = 10.0;

/// Named cohort configurations (`A`, `B`, `C`) with `n = 1000`, `seed = 0`.
pub fn preset(name: &str) -> Result<SynthSpec> {
    let third = 1.0 / 3.0;
    let constant = |rate| BaseRate::Constant { rate };
    match name.to_ascii_uppercase().as_str() {
        "A" => Ok(SynthSpec {
            weights: vec![third, third, 1.0 - 2.0 * third],
            covariates: 3,
            hazards: vec![vec![
                hazard(0.0, [2.0, 0.0, 0.0], constant(0.3)),
                hazard(0.0, [2.0, 0.0, 0.0], BaseRate::Exponential { lambda0: 0.01, alpha: 0.25 }),
                hazard(0.0, [-2.0, 0.0, 0.0], constant(0.1)),
            ]],
            trial_end: 20.0,
            n: 1000,
            seed: 0,
        }),
        "B" | "C" => {
            let secondary = if name.eq_ignore_ascii_case("B") { 3.0 } else { -3.0 };
            let rate = constant(PRESET_BC_RATE);
            Ok(SynthSpec {
                weights: vec![0.5, 0.5],
                covariates: 3,
                hazards: vec![
                    vec![
                        hazard(0.0, [2.0, 0.0, 0.0], rate.clone()),
                        hazard(0.0, [-2.0, 0.0, 0.0], rate.clone()),
                    ],
                    vec![
                        hazard(0.0, [secondary, 0.0, 0.0], rate.clone()),
                        hazard(0.0, [0.0, 0.0, 0.0], rate),
                    ],
                ],
                trial_end: PRESET_BC_TRIAL_END,
                n: 1000,
                seed: 0,
            })
        }
        other => domain(format!("unknown preset `{other}` (expected A, B or C)")),
    }
}
