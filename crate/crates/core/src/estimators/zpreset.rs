use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::error::{domain, Error, Result};

/// Lower quartile, median and upper quartile of every covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub median: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Quartiles {
    pub fn of(cohort: &Cohort) -> Result<Self> {
        let p = cohort.covariate_count();
        let q = |level: f64| (0..p).map(|mu| cohort.covariate_quantile(mu, level)).collect::<Result<Vec<_>>>();
        Ok(Self {
            names: cohort.covariate_names().to_vec(),
            lower: q(0.25)?,
            median: q(0.5)?,
            upper: q(0.75)?,
        })
    }

    fn level(&self, level: Level) -> &[f64] {
        match level {
            Level::Lower => &self.lower,
            Level::Median => &self.median,
            Level::Upper => &self.upper,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Lower,
    Median,
    Upper,
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lq" => Ok(Level::Lower),
            "median" => Ok(Level::Median),
            "uq" => Ok(Level::Upper),
            other => domain(format!("unknown quartile level `{other}` (lq, median, uq)")),
        }
    }
}

/// Named covariate vector used to condition curves.
///
/// Accepted forms: `zero`, `lq`, `median`, `uq` (every covariate at that
/// quartile), `NAME:LEVEL` (one covariate at a quartile, the rest at their
/// medians) and `vector:v1,v2,...` (explicit standardized values).
#[derive(Debug, Clone, PartialEq)]
pub enum ZPreset {
    Zero,
    All(Level),
    One { covariate: String, level: Level },
    Vector(Vec<f64>),
}

impl FromStr for ZPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("zero") {
            return Ok(ZPreset::Zero);
        }
        if let Some(rest) = s.strip_prefix("vector:") {
            let values = rest
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Domain(format!("`{v}` is not a number")))
                })
                .collect::<Result<Vec<_>>>()?;
            return Ok(ZPreset::Vector(values));
        }
        if let Some((name, level)) = s.split_once(':') {
            return Ok(ZPreset::One {
                covariate: name.to_owned(),
                level: level.parse()?,
            });
        }
        Ok(ZPreset::All(s.parse()?))
    }
}

impl fmt::Display for ZPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = |l: &Level| match l {
            Level::Lower => "lq",
            Level::Median => "median",
            Level::Upper => "uq",
        };
        match self {
            ZPreset::Zero => f.write_str("zero"),
            ZPreset::All(l) => f.write_str(level(l)),
            ZPreset::One { covariate, level: l } => write!(f, "{covariate}_{}", level(l)),
            ZPreset::Vector(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "vector_{}", parts.join("_"))
            }
        }
    }
}

impl ZPreset {
    pub fn resolve(&self, quartiles: &Quartiles) -> Result<Vec<f64>> {
        let p = quartiles.names.len();
        match self {
            ZPreset::Zero => Ok(vec![0.0; p]),
            ZPreset::All(l) => Ok(quartiles.level(*l).to_vec()),
            ZPreset::One { covariate, level } => {
                let mu = quartiles
                    .names
                    .iter()
                    .position(|n| n == covariate)
                    .ok_or_else(|| Error::Domain(format!("unknown covariate `{covariate}`")))?;
                let mut z = quartiles.median.clone();
                z[mu] = quartiles.level(*level)[mu];
                Ok(z)
            }
            ZPreset::Vector(v) if v.len() != p => Err(Error::Dimension {
                expected: p,
                found: v.len(),
            }),
            ZPreset::Vector(v) => Ok(v.clone()),
        }
    }
}
