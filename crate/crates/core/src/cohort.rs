//! Cohort ingestion, validation, and covariate preprocessing.
//!
//! A cohort is a list of individuals, each reporting the time of the first
//! event together with its label (`0` for censoring, `1..=R` for the true
//! risks) and a covariate vector that may contain missing entries until it
//! has been passed through [`standardize`].

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub id: String,
    pub time: f64,
    pub event: usize,
    pub covariates: Vec<Option<f64>>,
}

/// Validated, immutable cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    individuals: Vec<Individual>,
    risks: usize,
    covariate_names: Vec<String>,
    trial_end: Option<f64>,
}

impl Cohort {
    pub fn new(
        individuals: Vec<Individual>,
        risks: usize,
        covariate_names: Vec<String>,
        trial_end: Option<f64>,
    ) -> Result<Self> {
        if individuals.is_empty() {
            return domain("cohort has no individuals");
        }
        if risks == 0 {
            return domain("cohort must have at least one true risk");
        }
        let p = covariate_names.len();
        for ind in &individuals {
            if !ind.time.is_finite() || ind.time < 0.0 {
                return domain(format!(
                    "individual {}: event time {} is not a finite non-negative number",
                    ind.id, ind.time
                ));
            }
            if ind.event > risks {
                return domain(format!(
                    "individual {}: event label {} outside 0..={}",
                    ind.id, ind.event, risks
                ));
            }
            if ind.covariates.len() != p {
                return domain(format!(
                    "individual {}: {} covariates, expected {}",
                    ind.id,
                    ind.covariates.len(),
                    p
                ));
            }
            if ind.covariates.iter().flatten().any(|v| !v.is_finite()) {
                return domain(format!("individual {}: non-finite covariate", ind.id));
            }
        }
        if let Some(end) = trial_end {
            if !(end > 0.0 && end.is_finite()) {
                return domain(format!("trial end {end} must be positive and finite"));
            }
            if let Some(late) = individuals.iter().find(|i| i.time > end) {
                return domain(format!(
                    "individual {}: time {} exceeds trial end {}",
                    late.id, late.time, end
                ));
            }
        }
        Ok(Self {
            individuals,
            risks,
            covariate_names,
            trial_end,
        })
    }

    pub fn individuals(&self) -> &[Individual] {
        &self.individuals
    }

    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    pub fn risks(&self) -> usize {
        self.risks
    }

    pub fn covariate_count(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn trial_end(&self) -> Option<f64> {
        self.trial_end
    }

    /// Upper end of the modelled time axis: the trial end when known, else the
    /// latest reported time.
    pub fn horizon(&self) -> f64 {
        self.trial_end.unwrap_or_else(|| {
            self.individuals
                .iter()
                .map(|i| i.time)
                .fold(0.0_f64, f64::max)
        })
    }

    pub fn is_complete(&self) -> bool {
        self.individuals
            .iter()
            .all(|i| i.covariates.iter().all(Option::is_some))
    }

    /// Covariate column `mu` (missing entries as `None`).
    pub fn column(&self, mu: usize) -> Vec<Option<f64>> {
        self.individuals.iter().map(|i| i.covariates[mu]).collect()
    }

    /// Dense covariate rows; fails if any entry is still missing.
    pub fn covariate_rows(&self) -> Result<Vec<Vec<f64>>> {
        self.individuals
            .iter()
            .map(|ind| {
                ind.covariates
                    .iter()
                    .map(|v| {
                        v.ok_or_else(|| {
                            Error::Domain(format!(
                                "individual {}: missing covariate; standardize first",
                                ind.id
                            ))
                        })
                    })
                    .collect()
            })
            .collect()
    }

    /// Linear-interpolation quantile of covariate `mu` over non-missing values.
    pub fn covariate_quantile(&self, mu: usize, p: f64) -> Result<f64> {
        let mut values: Vec<f64> = self.column(mu).into_iter().flatten().collect();
        if values.is_empty() {
            return domain(format!("covariate {mu} has no observed values"));
        }
        values.sort_by(f64::total_cmp);
        Ok(quantile_sorted(&values, p))
    }

    pub fn with_trial_end(mut self, trial_end: Option<f64>) -> Result<Self> {
        self.trial_end = trial_end;
        Self::new(
            self.individuals,
            self.risks,
            self.covariate_names,
            self.trial_end,
        )
    }

    /// Individuals for which `keep` returns true, preserving order.
    pub fn filter(&self, keep: impl Fn(&Individual) -> bool) -> Result<Cohort> {
        let kept: Vec<Individual> = self.individuals.iter().filter(|i| keep(i)).cloned().collect();
        Cohort::new(
            kept,
            self.risks,
            self.covariate_names.clone(),
            self.trial_end,
        )
    }
}

pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Column mapping for [`load_cohort`].
#[derive(Debug, Clone)]
pub struct Schema {
    pub id: String,
    pub time: String,
    pub event: String,
    /// Covariate columns in order; `None` takes every remaining column.
    pub covariates: Option<Vec<String>>,
    /// Number of true risks; `None` infers it from the largest event label.
    pub risks: Option<usize>,
    pub trial_end: Option<f64>,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            id: "id".into(),
            time: "time".into(),
            event: "event".into(),
            covariates: None,
            risks: None,
            trial_end: None,
        }
    }
}

fn detect_delimiter(header: &str) -> u8 {
    if header.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

/// Parse a delimited cohort table (comma or tab, detected from the header).
pub fn load_cohort<R: Read>(mut source: R, schema: &Schema) -> Result<Cohort> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let header_line = text.lines().next().unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(detect_delimiter(header_line))
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("missing column `{name}`"),
        })
    };
    let id_col = find(&schema.id)?;
    let time_col = find(&schema.time)?;
    let event_col = find(&schema.event)?;
    let (cov_cols, cov_names): (Vec<usize>, Vec<String>) = match &schema.covariates {
        Some(names) => names
            .iter()
            .map(|n| find(n).map(|c| (c, n.clone())))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(c, _)| ![id_col, time_col, event_col].contains(c))
            .map(|(c, h)| (c, h.clone()))
            .unzip(),
    };

    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let parse_num = |col: usize, what: &str| -> Result<f64> {
            record[col].parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("{what} `{}` is not a number", &record[col]),
            })
        };
        let time = parse_num(time_col, "time")?;
        let event_raw = &record[event_col];
        let event: usize = event_raw.parse().map_err(|_| Error::Parse {
            line,
            message: format!("event `{event_raw}` is not a non-negative integer"),
        })?;
        if time < 0.0 || !time.is_finite() {
            return domain(format!("line {line}: negative or non-finite time {time}"));
        }
        let covariates = cov_cols
            .iter()
            .map(|&c| {
                if record[c].is_empty() {
                    Ok(None)
                } else {
                    parse_num(c, "covariate").map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((line, Individual {
            id: record[id_col].to_owned(),
            time,
            event,
            covariates,
        }));
    }

    let max_event = rows.iter().map(|(_, i)| i.event).max().unwrap_or(0);
    let risks = schema.risks.unwrap_or(max_event.max(1));
    if let Some((line, bad)) = rows.iter().find(|(_, i)| i.event > risks) {
        return domain(format!(
            "line {line}: individual {} has event label {} outside 0..={risks}",
            bad.id, bad.event
        ));
    }
    Cohort::new(
        rows.into_iter().map(|(_, i)| i).collect(),
        risks,
        cov_names,
        schema.trial_end,
    )
}

/// Write a cohort in the comma-separated input format.
pub fn write_cohort<W: Write>(cohort: &Cohort, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["id".to_owned(), "time".to_owned(), "event".to_owned()];
    header.extend(cohort.covariate_names().iter().cloned());
    w.write_record(&header)?;
    for ind in cohort.individuals() {
        let mut rec = vec![ind.id.clone(), ind.time.to_string(), ind.event.to_string()];
        rec.extend(
            ind.covariates
                .iter()
                .map(|v| v.map(|x| x.to_string()).unwrap_or_default()),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Replace missing entries with the mean of the observed ones.
pub fn impute_missing(column: &[Option<f64>]) -> Result<Vec<f64>> {
    let observed: Vec<f64> = column.iter().flatten().copied().collect();
    if observed.is_empty() {
        return domain("cannot impute a column with no observed values");
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    Ok(column.iter().map(|v| v.unwrap_or(mean)).collect())
}

/// Affine map applied to one covariate: `standardized = (raw - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub name: String,
    pub mean: f64,
    /// Population standard deviation of the observed raw values.
    pub std_dev: f64,
    /// Divisor actually applied; equals `std_dev` unless the column is constant.
    pub scale: f64,
    pub imputed: usize,
    pub zero_variance: bool,
}

impl ColumnScaling {
    pub fn forward(&self, raw: f64) -> f64 {
        (raw - self.mean) / self.scale
    }

    pub fn inverse(&self, standardized: f64) -> f64 {
        self.mean + self.scale * standardized
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PreprocessReport {
    pub columns: Vec<ColumnScaling>,
}

impl PreprocessReport {
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &ColumnScaling> {
        self.columns.iter().filter(|c| c.zero_variance)
    }
}

/// Mean-impute, then z-score every covariate column. Mean and population
/// variance are taken over the observed values, so imputed entries map to 0.
pub fn standardize(cohort: &Cohort) -> Result<(Cohort, PreprocessReport)> {
    let p = cohort.covariate_count();
    let mut columns = Vec::with_capacity(p);
    let mut transformed: Vec<Vec<f64>> = Vec::with_capacity(p);
    for mu in 0..p {
        let raw = cohort.column(mu);
        let name = cohort.covariate_names()[mu].clone();
        let imputed_count = raw.iter().filter(|v| v.is_none()).count();
        let filled = impute_missing(&raw).map_err(|_| {
            Error::Domain(format!("covariate `{name}` has no observed values"))
        })?;
        let observed: Vec<f64> = raw.iter().flatten().copied().collect();
        let n_obs = observed.len() as f64;
        let mean = observed.iter().sum::<f64>() / n_obs;
        let var = observed.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n_obs;
        let std_dev = var.sqrt();
        let zero_variance = !(std_dev > 1e-12 * (1.0 + mean.abs()));
        let scale = if zero_variance { 1.0 } else { std_dev };
        if zero_variance {
            log::warn!("covariate `{name}` has zero variance; centred only");
        }
        let scaling = ColumnScaling {
            name,
            mean,
            std_dev,
            scale,
            imputed: imputed_count,
            zero_variance,
        };
        transformed.push(filled.iter().map(|&x| scaling.forward(x)).collect());
        columns.push(scaling);
    }
    let individuals = cohort
        .individuals()
        .iter()
        .enumerate()
        .map(|(i, ind)| Individual {
            covariates: transformed.iter().map(|col| Some(col[i])).collect(),
            ..ind.clone()
        })
        .collect();
    let out = Cohort::new(
        individuals,
        cohort.risks(),
        cohort.covariate_names().to_vec(),
        cohort.trial_end(),
    )?;
    Ok((out, PreprocessReport { columns }))
}

/// Map a raw covariate vector onto the standardized scale of `report`.
pub fn apply_scaling(report: &PreprocessReport, raw: &[f64]) -> Result<Vec<f64>> {
    if raw.len() != report.columns.len() {
        return Err(Error::Dimension {
            expected: report.columns.len(),
            found: raw.len(),
        });
    }
    Ok(report
        .columns
        .iter()
        .zip(raw)
        .map(|(c, &x)| c.forward(x))
        .collect())
}
