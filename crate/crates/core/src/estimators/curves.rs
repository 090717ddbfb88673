use std::fmt;
use std::io::Write;

use super::profile::Profile;
use super::quadrature::{cumulative_simpson, DEFAULT_INTERVALS};
use crate::error::{domain, Result};
use crate::hazard::ParamSet;

/// `n` equally spaced points covering `[0, horizon]`.
pub fn uniform_grid(horizon: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return domain("a time grid needs at least two points");
    }
    Ok((0..n)
        .map(|i| if i + 1 == n { horizon } else { horizon * i as f64 / (n - 1) as f64 })
        .collect())
}

/// Decontaminated survival of one risk on a grid (closed form).
pub fn decon_survival(params: &ParamSet, z: &[f64], risk: usize, times: &[f64]) -> Result<Vec<f64>> {
    let prof = Profile::new(params, z)?;
    times.iter().map(|&t| prof.decon_survival(risk, t)).collect()
}

/// Class-specific decontaminated survival `S~_r^l`, indexed `[class][time]`.
pub fn class_decon_survival(params: &ParamSet, z: &[f64], risk: usize, times: &[f64]) -> Result<Vec<Vec<f64>>> {
    let prof = Profile::new(params, z)?;
    (0..prof.classes())
        .map(|c| times.iter().map(|&t| prof.class_decon_survival(c, risk, t)).collect())
        .collect()
}

pub fn crude_hazard(params: &ParamSet, z: &[f64], risk: usize, t: f64) -> Result<f64> {
    Profile::new(params, z)?.crude_hazard(risk, t)
}

pub fn decon_hazard(params: &ParamSet, z: &[f64], risk: usize, t: f64) -> Result<f64> {
    Profile::new(params, z)?.decon_hazard(risk, t)
}

/// Crude survival `exp(-integral of the crude hazard)` on a grid.
pub fn crude_survival(params: &ParamSet, z: &[f64], risk: usize, times: &[f64], intervals: usize) -> Result<Vec<f64>> {
    let prof = Profile::new(params, z)?;
    prof.check_risk(risk)?;
    crude_survival_all(&prof, times, intervals).map(|v| v.into_iter().map(|row| row[risk - 1]).collect())
}

/// Crude survival of every true risk, indexed `[time][risk - 1]`.
fn crude_survival_all(prof: &Profile, times: &[f64], intervals: usize) -> Result<Vec<Vec<f64>>> {
    let risks = prof.risks();
    let integrals = cumulative_simpson(
        |t, out| {
            let pos = prof.locate(t)?;
            for r in 1..=risks {
                out[r - 1] = prof.crude_hazard_at(r, pos)?;
            }
            Ok(())
        },
        risks,
        times,
        &prof.anchors(),
        prof.horizon(),
        intervals,
    )?;
    Ok(integrals
        .into_iter()
        .map(|row| row.into_iter().map(|v| (-v).exp()).collect())
        .collect())
}

/// Cumulative incidence of one risk, total and per class.
#[derive(Debug, Clone, PartialEq)]
pub struct Incidence {
    pub total: Vec<f64>,
    /// `[class][time]`, with `sum_l w_l per_class[l] = total`.
    pub per_class: Vec<Vec<f64>>,
}

/// Class incidence integrands for risks `0..=R`, laid out `[risk][class]`.
fn incidence_all(prof: &Profile, times: &[f64], intervals: usize) -> Result<Vec<Incidence>> {
    let l = prof.classes();
    let risks = prof.risks();
    let width = (risks + 1) * l;
    let raw = cumulative_simpson(
        |t, out| {
            let pos = prof.locate(t)?;
            let censor = prof.censoring(pos);
            let censor_cum = censor.map_or(0.0, |c| c.1);
            for c in 0..l {
                let log_free = -prof.class_exposure(c, pos) - censor_cum;
                out[c] = censor.map_or(0.0, |(log_rate0, _)| (log_rate0 + log_free).exp());
                for r in 1..=risks {
                    out[r * l + c] = (prof.class_risk(c, r, pos).0 + log_free).exp();
                }
            }
            Ok(())
        },
        width,
        times,
        &prof.anchors(),
        prof.horizon(),
        intervals,
    )?;
    let w = &prof.params().weights;
    Ok((0..=risks)
        .map(|r| {
            let per_class: Vec<Vec<f64>> = (0..l).map(|c| raw.iter().map(|row| row[r * l + c]).collect()).collect();
            let total = (0..times.len())
                .map(|i| (0..l).map(|c| w[c] * per_class[c][i]).sum())
                .collect();
            Incidence { total, per_class }
        })
        .collect())
}

/// Cumulative incidence of risk `r`; `r = 0` is the censoring risk and is
/// only available when censoring is modelled parametrically.
pub fn cumulative_incidence(params: &ParamSet, z: &[f64], risk: usize, times: &[f64], intervals: usize) -> Result<Incidence> {
    let prof = Profile::new(params, z)?;
    if risk == 0 && params.censoring.is_none() {
        return domain("censoring incidence needs a parametric censoring model");
    }
    if risk > params.risks {
        return domain(format!("risk {risk} outside 0..={}", params.risks));
    }
    Ok(incidence_all(&prof, times, intervals)?.swap_remove(risk))
}

/// Probability of no event of any kind by each grid time.
pub fn event_free_survival(params: &ParamSet, z: &[f64], times: &[f64]) -> Result<Vec<f64>> {
    let prof = Profile::new(params, z)?;
    times.iter().map(|&t| prof.event_free_survival(t)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    CrudeHazard,
    DeconHazard,
    CrudeSurvival,
    DeconSurvival,
    CumulativeIncidence,
    EventFreeSurvival,
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CurveKind::CrudeHazard => "crude_hazard",
            CurveKind::DeconHazard => "decon_hazard",
            CurveKind::CrudeSurvival => "crude_survival",
            CurveKind::DeconSurvival => "decon_survival",
            CurveKind::CumulativeIncidence => "cumulative_incidence",
            CurveKind::EventFreeSurvival => "event_free_survival",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub kind: CurveKind,
    /// Risk label; `None` for curves that concern all risks together.
    pub risk: Option<usize>,
    /// Zero-based class for class-specific decompositions.
    pub class: Option<usize>,
    pub values: Vec<f64>,
}

impl Curve {
    pub fn header(&self) -> String {
        let mut h = self.kind.to_string();
        if let Some(r) = self.risk {
            h.push_str(&format!("_r{r}"));
        }
        if let Some(c) = self.class {
            h.push_str(&format!("_class{}", c + 1));
        }
        h
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CurveOptions {
    pub intervals: usize,
    pub per_class: bool,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self {
            intervals: DEFAULT_INTERVALS,
            per_class: true,
        }
    }
}

/// Every reportable curve for one covariate vector on a shared time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    pub z: Vec<f64>,
    pub times: Vec<f64>,
    pub curves: Vec<Curve>,
}

impl CurveSet {
    pub fn compute(params: &ParamSet, z: &[f64], times: &[f64], options: CurveOptions) -> Result<Self> {
        let prof = Profile::new(params, z)?;
        let risks = prof.risks();
        let mut curves = Vec::new();
        let crude = crude_survival_all(&prof, times, options.intervals)?;
        let incidence = incidence_all(&prof, times, options.intervals)?;
        let first_risk = if params.censoring.is_some() { 0 } else { 1 };
        for r in 1..=risks {
            let pointwise = |f: &dyn Fn(f64) -> Result<f64>| times.iter().map(|&t| f(t)).collect::<Result<Vec<_>>>();
            curves.push(Curve {
                kind: CurveKind::CrudeHazard,
                risk: Some(r),
                class: None,
                values: pointwise(&|t| prof.crude_hazard(r, t))?,
            });
            curves.push(Curve {
                kind: CurveKind::DeconHazard,
                risk: Some(r),
                class: None,
                values: pointwise(&|t| prof.decon_hazard(r, t))?,
            });
            curves.push(Curve {
                kind: CurveKind::CrudeSurvival,
                risk: Some(r),
                class: None,
                values: crude.iter().map(|row| row[r - 1]).collect(),
            });
            curves.push(Curve {
                kind: CurveKind::DeconSurvival,
                risk: Some(r),
                class: None,
                values: pointwise(&|t| prof.decon_survival(r, t))?,
            });
            if options.per_class && prof.classes() > 1 {
                for c in 0..prof.classes() {
                    curves.push(Curve {
                        kind: CurveKind::DeconSurvival,
                        risk: Some(r),
                        class: Some(c),
                        values: pointwise(&|t| prof.class_decon_survival(c, r, t))?,
                    });
                }
            }
        }
        for (r, inc) in incidence.into_iter().enumerate().skip(first_risk) {
            if options.per_class && prof.classes() > 1 {
                for (c, values) in inc.per_class.into_iter().enumerate() {
                    curves.push(Curve {
                        kind: CurveKind::CumulativeIncidence,
                        risk: Some(r),
                        class: Some(c),
                        values,
                    });
                }
            }
            curves.push(Curve {
                kind: CurveKind::CumulativeIncidence,
                risk: Some(r),
                class: None,
                values: inc.total,
            });
        }
        curves.push(Curve {
            kind: CurveKind::EventFreeSurvival,
            risk: None,
            class: None,
            values: times.iter().map(|&t| prof.event_free_survival(t)).collect::<Result<_>>()?,
        });
        Ok(Self {
            z: z.to_vec(),
            times: times.to_vec(),
            curves,
        })
    }

    pub fn get(&self, kind: CurveKind, risk: Option<usize>, class: Option<usize>) -> Option<&Curve> {
        self.curves
            .iter()
            .find(|c| c.kind == kind && c.risk == risk && c.class == class)
    }

    /// Delimited text: `time` first, then one column per curve.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec!["time".to_owned()];
        header.extend(self.curves.iter().map(Curve::header));
        w.write_record(&header)?;
        for (i, t) in self.times.iter().enumerate() {
            let mut rec = vec![t.to_string()];
            rec.extend(self.curves.iter().map(|c| c.values[i].to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
