use std::io::Write;

use crate::cohort::{Cohort, Individual};
use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmStep {
    pub time: f64,
    pub at_risk: usize,
    pub events: usize,
    pub survival: f64,
}

/// Cause-specific product-limit estimate; events of other risks count as
/// censorings at their event times.
#[derive(Debug, Clone, PartialEq)]
pub struct KaplanMeier {
    pub risk: usize,
    pub subjects: usize,
    pub steps: Vec<KmStep>,
}

impl KaplanMeier {
    /// Right-continuous step function value at `t`.
    pub fn survival_at(&self, t: f64) -> f64 {
        self.steps
            .iter()
            .take_while(|s| s.time <= t)
            .last()
            .map_or(1.0, |s| s.survival)
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["time", "at_risk", "events", "survival"])?;
        w.write_record(["0", &self.subjects.to_string(), "0", "1"])?;
        for s in &self.steps {
            w.write_record([
                s.time.to_string(),
                s.at_risk.to_string(),
                s.events.to_string(),
                s.survival.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn kaplan_meier(cohort: &Cohort, risk: usize, keep: impl Fn(&Individual) -> bool) -> Result<KaplanMeier> {
    if risk == 0 || risk > cohort.risks() {
        return domain(format!("risk {risk} outside 1..={}", cohort.risks()));
    }
    let mut rows: Vec<(f64, bool)> = cohort
        .individuals()
        .iter()
        .filter(|i| keep(i))
        .map(|i| (i.time, i.event == risk))
        .collect();
    if rows.is_empty() {
        return domain("no individuals satisfy the condition");
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let subjects = rows.len();
    let mut steps = Vec::new();
    let mut survival = 1.0;
    let mut i = 0;
    while i < rows.len() {
        let t = rows[i].0;
        let at_risk = rows.len() - i;
        let mut events = 0;
        while i < rows.len() && rows[i].0 == t {
            events += rows[i].1 as usize;
            i += 1;
        }
        if events > 0 {
            survival *= 1.0 - events as f64 / at_risk as f64;
            steps.push(KmStep {
                time: t,
                at_risk,
                events,
                survival,
            });
        }
    }
    Ok(KaplanMeier { risk, subjects, steps })
}
