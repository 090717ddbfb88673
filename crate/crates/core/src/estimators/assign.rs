use std::io::Write;

use rayon::prelude::*;

use crate::cohort::Cohort;
use crate::error::{domain, Error, Result};
use crate::hazard::ParamSet;
use crate::likelihood::{class_log_terms, log_sum_exp, Scratch, SplineTables};

/// Retrospective class membership probabilities of one individual.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPosterior {
    pub probabilities: Vec<f64>,
}

impl ClassPosterior {
    /// Most probable class (zero-based); the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        self.probabilities
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (c, &p)| if p > best.1 { (c, p) } else { best })
            .0
    }
}

fn posterior_with(params: &ParamSet, tables: &SplineTables, z: &[f64], t: f64, risk: usize) -> Result<ClassPosterior> {
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
    let mut scratch = Scratch::new(params);
    class_log_terms(params, tables, tables.grid().locate(t), z, risk, &mut scratch);
    let terms = scratch.terms;
    let norm = log_sum_exp(&terms);
    if !norm.is_finite() {
        return Err(Error::Numerical(format!("class posterior undefined at t = {t}, r = {risk}")));
    }
    let mut probabilities: Vec<f64> = terms.iter().map(|v| (v - norm).exp()).collect();
    let total: f64 = probabilities.iter().sum();
    probabilities.iter_mut().for_each(|p| *p /= total);
    Ok(ClassPosterior { probabilities })
}

/// Posterior class probabilities given the observation `(t, r)` and `z`.
pub fn assign_class(params: &ParamSet, z: &[f64], t: f64, risk: usize) -> Result<ClassPosterior> {
    params.validate()?;
    posterior_with(params, &SplineTables::new(params), z, t, risk)
}

/// Class posteriors for every individual of a (standardized) cohort. Times
/// beyond the model horizon are clamped to it.
pub fn assign_cohort(params: &ParamSet, cohort: &Cohort) -> Result<Vec<ClassPosterior>> {
    params.validate()?;
    if cohort.risks() != params.risks || cohort.covariate_count() != params.covariates {
        return domain(format!(
            "cohort has R = {}, P = {} but the fit has R = {}, P = {}",
            cohort.risks(),
            cohort.covariate_count(),
            params.risks,
            params.covariates
        ));
    }
    let rows = cohort.covariate_rows()?;
    let tables = SplineTables::new(params);
    cohort
        .individuals()
        .par_iter()
        .zip(rows.par_iter())
        .map(|(ind, z)| {
            posterior_with(params, &tables, z, ind.time.min(params.horizon), ind.event)
                .map_err(|e| Error::Domain(format!("individual {}: {e}", ind.id)))
        })
        .collect()
}

/// One row per individual: id, `P(1..L)`, 1-based argmax.
pub fn write_posteriors<W: Write>(cohort: &Cohort, posteriors: &[ClassPosterior], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let l = posteriors.first().map_or(0, |p| p.probabilities.len());
    let mut header = vec!["id".to_owned()];
    header.extend((1..=l).map(|c| format!("p_class{c}")));
    header.push("assigned".to_owned());
    w.write_record(&header)?;
    for (ind, post) in cohort.individuals().iter().zip(posteriors) {
        let mut rec = vec![ind.id.clone()];
        rec.extend(post.probabilities.iter().map(|p| p.to_string()));
        rec.push((post.argmax() + 1).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationQuality {
    /// Fraction of individuals assigned to their true class.
    pub overall: f64,
    /// Per assigned class, the fraction whose true class matches; `None`
    /// when no individual was assigned to that class.
    pub per_class: Vec<Option<f64>>,
}

/// Agreement between assigned and true zero-based labels in `0..classes`.
pub fn allocation_quality(assigned: &[usize], truth: &[usize], classes: usize) -> Result<AllocationQuality> {
    if assigned.len() != truth.len() {
        return Err(Error::Dimension {
            expected: truth.len(),
            found: assigned.len(),
        });
    }
    if assigned.is_empty() {
        return domain("no labels to compare");
    }
    if let Some(bad) = assigned.iter().chain(truth).find(|&&c| c >= classes) {
        return domain(format!("label {bad} outside 0..{classes}"));
    }
    let mut hits = vec![0usize; classes];
    let mut totals = vec![0usize; classes];
    for (&a, &t) in assigned.iter().zip(truth) {
        totals[a] += 1;
        if a == t {
            hits[a] += 1;
        }
    }
    Ok(AllocationQuality {
        overall: hits.iter().sum::<usize>() as f64 / assigned.len() as f64,
        per_class: hits
            .iter()
            .zip(&totals)
            .map(|(&h, &n)| (n > 0).then(|| h as f64 / n as f64))
            .collect(),
    })
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Relabelling `map` of fitted classes onto true classes that maximises
/// agreement; fitted class `c` corresponds to true class `map[c]`.
pub fn best_label_map(assigned: &[usize], truth: &[usize], classes: usize) -> Result<Vec<usize>> {
    if classes > 8 {
        return domain("label alignment is limited to 8 classes");
    }
    let mut counts = vec![vec![0usize; classes]; classes];
    for (&a, &t) in assigned.iter().zip(truth) {
        if a >= classes || t >= classes {
            return domain(format!("label outside 0..{classes}"));
        }
        counts[a][t] += 1;
    }
    Ok(permutations(classes)
        .into_iter()
        .max_by_key(|p| p.iter().enumerate().map(|(a, &t)| counts[a][t]).sum::<usize>())
        .expect("at least one permutation"))
}
