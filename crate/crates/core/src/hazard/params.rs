use serde::{Deserialize, Serialize};

use super::model::{CensoringMode, Layout, ModelId, Variant};
use super::spline::BaseHazardSpline;
use crate::error::{domain, Error, Result};

/// Full parameter set of a latent-class competing-risk model.
///
/// Risks are addressed by their event label `r` in `1..=R`; classes by a
/// zero-based index. Blocks that are shared between classes under the
/// model's variant hold a single row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub model: ModelId,
    pub risks: usize,
    pub covariates: usize,
    pub horizon: f64,
    pub weights: Vec<f64>,
    /// `[risk][class]`
    pub frailties: Vec<Vec<f64>>,
    /// `[risk][association row][covariate]`
    pub associations: Vec<Vec<Vec<f64>>>,
    /// `[risk][spline row]`; each spline's first log value is pinned to 0.
    pub splines: Vec<Vec<BaseHazardSpline>>,
    /// Base hazard of the censoring risk; present in parametric mode only.
    pub censoring: Option<BaseHazardSpline>,
}

impl ParamSet {
    /// Equal weights, zero frailties and associations, unit base rates.
    pub fn neutral(layout: &Layout) -> Result<Self> {
        let m = layout.model;
        let unit = BaseHazardSpline::new(layout.horizon, vec![0.0; m.k])?;
        Ok(Self {
            model: m,
            risks: layout.risks,
            covariates: layout.covariates,
            horizon: layout.horizon,
            weights: vec![1.0 / m.l as f64; m.l],
            frailties: vec![vec![0.0; m.l]; layout.risks],
            associations: vec![vec![vec![0.0; layout.covariates]; m.association_rows()]; layout.risks],
            splines: vec![vec![unit.clone(); m.spline_rows()]; layout.risks],
            censoring: match layout.censoring {
                CensoringMode::Parametric => Some(unit),
                CensoringMode::Administrative => None,
            },
        })
    }

    pub fn layout(&self) -> Layout {
        Layout {
            model: self.model,
            risks: self.risks,
            covariates: self.covariates,
            horizon: self.horizon,
            censoring: self.censoring_mode(),
        }
    }

    pub fn censoring_mode(&self) -> CensoringMode {
        if self.censoring.is_some() {
            CensoringMode::Parametric
        } else {
            CensoringMode::Administrative
        }
    }

    pub fn classes(&self) -> usize {
        self.model.l
    }

    pub fn frailty(&self, risk: usize, class: usize) -> f64 {
        self.frailties[risk - 1][class]
    }

    pub fn association(&self, risk: usize, class: usize) -> &[f64] {
        &self.associations[risk - 1][self.model.association_row(class)]
    }

    pub fn spline(&self, risk: usize, class: usize) -> &BaseHazardSpline {
        &self.splines[risk - 1][self.model.spline_row(class)]
    }

    /// Frailty plus association contribution, `beta_r^l . z`.
    pub fn linear_predictor(&self, risk: usize, class: usize, z: &[f64]) -> f64 {
        self.frailty(risk, class)
            + self
                .association(risk, class)
                .iter()
                .zip(z)
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }

    /// Shape and simplex checks.
    pub fn validate(&self) -> Result<()> {
        let m = self.model;
        let shape_err = |what: &str| Error::Domain(format!("parameter block `{what}` has the wrong shape for {m}"));
        if self.weights.len() != m.l {
            return Err(shape_err("weights"));
        }
        let total: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return domain(format!("weights {:?} are not on the simplex", self.weights));
        }
        if self.frailties.len() != self.risks || self.frailties.iter().any(|f| f.len() != m.l) {
            return Err(shape_err("frailties"));
        }
        if self.associations.len() != self.risks
            || self.associations.iter().any(|rows| {
                rows.len() != m.association_rows() || rows.iter().any(|b| b.len() != self.covariates)
            })
        {
            return Err(shape_err("associations"));
        }
        if self.splines.len() != self.risks
            || self
                .splines
                .iter()
                .any(|rows| rows.len() != m.spline_rows() || rows.iter().any(|s| s.k() != m.k))
        {
            return Err(shape_err("splines"));
        }
        if let Some(c) = &self.censoring {
            if c.k() != m.k {
                return Err(shape_err("censoring spline"));
            }
        }
        Ok(())
    }

    /// Personalised cause-specific hazard `lambda_r^l(t) exp(beta_r^l . z)`.
    pub fn personalised_hazard(&self, class: usize, risk: usize, z: &[f64], t: f64) -> Result<f64> {
        self.check_indices(class, risk, z)?;
        let lambda = self.spline(risk, class).rate(t)?;
        Ok(lambda * self.linear_predictor(risk, class, z).exp())
    }

    /// Time integral of the personalised hazard over `[0, t]`.
    pub fn personalised_cumulative(&self, class: usize, risk: usize, z: &[f64], t: f64) -> Result<f64> {
        self.check_indices(class, risk, z)?;
        let big_lambda = self.spline(risk, class).cumulative(t)?;
        Ok(big_lambda * self.linear_predictor(risk, class, z).exp())
    }

    pub(crate) fn check_indices(&self, class: usize, risk: usize, z: &[f64]) -> Result<()> {
        if class >= self.model.l {
            return domain(format!("class {class} outside 0..{}", self.model.l));
        }
        if risk == 0 || risk > self.risks {
            return domain(format!("risk {risk} outside 1..={}", self.risks));
        }
        if z.len() != self.covariates {
            return Err(Error::Dimension {
                expected: self.covariates,
                found: z.len(),
            });
        }
        Ok(())
    }

    /// Flatten into the unconstrained optimisation vector.
    ///
    /// Weights become logits relative to the last class; pinned first knots
    /// of the true-risk splines are skipped.
    pub fn pack(&self) -> Vec<f64> {
        let layout = self.layout();
        let mut out = Vec::with_capacity(layout.dimension());
        let last = self.weights[self.model.l - 1].ln();
        out.extend(self.weights[..self.model.l - 1].iter().map(|w| w.ln() - last));
        for r in 0..self.risks {
            out.extend_from_slice(&self.frailties[r]);
            for row in &self.associations[r] {
                out.extend_from_slice(row);
            }
            for s in &self.splines[r] {
                out.extend_from_slice(&s.log_values[1..]);
            }
        }
        if let Some(c) = &self.censoring {
            out.extend_from_slice(&c.log_values);
        }
        out
    }

    /// Inverse of [`ParamSet::pack`].
    pub fn unpack(vector: &[f64], layout: &Layout) -> Result<Self> {
        let dim = layout.dimension();
        if vector.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: vector.len(),
            });
        }
        let m = layout.model;
        let p = layout.covariates;
        let mut cursor = vector.iter().copied();
        let mut take = |n: usize| -> Vec<f64> { cursor.by_ref().take(n).collect() };

        let logits = take(m.l - 1);
        let weights = softmax_pinned(&logits);
        let mut frailties = Vec::with_capacity(layout.risks);
        let mut associations = Vec::with_capacity(layout.risks);
        let mut splines = Vec::with_capacity(layout.risks);
        for _ in 0..layout.risks {
            frailties.push(take(m.l));
            associations.push((0..m.association_rows()).map(|_| take(p)).collect());
            let mut rows = Vec::with_capacity(m.spline_rows());
            for _ in 0..m.spline_rows() {
                let mut logs = vec![0.0];
                logs.extend(take(m.k - 1));
                rows.push(spline_unchecked(layout.horizon, logs));
            }
            splines.push(rows);
        }
        let censoring = match layout.censoring {
            CensoringMode::Parametric => Some(spline_unchecked(layout.horizon, take(m.k))),
            CensoringMode::Administrative => None,
        };
        Ok(Self {
            model: m,
            risks: layout.risks,
            covariates: p,
            horizon: layout.horizon,
            weights,
            frailties,
            associations,
            splines,
            censoring,
        })
    }

    /// Relabel classes: new class `j` takes the blocks of old class `order[j]`.
    pub fn permute_classes(&self, order: &[usize]) -> Result<Self> {
        let l = self.model.l;
        let mut seen = vec![false; l];
        if order.len() != l || order.iter().any(|&j| j >= l || std::mem::replace(&mut seen[j], true)) {
            return domain(format!("{order:?} is not a permutation of 0..{l}"));
        }
        let mut out = self.clone();
        out.weights = order.iter().map(|&j| self.weights[j]).collect();
        for r in 0..self.risks {
            out.frailties[r] = order.iter().map(|&j| self.frailties[r][j]).collect();
            if self.model.m.class_associations() {
                out.associations[r] = order.iter().map(|&j| self.associations[r][j].clone()).collect();
            }
            if self.model.m.class_base_hazards() {
                out.splines[r] = order.iter().map(|&j| self.splines[r][j].clone()).collect();
            }
        }
        Ok(out)
    }

    /// Class order used for reporting: weight descending, ties broken by the
    /// first risk's frailty (descending).
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.model.l).collect();
        order.sort_by(|&a, &b| {
            self.weights[b]
                .total_cmp(&self.weights[a])
                .then(self.frailties[0][b].total_cmp(&self.frailties[0][a]))
        });
        order
    }

    pub fn canonicalize(&self) -> Self {
        self.permute_classes(&self.canonical_order())
            .expect("canonical order is a permutation")
    }

    /// Same hazards, written in the fully class-specific variant.
    pub fn expand_to_full(&self) -> Self {
        let m = self.model;
        let mut out = self.clone();
        out.model = ModelId {
            m: Variant::BaseHazard,
            ..m
        };
        for r in 0..self.risks {
            out.associations[r] = (0..m.l).map(|c| self.associations[r][m.association_row(c)].clone()).collect();
            out.splines[r] = (0..m.l).map(|c| self.splines[r][m.spline_row(c)].clone()).collect();
        }
        out
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let p: Self = toml::from_str(text)?;
        p.validate()?;
        Ok(p)
    }
}

fn spline_unchecked(horizon: f64, log_values: Vec<f64>) -> BaseHazardSpline {
    let knot_times = super::spline::KnotGrid::new(log_values.len(), horizon).knot_times();
    BaseHazardSpline {
        horizon,
        knot_times,
        log_values,
    }
}

/// Softmax over `logits` with an extra implicit logit of 0 for the last class.
pub fn softmax_pinned(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(0.0_f64, f64::max);
    let mut w: Vec<f64> = logits.iter().map(|a| (a - max).exp()).collect();
    w.push((-max).exp());
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hazard::model::CensoringMode;
    use proptest::prelude::*;

    fn layout(k: usize, l: usize, m: u8, risks: usize, p: usize, censoring: CensoringMode) -> Layout {
        Layout {
            model: ModelId::new(k, l, m).unwrap(),
            risks,
            covariates: p,
            horizon: 10.0,
            censoring,
        }
    }

    #[test]
    fn constant_rate_hazard() {
        let lay = layout(1, 1, 1, 1, 3, CensoringMode::Administrative);
        let mut p = ParamSet::neutral(&lay).unwrap();
        p.splines[0][0] = BaseHazardSpline::constant(10.0, 0.3, 1).unwrap();
        for t in [0.0, 1.0, 9.5] {
            let h = p.personalised_hazard(0, 1, &[0.4, -1.0, 2.0], t).unwrap();
            assert!((h - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn association_scales_hazard() {
        let lay = layout(1, 1, 2, 1, 3, CensoringMode::Administrative);
        let mut p = ParamSet::neutral(&lay).unwrap();
        p.splines[0][0] = BaseHazardSpline::constant(10.0, 0.1, 1).unwrap();
        p.associations[0][0] = vec![2.0, 0.0, 0.0];
        let h = p.personalised_hazard(0, 1, &[1.0, 0.0, 0.0], 3.0).unwrap();
        assert!((h - 0.1 * 2.0_f64.exp()).abs() < 1e-14);
        assert!((h - 0.7389).abs() < 1e-4);
    }

    #[test]
    fn exponential_base_rate_at_four() {
        let lay = Layout {
            horizon: 20.0,
            ..layout(2, 1, 3, 1, 0, CensoringMode::Administrative)
        };
        let mut p = ParamSet::neutral(&lay).unwrap();
        p.splines[0][0] = BaseHazardSpline::new(20.0, vec![0.0, 5.0]).unwrap();
        p.frailties[0][0] = (0.01_f64).ln();
        let h = p.personalised_hazard(0, 1, &[], 4.0).unwrap();
        assert!((h - 1.0_f64.exp() / 100.0).abs() < 1e-15);
    }

    #[test]
    fn hazard_rejects_bad_time_and_shape() {
        let p = ParamSet::neutral(&layout(2, 1, 1, 1, 2, CensoringMode::Administrative)).unwrap();
        assert!(p.personalised_hazard(0, 1, &[0.0, 0.0], 10.5).is_err());
        assert!(p.personalised_hazard(0, 1, &[0.0], 1.0).is_err());
        assert!(p.personalised_hazard(0, 2, &[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn single_class_has_no_weight_block() {
        let lay = layout(3, 1, 3, 1, 2, CensoringMode::Administrative);
        let p = ParamSet::neutral(&lay).unwrap();
        assert_eq!(p.pack().len(), 1 + 2 + 2);
        let back = ParamSet::unpack(&p.pack(), &lay).unwrap();
        assert_eq!(back.weights, vec![1.0]);
    }

    #[test]
    fn wrong_length_is_dimension_error() {
        let lay = layout(3, 2, 2, 2, 2, CensoringMode::Parametric);
        let err = ParamSet::unpack(&[0.0; 3], &lay).unwrap_err();
        assert!(matches!(err, Error::Dimension { found: 3, .. }));
    }

    #[test]
    fn permutation_validation() {
        let p = ParamSet::neutral(&layout(1, 3, 3, 1, 1, CensoringMode::Administrative)).unwrap();
        assert!(p.permute_classes(&[0, 0, 1]).is_err());
        assert!(p.permute_classes(&[2, 1, 0]).is_ok());
    }

    #[test]
    fn toml_round_trip_is_bit_exact() {
        let lay = layout(3, 2, 3, 2, 2, CensoringMode::Parametric);
        let x: Vec<f64> = (0..lay.dimension()).map(|i| (i as f64 * 0.7311).sin() / 3.0).collect();
        let p = ParamSet::unpack(&x, &lay).unwrap();
        let back = ParamSet::from_toml(&p.to_toml().unwrap()).unwrap();
        assert_eq!(back, p);
    }

    fn arb_layout() -> impl Strategy<Value = Layout> {
        (1usize..5, 1usize..4, 1u8..4, 1usize..3, 0usize..4, any::<bool>()).prop_map(|(k, l, m, r, p, par)| {
            layout(
                k,
                l,
                m,
                r,
                p,
                if par { CensoringMode::Parametric } else { CensoringMode::Administrative },
            )
        })
    }

    proptest! {
        #[test]
        fn pack_unpack_round_trip(lay in arb_layout(), seed in prop::collection::vec(-3.0f64..3.0, 64)) {
            let x: Vec<f64> = seed.iter().cycle().take(lay.dimension()).copied().collect();
            let p = ParamSet::unpack(&x, &lay).unwrap();
            p.validate().unwrap();
            let y = p.pack();
            for (a, b) in x.iter().zip(&y) {
                prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
            }
            let q = ParamSet::unpack(&y, &lay).unwrap();
            for (a, b) in p.weights.iter().zip(&q.weights) {
                prop_assert!((a - b).abs() < 1e-14);
            }
            prop_assert_eq!(&p.frailties, &q.frailties);
            prop_assert_eq!(&p.associations, &q.associations);
        }

        #[test]
        fn shared_blocks_match_expanded_model(lay in arb_layout(), seed in prop::collection::vec(-2.0f64..2.0, 64), t in 0.0f64..10.0) {
            let x: Vec<f64> = seed.iter().cycle().take(lay.dimension()).copied().collect();
            let p = ParamSet::unpack(&x, &lay).unwrap();
            let full = p.expand_to_full();
            let z: Vec<f64> = seed.iter().rev().take(lay.covariates).copied().collect();
            for c in 0..lay.model.l {
                for r in 1..=lay.risks {
                    let a = p.personalised_hazard(c, r, &z, t).unwrap();
                    let b = full.personalised_hazard(c, r, &z, t).unwrap();
                    prop_assert_eq!(a, b);
                }
            }
        }

        #[test]
        fn knot_scale_is_absorbed_by_frailty(log_c in -2.0f64..2.0, t in 0.0f64..10.0) {
            // Scaling every knot by c while shifting the frailty by -log c leaves
            // the hazard unchanged; the pinned first knot removes that direction
            // from the packed vector.
            let lay = layout(3, 1, 3, 1, 1, CensoringMode::Administrative);
            let mut p = ParamSet::neutral(&lay).unwrap();
            p.splines[0][0] = BaseHazardSpline::new(10.0, vec![0.0, 0.4, -0.3]).unwrap();
            let mut q = p.clone();
            q.splines[0][0].log_values.iter_mut().for_each(|v| *v += log_c);
            q.frailties[0][0] -= log_c;
            let a = p.personalised_hazard(0, 1, &[0.5], t).unwrap();
            let b = q.personalised_hazard(0, 1, &[0.5], t).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a);
            let repacked = ParamSet::unpack(&q.pack(), &lay).unwrap();
            prop_assert_eq!(repacked.splines[0][0].log_values[0], 0.0);
        }
    }
}
