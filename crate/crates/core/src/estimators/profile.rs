use crate::error::{domain, Error, Result};
use crate::hazard::{GridPosition, ParamSet};
use crate::likelihood::{log_sum_exp, SplineTables};

/// A fitted parameter set conditioned on one covariate vector.
///
/// All pointwise estimators are evaluated through this view so that the
/// spline tables and linear predictors are computed once.
pub struct Profile<'a> {
    params: &'a ParamSet,
    tables: SplineTables,
    /// `[risk - 1][class]`
    linear: Vec<Vec<f64>>,
    log_weights: Vec<f64>,
    z: Vec<f64>,
}

impl<'a> Profile<'a> {
    pub fn new(params: &'a ParamSet, z: &[f64]) -> Result<Self> {
        params.validate()?;
        if z.len() != params.covariates {
            return Err(Error::Dimension {
                expected: params.covariates,
                found: z.len(),
            });
        }
        if z.iter().any(|v| !v.is_finite()) {
            return domain("covariate vector must be finite");
        }
        let linear = (1..=params.risks)
            .map(|r| (0..params.model.l).map(|c| params.linear_predictor(r, c, z)).collect())
            .collect();
        Ok(Self {
            params,
            tables: SplineTables::new(params),
            linear,
            log_weights: params.weights.iter().map(|w| w.ln()).collect(),
            z: z.to_vec(),
        })
    }

    pub fn params(&self) -> &ParamSet {
        self.params
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn horizon(&self) -> f64 {
        self.params.horizon
    }

    pub fn classes(&self) -> usize {
        self.params.model.l
    }

    pub fn risks(&self) -> usize {
        self.params.risks
    }

    /// Anchor times of every spline in the model.
    pub fn anchors(&self) -> Vec<f64> {
        self.tables.grid().knot_times()
    }

    pub(crate) fn locate(&self, t: f64) -> Result<GridPosition> {
        if !(0.0..=self.params.horizon).contains(&t) {
            return domain(format!("time {t} outside [0, {}]", self.params.horizon));
        }
        Ok(self.tables.grid().locate(t))
    }

    pub(crate) fn check_risk(&self, risk: usize) -> Result<()> {
        if risk == 0 || risk > self.params.risks {
            return domain(format!("risk {risk} outside 1..={}", self.params.risks));
        }
        Ok(())
    }

    /// Personalised log hazard and cumulative hazard of one class and risk.
    #[inline]
    pub(crate) fn class_risk(&self, class: usize, risk: usize, pos: GridPosition) -> (f64, f64) {
        let row = self.params.model.spline_row(class);
        let (log_rate, cum) = self.tables.risk_at(self.params, risk, row, pos);
        let lp = self.linear[risk - 1][class];
        (log_rate + lp, cum * lp.exp())
    }

    /// Log rate and cumulative rate of the censoring risk (parametric mode).
    #[inline]
    pub(crate) fn censoring(&self, pos: GridPosition) -> Option<(f64, f64)> {
        self.tables.censoring_at(self.params, pos)
    }

    /// Total cumulative hazard of the true risks within a class.
    #[inline]
    pub(crate) fn class_exposure(&self, class: usize, pos: GridPosition) -> f64 {
        (1..=self.params.risks).map(|r| self.class_risk(class, r, pos).1).sum()
    }

    pub fn class_decon_survival(&self, class: usize, risk: usize, t: f64) -> Result<f64> {
        self.check_risk(risk)?;
        if class >= self.classes() {
            return domain(format!("class {class} outside 0..{}", self.classes()));
        }
        let pos = self.locate(t)?;
        Ok((-self.class_risk(class, risk, pos).1).exp())
    }

    /// `sum_l w_l exp(-exp(beta.z) Lambda_r^l(t))`.
    pub fn decon_survival(&self, risk: usize, t: f64) -> Result<f64> {
        self.check_risk(risk)?;
        let pos = self.locate(t)?;
        Ok((0..self.classes())
            .map(|c| self.params.weights[c] * (-self.class_risk(c, risk, pos).1).exp())
            .sum())
    }

    /// Hazard of the decontaminated survival, `-d/dt log S~_r`.
    pub fn decon_hazard(&self, risk: usize, t: f64) -> Result<f64> {
        self.check_risk(risk)?;
        let pos = self.locate(t)?;
        self.ratio(risk, pos, |c| self.class_risk(c, risk, pos).1)
    }

    /// Crude cause-specific hazard: class hazards averaged with the
    /// posterior weight of having survived every true risk until `t`.
    pub fn crude_hazard(&self, risk: usize, t: f64) -> Result<f64> {
        self.check_risk(risk)?;
        let pos = self.locate(t)?;
        self.ratio(risk, pos, |c| self.class_exposure(c, pos))
    }

    #[inline]
    pub(crate) fn crude_hazard_at(&self, risk: usize, pos: GridPosition) -> Result<f64> {
        self.ratio(risk, pos, |c| self.class_exposure(c, pos))
    }

    fn ratio(&self, risk: usize, pos: GridPosition, exposure: impl Fn(usize) -> f64) -> Result<f64> {
        let l = self.classes();
        let mut num = Vec::with_capacity(l);
        let mut den = Vec::with_capacity(l);
        for c in 0..l {
            let log_surv = self.log_weights[c] - exposure(c);
            den.push(log_surv);
            num.push(log_surv + self.class_risk(c, risk, pos).0);
        }
        let log_den = log_sum_exp(&den);
        if log_den == f64::NEG_INFINITY {
            return Err(Error::Numerical(format!(
                "every class has zero survival probability for risk {risk}"
            )));
        }
        Ok((log_sum_exp(&num) - log_den).exp())
    }

    /// Probability that no event of any kind, censoring included in
    /// parametric mode, has happened by `t`.
    pub fn event_free_survival(&self, t: f64) -> Result<f64> {
        let pos = self.locate(t)?;
        let censor = self.censoring(pos).map_or(0.0, |c| c.1);
        Ok((0..self.classes())
            .map(|c| self.params.weights[c] * (-self.class_exposure(c, pos) - censor).exp())
            .sum())
    }
}
