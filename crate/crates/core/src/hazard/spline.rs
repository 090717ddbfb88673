//! Log-linear base hazard splines.
//!
//! The log rate is interpolated linearly between `K` equally spaced anchors
//! covering `[0, horizon]`, so the rate itself is positive everywhere and its
//! integral has a closed form on every segment.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// `expm1(x) / x`, continuous through `x = 0`.
pub fn exprel(x: f64) -> f64 {
    if x.abs() < 1e-5 {
        1.0 + x * (0.5 + x / 6.0)
    } else {
        x.exp_m1() / x
    }
}

/// Anchor placement shared by all splines of one model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnotGrid {
    pub k: usize,
    pub horizon: f64,
}

/// Where a time falls on a [`KnotGrid`]: segment index and offset into it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPosition {
    pub segment: usize,
    pub offset: f64,
}

impl KnotGrid {
    pub fn new(k: usize, horizon: f64) -> Self {
        Self { k, horizon }
    }

    pub fn spacing(&self) -> f64 {
        if self.k > 1 {
            self.horizon / (self.k - 1) as f64
        } else {
            self.horizon
        }
    }

    pub fn knot_times(&self) -> Vec<f64> {
        if self.k == 1 {
            return vec![0.0];
        }
        let h = self.spacing();
        (0..self.k)
            .map(|j| if j + 1 == self.k { self.horizon } else { j as f64 * h })
            .collect()
    }

    /// Locate `t`, which must already lie in `[0, horizon]`.
    pub fn locate(&self, t: f64) -> GridPosition {
        if self.k == 1 {
            return GridPosition {
                segment: 0,
                offset: t,
            };
        }
        let h = self.spacing();
        let segment = ((t / h).floor() as usize).min(self.k - 2);
        GridPosition {
            segment,
            offset: t - segment as f64 * h,
        }
    }

    /// Cumulative integral at every anchor for the given log values.
    pub fn cumulative_at_knots(&self, log_values: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.push(0.0);
        if self.k == 1 {
            return;
        }
        let h = self.spacing();
        let mut acc = 0.0;
        for j in 0..self.k - 1 {
            let slope = log_values[j + 1] - log_values[j];
            acc += log_values[j].exp() * h * exprel(slope);
            out.push(acc);
        }
    }

    /// Log rate and cumulative rate at a located time.
    #[inline]
    pub fn evaluate(&self, pos: GridPosition, log_values: &[f64], cumulative: &[f64]) -> (f64, f64) {
        let y0 = log_values[pos.segment];
        if self.k == 1 {
            return (y0, y0.exp() * pos.offset);
        }
        let slope = (log_values[pos.segment + 1] - y0) / self.spacing();
        let x = slope * pos.offset;
        let log_rate = y0 + x;
        let cum = cumulative[pos.segment] + y0.exp() * pos.offset * exprel(x);
        (log_rate, cum)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseHazardSpline {
    pub horizon: f64,
    pub knot_times: Vec<f64>,
    pub log_values: Vec<f64>,
}

impl BaseHazardSpline {
    /// Spline on `K = log_values.len()` equally spaced anchors over `[0, horizon]`.
    pub fn new(horizon: f64, log_values: Vec<f64>) -> Result<Self> {
        if log_values.is_empty() {
            return domain("spline needs at least one anchor");
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return domain(format!("spline horizon {horizon} must be positive"));
        }
        if log_values.iter().any(|v| !v.is_finite()) {
            return domain("spline log values must be finite");
        }
        let knot_times = KnotGrid::new(log_values.len(), horizon).knot_times();
        Ok(Self {
            horizon,
            knot_times,
            log_values,
        })
    }

    /// Constant rate over `[0, horizon]` with `k` anchors.
    pub fn constant(horizon: f64, rate: f64, k: usize) -> Result<Self> {
        Self::new(horizon, vec![rate.ln(); k])
    }

    pub fn k(&self) -> usize {
        self.log_values.len()
    }

    pub fn grid(&self) -> KnotGrid {
        KnotGrid::new(self.k(), self.horizon)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon).contains(&t) {
            return domain(format!("time {t} outside [0, {}]", self.horizon));
        }
        Ok(())
    }

    pub fn rate(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let grid = self.grid();
        let mut cum = Vec::with_capacity(self.k());
        grid.cumulative_at_knots(&self.log_values, &mut cum);
        Ok(grid.evaluate(grid.locate(t), &self.log_values, &cum).0.exp())
    }

    /// Exact integral of the rate over `[0, t]`.
    pub fn cumulative(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let grid = self.grid();
        let mut cum = Vec::with_capacity(self.k());
        grid.cumulative_at_knots(&self.log_values, &mut cum);
        Ok(grid.evaluate(grid.locate(t), &self.log_values, &cum).1)
    }
}
