//! Composite Simpson integration aligned to spline anchors.

use crate::error::{domain, Result};

/// Default number of Simpson sub-intervals across `[0, horizon]`.
pub const DEFAULT_INTERVALS: usize = 2048;

/// Running integrals of a vector-valued integrand.
///
/// Returns `out[i][c] = integral over [0, times[i]] of component c`.
/// Breakpoints are the anchors together with the requested times; each
/// piece receives an even number of sub-intervals proportional to its
/// length, so the integrand is smooth on every Simpson panel.
pub fn cumulative_simpson<F>(
    mut integrand: F,
    width: usize,
    times: &[f64],
    anchors: &[f64],
    horizon: f64,
    intervals: usize,
) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &mut [f64]) -> Result<()>,
{
    if times.windows(2).any(|w| w[1] < w[0]) {
        return domain("quadrature times must be non-decreasing");
    }
    if let Some(t) = times.iter().find(|t| !(0.0..=horizon).contains(*t)) {
        return domain(format!("time {t} outside [0, {horizon}]"));
    }
    let mut breaks: Vec<f64> = anchors
        .iter()
        .copied()
        .filter(|a| *a > 0.0 && *a < horizon)
        .chain(times.iter().copied())
        .chain([0.0])
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let density = intervals.max(2) as f64 / horizon.max(f64::MIN_POSITIVE);
    let mut acc = vec![0.0; width];
    let mut fa = vec![0.0; width];
    let mut fm = vec![0.0; width];
    let mut fb = vec![0.0; width];
    integrand(0.0, &mut fa)?;
    let mut out = Vec::with_capacity(times.len());
    let mut next = 0;
    while next < times.len() && times[next] == 0.0 {
        out.push(acc.clone());
        next += 1;
    }
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let panels = (((b - a) * density / 2.0).ceil() as usize).max(1);
        let h = (b - a) / panels as f64;
        for p in 0..panels {
            let x0 = a + p as f64 * h;
            let x1 = if p + 1 == panels { b } else { x0 + h };
            integrand(0.5 * (x0 + x1), &mut fm)?;
            integrand(x1, &mut fb)?;
            let scale = (x1 - x0) / 6.0;
            for c in 0..width {
                acc[c] += scale * (fa[c] + 4.0 * fm[c] + fb[c]);
            }
            std::mem::swap(&mut fa, &mut fb);
        }
        while next < times.len() && times[next] == b {
            out.push(acc.clone());
            next += 1;
        }
    }
    Ok(out)
}
