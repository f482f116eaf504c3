//! Refinement studies: per-level residuals and a log-log order fit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One refinement level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    /// Points per axis.
    pub n: usize,
    pub residual: f64,
    /// At or below the roundoff floor; excluded from the fit.
    pub saturated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceFit {
    pub levels: Vec<Level>,
    /// Slope of `−log(residual)` against `log N` over unsaturated levels.
    pub order: Option<f64>,
    /// Orders between consecutive unsaturated levels.
    pub local_orders: Vec<f64>,
    /// Fewer than two unsaturated levels: the order test is skipped.
    pub saturated: bool,
}

impl ConvergenceFit {
    /// Pass rule: saturated studies pass, otherwise the fitted order must be
    /// at least `min_order`.
    pub fn passes(&self, min_order: f64) -> bool {
        match self.order {
            Some(p) => p >= min_order,
            None => self.saturated,
        }
    }
}

/// Least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Fits `residual ≈ C·N^{−p}`. Levels whose residual is at or below `floor`
/// count as saturated, as does any level that fails to improve on a
/// saturated predecessor.
pub fn fit_order(ns: &[usize], residuals: &[f64], floor: f64) -> Result<ConvergenceFit> {
    if ns.len() != residuals.len() {
        return Err(Error::Argument("one residual per refinement level".into()));
    }
    if ns.len() < 3 {
        return Err(Error::Argument(format!(
            "a convergence study needs at least 3 refinement levels, got {}",
            ns.len()
        )));
    }
    if ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Argument("refinement levels must increase strictly".into()));
    }
    if residuals.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::Argument("residuals must be finite and non-negative".into()));
    }
    let mut saturated_seen = false;
    let levels: Vec<Level> = ns
        .iter()
        .zip(residuals)
        .map(|(&n, &residual)| {
            saturated_seen |= residual <= floor;
            Level {
                n,
                residual,
                saturated: saturated_seen,
            }
        })
        .collect();
    let live: Vec<&Level> = levels.iter().filter(|l| !l.saturated).collect();
    let x: Vec<f64> = live.iter().map(|l| (l.n as f64).ln()).collect();
    let y: Vec<f64> = live.iter().map(|l| -l.residual.ln()).collect();
    let local_orders = x
        .windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| (ys[1] - ys[0]) / (xs[1] - xs[0]))
        .collect();
    let (order, saturated) = if live.len() >= 2 {
        (Some(slope(&x, &y)), false)
    } else {
        (None, true)
    };
    Ok(ConvergenceFit {
        levels,
        order,
        local_orders,
        saturated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_a_power_law() {
        let ns = [16, 32, 64, 128];
        let r: Vec<f64> = ns.iter().map(|&n| 3.0 * (n as f64).powf(-6.0)).collect();
        let fit = fit_order(&ns, &r, 0.0).unwrap();
        assert!((fit.order.unwrap() - 6.0).abs() < 1e-12);
        assert!(fit.passes(5.0));
        assert!(!fit.passes(7.0));
    }

    #[test]
    fn floor_levels_are_saturated() {
        let fit = fit_order(&[32, 48, 64], &[1e-14, 2e-15, 3e-15], 1e-12).unwrap();
        assert!(fit.saturated);
        assert_eq!(fit.order, None);
        assert!(fit.passes(5.0));
        let partial = fit_order(&[16, 32, 64], &[1e-4, 1e-8, 1e-15], 1e-13).unwrap();
        assert!(partial.levels[2].saturated);
        assert!((partial.order.unwrap() - 4.0 * std::f64::consts::LN_10 / std::f64::consts::LN_2).abs() < 1e-9);
    }

    #[test]
    fn too_few_levels_is_an_error() {
        assert!(fit_order(&[32], &[1e-3], 0.0).is_err());
        assert!(fit_order(&[32, 64], &[1e-3, 1e-5], 0.0).is_err());
        assert!(fit_order(&[64, 32, 16], &[1e-3, 1e-4, 1e-5], 0.0).is_err());
    }
}
