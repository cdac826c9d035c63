//! Log-log convergence-order fits.

use crate::error::{Error, Result};

/// Values below this are treated as numerically zero and left out of fits.
pub const METRIC_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Points that survived the floor.
    pub points: usize,
}

/// Least squares of `log value` on `log ε`.
pub fn fit_order(epsilons: &[f64], values: &[f64]) -> Result<OrderFit> {
    if epsilons.len() != values.len() {
        return Err(Error::InvalidArgument("epsilons and values differ in length".into()));
    }
    if let Some(&e) = epsilons.iter().find(|&&e| !(e > 0.0) || !e.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon {e} is not positive")));
    }
    if let Some(&v) = values.iter().find(|&&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::MetricFloor(format!("value {v} is not positive and finite")));
    }
    let pts: Vec<(f64, f64)> = epsilons
        .iter()
        .zip(values)
        .filter(|&(e, &v)| {
            if v < METRIC_FLOOR {
                log::warn!("value {v:.3e} at epsilon {e} is below the floor {METRIC_FLOOR:e}; excluded from the fit");
                false
            } else {
                true
            }
        })
        .map(|(e, v)| (e.ln(), v.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::MetricFloor(format!("{} usable points, need at least 3", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("all epsilons are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    // a constant series is fitted exactly by slope 0
    let r2 = if ss_tot <= f64::EPSILON * n { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(OrderFit { slope, intercept, r2, points: pts.len() })
}

/// True when `values` strictly decrease along a descending ladder.
pub fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn linear_quadratic_and_constant_series() {
        let eps = [0.2, 0.1, 0.05];
        let f = fit_order(&eps, &[0.2, 0.1, 0.05]).unwrap();
        assert_abs_diff_eq!(f.slope, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.r2, 1.0, epsilon = 1e-12);
        let q: Vec<f64> = eps.iter().map(|e| 3.0 * e * e).collect();
        assert_abs_diff_eq!(fit_order(&eps, &q).unwrap().slope, 2.0, epsilon = 1e-12);
        let c = fit_order(&eps, &[0.7; 3]).unwrap();
        assert_abs_diff_eq!(c.slope, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.intercept, 0.7f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn floors_and_errors() {
        assert!(matches!(fit_order(&[0.2, 0.1, 0.05], &[1.0, 0.0, 0.1]), Err(Error::MetricFloor(_))));
        assert!(matches!(fit_order(&[0.2, 0.1, 0.05, 0.025], &[1.0, 0.5, 0.25, 1e-14]).map(|f| f.points), Ok(3)));
        assert!(matches!(fit_order(&[0.2, 0.1, 0.05], &[1.0, 0.5, 1e-13]), Err(Error::MetricFloor(_))));
        assert!(fit_order(&[0.2, 0.1], &[1.0, 0.5]).is_err());
    }

    #[test]
    fn monotonicity() {
        assert!(strictly_decreasing(&[3.0, 2.0, 1.0]));
        assert!(!strictly_decreasing(&[3.0, 3.0, 1.0]));
    }
}
