//! Least-squares exponent fitting on log-log pairs.

use serde::Serialize;

use crate::error::{Result, SparseDomError};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the log-log fit.
    pub rms_residual: f64,
    pub r_squared: f64,
}

/// Fits `log y = slope * log x + intercept` by least squares.
pub fn fit_exponent(pairs: &[(f64, f64)]) -> Result<FitResult> {
    if pairs.len() < 4 {
        return Err(SparseDomError::InvalidParam(format!(
            "exponent fit needs >= 4 pairs, got {}",
            pairs.len()
        )));
    }
    if pairs.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return Err(SparseDomError::InvalidParam("exponent fit needs positive pairs".into()));
    }
    let logs: Vec<(f64, f64)> = pairs.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    Ok(linear_fit(&logs))
}

/// Plain affine least squares `y = slope * x + intercept` (no log).
pub fn linear_fit(pairs: &[(f64, f64)]) -> FitResult {
    let n = pairs.len() as f64;
    let sx: f64 = pairs.iter().map(|p| p.0).sum();
    let sy: f64 = pairs.iter().map(|p| p.1).sum();
    let sxx: f64 = pairs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pairs.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    let (slope, intercept) = if denom.abs() < 1e-300 {
        (0.0, sy / n)
    } else {
        let m = (n * sxy - sx * sy) / denom;
        (m, (sy - m * sx) / n)
    };
    let mean_y = sy / n;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for &(x, y) in pairs {
        let e = y - (slope * x + intercept);
        ss_res += e * e;
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    FitResult { slope, intercept, rms_residual: (ss_res / n).sqrt(), r_squared }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_recovered() {
        let beta = 1.7;
        let pairs: Vec<(f64, f64)> = (1..10).map(|k| {
            let x = 1.5f64.powi(k);
            (x, 3.0 * x.powf(beta))
        })
        .collect();
        let fit = fit_exponent(&pairs).unwrap();
        assert!((fit.slope - beta).abs() < 1e-10, "slope {}", fit.slope);
        assert!(fit.rms_residual < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_values_give_zero_slope() {
        let pairs: Vec<(f64, f64)> = (1..8).map(|k| (k as f64, 2.0)).collect();
        let fit = fit_exponent(&pairs).unwrap();
        assert!(fit.slope.abs() < 1e-12);
    }

    #[test]
    fn too_few_pairs_rejected() {
        assert!(fit_exponent(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
        assert!(fit_exponent(&[(1.0, 1.0), (2.0, 2.0), (3.0, 0.0), (4.0, 1.0)]).is_err());
    }
}
