//! Influence-function inference: variance, Wald intervals, and z-tests
//! from per-observation scores.

use serde::{Deserialize, Serialize};

use crate::math::{mean, normal_quantile, normal_sf};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferenceResult {
    pub sigma2: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub z: f64,
    pub p_value: f64,
}

/// Score variance `N^{-1} sum (score_i - theta_hat)^2`; divides by N, not
/// N-1, matching the estimator's displayed formula.
pub fn variance_hat(scores: &[f64], theta_hat: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::validation("variance_hat: empty scores"));
    }
    let m = mean(scores);
    if (m - theta_hat).abs() > 1e-10 * theta_hat.abs().max(1.0) {
        return Err(Error::validation(format!(
            "variance_hat: theta_hat {theta_hat} is not the score mean {m}"
        )));
    }
    Ok(scores.iter().map(|s| (s - theta_hat) * (s - theta_hat)).sum::<f64>()
        / scores.len() as f64)
}

/// Wald interval `theta_hat +/- z_{(1+level)/2} sqrt(sigma2 / n)`.
pub fn confidence_interval(theta_hat: f64, sigma2: f64, n: usize, level: f64) -> (f64, f64) {
    assert!(level > 0.0 && level < 1.0, "level must be in (0,1)");
    assert!(sigma2 >= 0.0 && n > 0);
    let z = normal_quantile(0.5 * (1.0 + level));
    let half = z * (sigma2 / n as f64).sqrt();
    (theta_hat - half, theta_hat + half)
}

/// Two-sided normal p-value for `H0: theta = null_value`.
pub fn z_test(theta_hat: f64, sigma2: f64, n: usize, null_value: f64) -> f64 {
    let se = (sigma2 / n as f64).sqrt();
    if se == 0.0 {
        return if theta_hat == null_value { 1.0 } else { 0.0 };
    }
    let z = (theta_hat - null_value) / se;
    (2.0 * normal_sf(z.abs())).min(1.0)
}

/// Full inference bundle for a point estimate with per-observation scores.
pub fn infer(theta_hat: f64, scores: &[f64], level: f64, null_value: f64) -> Result<InferenceResult> {
    let sigma2 = variance_hat(scores, theta_hat)?;
    let n = scores.len();
    let ci = confidence_interval(theta_hat, sigma2, n, level);
    let se = (sigma2 / n as f64).sqrt();
    let p_value = z_test(theta_hat, sigma2, n, null_value);
    let z = if se == 0.0 { 0.0 } else { (theta_hat - null_value) / se };
    Ok(InferenceResult { sigma2, se, ci, z, p_value })
}
