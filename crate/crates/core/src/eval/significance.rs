use super::normal::normal_inverse_cdf;
use crate::{Error, Result};

/// Arithmetic mean, accumulated relative to the first value so that a
/// constant series returns that constant exactly.
pub fn mean(xs: &[f64]) -> f64 {
    let Some(&x0) = xs.first() else {
        return f64::NAN;
    };
    x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64
}

/// Standard deviation with the `n − 1` denominator.
pub fn sample_std(xs: &[f64]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::Evaluation(format!(
            "sample standard deviation needs at least 2 values, got {}",
            xs.len()
        )));
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Ok((ss / (xs.len() - 1) as f64).sqrt())
}

/// `μ + σ·Φ⁻¹(p_percent / 100)` for a series of AUCs.
pub fn significance(aucs: &[f64], p_percent: f64) -> Result<f64> {
    let sigma = sample_std(aucs)?;
    if aucs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation("AUC series has non-finite values".into()));
    }
    let z = normal_inverse_cdf(p_percent / 100.0)?;
    Ok(mean(aucs) + sigma * z)
}
