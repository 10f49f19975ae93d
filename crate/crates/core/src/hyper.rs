//! Hyperparameter selection: method-of-moments choice of the scale b and
//! dispersion presets for the standard noise models.

use std::f64::consts::PI;

use crate::ard::Penalty;
use crate::datagen::NoiseParam;
use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, MaskMatrix};

/// Mean of the observed entries of `v`.
pub fn sample_mean(v: &DenseMatrix, mask: Option<&MaskMatrix>) -> Result<f64> {
    match mask {
        None => {
            if v.is_empty() {
                return Err(Error::InvalidConfig("empty data matrix".into()));
            }
            Ok(v.mean())
        }
        Some(m) => {
            m.ensure_shape(v.shape(), "sample_mean")?;
            let mut sum = 0.0;
            let mut count = 0usize;
            for (&x, &o) in v.as_slice().iter().zip(m.as_slice()) {
                if o {
                    sum += x;
                    count += 1;
                }
            }
            if count == 0 {
                return Err(Error::InvalidConfig("mask observes no entries".into()));
            }
            Ok(sum / count as f64)
        }
    }
}

fn check_shape_param(a: f64, penalty: Penalty) -> Result<()> {
    let (min, what) = match penalty {
        Penalty::L2 => (1.0, "a > 1 for the half-normal model"),
        Penalty::L1 => (2.0, "a > 2 for the exponential model"),
    };
    if !(a > min) {
        return Err(Error::Domain(format!(
            "prior mean of V̂ needs {what}, got a = {a}"
        )));
    }
    Ok(())
}

/// Prior expectation of an entry of V̂ = W H under the hierarchical model.
pub fn prior_mean_vhat(k: usize, a: f64, b: f64, penalty: Penalty) -> Result<f64> {
    check_shape_param(a, penalty)?;
    if k == 0 || !(b > 0.0) {
        return Err(Error::Domain(format!("need K ≥ 1 and b > 0, got K = {k}, b = {b}")));
    }
    let k = k as f64;
    Ok(match penalty {
        Penalty::L2 => 2.0 * k * b / (PI * (a - 1.0)),
        Penalty::L1 => k * b * b / ((a - 1.0) * (a - 2.0)),
    })
}

/// Scale b that makes the prior mean of V̂ equal to `mu_hat`.
pub fn select_b(mu_hat: f64, k: usize, a: f64, penalty: Penalty) -> Result<f64> {
    check_shape_param(a, penalty)?;
    if !(mu_hat > 0.0) || !mu_hat.is_finite() {
        return Err(Error::Domain(format!("sample mean must be positive, got {mu_hat}")));
    }
    if k == 0 {
        return Err(Error::Domain("K must be at least 1".into()));
    }
    let k = k as f64;
    Ok(match penalty {
        Penalty::L2 => PI * (a - 1.0) * mu_hat / (2.0 * k),
        Penalty::L1 => ((a - 1.0) * (a - 2.0) * mu_hat / k).sqrt(),
    })
}

/// Dispersion φ implied by a noise model matched to β.
///
/// Gaussian noise of variance σ² gives σ², multiplicative Gamma noise of
/// shape α gives 1/α, and scaled Poisson noise P(s v̂)/s gives 1/s (which is 1
/// for plain Poisson data).
pub fn phi_preset(beta: f64, noise: &NoiseParam) -> Result<f64> {
    match (noise, beta) {
        (NoiseParam::Gaussian { sigma }, 2.0) => Ok(sigma * sigma),
        (NoiseParam::Poisson { scale }, 1.0) => Ok(1.0 / scale),
        (NoiseParam::Gamma { alpha }, 0.0) => Ok(1.0 / alpha),
        _ if beta != 0.0 && beta != 1.0 && beta != 2.0 => Err(Error::InvalidConfig(format!(
            "no generative preset for beta = {beta}; supply phi explicitly"
        ))),
        _ => Err(Error::InvalidConfig(format!(
            "noise model {noise:?} does not match beta = {beta}"
        ))),
    }
}
