//! The β-divergence family and the separable matrix costs built from it.
//!
//! | β | name | d(x\|y) |
//! |---|------|---------|
//! | 0 | Itakura-Saito | x/y − log(x/y) − 1 |
//! | 1 | Kullback-Leibler | x log(x/y) − x + y |
//! | 2 | squared Euclidean | (x − y)²/2 |
//! | other | generic | x^β/(β(β−1)) + y^β/β − x y^(β−1)/(β−1) |
//!
//! Branches are chosen by exact comparison with 0 and 1. For β = 1 the
//! convention 0·log 0 = 0 makes x = 0 admissible; for β ≤ 0 a zero datum has
//! infinite cost and is rejected.

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, MaskMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BetaRegime {
    ItakuraSaito,
    KullbackLeibler,
    Generic,
}

impl BetaRegime {
    pub fn of(beta: f64) -> Self {
        if beta == 0.0 {
            BetaRegime::ItakuraSaito
        } else if beta == 1.0 {
            BetaRegime::KullbackLeibler
        } else {
            BetaRegime::Generic
        }
    }
}

/// Scalar β-divergence d_β(x | y).
pub fn d_beta(x: f64, y: f64, beta: f64) -> Result<f64> {
    if !beta.is_finite() {
        return Err(Error::Domain(format!("beta must be finite, got {beta}")));
    }
    if !y_admissible(y, beta) || !y.is_finite() {
        return Err(Error::Domain(format!(
            "d_beta needs y > 0 (y >= 0 when beta > 1), got y = {y}"
        )));
    }
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("d_beta needs x >= 0, got x = {x}")));
    }
    if x == 0.0 && beta <= 0.0 {
        return Err(Error::Domain(format!(
            "d_beta(0 | {y}) is infinite for beta = {beta}"
        )));
    }
    let d = eval_unchecked(x, y, beta, BetaRegime::of(beta));
    if !d.is_finite() {
        return Err(Error::NonFinite(format!("d_beta({x} | {y}), beta = {beta}")));
    }
    Ok(d)
}

/// y = 0 keeps every term finite only when β > 1.
#[inline]
fn y_admissible(y: f64, beta: f64) -> bool {
    y > 0.0 || (y == 0.0 && beta > 1.0)
}

#[inline]
fn eval_unchecked(x: f64, y: f64, beta: f64, regime: BetaRegime) -> f64 {
    if x == y {
        return 0.0;
    }
    let d = match regime {
        BetaRegime::ItakuraSaito => {
            let r = x / y;
            r - r.ln() - 1.0
        }
        BetaRegime::KullbackLeibler => {
            if x == 0.0 {
                y
            } else {
                x * (x / y).ln() - x + y
            }
        }
        BetaRegime::Generic => {
            if beta == 2.0 {
                0.5 * (x - y) * (x - y)
            } else {
                x.powf(beta) / (beta * (beta - 1.0)) + y.powf(beta) / beta
                    - x * y.powf(beta - 1.0) / (beta - 1.0)
            }
        }
    };
    // Cancellation near x = y can leave a few ulps below zero.
    d.max(0.0)
}

/// Σ over observed entries of d_β(v | v̂), reporting the first failing cell.
pub(crate) fn divergence_sum(
    v: &DenseMatrix,
    vhat: &DenseMatrix,
    mask: Option<&MaskMatrix>,
    beta: f64,
) -> Result<f64> {
    v.ensure_same_shape(vhat, "divergence")?;
    if let Some(m) = mask {
        m.ensure_shape(v.shape(), "divergence mask")?;
    }
    let regime = BetaRegime::of(beta);
    let cols = v.cols();
    let mut total = 0.0;
    for (i, (&x, &y)) in v.as_slice().iter().zip(vhat.as_slice()).enumerate() {
        if let Some(m) = mask {
            if !m.as_slice()[i] {
                continue;
            }
        }
        if !y_admissible(y, beta) || !(x >= 0.0) || (x == 0.0 && beta <= 0.0) {
            return Err(Error::Domain(format!(
                "d_beta({x} | {y}) undefined for beta = {beta} at row {}, column {}",
                i / cols,
                i % cols
            )));
        }
        total += eval_unchecked(x, y, beta, regime);
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("divergence sum".into()));
    }
    Ok(total)
}

/// D_β(V | V̂) = Σ_fn d_β(v_fn | v̂_fn).
pub fn d_beta_matrix(v: &DenseMatrix, vhat: &DenseMatrix, beta: f64) -> Result<f64> {
    divergence_sum(v, vhat, None, beta)
}

/// D_β restricted to entries where the mask is set; missing entries add nothing.
pub fn d_beta_masked(
    v: &DenseMatrix,
    vhat: &DenseMatrix,
    mask: &MaskMatrix,
    beta: f64,
) -> Result<f64> {
    divergence_sum(v, vhat, Some(mask), beta)
}

/// Largest of |d_{β0+ε}(x|y) − d_{β0}(x|y)| and |d_{β0−ε}(x|y) − d_{β0}(x|y)|.
///
/// With β0 ∈ {0, 1} this compares the generic branch against the limiting form.
pub fn continuity_check(x: f64, y: f64, beta0: f64, eps: f64) -> Result<f64> {
    let at = d_beta(x, y, beta0)?;
    let above = d_beta(x, y, beta0 + eps)?;
    let below = d_beta(x, y, beta0 - eps)?;
    Ok((above - at).abs().max((below - at).abs()))
}
