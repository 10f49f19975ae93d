//! Evaluation quantities: SNR, held-out normalized divergences and
//! per-component summaries.

use serde::{Deserialize, Serialize};

use crate::divergence::d_beta;
use crate::error::{Error, Result};
use crate::matrix::{frobenius_norm, DenseMatrix, MaskMatrix};

/// 20 log10(‖V̂‖_F / ‖V − V̂‖_F).
pub fn snr_db(vhat: &DenseMatrix, v: &DenseMatrix) -> Result<f64> {
    vhat.ensure_same_shape(v, "snr_db")?;
    let err: f64 = vhat
        .as_slice()
        .iter()
        .zip(v.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if err == 0.0 {
        return Err(Error::Domain("SNR is undefined without noise (V = V̂)".into()));
    }
    Ok(20.0 * (frobenius_norm(vhat) / err.sqrt()).log10())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoldoutDivergence {
    /// Mean per-entry divergence over the evaluated entries.
    pub value: f64,
    pub evaluated: usize,
    /// Held-out entries outside the divergence domain, left out of the mean.
    pub skipped: usize,
}

/// Mean d_β(v | v̂) over entries where `holdout` is set.
pub fn normalized_divergence(
    v: &DenseMatrix,
    vhat: &DenseMatrix,
    holdout: &MaskMatrix,
    beta: f64,
) -> Result<HoldoutDivergence> {
    v.ensure_same_shape(vhat, "normalized_divergence")?;
    holdout.ensure_shape(v.shape(), "normalized_divergence holdout")?;
    if holdout.observed_count() == 0 {
        return Err(Error::InvalidConfig("holdout set is empty".into()));
    }
    let mut sum = 0.0;
    let (mut evaluated, mut skipped) = (0usize, 0usize);
    for ((&x, &y), &m) in v.as_slice().iter().zip(vhat.as_slice()).zip(holdout.as_slice()) {
        if !m {
            continue;
        }
        match d_beta(x, y, beta) {
            Ok(d) => {
                sum += d;
                evaluated += 1;
            }
            Err(Error::Domain(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if evaluated == 0 {
        return Err(Error::Domain(format!(
            "all {skipped} held-out entries lie outside the domain of d_beta for beta = {beta}"
        )));
    }
    Ok(HoldoutDivergence {
        value: sum / evaluated as f64,
        evaluated,
        skipped,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub k: usize,
    pub relevance: f64,
    /// Standard deviation of the entries of w_k h_k.
    pub std: f64,
}

/// Components ordered by decreasing relevance, ties by index.
///
/// Without `lambda` the relevance falls back to ½‖h_k‖².
pub fn component_summary(
    w: &DenseMatrix,
    h: &DenseMatrix,
    lambda: Option<&[f64]>,
) -> Result<Vec<ComponentSummary>> {
    if w.cols() != h.rows() {
        return Err(Error::ShapeMismatch {
            op: "component_summary",
            left: w.shape(),
            right: h.shape(),
        });
    }
    let k = w.cols();
    if let Some(l) = lambda {
        if l.len() != k {
            return Err(Error::ShapeMismatch {
                op: "component_summary lambda",
                left: (l.len(), 1),
                right: (k, 1),
            });
        }
    }
    let count = (w.rows() * h.cols()) as f64;
    let mut out: Vec<ComponentSummary> = (0..k)
        .map(|kk| {
            let relevance = lambda.map_or_else(|| 0.5 * h.row_sq(kk), |l| l[kk]);
            // Entries of the outer product: mean and mean square factorize.
            let (sw, sh) = (w.col_l1(kk), h.row_l1(kk));
            let (qw, qh) = (w.col_sq(kk), h.row_sq(kk));
            let mean = sw * sh / count;
            let var = (qw * qh / count - mean * mean).max(0.0);
            ComponentSummary {
                k: kk,
                relevance,
                std: var.sqrt(),
            }
        })
        .collect();
    out.sort_by(|a, b| b.relevance.total_cmp(&a.relevance).then(a.k.cmp(&b.k)));
    Ok(out)
}
