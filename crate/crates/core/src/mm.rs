//! Majorization-minimization for unpenalized β-NMF.
//!
//! With ṽ = W H̃, the statistics
//!
//! ```text
//! p_kn = Σ_f w_fk v_fn ṽ_fn^(β−2)        q_kn = Σ_f w_fk ṽ_fn^(β−1)
//! ```
//!
//! define a majorizer of D_β(V | W H) around H̃ whose minimizer is the
//! multiplicative update h_kn = h̃_kn (p_kn / q_kn)^γ(β). The W step is the same
//! update applied to the transposed problem Vᵀ ≈ Hᵀ Wᵀ.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::divergence::divergence_sum;
use crate::error::{Error, Result};
use crate::hyper::sample_mean;
use crate::matrix::{matmul_into, matmul_nt_into, matmul_tn_into, DenseMatrix, MaskMatrix};
use crate::rng::seeded_rng;

/// Default numeric floor applied to updated entries of W and H.
pub const DEFAULT_FLOOR: f64 = 1e-15;

#[derive(Clone, Debug, PartialEq)]
pub struct PqStats {
    pub p: DenseMatrix,
    pub q: DenseMatrix,
}

/// Exponent of the standard multiplicative update.
pub fn gamma_exponent(beta: f64) -> f64 {
    if beta < 1.0 {
        1.0 / (2.0 - beta)
    } else if beta <= 2.0 {
        1.0
    } else {
        1.0 / (beta - 1.0)
    }
}

/// How the per-entry weights v·ṽ^(β−2) and ṽ^(β−1) are evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
enum WeightKind {
    /// β = 2: weights v and ṽ.
    Euclidean,
    /// β = 1: weights v/ṽ and 1.
    KullbackLeibler,
    /// β = 0: weights v/ṽ² and 1/ṽ.
    ItakuraSaito,
    Generic(f64),
}

impl WeightKind {
    fn of(beta: f64) -> Self {
        if beta == 2.0 {
            WeightKind::Euclidean
        } else if beta == 1.0 {
            WeightKind::KullbackLeibler
        } else if beta == 0.0 {
            WeightKind::ItakuraSaito
        } else {
            WeightKind::Generic(beta)
        }
    }
}

/// Scratch buffers for the p/q statistics of both factor updates.
pub(crate) struct Workspace {
    vhat: DenseMatrix,
    num: DenseMatrix,
    den: DenseMatrix,
    /// Set when every observed denominator weight is exactly 1 (β = 1, no mask).
    den_is_ones: bool,
    /// Set while `vhat` equals the product of the current factors.
    vhat_fresh: bool,
    pub(crate) p_h: DenseMatrix,
    pub(crate) q_h: DenseMatrix,
    pub(crate) p_w: DenseMatrix,
    pub(crate) q_w: DenseMatrix,
}

impl Workspace {
    pub(crate) fn new(f: usize, n: usize, k: usize) -> Self {
        Self {
            vhat: DenseMatrix::zeros(f, n),
            num: DenseMatrix::zeros(f, n),
            den: DenseMatrix::zeros(f, n),
            den_is_ones: false,
            vhat_fresh: false,
            p_h: DenseMatrix::zeros(k, n),
            q_h: DenseMatrix::zeros(k, n),
            p_w: DenseMatrix::zeros(f, k),
            q_w: DenseMatrix::zeros(f, k),
        }
    }

    /// W H for the current factors, recomputed only after a factor changed.
    pub(crate) fn current_vhat(&mut self, w: &DenseMatrix, h: &DenseMatrix) -> &DenseMatrix {
        if !self.vhat_fresh {
            matmul_into(w, h, &mut self.vhat);
            self.vhat_fresh = true;
        }
        &self.vhat
    }

    pub(crate) fn invalidate(&mut self) {
        self.vhat_fresh = false;
    }

    /// Recomputes ṽ = W H and the per-entry weights.
    fn refresh(
        &mut self,
        v: &DenseMatrix,
        w: &DenseMatrix,
        h: &DenseMatrix,
        mask: Option<&MaskMatrix>,
        beta: f64,
    ) -> Result<()> {
        self.current_vhat(w, h);
        let kind = WeightKind::of(beta);
        let observed = mask.map(MaskMatrix::as_slice);
        let cols = v.cols();
        let vs = v.as_slice();
        let vh = self.vhat.as_slice();
        let num = self.num.as_mut_slice();
        let den = self.den.as_mut_slice();
        for i in 0..vs.len() {
            if let Some(m) = observed {
                if !m[i] {
                    num[i] = 0.0;
                    den[i] = 0.0;
                    continue;
                }
            }
            let (x, y) = (vs[i], vh[i]);
            if y <= 0.0 && beta < 2.0 {
                return Err(Error::Singular(format!(
                    "W H vanishes at observed entry (row {}, column {})",
                    i / cols,
                    i % cols
                )));
            }
            let (a, b) = match kind {
                WeightKind::Euclidean => (x, y),
                WeightKind::KullbackLeibler => (x / y, 1.0),
                WeightKind::ItakuraSaito => {
                    let r = 1.0 / y;
                    (x * r * r, r)
                }
                WeightKind::Generic(beta) => {
                    let t = y.powf(beta - 2.0);
                    (x * t, y * t)
                }
            };
            num[i] = a;
            den[i] = b;
        }
        self.den_is_ones = kind == WeightKind::KullbackLeibler && mask.is_none();
        Ok(())
    }

    /// Fills `p_h`, `q_h` for an update of H at the current (W, H).
    pub(crate) fn stats_for_h(
        &mut self,
        v: &DenseMatrix,
        w: &DenseMatrix,
        h: &DenseMatrix,
        mask: Option<&MaskMatrix>,
        beta: f64,
    ) -> Result<()> {
        self.refresh(v, w, h, mask, beta)?;
        matmul_tn_into(w, &self.num, &mut self.p_h);
        if self.den_is_ones {
            let (k, n) = self.q_h.shape();
            for kk in 0..k {
                let s = w.col(kk).sum::<f64>();
                self.q_h.row_mut(kk).fill(s);
            }
            debug_assert_eq!(self.q_h.cols(), n);
        } else {
            matmul_tn_into(w, &self.den, &mut self.q_h);
        }
        Ok(())
    }

    /// Fills `p_w`, `q_w` for an update of W at the current (W, H).
    pub(crate) fn stats_for_w(
        &mut self,
        v: &DenseMatrix,
        w: &DenseMatrix,
        h: &DenseMatrix,
        mask: Option<&MaskMatrix>,
        beta: f64,
    ) -> Result<()> {
        self.refresh(v, w, h, mask, beta)?;
        matmul_nt_into(&self.num, h, &mut self.p_w);
        if self.den_is_ones {
            let k = h.rows();
            let sums: Vec<f64> = (0..k).map(|kk| h.row(kk).iter().sum()).collect();
            for f in 0..self.q_w.rows() {
                self.q_w.row_mut(f).copy_from_slice(&sums);
            }
        } else {
            matmul_nt_into(&self.den, h, &mut self.q_w);
        }
        Ok(())
    }
}

/// p/q statistics for an update of H̃ given W.
pub fn compute_pq(
    w: &DenseMatrix,
    h_tilde: &DenseMatrix,
    v: &DenseMatrix,
    beta: f64,
    mask: Option<&MaskMatrix>,
) -> Result<PqStats> {
    check_factor_shapes(v, w, h_tilde)?;
    if let Some(m) = mask {
        m.ensure_shape(v.shape(), "compute_pq mask")?;
    }
    let mut ws = Workspace::new(v.rows(), v.cols(), w.cols());
    ws.stats_for_h(v, w, h_tilde, mask, beta)?;
    Ok(PqStats {
        p: ws.p_h,
        q: ws.q_h,
    })
}

pub(crate) fn check_factor_shapes(
    v: &DenseMatrix,
    w: &DenseMatrix,
    h: &DenseMatrix,
) -> Result<()> {
    if w.cols() != h.rows() {
        return Err(Error::ShapeMismatch {
            op: "W H",
            left: w.shape(),
            right: h.shape(),
        });
    }
    if (w.rows(), h.cols()) != v.shape() {
        return Err(Error::ShapeMismatch {
            op: "V vs W H",
            left: v.shape(),
            right: (w.rows(), h.cols()),
        });
    }
    Ok(())
}

#[inline]
pub(crate) fn pow_ratio(r: f64, exponent: f64) -> f64 {
    if exponent == 1.0 {
        r
    } else if exponent == 0.5 {
        r.sqrt()
    } else {
        r.powf(exponent)
    }
}

/// One multiplicative step x̃ (p / denom)^exponent. Zero entries stay zero.
#[inline]
pub(crate) fn update_entry(x_tilde: f64, p: f64, denom: f64, exponent: f64) -> Result<f64> {
    if x_tilde == 0.0 {
        return Ok(0.0);
    }
    if !(denom > 0.0) {
        if p == 0.0 {
            return Ok(x_tilde);
        }
        return Err(Error::Singular(format!(
            "zero denominator with p = {p} and previous value {x_tilde}"
        )));
    }
    let x = x_tilde * pow_ratio(p / denom, exponent);
    if !x.is_finite() {
        return Err(Error::NonFinite(format!(
            "multiplicative update ({x_tilde} * ({p} / {denom})^{exponent})"
        )));
    }
    Ok(x)
}

/// Standard update h = h̃ (p/q)^γ(β).
pub fn mm_update(h_tilde: &DenseMatrix, pq: &PqStats, beta: f64) -> Result<DenseMatrix> {
    h_tilde.ensure_same_shape(&pq.p, "mm_update")?;
    h_tilde.ensure_same_shape(&pq.q, "mm_update")?;
    let e = gamma_exponent(beta);
    let mut out = h_tilde.clone();
    for ((x, &p), &q) in out
        .as_mut_slice()
        .iter_mut()
        .zip(pq.p.as_slice())
        .zip(pq.q.as_slice())
    {
        *x = update_entry(*x, p, q, e)?;
    }
    Ok(out)
}

/// Table-1 majorizer for one entry, without its H-independent constant.
fn aux_entry(h: f64, h_tilde: f64, p: f64, q: f64, beta: f64) -> f64 {
    let r = h / h_tilde;
    if beta < 1.0 {
        q * h - p * h_tilde * r.powf(beta - 1.0) / (beta - 1.0)
    } else if beta == 1.0 {
        q * h - p * h_tilde * r.ln()
    } else if beta <= 2.0 {
        q * h_tilde * r.powf(beta) / beta - p * h_tilde * r.powf(beta - 1.0) / (beta - 1.0)
    } else {
        q * h_tilde * r.powf(beta) / beta - p * h
    }
}

/// Returns (G(H|H̃) − G(H̃|H̃), C(H) − C(H̃)) with C(H) = D_β(V | W H).
///
/// Majorization means the first component is never below the second.
pub fn aux_gap(
    h: &DenseMatrix,
    h_tilde: &DenseMatrix,
    w: &DenseMatrix,
    v: &DenseMatrix,
    beta: f64,
) -> Result<(f64, f64)> {
    h.ensure_same_shape(h_tilde, "aux_gap")?;
    let pq = compute_pq(w, h_tilde, v, beta, None)?;
    let mut gap_g = 0.0;
    for i in 0..h.len() {
        let (x, xt) = (h.as_slice()[i], h_tilde.as_slice()[i]);
        if !(x > 0.0 && xt > 0.0) {
            return Err(Error::Domain(format!(
                "aux_gap needs positive H and H̃, got {x} and {xt}"
            )));
        }
        let (p, q) = (pq.p.as_slice()[i], pq.q.as_slice()[i]);
        gap_g += aux_entry(x, xt, p, q, beta) - aux_entry(xt, xt, p, q, beta);
    }
    let c_new = divergence_sum(v, &crate::matrix::matmul(w, h)?, None, beta)?;
    let c_old = divergence_sum(v, &crate::matrix::matmul(w, h_tilde)?, None, beta)?;
    Ok((gap_g, c_new - c_old))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Tolerance,
    IterationCap,
}

/// Which factor is refreshed first within an iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateOrder {
    #[default]
    HThenW,
    WThenH,
}

/// Outcome of a fit: effective order, per-iteration traces and timing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub k_eff: usize,
    pub iterations: usize,
    pub termination: Termination,
    /// Objective at the initialization, before any update.
    pub initial_objective: f64,
    pub objective_trace: Vec<f64>,
    pub tol_trace: Vec<f64>,
    /// Relevance weights after each iteration (λ^NMF = ½‖h_k‖² for plain NMF).
    pub lambda_trace: Vec<Vec<f64>>,
    /// Lower bound B = b/c of the relevance weights; `None` for plain NMF.
    pub bound: Option<f64>,
    pub wall_time: f64,
}

impl FitReport {
    pub fn final_objective(&self) -> f64 {
        self.objective_trace
            .last()
            .copied()
            .unwrap_or(self.initial_objective)
    }

    pub fn final_lambda(&self) -> Option<&[f64]> {
        self.lambda_trace.last().map(Vec::as_slice)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmfFitOptions {
    pub k: usize,
    pub beta: f64,
    /// Stop once tol < tau; 0 runs to `max_iter`.
    pub tau: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub normalize_w_columns: bool,
    pub floor: f64,
    pub update_order: UpdateOrder,
}

impl NmfFitOptions {
    pub fn new(k: usize, beta: f64) -> Self {
        Self {
            k,
            beta,
            tau: 1e-7,
            max_iter: 10_000,
            seed: 0,
            normalize_w_columns: false,
            floor: DEFAULT_FLOOR,
            update_order: UpdateOrder::HThenW,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("K must be at least 1".into()));
        }
        if !self.beta.is_finite() {
            return Err(Error::InvalidConfig(format!("beta = {}", self.beta)));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig(format!("tau must be finite and ≥ 0, got {}", self.tau)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.floor >= 0.0) {
            return Err(Error::InvalidConfig(format!("floor = {}", self.floor)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct NmfFit {
    pub w: DenseMatrix,
    pub h: DenseMatrix,
    pub report: FitReport,
}

/// Random positive factors, rescaled so that mean(W H) matches the sample
/// mean of the observed data.
pub fn init_factors<R: Rng + ?Sized>(
    v: &DenseMatrix,
    mask: Option<&MaskMatrix>,
    k: usize,
    rng: &mut R,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let (f, n) = v.shape();
    // 1 + |N(0, 1)|: widely spread starts (uniform on (0, 1], exponential)
    // more often end with the invariant part of the data in its own component.
    let mut draw = || 1.0 + rng.sample::<f64, _>(StandardNormal).abs();
    let mut w = DenseMatrix::from_fn(f, k, |_, _| draw());
    let mut h = DenseMatrix::from_fn(k, n, |_, _| draw());
    let target = sample_mean(v, mask)?;
    if !(target > 0.0) {
        return Err(Error::InvalidConfig(
            "data has zero mean on observed entries".into(),
        ));
    }
    let current = crate::matrix::matmul(&w, &h)?.mean();
    let s = (target / current).sqrt();
    w.as_mut_slice().iter_mut().for_each(|x| *x *= s);
    h.as_mut_slice().iter_mut().for_each(|x| *x *= s);
    Ok((w, h))
}

pub(crate) fn check_data(v: &DenseMatrix, mask: Option<&MaskMatrix>, beta: f64) -> Result<()> {
    v.check_nonnegative()?;
    if !v.all_finite() {
        return Err(Error::NonFinite("data matrix".into()));
    }
    if let Some(m) = mask {
        m.ensure_shape(v.shape(), "mask")?;
    }
    if beta <= 0.0 {
        for (i, &x) in v.as_slice().iter().enumerate() {
            let observed = mask.is_none_or(|m| m.as_slice()[i]);
            if observed && x == 0.0 {
                return Err(Error::Domain(format!(
                    "zero datum at row {}, column {} is infinitely costly for beta = {beta}",
                    i / v.cols(),
                    i % v.cols()
                )));
            }
        }
    }
    Ok(())
}

/// max_k |(λ_k − λ̃_k)/λ̃_k|. A component that stays at zero contributes 0.
pub fn compute_tol(lambda: &[f64], lambda_prev: &[f64]) -> f64 {
    lambda
        .iter()
        .zip(lambda_prev)
        .map(|(&l, &lp)| {
            if lp == 0.0 {
                if l == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                ((l - lp) / lp).abs()
            }
        })
        .fold(0.0, f64::max)
}

fn nmf_relevance(h: &DenseMatrix) -> Vec<f64> {
    (0..h.rows()).map(|k| 0.5 * h.row_sq(k)).collect()
}

fn normalize_columns(w: &mut DenseMatrix, h: &mut DenseMatrix) {
    for k in 0..w.cols() {
        let norm = w.col_sq(k).sqrt();
        if norm > 0.0 {
            for f in 0..w.rows() {
                let x = w.get(f, k);
                w.set(f, k, x / norm);
            }
            h.row_mut(k).iter_mut().for_each(|x| *x *= norm);
        }
    }
}

/// Applies the floor to entries that were positive before the update.
#[inline]
pub(crate) fn floored(new: f64, old: f64, floor: f64) -> f64 {
    if old > 0.0 {
        new.max(floor)
    } else {
        new
    }
}

fn no_penalty(_: usize, _: f64) -> f64 {
    0.0
}

/// Plain β-NMF from a seeded random initialization.
pub fn nmf_fit(
    v: &DenseMatrix,
    opts: &NmfFitOptions,
    mask: Option<&MaskMatrix>,
) -> Result<NmfFit> {
    opts.validate()?;
    check_data(v, mask, opts.beta)?;
    let mut rng = seeded_rng(opts.seed);
    let (w, h) = init_factors(v, mask, opts.k, &mut rng)?;
    nmf_fit_from(v, w, h, opts, mask)
}

/// Plain β-NMF from the given initial factors.
pub fn nmf_fit_from(
    v: &DenseMatrix,
    mut w: DenseMatrix,
    mut h: DenseMatrix,
    opts: &NmfFitOptions,
    mask: Option<&MaskMatrix>,
) -> Result<NmfFit> {
    opts.validate()?;
    check_data(v, mask, opts.beta)?;
    check_factor_shapes(v, &w, &h)?;
    if w.cols() != opts.k {
        return Err(Error::InvalidConfig(format!(
            "initial factors have {} components, options say {}",
            w.cols(),
            opts.k
        )));
    }
    let start = Instant::now();
    let beta = opts.beta;
    let e = gamma_exponent(beta);
    let (f, n) = v.shape();
    let mut ws = Workspace::new(f, n, opts.k);

    if opts.normalize_w_columns {
        normalize_columns(&mut w, &mut h);
    }
    let initial_objective = divergence_sum(v, &crate::matrix::matmul(&w, &h)?, mask, beta)?;
    let mut lambda_prev = nmf_relevance(&h);

    let mut report = FitReport {
        k_eff: opts.k,
        iterations: 0,
        termination: Termination::IterationCap,
        initial_objective,
        objective_trace: Vec::new(),
        tol_trace: Vec::new(),
        lambda_trace: Vec::new(),
        bound: None,
        wall_time: 0.0,
    };

    for _ in 0..opts.max_iter {
        match opts.update_order {
            UpdateOrder::HThenW => {
                step_h(v, &w, &mut h, mask, beta, e, opts.floor, &mut ws, no_penalty)?;
                step_w(v, &mut w, &h, mask, beta, e, opts.floor, &mut ws, no_penalty)?;
            }
            UpdateOrder::WThenH => {
                step_w(v, &mut w, &h, mask, beta, e, opts.floor, &mut ws, no_penalty)?;
                step_h(v, &w, &mut h, mask, beta, e, opts.floor, &mut ws, no_penalty)?;
            }
        }
        if opts.normalize_w_columns {
            normalize_columns(&mut w, &mut h);
            ws.invalidate();
        }
        let lambda = nmf_relevance(&h);
        let tol = compute_tol(&lambda, &lambda_prev);
        let objective = divergence_sum(v, ws.current_vhat(&w, &h), mask, beta)?;
        report.iterations += 1;
        report.objective_trace.push(objective);
        report.tol_trace.push(tol);
        report.lambda_trace.push(lambda.clone());
        lambda_prev = lambda;
        if tol < opts.tau {
            report.termination = Termination::Tolerance;
            break;
        }
    }
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(NmfFit { w, h, report })
}

/// Multiplicative update of H in place. `extra(k, h̃)` is added to the
/// denominator q; it is zero for plain NMF.
#[allow(clippy::too_many_arguments)]
pub(crate) fn step_h(
    v: &DenseMatrix,
    w: &DenseMatrix,
    h: &mut DenseMatrix,
    mask: Option<&MaskMatrix>,
    beta: f64,
    exponent: f64,
    floor: f64,
    ws: &mut Workspace,
    extra: impl Fn(usize, f64) -> f64,
) -> Result<()> {
    ws.stats_for_h(v, w, h, mask, beta)?;
    let n = h.cols();
    for (i, ((x, &p), &q)) in h
        .as_mut_slice()
        .iter_mut()
        .zip(ws.p_h.as_slice())
        .zip(ws.q_h.as_slice())
        .enumerate()
    {
        let old = *x;
        *x = floored(update_entry(old, p, q + extra(i / n, old), exponent)?, old, floor);
    }
    ws.invalidate();
    Ok(())
}

/// Multiplicative update of W in place; `extra` as for [`step_h`].
#[allow(clippy::too_many_arguments)]
pub(crate) fn step_w(
    v: &DenseMatrix,
    w: &mut DenseMatrix,
    h: &DenseMatrix,
    mask: Option<&MaskMatrix>,
    beta: f64,
    exponent: f64,
    floor: f64,
    ws: &mut Workspace,
    extra: impl Fn(usize, f64) -> f64,
) -> Result<()> {
    ws.stats_for_w(v, w, h, mask, beta)?;
    let k = w.cols();
    for (i, ((x, &p), &q)) in w
        .as_mut_slice()
        .iter_mut()
        .zip(ws.p_w.as_slice())
        .zip(ws.q_w.as_slice())
        .enumerate()
    {
        let old = *x;
        *x = floored(update_entry(old, p, q + extra(i % k, old), exponent)?, old, floor);
    }
    ws.invalidate();
    Ok(())
}
