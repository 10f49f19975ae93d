//! β-NMF with automatic relevance determination.
//!
//! Each component k carries a relevance weight λ_k that scales the prior on
//! both w_k and h_k. The MAP objective is
//!
//! ```text
//! C(W, H, λ) = D_β(V | W H)/φ + Σ_k [ (f(w_k) + f(h_k) + b)/λ_k + c log λ_k ]
//! ```
//!
//! with f = ½‖·‖² and c = (F+N)/2 + a + 1 under half-normal priors (ℓ2), or
//! f = ‖·‖₁ and c = F + N + a + 1 under exponential priors (ℓ1). The fit
//! alternates penalized multiplicative updates of H and W with the exact
//! minimizer in λ. Weights never drop below B = b/c; components sitting at
//! that bound are pruned.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::divergence::divergence_sum;
use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, MaskMatrix};
use crate::mm::{
    check_data, check_factor_shapes, gamma_exponent, init_factors, step_h, step_w, update_entry,
    FitReport, PqStats, Termination, Workspace, DEFAULT_FLOOR,
};
use crate::rng::seeded_rng;

pub use crate::mm::compute_tol;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    /// Exponential priors, ℓ1 penalty.
    L1,
    /// Half-normal priors, ℓ2 penalty.
    L2,
}

impl Penalty {
    /// Penalty f of a column or row.
    fn apply(self, x: impl Iterator<Item = f64>) -> f64 {
        match self {
            Penalty::L1 => x.sum(),
            Penalty::L2 => 0.5 * x.map(|v| v * v).sum::<f64>(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArdConfig {
    pub k: usize,
    pub beta: f64,
    pub phi: f64,
    pub a: f64,
    pub b: f64,
    /// Stop once tol < tau; 0 runs to `max_iter`.
    pub tau: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub penalty: Penalty,
    pub floor: f64,
}

impl ArdConfig {
    pub fn new(k: usize, beta: f64, penalty: Penalty, a: f64, b: f64) -> Self {
        Self {
            k,
            beta,
            phi: 1.0,
            a,
            b,
            tau: 1e-7,
            max_iter: 100_000,
            seed: 0,
            penalty,
            floor: DEFAULT_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        if !self.beta.is_finite() {
            return bad(format!("beta = {}", self.beta));
        }
        if !(self.phi > 0.0) || !self.phi.is_finite() {
            return bad(format!("phi must be > 0, got {}", self.phi));
        }
        if !(self.b > 0.0) || !self.b.is_finite() {
            return bad(format!("b must be > 0, got {}", self.b));
        }
        if !self.a.is_finite() {
            return bad(format!("a = {}", self.a));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be finite and ≥ 0, got {}", self.tau));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        if !(self.floor >= 0.0) {
            return bad(format!("floor = {}", self.floor));
        }
        Ok(())
    }

    /// c and B = b/c for data of shape (F, N).
    pub fn c_and_bound(&self, f: usize, n: usize) -> Result<(f64, f64)> {
        let c = c_value(f, n, self.a, self.penalty)?;
        Ok((c, self.b / c))
    }
}

/// Current iterate of the ARD solver.
#[derive(Clone, Debug, PartialEq)]
pub struct ArdState {
    pub w: DenseMatrix,
    pub h: DenseMatrix,
    pub lambda: Vec<f64>,
    pub iter: usize,
    pub tol: f64,
}

#[derive(Clone, Debug)]
pub struct ArdFit {
    pub state: ArdState,
    pub report: FitReport,
}

pub fn c_value(f: usize, n: usize, a: f64, penalty: Penalty) -> Result<f64> {
    if f == 0 || n == 0 {
        return Err(Error::InvalidConfig(format!("data shape {f}x{n} is empty")));
    }
    let c = match penalty {
        Penalty::L2 => (f + n) as f64 / 2.0 + a + 1.0,
        Penalty::L1 => (f + n) as f64 + a + 1.0,
    };
    if !(c > 0.0) {
        return Err(Error::InvalidConfig(format!("c = {c} is not positive (a = {a})")));
    }
    Ok(c)
}

/// Exponent of the ℓ2-penalized update.
pub fn xi_exponent(beta: f64) -> f64 {
    if beta <= 2.0 {
        1.0 / (3.0 - beta)
    } else {
        1.0 / (beta - 1.0)
    }
}

fn check_update_inputs(h_tilde: &DenseMatrix, pq: &PqStats, lambda: &[f64], phi: f64) -> Result<()> {
    h_tilde.ensure_same_shape(&pq.p, "penalized update")?;
    h_tilde.ensure_same_shape(&pq.q, "penalized update")?;
    if lambda.len() != h_tilde.rows() {
        return Err(Error::ShapeMismatch {
            op: "lambda vs H rows",
            left: (lambda.len(), 1),
            right: h_tilde.shape(),
        });
    }
    if let Some(l) = lambda.iter().find(|&&l| !(l > 0.0)) {
        return Err(Error::Domain(format!("relevance weight {l} is not positive")));
    }
    if !(phi >= 0.0) {
        return Err(Error::Domain(format!("phi = {phi}")));
    }
    Ok(())
}

fn penalized_update(
    h_tilde: &DenseMatrix,
    pq: &PqStats,
    exponent: f64,
    extra: impl Fn(usize, f64) -> f64,
) -> Result<DenseMatrix> {
    let n = h_tilde.cols();
    let mut out = h_tilde.clone();
    for (i, x) in out.as_mut_slice().iter_mut().enumerate() {
        let (p, q) = (pq.p.as_slice()[i], pq.q.as_slice()[i]);
        *x = update_entry(*x, p, q + extra(i / n, *x), exponent)?;
    }
    Ok(out)
}

/// ℓ2-penalized update h = h̃ (p / (q + φ h̃/λ_k))^ξ(β).
pub fn l2_update_h(
    h_tilde: &DenseMatrix,
    pq: &PqStats,
    lambda: &[f64],
    phi: f64,
    beta: f64,
) -> Result<DenseMatrix> {
    check_update_inputs(h_tilde, pq, lambda, phi)?;
    penalized_update(h_tilde, pq, xi_exponent(beta), |k, x| phi * x / lambda[k])
}

/// ℓ1-penalized update h = h̃ (p / (q + φ/λ_k))^γ(β).
pub fn l1_update_h(
    h_tilde: &DenseMatrix,
    pq: &PqStats,
    lambda: &[f64],
    phi: f64,
    beta: f64,
) -> Result<DenseMatrix> {
    check_update_inputs(h_tilde, pq, lambda, phi)?;
    penalized_update(h_tilde, pq, gamma_exponent(beta), |k, _| phi / lambda[k])
}

/// Closed-form minimizer λ_k = (f(w_k) + f(h_k) + b)/c.
pub fn update_lambda(w: &DenseMatrix, h: &DenseMatrix, b: f64, c: f64, penalty: Penalty) -> Vec<f64> {
    (0..w.cols())
        .map(|k| (penalty.apply(w.col(k)) + penalty.apply(h.row(k).iter().copied()) + b) / c)
        .collect()
}

fn penalty_sums(w: &DenseMatrix, h: &DenseMatrix, penalty: Penalty) -> Vec<f64> {
    (0..w.cols())
        .map(|k| penalty.apply(w.col(k)) + penalty.apply(h.row(k).iter().copied()))
        .collect()
}

/// C(W, H, λ) without its additive constant.
pub fn objective(
    w: &DenseMatrix,
    h: &DenseMatrix,
    lambda: &[f64],
    v: &DenseMatrix,
    config: &ArdConfig,
    mask: Option<&MaskMatrix>,
) -> Result<f64> {
    check_factor_shapes(v, w, h)?;
    let vhat = crate::matrix::matmul(w, h)?;
    let d = divergence_sum(v, &vhat, mask, config.beta)?;
    let (c, _) = config.c_and_bound(v.rows(), v.cols())?;
    objective_from_parts(d, &penalty_sums(w, h, config.penalty), lambda, config, c)
}

fn objective_from_parts(d: f64, sums: &[f64], lambda: &[f64], config: &ArdConfig, c: f64) -> Result<f64> {
    if lambda.len() != sums.len() {
        return Err(Error::ShapeMismatch {
            op: "lambda vs components",
            left: (lambda.len(), 1),
            right: (sums.len(), 1),
        });
    }
    let mut total = d / config.phi;
    for (&s, &l) in sums.iter().zip(lambda) {
        if !(l > 0.0) {
            return Err(Error::Domain(format!("relevance weight {l} is not positive")));
        }
        total += (s + config.b) / l + c * l.ln();
    }
    if !total.is_finite() {
        return Err(Error::NonFinite(format!("objective (divergence {d})")));
    }
    Ok(total)
}

/// C(W, H) with λ optimized out: D/φ + c Σ_k log(f(w_k) + f(h_k) + b).
///
/// Equals `objective` at λ = `update_lambda(W, H)` minus K c (1 − log c).
pub fn objective_profiled(
    w: &DenseMatrix,
    h: &DenseMatrix,
    v: &DenseMatrix,
    config: &ArdConfig,
    mask: Option<&MaskMatrix>,
) -> Result<f64> {
    check_factor_shapes(v, w, h)?;
    let vhat = crate::matrix::matmul(w, h)?;
    let d = divergence_sum(v, &vhat, mask, config.beta)?;
    let (c, _) = config.c_and_bound(v.rows(), v.cols())?;
    let pen: f64 = penalty_sums(w, h, config.penalty)
        .iter()
        .map(|s| (s + config.b).ln())
        .sum();
    Ok(d / config.phi + c * pen)
}

/// Number of components with (λ_k − B)/B > τ.
pub fn k_eff(lambda: &[f64], bound: f64, tau: f64) -> usize {
    lambda.iter().filter(|&&l| (l - bound) / bound > tau).count()
}

/// ARD fit from a seeded random initialization.
pub fn ard_fit(v: &DenseMatrix, config: &ArdConfig, mask: Option<&MaskMatrix>) -> Result<ArdFit> {
    config.validate()?;
    check_data(v, mask, config.beta)?;
    let mut rng = seeded_rng(config.seed);
    let (w, h) = init_factors(v, mask, config.k, &mut rng)?;
    ard_fit_from(v, w, h, config, mask)
}

/// ARD fit from the given initial factors.
pub fn ard_fit_from(
    v: &DenseMatrix,
    mut w: DenseMatrix,
    mut h: DenseMatrix,
    config: &ArdConfig,
    mask: Option<&MaskMatrix>,
) -> Result<ArdFit> {
    config.validate()?;
    check_data(v, mask, config.beta)?;
    check_factor_shapes(v, &w, &h)?;
    if w.cols() != config.k {
        return Err(Error::InvalidConfig(format!(
            "initial factors have {} components, config says {}",
            w.cols(),
            config.k
        )));
    }
    let start = Instant::now();
    let (f, n) = v.shape();
    let (c, bound) = config.c_and_bound(f, n)?;
    let beta = config.beta;
    let phi = config.phi;
    let exponent = match config.penalty {
        Penalty::L1 => gamma_exponent(beta),
        Penalty::L2 => xi_exponent(beta),
    };
    let mut ws = Workspace::new(f, n, config.k);

    let mut lambda = update_lambda(&w, &h, config.b, c, config.penalty);
    let d0 = divergence_sum(v, ws.current_vhat(&w, &h), mask, beta)?;
    let initial_objective =
        objective_from_parts(d0, &penalty_sums(&w, &h, config.penalty), &lambda, config, c)?;

    let mut report = FitReport {
        k_eff: 0,
        iterations: 0,
        termination: Termination::IterationCap,
        initial_objective,
        objective_trace: Vec::new(),
        tol_trace: Vec::new(),
        lambda_trace: Vec::new(),
        bound: Some(bound),
        wall_time: 0.0,
    };
    let mut tol = f64::INFINITY;

    for _ in 0..config.max_iter {
        match config.penalty {
            Penalty::L1 => {
                let l = &lambda;
                step_h(v, &w, &mut h, mask, beta, exponent, config.floor, &mut ws, |k, _| {
                    phi / l[k]
                })?;
                step_w(v, &mut w, &h, mask, beta, exponent, config.floor, &mut ws, |k, _| {
                    phi / l[k]
                })?;
            }
            Penalty::L2 => {
                let l = &lambda;
                step_h(v, &w, &mut h, mask, beta, exponent, config.floor, &mut ws, |k, x| {
                    phi * x / l[k]
                })?;
                step_w(v, &mut w, &h, mask, beta, exponent, config.floor, &mut ws, |k, x| {
                    phi * x / l[k]
                })?;
            }
        }
        let next = update_lambda(&w, &h, config.b, c, config.penalty);
        tol = compute_tol(&next, &lambda);
        lambda = next;

        let d = divergence_sum(v, ws.current_vhat(&w, &h), mask, beta)?;
        let objective =
            objective_from_parts(d, &penalty_sums(&w, &h, config.penalty), &lambda, config, c)?;
        report.iterations += 1;
        report.objective_trace.push(objective);
        report.tol_trace.push(tol);
        report.lambda_trace.push(lambda.clone());
        if tol < config.tau {
            report.termination = Termination::Tolerance;
            break;
        }
    }
    report.k_eff = k_eff(&lambda, bound, config.tau);
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(ArdFit {
        state: ArdState {
            w,
            h,
            lambda,
            iter: report.iterations,
            tol,
        },
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mm::{compute_pq, mm_update};
    use crate::rng::seeded_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| 0.1 + rng.random::<f64>())
    }

    fn scalar_pq(p: f64, q: f64) -> PqStats {
        PqStats {
            p: DenseMatrix::filled(1, 1, p),
            q: DenseMatrix::filled(1, 1, q),
        }
    }

    #[test]
    fn c_examples() {
        assert_eq!(c_value(50, 100, 50.0, Penalty::L2).unwrap(), 126.0);
        assert_eq!(c_value(50, 100, 50.0, Penalty::L1).unwrap(), 201.0);
        assert!(c_value(0, 0, 50.0, Penalty::L2).is_err());
    }

    #[test]
    fn xi_examples() {
        assert_eq!(xi_exponent(2.0), 1.0);
        assert_eq!(xi_exponent(0.0), 1.0 / 3.0);
        assert_eq!(xi_exponent(3.0), 0.5);
    }

    #[test]
    fn l2_update_examples() {
        let h = DenseMatrix::filled(1, 1, 2.0);
        let out = l2_update_h(&h, &scalar_pq(3.0, 1.0), &[1.0], 1.0, 2.0).unwrap();
        assert_eq!(out.get(0, 0), 2.0);
        let h = DenseMatrix::filled(1, 1, 1.0);
        let out = l2_update_h(&h, &scalar_pq(4.0, 1.0), &[1.0], 1.0, 0.0).unwrap();
        assert!((out.get(0, 0) - 2f64.cbrt()).abs() < 1e-12);
        assert!((out.get(0, 0) - 1.2599).abs() < 1e-4);
        // vanishing penalty at β = 2 is the Euclidean update
        let h = DenseMatrix::filled(1, 1, 2.0);
        let out = l2_update_h(&h, &scalar_pq(3.0, 1.5), &[1e300], 1.0, 2.0).unwrap();
        assert!((out.get(0, 0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn l1_update_examples() {
        let h = DenseMatrix::filled(1, 1, 2.0);
        let out = l1_update_h(&h, &scalar_pq(3.0, 1.0), &[1.0], 1.0, 1.0).unwrap();
        assert_eq!(out.get(0, 0), 3.0);
        let h = DenseMatrix::filled(1, 1, 1.0);
        let out = l1_update_h(&h, &scalar_pq(4.0, 1.0), &[1.0], 2.0, 0.0).unwrap();
        assert!((out.get(0, 0) - (4.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((out.get(0, 0) - 1.1547).abs() < 1e-4);
    }

    #[test]
    fn update_rejects_bad_lambda() {
        let h = DenseMatrix::filled(1, 1, 2.0);
        assert!(l1_update_h(&h, &scalar_pq(3.0, 1.0), &[0.0], 1.0, 1.0).is_err());
        assert!(l2_update_h(&h, &scalar_pq(3.0, 1.0), &[1.0, 2.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn l1_without_penalty_is_mm_update() {
        let mut rng = seeded_rng(21);
        for beta in [-0.5, 0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0] {
            let w = random(5, 3, &mut rng);
            let h = random(3, 6, &mut rng);
            let v = random(5, 6, &mut rng);
            let pq = compute_pq(&w, &h, &v, beta, None).unwrap();
            let a = l1_update_h(&h, &pq, &[1.0; 3], 0.0, beta).unwrap();
            let b = mm_update(&h, &pq, beta).unwrap();
            assert!(a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn lambda_examples() {
        let w = DenseMatrix::from_rows(&[[1.0], [2.0]]).unwrap();
        let h = DenseMatrix::from_rows(&[[3.0]]).unwrap();
        assert_eq!(update_lambda(&w, &h, 1.0, 2.0, Penalty::L1), vec![3.5]);
        let w = DenseMatrix::filled(1, 1, 2.0);
        let h = DenseMatrix::filled(1, 1, 2.0);
        assert_eq!(update_lambda(&w, &h, 2.0, 4.0, Penalty::L2), vec![1.5]);
        for penalty in [Penalty::L1, Penalty::L2] {
            let z = update_lambda(&DenseMatrix::zeros(4, 2), &DenseMatrix::zeros(2, 3), 3.0, 7.0, penalty);
            assert_eq!(z, vec![3.0 / 7.0; 2]);
        }
    }

    #[test]
    fn objective_at_zero_factors() {
        let v = DenseMatrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        let mut cfg = ArdConfig::new(2, 2.0, Penalty::L2, 3.0, 2.0);
        cfg.phi = 0.5;
        let (c, bound) = cfg.c_and_bound(2, 2).unwrap();
        let w = DenseMatrix::zeros(2, 2);
        let h = DenseMatrix::zeros(2, 2);
        let got = objective(&w, &h, &[bound; 2], &v, &cfg, None).unwrap();
        let expected = 3.0 / 0.5 + 2.0 * (c + c * bound.ln());
        assert!((got - expected).abs() < 1e-12 * expected.abs());
        let prof = objective_profiled(&w, &h, &v, &cfg, None).unwrap();
        let expected = 3.0 / 0.5 + c * 2.0 * 2f64.ln();
        assert!((prof - expected).abs() < 1e-12 * expected.abs());
        // nothing observed leaves only the penalty
        let none = MaskMatrix::none_observed(2, 2);
        let got = objective(&w, &h, &[bound; 2], &v, &cfg, Some(&none)).unwrap();
        assert!((got - 2.0 * (c + c * bound.ln())).abs() < 1e-12);
    }

    #[test]
    fn profiled_objective_grows_with_b() {
        let mut rng = seeded_rng(4);
        let v = random(6, 5, &mut rng);
        let w = random(6, 2, &mut rng);
        let h = random(2, 5, &mut rng);
        let mut cfg = ArdConfig::new(2, 1.0, Penalty::L1, 5.0, 1.0);
        let low = objective_profiled(&w, &h, &v, &cfg, None).unwrap();
        cfg.b = 2.0;
        assert!(objective_profiled(&w, &h, &v, &cfg, None).unwrap() > low);
    }

    #[test]
    fn profiling_identity() {
        let mut rng = seeded_rng(31);
        for i in 0..100 {
            let penalty = if i % 2 == 0 { Penalty::L1 } else { Penalty::L2 };
            let beta = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0][i % 6];
            let (f, n, k) = (3 + i % 5, 4 + i % 7, 1 + i % 4);
            let v = random(f, n, &mut rng);
            let w = random(f, k, &mut rng);
            let h = random(k, n, &mut rng);
            let mut cfg = ArdConfig::new(k, beta, penalty, 1.0 + 10.0 * rng.random::<f64>(), 0.1 + rng.random::<f64>());
            cfg.phi = 0.2 + rng.random::<f64>();
            let (c, _) = cfg.c_and_bound(f, n).unwrap();
            let lambda = update_lambda(&w, &h, cfg.b, c, penalty);
            let full = objective(&w, &h, &lambda, &v, &cfg, None).unwrap();
            let prof = objective_profiled(&w, &h, &v, &cfg, None).unwrap();
            let lhs = full - k as f64 * c * (1.0 - c.ln());
            assert!((lhs - prof).abs() <= 1e-10 * prof.abs(), "{lhs} vs {prof}");
        }
    }

    #[test]
    fn balanced_scale_is_stationary() {
        let mut rng = seeded_rng(8);
        let v = random(6, 8, &mut rng);
        let mut w = random(6, 1, &mut rng);
        let h = random(1, 8, &mut rng);
        let ratio = h.row_l1(0) / w.col_l1(0);
        w = w.scale(ratio);
        let cfg = ArdConfig::new(1, 1.0, Penalty::L1, 5.0, 1.0);
        let at = |s: f64| {
            objective_profiled(&w.scale(s), &h.scale(1.0 / s), &v, &cfg, None).unwrap()
        };
        let eps = 1e-4;
        let slope = (at(1.0 + eps) - at(1.0 - eps)) / (2.0 * eps);
        let curvature = (at(1.0 + eps) - 2.0 * at(1.0) + at(1.0 - eps)) / (eps * eps);
        assert!(slope.abs() < 1e-6 * (1.0 + curvature.abs()), "slope {slope}");
        assert!(at(1.5) > at(1.0) && at(0.7) > at(1.0));
    }

    #[test]
    fn tol_and_k_eff_examples() {
        assert_eq!(compute_tol(&[2.0, 1.0], &[1.0, 1.0]), 1.0);
        let b = 0.3;
        assert_eq!(k_eff(&[b, b], b, 1e-7), 0);
        assert_eq!(k_eff(&[b, 10.0 * b], b, 1e-7), 1);
        assert_eq!(k_eff(&[b * (1.0 + 0.5e-7)], b, 1e-7), 0);
    }

    fn fit_small(penalty: Penalty, beta: f64, seed: u64, iters: usize) -> (ArdFit, DenseMatrix, ArdConfig) {
        let mut rng = seeded_rng(seed);
        let v = random(20, 30, &mut rng);
        let mut cfg = ArdConfig::new(5, beta, penalty, 10.0, 0.5);
        cfg.tau = 1e-300;
        cfg.max_iter = iters;
        cfg.seed = seed;
        (ard_fit(&v, &cfg, None).unwrap(), v, cfg)
    }

    #[test]
    fn descent_and_bound_hold() {
        for penalty in [Penalty::L1, Penalty::L2] {
            for beta in [-0.5, 0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0] {
                let (fit, _, _) = fit_small(penalty, beta, 3, 60);
                let r = &fit.report;
                let bound = r.bound.unwrap();
                let mut prev = r.initial_objective;
                for (i, &c) in r.objective_trace.iter().enumerate() {
                    assert!(c <= prev + 1e-10 * (1.0 + prev.abs()), "{penalty:?} beta={beta} iter {i}");
                    prev = c;
                }
                for l in &r.lambda_trace {
                    assert!(l.iter().all(|&x| x >= bound - 1e-15));
                }
            }
        }
    }

    #[test]
    fn trace_objective_matches_public_objective() {
        let (fit, v, cfg) = fit_small(Penalty::L2, 1.0, 5, 7);
        let s = &fit.state;
        let direct = objective(&s.w, &s.h, &s.lambda, &v, &cfg, None).unwrap();
        let traced = fit.report.final_objective();
        assert!((direct - traced).abs() <= 1e-12 * direct.abs());
    }

    #[test]
    fn one_sweep() {
        let (fit, _, _) = fit_small(Penalty::L1, 1.0, 6, 1);
        assert_eq!(fit.report.iterations, 1);
        assert_eq!(fit.report.lambda_trace.len(), 1);
        assert_eq!(fit.report.termination, Termination::IterationCap);
    }

    #[test]
    fn pruned_components_are_jointly_small() {
        // Rank-2 data with K = 6 and a strong prior prunes the extra components.
        let mut rng = seeded_rng(12);
        let w0 = random(30, 2, &mut rng);
        let h0 = random(2, 40, &mut rng);
        let v = crate::matrix::matmul(&w0, &h0).unwrap();
        for penalty in [Penalty::L1, Penalty::L2] {
            let mut cfg = ArdConfig::new(6, 1.0, penalty, 5.0, 0.0);
            let mu = crate::hyper::sample_mean(&v, None).unwrap();
            cfg.b = crate::hyper::select_b(mu, 6, 5.0, penalty).unwrap();
            cfg.tau = 1e-6;
            cfg.max_iter = 20_000;
            cfg.seed = 2;
            let fit = ard_fit(&v, &cfg, None).unwrap();
            let (c, bound) = cfg.c_and_bound(30, 40).unwrap();
            assert_eq!(fit.report.termination, Termination::Tolerance);
            let s = &fit.state;
            let mut pruned = 0;
            for k in 0..6 {
                if (s.lambda[k] - bound) / bound <= cfg.tau {
                    pruned += 1;
                    let size = penalty.apply(s.w.col(k)) + penalty.apply(s.h.row(k).iter().copied());
                    assert!(size <= c * cfg.tau * bound * (1.0 + 1e-9));
                }
            }
            assert!(pruned > 0, "{penalty:?}: nothing pruned, lambda {:?}", s.lambda);
            assert_eq!(fit.report.k_eff, 6 - pruned);
        }
    }

    #[test]
    fn masked_fit_runs() {
        let mut rng = seeded_rng(14);
        let v = random(10, 12, &mut rng);
        let mask = MaskMatrix::from_vec(10, 12, (0..120).map(|i| i % 3 != 0).collect()).unwrap();
        let mut cfg = ArdConfig::new(4, 1.0, Penalty::L2, 5.0, 0.5);
        cfg.max_iter = 50;
        let fit = ard_fit(&v, &cfg, Some(&mask)).unwrap();
        for pair in fit.report.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-10 * (1.0 + pair[0].abs()));
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = ArdConfig::new(3, 1.0, Penalty::L1, 5.0, 1.0);
        assert!(cfg.validate().is_ok());
        cfg.phi = 0.0;
        assert!(cfg.validate().is_err());
        cfg.phi = 1.0;
        cfg.b = -1.0;
        assert!(cfg.validate().is_err());
        cfg.b = 1.0;
        cfg.k = 0;
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #[test]
        fn lambda_never_below_bound(vals in proptest::collection::vec(0.0f64..5.0, 12), b in 0.01f64..10.0, c in 0.5f64..300.0, l1 in any::<bool>()) {
            let penalty = if l1 { Penalty::L1 } else { Penalty::L2 };
            let w = DenseMatrix::from_vec(3, 2, vals[..6].to_vec()).unwrap();
            let h = DenseMatrix::from_vec(2, 3, vals[6..].to_vec()).unwrap();
            for l in update_lambda(&w, &h, b, c, penalty) {
                prop_assert!(l >= b / c - 1e-15);
            }
        }
    }
}
