//! Synthetic data: draws from the hierarchical model, noise channels at a
//! target SNR, the swimmer image corpus and random missing-entry masks.
//!
//! All generators are driven by a caller-supplied RNG, so a fixed seed gives
//! bit-identical output.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::ard::Penalty;
use crate::error::{Error, Result};
use crate::matrix::{frobenius_norm, matmul, DenseMatrix, MaskMatrix};

/// Draw from the inverse-Gamma(a, b) law, as b / Gamma(a, 1).
///
/// # Panics
/// If `a` or `b` is not positive.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    assert!(a > 0.0 && b > 0.0, "inverse-gamma needs a, b > 0");
    let g = Gamma::new(a, 1.0).expect("valid gamma shape");
    b / g.sample(rng)
}

/// |z| with z ~ N(0, λ); λ is the variance.
///
/// # Panics
/// If `lambda` is not positive.
pub fn sample_half_normal<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> f64 {
    assert!(lambda > 0.0, "half-normal needs lambda > 0");
    Normal::new(0.0, lambda.sqrt()).expect("finite scale").sample(rng).abs()
}

/// Exponential draw with mean λ.
///
/// # Panics
/// If `lambda` is not positive.
pub fn sample_exponential<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> f64 {
    assert!(lambda > 0.0, "exponential needs lambda > 0");
    Exp::new(1.0 / lambda).expect("positive rate").sample(rng)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub w: DenseMatrix,
    pub h: DenseMatrix,
    pub lambda: Vec<f64>,
    pub vhat: DenseMatrix,
}

/// Draws λ from inverse-Gamma(a, b), then W and H from the prior matched to
/// `penalty` given their component's λ.
pub fn gen_ground_truth<R: Rng + ?Sized>(
    f: usize,
    n: usize,
    k_true: usize,
    a: f64,
    b: f64,
    penalty: Penalty,
    rng: &mut R,
) -> Result<GroundTruth> {
    if f == 0 || n == 0 || k_true == 0 {
        return Err(Error::InvalidConfig(format!(
            "need F, N, K_true ≥ 1, got {f}, {n}, {k_true}"
        )));
    }
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidConfig(format!("need a, b > 0, got {a}, {b}")));
    }
    let lambda: Vec<f64> = (0..k_true).map(|_| sample_inverse_gamma(a, b, rng)).collect();
    let mut draw = |k: usize| match penalty {
        Penalty::L2 => sample_half_normal(lambda[k], rng),
        Penalty::L1 => sample_exponential(lambda[k], rng),
    };
    let mut w = DenseMatrix::zeros(f, k_true);
    for r in 0..f {
        for k in 0..k_true {
            w.set(r, k, draw(k));
        }
    }
    let mut h = DenseMatrix::zeros(k_true, n);
    for k in 0..k_true {
        for c in 0..n {
            h.set(k, c, draw(k));
        }
    }
    let vhat = matmul(&w, &h)?;
    Ok(GroundTruth { w, h, lambda, vhat })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    /// Additive Gaussian noise, matched to β = 2.
    Gaussian,
    /// Scaled Poisson noise, matched to β = 1.
    Poisson,
    /// Multiplicative Gamma noise of mean 1, matched to β = 0.
    Gamma,
}

impl NoiseFamily {
    pub fn matching_beta(self) -> f64 {
        match self {
            NoiseFamily::Gaussian => 2.0,
            NoiseFamily::Poisson => 1.0,
            NoiseFamily::Gamma => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    pub target_snr_db: f64,
}

/// Noise parameter realized for a target SNR.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NoiseParam {
    Gaussian { sigma: f64 },
    /// V = P(scale · V̂)/scale.
    Poisson { scale: f64 },
    Gamma { alpha: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoisyData {
    pub v: DenseMatrix,
    pub param: NoiseParam,
    pub measured_snr_db: f64,
    /// Fraction of entries clipped at zero (Gaussian only).
    pub clip_rate: f64,
}

fn measured_snr(vhat: &DenseMatrix, v: &DenseMatrix) -> f64 {
    let mut err = 0.0;
    for (a, b) in vhat.as_slice().iter().zip(v.as_slice()) {
        err += (a - b) * (a - b);
    }
    20.0 * (frobenius_norm(vhat) / err.sqrt()).log10()
}

/// Expected (max(v̂ + ε, 0) − v̂)² for ε ~ N(0, σ²).
fn clipped_error_power(vhat: f64, sigma: f64) -> f64 {
    let t = vhat / sigma;
    let cdf = |x: f64| 0.5 * libm::erfc(-x / std::f64::consts::SQRT_2);
    let pdf = (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    sigma * sigma * (cdf(t) - t * pdf) + vhat * vhat * cdf(-t)
}

/// σ whose clipped noise has total expected power `target`.
///
/// Without clipping σ² = target/(F N); clipping removes part of that power,
/// so σ is raised until the clipped expectation meets the target.
fn clipped_gaussian_sigma(vhat: &DenseMatrix, target: f64) -> f64 {
    let unclipped = (target / vhat.len() as f64).sqrt();
    if !(unclipped > 0.0) || !unclipped.is_finite() {
        return unclipped;
    }
    let power = |s: f64| vhat.as_slice().iter().map(|&x| clipped_error_power(x, s)).sum::<f64>();
    let (mut lo, mut hi) = (unclipped, 2.0 * unclipped);
    while power(hi) < target {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if power(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Corrupts V̂ with the chosen noise family, calibrated so that the expected
/// SNR equals the target.
pub fn add_noise<R: Rng + ?Sized>(
    vhat: &DenseMatrix,
    spec: &NoiseSpec,
    rng: &mut R,
) -> Result<NoisyData> {
    vhat.check_nonnegative()?;
    let norm = frobenius_norm(vhat);
    if !(norm > 0.0) {
        return Err(Error::Domain("target SNR is unreachable for a zero V̂".into()));
    }
    let snr = spec.target_snr_db;
    if snr.is_nan() {
        return Err(Error::InvalidConfig("target SNR is NaN".into()));
    }
    let power = 10f64.powf(snr / 10.0);
    let mut v = vhat.clone();
    let mut clipped = 0usize;
    let param = match spec.family {
        NoiseFamily::Gaussian => {
            let sigma = clipped_gaussian_sigma(vhat, norm * norm / power);
            if sigma > 0.0 {
                let normal = Normal::new(0.0, sigma).map_err(|e| Error::Domain(e.to_string()))?;
                for x in v.as_mut_slice() {
                    let y = *x + normal.sample(rng);
                    if y < 0.0 {
                        clipped += 1;
                    }
                    *x = y.max(0.0);
                }
            }
            NoiseParam::Gaussian { sigma }
        }
        NoiseFamily::Gamma => {
            let alpha = power;
            if alpha.is_finite() {
                let g = Gamma::new(alpha, 1.0 / alpha).map_err(|e| Error::Domain(e.to_string()))?;
                for x in v.as_mut_slice() {
                    *x *= g.sample(rng);
                }
            }
            NoiseParam::Gamma { alpha }
        }
        NoiseFamily::Poisson => {
            // E‖V − V̂‖² = Σ v̂ / s, so the target fixes s in closed form.
            let scale = vhat.sum() * power / (norm * norm);
            if scale.is_finite() {
                for x in v.as_mut_slice() {
                    if *x > 0.0 {
                        let p = Poisson::new(scale * *x).map_err(|e| Error::Domain(e.to_string()))?;
                        *x = p.sample(rng) / scale;
                    }
                }
            }
            NoiseParam::Poisson { scale }
        }
    };
    let measured_snr_db = measured_snr(vhat, &v);
    Ok(NoisyData {
        clip_rate: clipped as f64 / v.len() as f64,
        v,
        param,
        measured_snr_db,
    })
}

pub const SWIMMER_SIDE: usize = 32;
const TORSO_ROWS: std::ops::RangeInclusive<i32> = 10..=21;
const TORSO_COLS: std::ops::RangeInclusive<i32> = 15..=16;
const LIMB_LENGTH: i32 = 6;

type Step = (i32, i32);

/// Attachment corner and the four directions of each limb, in (row, col) steps.
const LIMBS: [(Step, [Step; 4]); 4] = [
    ((10, 15), [(-1, 0), (-1, -1), (0, -1), (1, -1)]),
    ((10, 16), [(-1, 0), (-1, 1), (0, 1), (1, 1)]),
    ((21, 15), [(1, 0), (1, -1), (0, -1), (-1, -1)]),
    ((21, 16), [(1, 0), (1, 1), (0, 1), (-1, 1)]),
];

/// The swimmer corpus: 256 images of 32×32 pixels, one per column.
#[derive(Clone, Debug, PartialEq)]
pub struct Swimmer {
    /// Data, noisy when noise was requested.
    pub v: DenseMatrix,
    pub clean: DenseMatrix,
    /// Pixel indices (row·32 + col) of the torso.
    pub torso: Vec<usize>,
    /// Pixel supports of the 16 limb positions, limb-major.
    pub limbs: Vec<Vec<usize>>,
}

impl Swimmer {
    /// Limb position indices (one per limb) shown in image `j`.
    pub fn positions(j: usize) -> [usize; 4] {
        [j % 4, (j / 4) % 4, (j / 16) % 4, (j / 64) % 4]
    }
}

fn pixel(r: i32, c: i32) -> usize {
    r as usize * SWIMMER_SIDE + c as usize
}

/// Builds the swimmer corpus. Pixels on the body take `body`, others take
/// `background`; with `poisson` every pixel is replaced by a Poisson draw of
/// that mean.
pub fn gen_swimmer<R: Rng + ?Sized>(
    body: f64,
    background: f64,
    poisson: bool,
    rng: &mut R,
) -> Result<Swimmer> {
    if !(body > background && background >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "need body > background ≥ 0, got {body} and {background}"
        )));
    }
    let torso: Vec<usize> = TORSO_ROWS
        .flat_map(|r| TORSO_COLS.map(move |c| pixel(r, c)))
        .collect();
    let limbs: Vec<Vec<usize>> = LIMBS
        .iter()
        .flat_map(|&((r0, c0), dirs)| {
            dirs.into_iter().map(move |(dr, dc)| {
                (1..=LIMB_LENGTH)
                    .map(|i| pixel(r0 + i * dr, c0 + i * dc))
                    .collect::<Vec<_>>()
            })
        })
        .collect();

    let f = SWIMMER_SIDE * SWIMMER_SIDE;
    let n = 256;
    let mut clean = DenseMatrix::filled(f, n, background);
    for j in 0..n {
        let pos = Swimmer::positions(j);
        let on = torso
            .iter()
            .chain((0..4).flat_map(|l| limbs[4 * l + pos[l]].iter()));
        for &p in on {
            clean.set(p, j, body);
        }
    }
    let mut v = clean.clone();
    if poisson {
        let draw_body = Poisson::new(body).map_err(|e| Error::Domain(e.to_string()))?;
        let draw_back = if background > 0.0 {
            Some(Poisson::new(background).map_err(|e| Error::Domain(e.to_string()))?)
        } else {
            None
        };
        for x in v.as_mut_slice() {
            *x = if *x == body {
                draw_body.sample(rng)
            } else {
                draw_back.as_ref().map_or(0.0, |d| d.sample(rng))
            };
        }
    }
    Ok(Swimmer {
        v,
        clean,
        torso,
        limbs,
    })
}

/// Mask with exactly round(fraction · F · N) missing entries, placed uniformly.
pub fn gen_mask<R: Rng + ?Sized>(
    f: usize,
    n: usize,
    missing_fraction: f64,
    rng: &mut R,
) -> Result<MaskMatrix> {
    if !(0.0..1.0).contains(&missing_fraction) {
        return Err(Error::InvalidConfig(format!(
            "missing fraction must lie in [0, 1), got {missing_fraction}"
        )));
    }
    let total = f * n;
    let missing = (missing_fraction * total as f64).round() as usize;
    let mut data = vec![true; total];
    for i in sample(rng, total, missing) {
        data[i] = false;
    }
    MaskMatrix::from_vec(f, n, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyper::prior_mean_vhat;
    use crate::rng::seeded_rng;
    use std::collections::HashSet;

    fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, (var / n).sqrt())
    }

    #[test]
    fn inverse_gamma_moments() {
        let mut rng = seeded_rng(1);
        let xs: Vec<f64> = (0..1_000_000).map(|_| sample_inverse_gamma(3.0, 2.0, &mut rng)).collect();
        assert!(xs.iter().all(|&x| x > 0.0));
        let (m, se) = mean_se(&xs);
        assert!((m - 1.0).abs() < 4.0 * se, "{m} ± {se}");

        // variance b²/((a−1)²(a−2)) checked through the mean of (x − μ)²
        let mut rng = seeded_rng(2);
        let mu = 1.0;
        let sq: Vec<f64> = (0..1_000_000)
            .map(|_| (sample_inverse_gamma(4.0, 3.0, &mut rng) - mu).powi(2))
            .collect();
        let (m, se) = mean_se(&sq);
        assert!((m - 0.5).abs() < 4.0 * se, "{m} ± {se}");
    }

    #[test]
    fn half_normal_and_exponential_means() {
        let mut rng = seeded_rng(3);
        let hn: Vec<f64> = (0..1_000_000)
            .map(|_| sample_half_normal(std::f64::consts::FRAC_PI_2, &mut rng))
            .collect();
        assert!(hn.iter().all(|&x| x >= 0.0));
        let (m, se) = mean_se(&hn);
        assert!((m - 1.0).abs() < 4.0 * se);
        let ex: Vec<f64> = (0..1_000_000).map(|_| sample_exponential(2.0, &mut rng)).collect();
        assert!(ex.iter().all(|&x| x >= 0.0));
        let (m, se) = mean_se(&ex);
        assert!((m - 2.0).abs() < 4.0 * se);
    }

    #[test]
    fn ground_truth_is_consistent() {
        let mut rng = seeded_rng(4);
        let gt = gen_ground_truth(50, 100, 5, 50.0, 70.0, Penalty::L1, &mut rng).unwrap();
        let prod = matmul(&gt.w, &gt.h).unwrap();
        assert_eq!(prod, gt.vhat);
        assert!(gt.vhat.is_nonnegative());
        assert_eq!(gt.lambda.len(), 5);

        let one = gen_ground_truth(6, 7, 1, 5.0, 1.0, Penalty::L2, &mut rng).unwrap();
        // rank one: every 2×2 minor vanishes
        let v = &one.vhat;
        let minor = v.get(0, 0) * v.get(1, 1) - v.get(0, 1) * v.get(1, 0);
        assert!(minor.abs() < 1e-12 * v.max() * v.max());
    }

    #[test]
    fn ground_truth_mean_matches_prior() {
        // Mean over independent models of the average entry of V̂.
        for penalty in [Penalty::L1, Penalty::L2] {
            let mut rng = seeded_rng(5);
            let means: Vec<f64> = (0..4000)
                .map(|_| gen_ground_truth(4, 4, 3, 8.0, 5.0, penalty, &mut rng).unwrap().vhat.mean())
                .collect();
            let (m, se) = mean_se(&means);
            let expected = prior_mean_vhat(3, 8.0, 5.0, penalty).unwrap();
            assert!((m - expected).abs() < 4.0 * se, "{penalty:?}: {m} vs {expected}");
        }
    }

    #[test]
    fn noise_hits_target_snr() {
        for family in [NoiseFamily::Gaussian, NoiseFamily::Poisson, NoiseFamily::Gamma] {
            let mut total = 0.0;
            for seed in 0..5 {
                let mut rng = seeded_rng(100 + seed);
                let gt = gen_ground_truth(50, 100, 5, 50.0, 70.0, Penalty::L1, &mut rng).unwrap();
                let spec = NoiseSpec { family, target_snr_db: 10.0 };
                let noisy = add_noise(&gt.vhat, &spec, &mut rng).unwrap();
                assert!(noisy.v.is_nonnegative());
                total += noisy.measured_snr_db;
            }
            let avg = total / 5.0;
            assert!((avg - 10.0).abs() < 0.5, "{family:?}: {avg} dB");
        }
    }

    #[test]
    fn clipped_power_limits() {
        // far from zero the clip is inactive and the power is σ²
        assert!((clipped_error_power(100.0, 1.0) - 1.0).abs() < 1e-12);
        // at v̂ = 0 half the mass is clipped to an error of zero
        assert!((clipped_error_power(0.0, 2.0) - 2.0).abs() < 1e-12);
        let v = DenseMatrix::filled(2, 2, 1e6);
        assert!((clipped_gaussian_sigma(&v, 4.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gamma_alpha_for_ten_db() {
        let vhat = DenseMatrix::filled(3, 3, 2.0);
        let spec = NoiseSpec { family: NoiseFamily::Gamma, target_snr_db: 10.0 };
        let noisy = add_noise(&vhat, &spec, &mut seeded_rng(0)).unwrap();
        match noisy.param {
            NoiseParam::Gamma { alpha } => assert!((alpha - 10.0).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn noiseless_limit() {
        let vhat = DenseMatrix::from_fn(4, 5, |i, j| 1.0 + (i * j) as f64);
        for family in [NoiseFamily::Gaussian, NoiseFamily::Poisson, NoiseFamily::Gamma] {
            let spec = NoiseSpec { family, target_snr_db: f64::INFINITY };
            let noisy = add_noise(&vhat, &spec, &mut seeded_rng(0)).unwrap();
            assert_eq!(noisy.v, vhat);
        }
    }

    #[test]
    fn zero_vhat_is_unreachable() {
        let spec = NoiseSpec { family: NoiseFamily::Poisson, target_snr_db: 10.0 };
        assert!(add_noise(&DenseMatrix::zeros(2, 2), &spec, &mut seeded_rng(0)).is_err());
    }

    #[test]
    fn swimmer_images_are_distinct() {
        let s = gen_swimmer(10.0, 1.0, false, &mut seeded_rng(0)).unwrap();
        assert_eq!(s.v.shape(), (1024, 256));
        let cols: HashSet<Vec<u64>> = (0..256)
            .map(|j| s.v.col(j).map(f64::to_bits).collect())
            .collect();
        assert_eq!(cols.len(), 256);
    }

    #[test]
    fn swimmer_geometry() {
        let s = gen_swimmer(10.0, 1.0, false, &mut seeded_rng(0)).unwrap();
        assert_eq!(s.limbs.len(), 16);
        let mut seen: HashSet<usize> = s.torso.iter().copied().collect();
        for limb in &s.limbs {
            assert_eq!(limb.len(), 6);
            for &p in limb {
                assert!(seen.insert(p), "pixel {p} is shared");
            }
        }
        // background plus torso plus the four active limbs reproduces each image
        for j in 0..256 {
            let mut img = vec![1.0; 1024];
            for &p in &s.torso {
                img[p] = 10.0;
            }
            for (l, &pos) in Swimmer::positions(j).iter().enumerate() {
                for &p in &s.limbs[4 * l + pos] {
                    img[p] += 9.0;
                }
            }
            assert!(s.clean.col(j).eq(img.into_iter()));
        }
    }

    #[test]
    fn noisy_swimmer_is_integer_valued() {
        let s = gen_swimmer(10.0, 1.0, true, &mut seeded_rng(1)).unwrap();
        assert!(s.v.as_slice().iter().all(|&x| x >= 0.0 && x.fract() == 0.0));
        assert_eq!(s.v.min(), 0.0);
        assert!(s.v.max() >= 18.0 && s.v.max() <= 30.0);
    }

    #[test]
    fn mask_counts() {
        let mut rng = seeded_rng(7);
        assert_eq!(gen_mask(5, 6, 0.0, &mut rng).unwrap().missing_count(), 0);
        let m = gen_mask(30, 2543, 0.5, &mut rng).unwrap();
        assert_eq!(m.missing_count(), 38145);
        assert_eq!(m.missing_count() + m.observed_count(), 30 * 2543);
        assert!(gen_mask(3, 3, 1.0, &mut rng).is_err());
    }

    #[test]
    fn generators_are_deterministic() {
        let a = gen_ground_truth(8, 9, 3, 5.0, 2.0, Penalty::L2, &mut seeded_rng(9)).unwrap();
        let b = gen_ground_truth(8, 9, 3, 5.0, 2.0, Penalty::L2, &mut seeded_rng(9)).unwrap();
        assert_eq!(a, b);
        let s1 = gen_swimmer(10.0, 1.0, true, &mut seeded_rng(3)).unwrap();
        let s2 = gen_swimmer(10.0, 1.0, true, &mut seeded_rng(3)).unwrap();
        assert_eq!(s1.v, s2.v);
        assert_eq!(gen_mask(10, 10, 0.3, &mut seeded_rng(4)).unwrap(), gen_mask(10, 10, 0.3, &mut seeded_rng(4)).unwrap());
    }
}
