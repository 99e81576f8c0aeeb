//! Estimators and closed-form bounds.

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distortion::family_distortion;
use crate::ensembles::{sample_matrix, EnsembleSpec};
use crate::geometry::SubspaceFamily;
use crate::seed;
use crate::{Error, Result};

/// Smallest sample accepted by the empirical ψ₂ and concentration estimators.
pub const MIN_SAMPLES: usize = 1_000;

/// Points at which [`psi2_tail_check`] compares tails.
pub const TAIL_CHECK_POINTS: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];

const PSI2_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Psi2Method {
    BisectionOnEmpiricalMgf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Psi2Estimate {
    pub value: f64,
    pub sample_count: usize,
    pub method: Psi2Method,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationEstimate {
    pub epsilon: f64,
    pub value: f64,
    pub sample_count: usize,
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_draws: usize,
}

impl WidthEstimate {
    fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let mean = pairwise_sum(values) / n as f64;
        let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
        let var = if n > 1 {
            pairwise_sum(&dev) / (n - 1) as f64
        } else {
            0.0
        };
        WidthEstimate {
            mean,
            std_error: (var / n as f64).sqrt(),
            n_draws: n,
        }
    }
}

/// Fixed-order pairwise summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

pub(crate) fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Largest fraction of sorted samples inside an open window of width `2ε`.
pub(crate) fn window_fraction_sorted(sorted: &[f64], epsilon: f64) -> f64 {
    let width = 2.0 * epsilon;
    let mut best = 0usize;
    let mut lo = 0usize;
    for hi in 0..sorted.len() {
        while sorted[hi] - sorted[lo] >= width {
            lo += 1;
        }
        best = best.max(hi - lo + 1);
    }
    best as f64 / sorted.len() as f64
}

fn check_samples(samples: &[f64]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Input("no samples".into()));
    }
    if samples.len() < MIN_SAMPLES {
        return Err(Error::Input(format!(
            "{} samples given, at least {MIN_SAMPLES} required",
            samples.len()
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input("samples contain non-finite values".into()));
    }
    Ok(())
}

/// Empirical `‖X‖_ψ₂ = inf{C > 0 : mean exp(X²/C²) ≤ 2}`.
///
/// The samples are divided by `max|X|` before the search, so the estimate is
/// positively homogeneous.
pub fn psi2_estimate(samples: &[f64]) -> Result<Psi2Estimate> {
    check_samples(samples)?;
    let n = samples.len();
    let peak = samples.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let done = |value| Psi2Estimate {
        value,
        sample_count: n,
        method: Psi2Method::BisectionOnEmpiricalMgf,
    };
    if peak == 0.0 {
        return Ok(done(0.0));
    }
    let sq: Vec<f64> = samples.iter().map(|x| (x / peak).powi(2)).collect();
    let excess = |c: f64| {
        let inv = 1.0 / (c * c);
        let terms: Vec<f64> = sq.iter().map(|s| (s * inv).exp()).collect();
        pairwise_sum(&terms) / n as f64 - 2.0
    };
    // mean ≥ exp(1/lo²)/n = 4 at the lower end; mean ≤ exp(1/hi²) < 2 above
    let mut lo = 1.0 / (4.0 * n as f64).ln().sqrt();
    let mut hi = 10.0;
    while excess(lo) <= 0.0 {
        lo *= 0.5;
    }
    while excess(hi) > 0.0 {
        hi *= 2.0;
    }
    while hi - lo > PSI2_REL_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(done(peak * hi))
}

/// `C_ε = sup_L` fraction of samples in `(L − ε, L + ε)`.
pub fn concentration_estimate(samples: &[f64], epsilon: f64) -> Result<ConcentrationEstimate> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Input(format!("epsilon must be positive, got {epsilon}")));
    }
    check_samples(samples)?;
    Ok(ConcentrationEstimate {
        epsilon,
        value: window_fraction_sorted(&sorted(samples), epsilon),
        sample_count: samples.len(),
    })
}

/// Small-ball bound `min(1, (6α)^m λ^{m/2})` for `Pr(Σ X_i² ≤ λm)` when the
/// `m` independent coordinates have densities bounded by `α`.
pub fn small_ball_bound(alpha: f64, m: usize, lambda: f64) -> Result<f64> {
    if !(alpha > 0.0 && lambda > 0.0) || m == 0 {
        return Err(Error::Input(format!(
            "need α > 0, λ > 0, m ≥ 1; got α={alpha}, λ={lambda}, m={m}"
        )));
    }
    let m = m as f64;
    let log = m * (6.0 * alpha).ln() + 0.5 * m * lambda.ln();
    Ok(log.exp().min(1.0))
}

/// Whether empirical tails obey `Pr(|X| > t) ≤ 2 exp(−t²/β²)` at every point
/// of [`TAIL_CHECK_POINTS`], allowing three binomial standard errors.
pub fn psi2_tail_check(samples: &[f64], beta: f64) -> bool {
    if samples.is_empty() || !(beta > 0.0) {
        return false;
    }
    let n = samples.len() as f64;
    TAIL_CHECK_POINTS.iter().all(|&t| {
        let tail = samples.iter().filter(|x| x.abs() > t).count() as f64 / n;
        let se = (tail * (1.0 - tail) / n).sqrt();
        tail <= 2.0 * (-(t * t) / (beta * beta)).exp() + 3.0 * se
    })
}

/// Monte Carlo `E max_{x ∈ S} ⟨x, g⟩` for `S` the union of the members' unit
/// spheres, evaluated as `E max_l ‖P_{W_l} g‖`.
pub fn gaussian_width_mc(family: &SubspaceFamily, n_draws: usize, seed: u64) -> Result<WidthEstimate> {
    if n_draws < 2 {
        return Err(Error::Input("need at least two Gaussian draws".into()));
    }
    let n = family.ambient_dim();
    let bases_t: Vec<_> = family.directions().map(|w| w.basis().transpose()).collect();
    let values: Vec<f64> = (0..n_draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = seed::rng(seed::derive(seed, d as u64));
            let g = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            bases_t
                .iter()
                .map(|bt| (bt * &g).norm())
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(WidthEstimate::from_values(&values))
}

/// `3(√ln p + √k + r(√ln p + √(n−k)))`.
pub fn width_upper_bound(k: usize, p: usize, r: f64, n: usize) -> Result<f64> {
    if k == 0 || k > n || p == 0 {
        return Err(Error::Input(format!("need 1 ≤ k ≤ n and p ≥ 1; got k={k}, n={n}, p={p}")));
    }
    if !(0.0..1.0).contains(&r) {
        return Err(Error::Input(format!("r must lie in [0, 1), got {r}")));
    }
    let lp = (p as f64).ln().sqrt();
    Ok(3.0 * (lp + (k as f64).sqrt() + r * (lp + ((n - k) as f64).sqrt())))
}

/// Target dimension `⌈5(k + ln p / ln D)⌉`.
pub fn required_m(k: usize, p: usize, distortion: f64) -> Result<usize> {
    if k == 0 || p == 0 {
        return Err(Error::Input(format!("need k ≥ 1 and p ≥ 1; got k={k}, p={p}")));
    }
    if !(distortion > 1.0 && distortion.is_finite()) {
        return Err(Error::Input(format!("distortion D must exceed 1, got {distortion}")));
    }
    let raw = 5.0 * (k as f64 + (p as f64).ln() / distortion.ln());
    // ln p / ln D is an exact rational for powers of a common base; keep
    // rounding noise from pushing an integer result up by one
    Ok((raw - 1e-9 * raw.max(1.0)).ceil() as usize)
}

/// `max(0, 1 − 2 D^{−m/5})`.
pub fn success_prob_bound(distortion: f64, m: usize) -> Result<f64> {
    if !(distortion > 1.0) || m == 0 {
        return Err(Error::Input(format!(
            "need D > 1 and m ≥ 1; got D={distortion}, m={m}"
        )));
    }
    Ok((1.0 - 2.0 * distortion.powf(-(m as f64) / 5.0)).max(0.0))
}

/// Monte Carlo `E max_{x ∈ S} ‖Γx‖²` over fresh `m × n` matrices.
pub fn expected_max_image_sq(
    ensemble: &EnsembleSpec,
    family: &SubspaceFamily,
    m: usize,
    trials: usize,
    seed: u64,
) -> Result<WidthEstimate> {
    if trials < 2 {
        return Err(Error::Input("need at least two trials".into()));
    }
    let values = (0..trials)
        .into_par_iter()
        .map(|t| {
            let g = sample_matrix(ensemble, m, family.ambient_dim(), seed::derive(seed, t as u64))?;
            Ok(family_distortion(&g, family)?.family_sigma_max.powi(2))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(WidthEstimate::from_values(&values))
}
