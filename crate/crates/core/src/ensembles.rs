//! Admissible random-row distributions.
//!
//! A row distribution is admissible when it is centered, isotropic
//! (`E⟨X,a⟩² = ‖a‖²`), satisfies a ψ₂ condition `‖⟨X,a⟩‖_ψ₂ ≤ β‖a‖` and has
//! the concentration property `sup_L Pr(|⟨X,a⟩ − L| < ε) ≤ αε` for unit `a`.
//! Three families are provided: standard Gaussian rows, uniform points on the
//! sphere of radius `√n`, and rows with i.i.d. bounded-density entries.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::distortion::RandomMatrix;
use crate::seed;
use crate::stats;
use crate::{Error, Result};

/// Largest `m · n` accepted by [`sample_matrix`].
pub const MAX_MATRIX_ENTRIES: usize = 1 << 27;

const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Entry law for [`EnsembleSpec::IidBounded`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryDistribution {
    /// Uniform on `[−√3, √3]`: mean 0, variance 1, density `1/(2√3)`.
    #[default]
    Uniform,
}

impl EntryDistribution {
    /// Closed interval containing every draw.
    pub fn support(self) -> (f64, f64) {
        match self {
            EntryDistribution::Uniform => (-SQRT_3, SQRT_3),
        }
    }

    pub fn density_bound(self) -> f64 {
        match self {
            EntryDistribution::Uniform => 1.0 / (2.0 * SQRT_3),
        }
    }

    /// Upper bound on the ψ₂ norm of one entry (`4^{1/2}·sup|X|`).
    pub fn psi2_bound(self) -> f64 {
        match self {
            EntryDistribution::Uniform => 2.0 * SQRT_3,
        }
    }
}

fn default_density_bound() -> f64 {
    EntryDistribution::Uniform.density_bound()
}

fn default_entry_psi2() -> f64 {
    EntryDistribution::Uniform.psi2_bound()
}

/// Which row distribution to draw.
///
/// Serialized as `{"kind": "gaussian" | "sphere" | "iid_bounded", ...}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnsembleSpec {
    /// i.i.d. standard normal entries.
    Gaussian,
    /// `√n · U` with `U` uniform on `S^{n−1}`.
    #[serde(rename = "sphere")]
    SphereScaled,
    /// i.i.d. centered unit-variance entries with a bounded density.
    IidBounded {
        #[serde(default)]
        entry: EntryDistribution,
        #[serde(default = "default_density_bound")]
        density_bound: f64,
        #[serde(default = "default_entry_psi2")]
        entry_psi2: f64,
    },
}

impl EnsembleSpec {
    /// The built-in bounded ensemble: uniform entries on `[−√3, √3]`.
    pub fn uniform_iid() -> Self {
        EnsembleSpec::IidBounded {
            entry: EntryDistribution::Uniform,
            density_bound: default_density_bound(),
            entry_psi2: default_entry_psi2(),
        }
    }

    pub fn all_builtin() -> [EnsembleSpec; 3] {
        [
            EnsembleSpec::Gaussian,
            EnsembleSpec::SphereScaled,
            EnsembleSpec::uniform_iid(),
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnsembleSpec::Gaussian => "gaussian",
            EnsembleSpec::SphereScaled => "sphere",
            EnsembleSpec::IidBounded { .. } => "iid_bounded",
        }
    }

    /// Parses the bare kind name used on the command line.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "gaussian" => Ok(EnsembleSpec::Gaussian),
            "sphere" | "sphere_scaled" => Ok(EnsembleSpec::SphereScaled),
            "iid_bounded" | "uniform" => Ok(EnsembleSpec::uniform_iid()),
            other => Err(Error::Config(format!("unknown ensemble kind `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let EnsembleSpec::IidBounded {
            density_bound,
            entry_psi2,
            ..
        } = *self
        {
            if !(density_bound.is_finite() && density_bound > 0.0) {
                return Err(Error::Config(format!(
                    "density_bound must be positive, got {density_bound}"
                )));
            }
            if !(entry_psi2.is_finite() && entry_psi2 > 0.0) {
                return Err(Error::Config(format!(
                    "entry_psi2 must be positive, got {entry_psi2}"
                )));
            }
        }
        Ok(())
    }

    fn fill<R: Rng + ?Sized>(&self, rng: &mut R, row: &mut [f64]) {
        match *self {
            EnsembleSpec::Gaussian => {
                for x in row.iter_mut() {
                    *x = StandardNormal.sample(rng);
                }
            }
            EnsembleSpec::SphereScaled => loop {
                let mut sq = 0.0;
                for x in row.iter_mut() {
                    let g: f64 = StandardNormal.sample(rng);
                    *x = g;
                    sq += g * g;
                }
                if sq > 0.0 {
                    let scale = (row.len() as f64).sqrt() / sq.sqrt();
                    row.iter_mut().for_each(|x| *x *= scale);
                    break;
                }
            },
            EnsembleSpec::IidBounded { entry, .. } => {
                let (lo, hi) = entry.support();
                let dist = Uniform::new_inclusive(lo, hi).expect("finite support");
                for x in row.iter_mut() {
                    *x = dist.sample(rng);
                }
            }
        }
    }
}

/// Which constants are closed-form and which were measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantSource {
    ClosedForm,
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConstants {
    /// Concentration constant α.
    pub alpha: f64,
    /// ψ₂ constant β.
    pub beta: f64,
    pub alpha_source: ConstantSource,
    pub beta_source: ConstantSource,
}

/// One row of length `n`, deterministic in `(spec, n, seed)`.
pub fn sample_row(spec: &EnsembleSpec, n: usize, seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Input("row length must be at least 1".into()));
    }
    let mut row = vec![0.0; n];
    spec.fill(&mut seed::rng(seed), &mut row);
    Ok(row)
}

/// An `m × n` matrix whose row `i` is `sample_row(spec, n, derive(seed, i))`.
pub fn sample_matrix(spec: &EnsembleSpec, m: usize, n: usize, seed: u64) -> Result<RandomMatrix> {
    spec.validate()?;
    if m == 0 || n == 0 {
        return Err(Error::Input(format!("matrix shape {m}×{n} must be positive")));
    }
    match m.checked_mul(n) {
        Some(len) if len <= MAX_MATRIX_ENTRIES => {}
        _ => {
            return Err(Error::Resource(format!(
                "{m}×{n} matrix exceeds the budget of {MAX_MATRIX_ENTRIES} entries"
            )))
        }
    }
    let mut mat = DMatrix::zeros(m, n);
    let mut row = vec![0.0; n];
    for i in 0..m {
        spec.fill(&mut seed::rng(seed::derive(seed, i as u64)), &mut row);
        for (j, &x) in row.iter().enumerate() {
            mat[(i, j)] = x;
        }
    }
    Ok(RandomMatrix::with_provenance(mat, *spec, seed))
}

/// Samples of `⟨X, a⟩` for `count` independent rows `X`.
pub fn directional_samples(
    spec: &EnsembleSpec,
    direction: &[f64],
    count: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let n = direction.len();
    if n == 0 {
        return Err(Error::Input("direction must be non-empty".into()));
    }
    let mut rng = seed::rng(seed);
    let mut row = vec![0.0; n];
    Ok((0..count)
        .map(|_| {
            spec.fill(&mut rng, &mut row);
            row.iter().zip(direction).map(|(x, a)| x * a).sum()
        })
        .collect())
}

const ALPHA_PROBE_DIM: usize = 16;
const ALPHA_PROBE_DIRECTIONS: usize = 16;
const ALPHA_PROBE_SAMPLES: usize = 40_000;
const ALPHA_PROBE_SEED: u64 = 0x616c_7068_61;
const ALPHA_EPSILONS: [f64; 6] = [0.05, 0.1, 0.2, 0.5, 1.0, 2.0];

/// Directional worst case of `C_ε(⟨X,a⟩)/ε` over a first coordinate direction
/// and `directions − 1` random unit directions, maximized over a fixed ε grid.
pub fn estimate_alpha(
    spec: &EnsembleSpec,
    n: usize,
    directions: usize,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let mut worst = 0.0_f64;
    for d in 0..directions.max(1) {
        let a = if d == 0 {
            let mut e = vec![0.0; n];
            e[0] = 1.0;
            e
        } else {
            random_unit(n, seed::derive(seed, 2 * d as u64))
        };
        let xs = directional_samples(spec, &a, samples, seed::derive(seed, 2 * d as u64 + 1))?;
        let sorted = stats::sorted(&xs);
        for &eps in &ALPHA_EPSILONS {
            let c = stats::window_fraction_sorted(&sorted, eps);
            worst = worst.max(c / eps);
        }
    }
    Ok(worst)
}

pub(crate) fn random_unit(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed);
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Admissibility constants `(α, β)`.
///
/// Gaussian and sphere rows have closed forms. For i.i.d. rows β is four
/// times the entry ψ₂ bound, while α is measured directionally because the
/// passage from entries to arbitrary directions has no numeric constant.
pub fn theoretical_constants(spec: &EnsembleSpec) -> Result<EnsembleConstants> {
    spec.validate()?;
    Ok(match *spec {
        EnsembleSpec::Gaussian => EnsembleConstants {
            alpha: (2.0 / std::f64::consts::PI).sqrt(),
            beta: (8.0_f64 / 3.0).sqrt(),
            alpha_source: ConstantSource::ClosedForm,
            beta_source: ConstantSource::ClosedForm,
        },
        EnsembleSpec::SphereScaled => EnsembleConstants {
            alpha: 2.0,
            beta: 4.0,
            alpha_source: ConstantSource::ClosedForm,
            beta_source: ConstantSource::ClosedForm,
        },
        EnsembleSpec::IidBounded { entry_psi2, .. } => EnsembleConstants {
            alpha: estimate_alpha(
                spec,
                ALPHA_PROBE_DIM,
                ALPHA_PROBE_DIRECTIONS,
                ALPHA_PROBE_SAMPLES,
                ALPHA_PROBE_SEED,
            )?,
            beta: 4.0 * entry_psi2,
            alpha_source: ConstantSource::Empirical,
            beta_source: ConstantSource::ClosedForm,
        },
    })
}
