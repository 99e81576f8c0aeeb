//! Experiment drivers: single trials, sweeps over the target dimension, the
//! point-set embedding and the lower-bound study.
//!
//! Every random object is derived from `config.seed`: the family from the
//! `FAMILY` stream and trial `t`'s matrix from the `MATRIX` stream at index
//! `t`. Trials run in parallel and are collected in index order, so results do
//! not depend on the thread count.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distortion::{
    choose_scale, family_distortion, DistortionReport, RandomMatrix, ScaleChoice,
};
use crate::ensembles::{sample_matrix, EnsembleSpec};
use crate::geometry::{self, orthonormalize, SubspaceFamily};
use crate::seed::{self, stream};
use crate::stats::{gaussian_width_mc, required_m, WidthEstimate};
use crate::{io, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    HaarRandom,
    KSparse,
    UserFile,
}

/// Inputs of one experiment. Deserializes from the config JSON; unknown keys
/// are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub k: usize,
    pub p: usize,
    #[serde(rename = "D")]
    pub distortion: f64,
    pub ensemble: EnsembleSpec,
    pub family_kind: FamilyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family_path: Option<PathBuf>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_override: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
    /// Draw a fresh Haar family for every trial instead of one fixed family.
    #[serde(default)]
    pub annealed: bool,
}

impl ExperimentConfig {
    pub fn new(n: usize, k: usize, p: usize, distortion: f64, ensemble: EnsembleSpec) -> Self {
        ExperimentConfig {
            n,
            k,
            p,
            distortion,
            ensemble,
            family_kind: FamilyKind::HaarRandom,
            family_path: None,
            trials: 1,
            seed: 0,
            m_override: None,
            parallelism: None,
            annealed: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.n {
            return Err(Error::Config(format!(
                "need 1 ≤ k ≤ n, got k={}, n={}",
                self.k, self.n
            )));
        }
        if self.p == 0 {
            return Err(Error::Config("p must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if !(self.distortion > 1.0 && self.distortion.is_finite()) {
            return Err(Error::Config(format!(
                "D must be a finite number above 1, got {}",
                self.distortion
            )));
        }
        if self.m_override == Some(0) {
            return Err(Error::Config("m_override must be positive".into()));
        }
        if self.parallelism == Some(0) {
            return Err(Error::Config("parallelism must be positive".into()));
        }
        if self.family_kind == FamilyKind::UserFile && self.family_path.is_none() {
            return Err(Error::Config("family_kind user_file needs family_path".into()));
        }
        self.ensemble.validate()
    }

    /// `m_override`, or `required_m(k, p, D)`.
    pub fn target_dim(&self) -> Result<usize> {
        match self.m_override {
            Some(m) => Ok(m),
            None => required_m(self.k, self.p, self.distortion),
        }
    }

    fn family_seed(&self, trial_index: usize) -> u64 {
        let base = seed::derive(self.seed, stream::FAMILY);
        if self.annealed && self.family_kind == FamilyKind::HaarRandom {
            seed::derive(base, trial_index as u64 + 1)
        } else {
            base
        }
    }

    pub fn matrix_seed(&self, trial_index: usize) -> u64 {
        seed::derive(seed::derive(self.seed, stream::MATRIX), trial_index as u64)
    }

    /// The family seen by `trial_index`; identical for every trial unless
    /// the config is annealed.
    pub fn build_family(&self, trial_index: usize) -> Result<SubspaceFamily> {
        let s = self.family_seed(trial_index);
        let family = match self.family_kind {
            FamilyKind::HaarRandom => geometry::haar_family(self.n, self.k, self.p, s)?,
            FamilyKind::KSparse => geometry::k_sparse_family(self.n, self.k, self.p, s)?,
            FamilyKind::UserFile => {
                let path = self.family_path.as_ref().expect("validated");
                let family = io::load_family(path)?;
                if family.ambient_dim() != self.n {
                    return Err(Error::Config(format!(
                        "family file lives in ℝ^{} but n = {}",
                        family.ambient_dim(),
                        self.n
                    )));
                }
                if family.len() != self.p || family.max_dim() > self.k {
                    return Err(Error::Config(format!(
                        "family file has {} members of dimension ≤ {}, config says p = {}, k = {}",
                        family.len(),
                        family.max_dim(),
                        self.p,
                        self.k
                    )));
                }
                family
            }
        };
        Ok(family)
    }

    fn is_quenched(&self) -> bool {
        !(self.annealed && self.family_kind == FamilyKind::HaarRandom)
    }
}

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub trial_index: usize,
    pub m_used: usize,
    pub feasible: bool,
    /// `null` in JSON when some member collapsed.
    pub achieved_distortion: f64,
    #[serde(rename = "L")]
    pub scale: Option<f64>,
    /// Excluded from serialized logs so reruns stay byte-identical.
    #[serde(skip)]
    pub wall_time: Duration,
}

fn trial_outcome(
    config: &ExperimentConfig,
    family: &SubspaceFamily,
    m: usize,
    trial_index: usize,
) -> Result<TrialResult> {
    let start = Instant::now();
    let gamma = sample_matrix(&config.ensemble, m, config.n, config.matrix_seed(trial_index))?;
    let report = family_distortion(&gamma, family)?;
    let choice = choose_scale(&report, config.distortion)?;
    Ok(TrialResult {
        trial_index,
        m_used: m,
        feasible: choice.feasible,
        achieved_distortion: report.achieved_distortion,
        scale: choice.scale,
        wall_time: start.elapsed(),
    })
}

/// One trial of the main experiment, deterministic in `(config, trial_index)`.
pub fn run_trial(config: &ExperimentConfig, trial_index: usize) -> Result<TrialResult> {
    config.validate()?;
    let family = config.build_family(trial_index)?;
    trial_outcome(config, &family, config.target_dim()?, trial_index)
}

/// [`run_trial`] against an explicitly supplied family.
pub fn run_trial_with_family(
    config: &ExperimentConfig,
    family: &SubspaceFamily,
    trial_index: usize,
) -> Result<TrialResult> {
    config.validate()?;
    if family.ambient_dim() != config.n {
        return Err(Error::Dimension(format!(
            "family lives in ℝ^{}, config says n = {}",
            family.ambient_dim(),
            config.n
        )));
    }
    trial_outcome(config, family, config.target_dim()?, trial_index)
}

/// All `config.trials` trials, in index order.
pub fn run_trials(config: &ExperimentConfig) -> Result<Vec<TrialResult>> {
    config.validate()?;
    let m = config.target_dim()?;
    if config.is_quenched() {
        let family = config.build_family(0)?;
        (0..config.trials)
            .into_par_iter()
            .map(|t| trial_outcome(config, &family, m, t))
            .collect()
    } else {
        (0..config.trials)
            .into_par_iter()
            .map(|t| trial_outcome(config, &config.build_family(t)?, m, t))
            .collect()
    }
}

/// Success statistics at one target dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub m: usize,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean over trials; `+∞` if any trial collapsed.
    pub mean_achieved_distortion: f64,
}

impl SweepPoint {
    /// Binomial standard error under the normal approximation.
    pub fn std_error(&self) -> f64 {
        let r = self.success_rate;
        (r * (1.0 - r) / self.trials as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    /// Success rates after nondecreasing isotonic regression.
    pub smoothed_rates: Vec<f64>,
    pub target_rate: f64,
    /// Smallest `m` whose smoothed rate reaches the target.
    pub minimal_m: Option<usize>,
}

/// Weighted pool-adjacent-violators fit of a nondecreasing sequence.
pub fn isotonic_nondecreasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    // blocks of (mean, weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() >= 2 {
            let (b_mean, b_w, b_len) = blocks[blocks.len() - 1];
            let (a_mean, a_w, a_len) = blocks[blocks.len() - 2];
            if a_mean <= b_mean {
                break;
            }
            let w = a_w + b_w;
            let merged = if w > 0.0 {
                (a_mean * a_w + b_mean * b_w) / w
            } else {
                0.5 * (a_mean + b_mean)
            };
            blocks.truncate(blocks.len() - 2);
            blocks.push((merged, w, a_len + b_len));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(mean, _, len)| std::iter::repeat_n(mean, len))
        .collect()
}

/// Success rate at each `m` in `m_values` over `config.trials` trials.
///
/// Trial `t` uses the leading rows of one matrix sampled at the largest `m`,
/// which is exactly what sampling at each smaller `m` would produce.
pub fn sweep_m(config: &ExperimentConfig, m_values: &[usize], target_rate: f64) -> Result<SweepResult> {
    config.validate()?;
    if config.is_quenched() {
        let family = config.build_family(0)?;
        sweep_with_family(config, Some(&family), m_values, target_rate)
    } else {
        sweep_with_family(config, None, m_values, target_rate)
    }
}

fn sweep_with_family(
    config: &ExperimentConfig,
    fixed: Option<&SubspaceFamily>,
    m_values: &[usize],
    target_rate: f64,
) -> Result<SweepResult> {
    if m_values.is_empty() {
        return Err(Error::Input("m_values must be non-empty".into()));
    }
    if m_values[0] == 0 || m_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Input("m_values must be positive and strictly increasing".into()));
    }
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(Error::Input(format!("target_rate must lie in (0, 1), got {target_rate}")));
    }
    let m_max = *m_values.last().expect("non-empty");
    let distortion = config.distortion;

    // per trial: achieved distortion at each m
    let per_trial: Vec<Vec<f64>> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let owned;
            let family = match fixed {
                Some(f) => f,
                None => {
                    owned = config.build_family(t)?;
                    &owned
                }
            };
            let gamma = sample_matrix(&config.ensemble, m_max, config.n, config.matrix_seed(t))?;
            m_values
                .iter()
                .map(|&m| Ok(family_distortion(&gamma.leading_rows(m), family)?.achieved_distortion))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let trials = config.trials;
    let points: Vec<SweepPoint> = m_values
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let achieved: Vec<f64> = per_trial.iter().map(|row| row[i]).collect();
            let successes = achieved.iter().filter(|&&d| d <= distortion).count();
            SweepPoint {
                m,
                trials,
                successes,
                success_rate: successes as f64 / trials as f64,
                mean_achieved_distortion: crate::stats::pairwise_sum(&achieved) / trials as f64,
            }
        })
        .collect();
    let rates: Vec<f64> = points.iter().map(|p| p.success_rate).collect();
    let smoothed_rates = isotonic_nondecreasing(&rates, &vec![trials as f64; rates.len()]);
    let minimal_m = smoothed_rates
        .iter()
        .position(|&r| r >= target_rate)
        .map(|i| m_values[i]);
    Ok(SweepResult {
        points,
        smoothed_rates,
        target_rate,
        minimal_m,
    })
}

/// Random linear embedding of a finite point set.
#[derive(Debug, Clone)]
pub struct MetricEmbedding {
    pub gamma: RandomMatrix,
    pub choice: ScaleChoice,
    pub report: DistortionReport,
    /// Index pairs `(i, j)`, `i < j`, whose difference direction is a member.
    pub pairs: Vec<(usize, usize)>,
    pub family: SubspaceFamily,
}

impl MetricEmbedding {
    /// Checks `(L/D)‖x_i − x_j‖ ≤ ‖Γx_i − Γx_j‖ ≤ L‖x_i − x_j‖` on `count`
    /// random distinct point pairs; returns the number of violations.
    pub fn check_point_pairs(&self, points: &[Vec<f64>], count: usize, seed: u64) -> Result<usize> {
        use rand::Rng;
        let scale = self
            .choice
            .scale
            .ok_or_else(|| Error::Input("embedding is infeasible".into()))?;
        let lower = scale / self.choice.distortion;
        let mut rng = seed::rng(seed);
        let mut violations = 0;
        let mut checked = 0;
        while checked < count {
            let i = rng.random_range(0..points.len());
            let j = rng.random_range(0..points.len());
            let diff = DVector::from_iterator(
                points[i].len(),
                points[i].iter().zip(&points[j]).map(|(a, b)| a - b),
            );
            let dist = diff.norm();
            if i == j || dist == 0.0 {
                continue;
            }
            checked += 1;
            let image = self.gamma.apply(&diff).norm();
            let slack = crate::distortion::POINTWISE_REL_TOL * scale * dist;
            if image > scale * dist + slack || image < lower * dist - slack {
                violations += 1;
            }
        }
        Ok(violations)
    }
}

/// Embeds `points` with distortion `D` into `required_m(1, #pairs, D)`
/// dimensions by certifying `Γ` on every difference direction.
pub fn metric_embed(
    points: &[Vec<f64>],
    distortion: f64,
    ensemble: &EnsembleSpec,
    seed: u64,
) -> Result<MetricEmbedding> {
    if points.len() < 2 {
        return Err(Error::Input("need at least two points".into()));
    }
    let n = points[0].len();
    if n == 0 {
        return Err(Error::Input("points must have positive dimension".into()));
    }
    if let Some(i) = points.iter().position(|x| x.len() != n) {
        return Err(Error::Dimension(format!(
            "point {i} has dimension {}, expected {n}",
            points[i].len()
        )));
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Input("points contain non-finite coordinates".into()));
    }
    let mut pairs = Vec::new();
    let mut members = Vec::new();
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let diff: Vec<f64> = points[i].iter().zip(&points[j]).map(|(a, b)| a - b).collect();
            if diff.iter().all(|&d| d == 0.0) {
                log::warn!("points {i} and {j} coincide; pair skipped");
                continue;
            }
            members.push(orthonormalize(&DMatrix::from_column_slice(n, 1, &diff))?);
            pairs.push((i, j));
        }
    }
    if members.is_empty() {
        return Err(Error::Input("all points coincide".into()));
    }
    let family = SubspaceFamily::from_linear(members)?;
    let m = required_m(1, family.len(), distortion)?;
    let gamma = sample_matrix(ensemble, m, n, seed)?;
    let report = family_distortion(&gamma, &family)?;
    let choice = choose_scale(&report, distortion)?;
    Ok(MetricEmbedding {
        gamma,
        choice,
        report,
        pairs,
        family,
    })
}

/// Parameters of the lower-bound / tightness study on `k`-sparse families.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundStudy {
    pub n: usize,
    pub k: usize,
    pub distortion: f64,
    /// Required pairwise Grassmann separation.
    pub delta: f64,
    pub p_values: Vec<usize>,
    pub ensemble: EnsembleSpec,
    pub seed: u64,
    pub m_values: Vec<usize>,
    pub trials: usize,
    pub target_rate: f64,
    pub width_draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundRow {
    pub p: usize,
    pub min_separation: f64,
    pub minimal_m: Option<usize>,
    pub predicted_m: usize,
    pub width: WidthEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundTable {
    pub rows: Vec<LowerBoundRow>,
    /// Measured minimal `m` is nondecreasing in `p` (a missing value counts
    /// as larger than every sweep value).
    pub monotone_in_p: bool,
}

/// For each `p`, the measured minimal `m` and the Gaussian width of a
/// `k`-sparse family. Families for increasing `p` are nested prefixes.
pub fn lower_bound_study(study: &LowerBoundStudy) -> Result<LowerBoundTable> {
    let mut rows = Vec::with_capacity(study.p_values.len());
    for &p in &study.p_values {
        let config = ExperimentConfig {
            family_kind: FamilyKind::KSparse,
            trials: study.trials,
            seed: study.seed,
            ..ExperimentConfig::new(study.n, study.k, p, study.distortion, study.ensemble)
        };
        config.validate()?;
        let family = config.build_family(0)?;
        let min_separation = match geometry::min_separation(&family)? {
            Some((d, i, j)) if d < study.delta - 1e-10 => {
                return Err(Error::Input(format!(
                    "members {i} and {j} are only {d:.6} apart, below δ = {}",
                    study.delta
                )))
            }
            Some((d, _, _)) => d,
            None => f64::INFINITY,
        };
        let sweep = sweep_with_family(&config, Some(&family), &study.m_values, study.target_rate)?;
        let width = gaussian_width_mc(
            &family,
            study.width_draws,
            seed::derive(study.seed, stream::WIDTH),
        )?;
        rows.push(LowerBoundRow {
            p,
            min_separation,
            minimal_m: sweep.minimal_m,
            predicted_m: required_m(study.k, p, study.distortion)?,
            width,
        });
    }
    let key = |r: &LowerBoundRow| r.minimal_m.unwrap_or(usize::MAX);
    let monotone_in_p = rows.windows(2).all(|w| key(&w[0]) <= key(&w[1]));
    Ok(LowerBoundTable {
        rows,
        monotone_in_p,
    })
}
