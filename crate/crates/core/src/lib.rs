//! Large-distortion dimension reduction for families of affine subspaces.
//!
//! A random `m × n` matrix with i.i.d. isotropic subgaussian rows maps a
//! family of `p` affine subspaces of dimension at most `k` into `ℝ^m` with
//! two-sided distortion `D` as soon as `m ≳ 5(k + ln p / ln D)`. This crate
//! samples such matrices, certifies the achieved distortion exactly through
//! restricted singular values, and reproduces the dimension formula and the
//! success-probability bound `1 − 2D^{−m/5}` by Monte Carlo.
//!
//! Module map:
//!
//! * [`ensembles`] samples the admissible row distributions and reports their
//!   concentration / ψ₂ constants.
//! * [`geometry`] holds subspaces, families, Grassmann distance and ε-nets.
//! * [`distortion`] certifies a matrix against a family and picks the scale `L`.
//! * [`stats`] has the estimators and closed-form bounds.
//! * [`harness`] runs trials, sweeps, the point-set embedding and the
//!   lower-bound study.
//! * [`io`] reads and writes the matrix CSV, family JSON and report formats.

pub mod distortion;
pub mod ensembles;
mod error;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod seed;
pub mod stats;

pub use distortion::{
    choose_scale, family_distortion, subspace_extremes, DistortionReport, RandomMatrix,
    ScaleChoice,
};
pub use ensembles::{
    sample_matrix, sample_row, theoretical_constants, ConstantSource, EnsembleConstants,
    EnsembleSpec,
};
pub use error::{Error, Result};
pub use geometry::{
    cross_family, epsilon_net, grassmann_distance, orthonormalize, random_subspace,
    reduce_affine, sparse_subspace, AffineSubspace, EpsilonNet, Subspace, SubspaceFamily,
};
pub use harness::{
    lower_bound_study, metric_embed, run_trial, sweep_m, ExperimentConfig, FamilyKind,
    SweepResult, TrialResult,
};
