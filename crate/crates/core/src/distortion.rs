//! Exact distortion certification.
//!
//! For an orthonormal basis `B` of `W`, `min/max_{x ∈ W, ‖x‖=1} ‖Γx‖` are the
//! extreme singular values of `ΓB`. Taking the extremes over a family decides
//! the two-sided bound `(L/D)‖x−y‖ ≤ ‖Γx − Γy‖ ≤ L‖x−y‖` for every pair of
//! points in every member, with no sampling involved.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::EnsembleSpec;
use crate::geometry::{Subspace, SubspaceFamily};
use crate::seed;
use crate::{Error, Result};

/// Relative slack absorbed by the pointwise check for floating-point rounding.
pub const POINTWISE_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub ensemble: EnsembleSpec,
    pub seed: u64,
}

/// The sampled `m × n` map `Γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomMatrix {
    matrix: DMatrix<f64>,
    provenance: Option<Provenance>,
}

impl RandomMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::Input("matrix must have at least one row and column".into()));
        }
        if let Some(i) = matrix.iter().position(|x| !x.is_finite()) {
            return Err(Error::Input(format!(
                "non-finite entry at ({}, {})",
                i % matrix.nrows(),
                i / matrix.nrows()
            )));
        }
        Ok(RandomMatrix {
            matrix,
            provenance: None,
        })
    }

    pub(crate) fn with_provenance(matrix: DMatrix<f64>, ensemble: EnsembleSpec, seed: u64) -> Self {
        RandomMatrix {
            matrix,
            provenance: Some(Provenance { ensemble, seed }),
        }
    }

    /// Row-major constructor.
    pub fn from_row_major(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries cannot fill a {rows}×{cols} matrix",
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(rows, cols, entries))
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    pub fn scaled(&self, c: f64) -> RandomMatrix {
        RandomMatrix {
            matrix: &self.matrix * c,
            provenance: self.provenance,
        }
    }

    /// The leading `m` rows, which is exactly the matrix that would have been
    /// sampled with `m` rows from the same seed.
    pub fn leading_rows(&self, m: usize) -> RandomMatrix {
        RandomMatrix {
            matrix: self.matrix.rows(0, m.min(self.rows())).into_owned(),
            provenance: self.provenance,
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }
}

/// Extreme restricted singular values on one member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremes {
    pub sigma_min: f64,
    pub sigma_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistortionReport {
    pub per_subspace: Vec<Extremes>,
    pub family_sigma_min: f64,
    pub family_sigma_max: f64,
    /// `family_sigma_max / family_sigma_min`, or `+∞` on rank collapse.
    pub achieved_distortion: f64,
}

impl DistortionReport {
    pub fn from_extremes(per_subspace: Vec<Extremes>) -> Result<Self> {
        if per_subspace.is_empty() {
            return Err(Error::Input("report needs at least one member".into()));
        }
        let family_sigma_min = per_subspace
            .iter()
            .map(|e| e.sigma_min)
            .fold(f64::INFINITY, f64::min);
        let family_sigma_max = per_subspace.iter().map(|e| e.sigma_max).fold(0.0, f64::max);
        let achieved_distortion = if family_sigma_min > 0.0 {
            family_sigma_max / family_sigma_min
        } else {
            f64::INFINITY
        };
        Ok(DistortionReport {
            per_subspace,
            family_sigma_min,
            family_sigma_max,
            achieved_distortion,
        })
    }

    /// Some member is mapped non-injectively.
    pub fn rank_collapse(&self) -> bool {
        self.family_sigma_min <= 0.0
    }
}

/// Outcome of fitting the scale `L` for a target distortion `D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleChoice {
    pub feasible: bool,
    #[serde(rename = "L")]
    pub scale: Option<f64>,
    #[serde(rename = "D")]
    pub distortion: f64,
}

/// `(σ_min, σ_max)` of `Γ B` for the orthonormal basis `B` of `w`.
///
/// When `Γ` has fewer rows than `w` has dimensions, `σ_min` is zero.
pub fn subspace_extremes(gamma: &RandomMatrix, w: &Subspace) -> Result<Extremes> {
    if w.ambient_dim() != gamma.cols() {
        return Err(Error::Dimension(format!(
            "subspace lives in ℝ^{} but the map has {} columns",
            w.ambient_dim(),
            gamma.cols()
        )));
    }
    let restricted = gamma.matrix() * w.basis();
    let sv = restricted.singular_values();
    let sigma_max = sv.max();
    let sigma_min = if gamma.rows() < w.dim() { 0.0 } else { sv.min() };
    Ok(Extremes {
        sigma_min: sigma_min.max(0.0),
        sigma_max,
    })
}

/// Certifies `gamma` on every member; affine base points are ignored since
/// only differences `x − y` enter the bound.
pub fn family_distortion(gamma: &RandomMatrix, family: &SubspaceFamily) -> Result<DistortionReport> {
    if family.ambient_dim() != gamma.cols() {
        return Err(Error::Dimension(format!(
            "family lives in ℝ^{} but the map has {} columns",
            family.ambient_dim(),
            gamma.cols()
        )));
    }
    let dirs: Vec<&Subspace> = family.directions().collect();
    let per_subspace = if dirs.len() >= 64 {
        dirs.par_iter()
            .map(|w| subspace_extremes(gamma, w))
            .collect::<Result<Vec<_>>>()?
    } else {
        dirs.iter()
            .map(|w| subspace_extremes(gamma, w))
            .collect::<Result<Vec<_>>>()?
    };
    DistortionReport::from_extremes(per_subspace)
}

/// Feasible iff `family_sigma_max ≤ D · family_sigma_min`; then `L = family_sigma_max`.
pub fn choose_scale(report: &DistortionReport, distortion: f64) -> Result<ScaleChoice> {
    if !(distortion >= 1.0) {
        return Err(Error::Input(format!("distortion D must be ≥ 1, got {distortion}")));
    }
    let feasible = report.family_sigma_min > 0.0
        && report.family_sigma_max <= distortion * report.family_sigma_min;
    Ok(ScaleChoice {
        feasible,
        scale: feasible.then_some(report.family_sigma_max),
        distortion,
    })
}

/// Counts pairs violating the two-sided bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PointwiseCheck {
    pub pairs: usize,
    pub violations: usize,
}

/// Draws `pairs` random pairs `x, y` inside random members and checks
/// `(L/D)‖x−y‖ ≤ ‖Γx − Γy‖ ≤ L‖x−y‖` directly.
pub fn verify_pointwise(
    gamma: &RandomMatrix,
    family: &SubspaceFamily,
    choice: &ScaleChoice,
    pairs: usize,
    seed: u64,
) -> Result<PointwiseCheck> {
    let scale = choice
        .scale
        .ok_or_else(|| Error::Input("pointwise check needs a feasible scale".into()))?;
    let lower = scale / choice.distortion;
    let mut rng = seed::rng(seed);
    let members = family.members();
    let mut violations = 0;
    for _ in 0..pairs {
        let idx = (rand::Rng::random::<u64>(&mut rng) % members.len() as u64) as usize;
        let member = &members[idx];
        let k = member.direction.dim();
        let cx = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
        let cy = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
        let (x, y) = (member.point(&cx), member.point(&cy));
        let diff = (&x - &y).norm();
        let image = (gamma.apply(&x) - gamma.apply(&y)).norm();
        let slack = POINTWISE_REL_TOL * scale * diff;
        if image > scale * diff + slack || image < lower * diff - slack {
            violations += 1;
        }
    }
    Ok(PointwiseCheck { pairs, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::sample_matrix;
    use crate::geometry::{haar_family, orthonormalize, random_subspace, sparse_subspace};

    fn diag21() -> RandomMatrix {
        RandomMatrix::from_row_major(2, 2, &[2.0, 0.0, 0.0, 1.0]).unwrap()
    }

    fn axes2() -> SubspaceFamily {
        SubspaceFamily::from_linear(vec![
            sparse_subspace(2, &[0]).unwrap(),
            sparse_subspace(2, &[1]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn diagonal_extremes() {
        let full = sparse_subspace(2, &[0, 1]).unwrap();
        let e = subspace_extremes(&diag21(), &full).unwrap();
        assert!((e.sigma_min - 1.0).abs() < 1e-12 && (e.sigma_max - 2.0).abs() < 1e-12);
    }

    #[test]
    fn identity_is_isometric() {
        let id = RandomMatrix::new(DMatrix::identity(6, 6)).unwrap();
        let fam = haar_family(6, 3, 4, 1).unwrap();
        for w in fam.directions() {
            let e = subspace_extremes(&id, w).unwrap();
            assert!((e.sigma_min - 1.0).abs() < 1e-12 && (e.sigma_max - 1.0).abs() < 1e-12);
        }
        let r = family_distortion(&id, &fam).unwrap();
        assert!((r.achieved_distortion - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_family_report() {
        let r = family_distortion(&diag21(), &axes2()).unwrap();
        assert_eq!(r.per_subspace[0], Extremes { sigma_min: 2.0, sigma_max: 2.0 });
        assert_eq!(r.per_subspace[1], Extremes { sigma_min: 1.0, sigma_max: 1.0 });
        assert_eq!(r.achieved_distortion, 2.0);
        let c = choose_scale(&r, 2.0).unwrap();
        assert!(c.feasible);
        assert_eq!(c.scale, Some(2.0));
    }

    #[test]
    fn dimension_mismatch() {
        let w = random_subspace(3, 1, 0).unwrap();
        assert!(matches!(subspace_extremes(&diag21(), &w), Err(Error::Dimension(_))));
    }

    #[test]
    fn too_few_rows_collapse() {
        let g = sample_matrix(&EnsembleSpec::Gaussian, 1, 5, 3).unwrap();
        let fam = SubspaceFamily::from_linear(vec![random_subspace(5, 2, 0).unwrap()]).unwrap();
        let r = family_distortion(&g, &fam).unwrap();
        assert_eq!(r.family_sigma_min, 0.0);
        assert!(r.rank_collapse());
        assert!(r.achieved_distortion.is_infinite());
        assert!(!choose_scale(&r, 1e9).unwrap().feasible);
    }

    fn report_with(min: f64, max: f64) -> DistortionReport {
        DistortionReport::from_extremes(vec![
            Extremes { sigma_min: min, sigma_max: min },
            Extremes { sigma_min: max, sigma_max: max },
        ])
        .unwrap()
    }

    #[test]
    fn scale_choices() {
        let c = choose_scale(&report_with(1.0, 2.0), 2.0).unwrap();
        assert!(c.feasible && c.scale == Some(2.0));
        let c = choose_scale(&report_with(0.5, 2.0), 4.0).unwrap();
        assert!(c.feasible && c.scale == Some(2.0));
        assert_eq!(c.scale.unwrap() / c.distortion, 0.5);
        let c = choose_scale(&report_with(1.0, 3.0), 2.0).unwrap();
        assert!(!c.feasible && c.scale.is_none());
        assert!(choose_scale(&report_with(1.0, 2.0), 0.5).is_err());
        assert!(choose_scale(&report_with(1.0, 2.0), f64::NAN).is_err());
    }

    #[test]
    fn scaling_covariance() {
        let g = sample_matrix(&EnsembleSpec::Gaussian, 10, 20, 8).unwrap();
        let fam = haar_family(20, 3, 6, 2).unwrap();
        let base = family_distortion(&g, &fam).unwrap();
        for c in [0.5, 2.0, 8.0] {
            let r = family_distortion(&g.scaled(c), &fam).unwrap();
            assert_eq!(r.achieved_distortion, base.achieved_distortion);
            let l0 = choose_scale(&base, 1e3).unwrap().scale.unwrap();
            let l1 = choose_scale(&r, 1e3).unwrap().scale.unwrap();
            assert_eq!(l1, c * l0);
        }
    }

    #[test]
    fn rotation_invariance() {
        let n = 12;
        let g = sample_matrix(&EnsembleSpec::SphereScaled, 7, n, 5).unwrap();
        let fam = haar_family(n, 2, 5, 6).unwrap();
        let q = orthonormalize(&sample_matrix(&EnsembleSpec::Gaussian, n, n, 77).unwrap().matrix().clone())
            .unwrap()
            .basis()
            .clone();
        let gq = RandomMatrix::new(g.matrix() * &q).unwrap();
        let qt = q.transpose();
        let rotated = SubspaceFamily::from_linear(
            fam.directions().map(|w| w.transformed(&qt).unwrap()).collect(),
        )
        .unwrap();
        let a = family_distortion(&g, &fam).unwrap();
        let b = family_distortion(&gq, &rotated).unwrap();
        for (x, y) in a.per_subspace.iter().zip(&b.per_subspace) {
            assert!((x.sigma_min - y.sigma_min).abs() < 1e-8);
            assert!((x.sigma_max - y.sigma_max).abs() < 1e-8);
        }
        assert!((a.achieved_distortion - b.achieved_distortion).abs() < 1e-8);
    }

    #[test]
    fn net_evaluation_brackets_sigma_min() {
        use crate::geometry::epsilon_net;
        let g = sample_matrix(&EnsembleSpec::Gaussian, 6, 10, 21).unwrap();
        let w = random_subspace(10, 3, 4).unwrap();
        let e = subspace_extremes(&g, &w).unwrap();
        let restricted = g.matrix() * w.basis();
        for eps in [0.25, 0.5, 1.0] {
            let net = epsilon_net(3, eps, 13).unwrap();
            let net_min = net
                .points
                .iter()
                .map(|c| (&restricted * c).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(net_min >= e.sigma_min - 1e-12);
            assert!(net_min <= e.sigma_min + eps * e.sigma_max + 1e-12);
        }
    }

    #[test]
    fn pointwise_check_passes_on_feasible_choice() {
        let g = sample_matrix(&EnsembleSpec::Gaussian, 20, 16, 3).unwrap();
        let fam = haar_family(16, 2, 4, 9).unwrap();
        let r = family_distortion(&g, &fam).unwrap();
        let c = choose_scale(&r, r.achieved_distortion).unwrap();
        assert!(c.feasible);
        let check = verify_pointwise(&g, &fam, &c, 10_000, 1).unwrap();
        assert_eq!(check.violations, 0);
        // a scale that is too small must be caught
        let bad = ScaleChoice {
            feasible: true,
            scale: Some(c.scale.unwrap() * 0.5),
            distortion: c.distortion,
        };
        assert!(verify_pointwise(&g, &fam, &bad, 1_000, 1).unwrap().violations > 0);
    }
}
