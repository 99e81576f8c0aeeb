//! Subspaces, affine families, Grassmann separation and ε-nets.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};

use crate::seed;
use crate::{Error, Result};

/// Columns whose singular value falls below this fraction of the largest are
/// treated as numerically dependent.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Orthonormality tolerance on `BᵀB − I`.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-10;

/// Largest `(3/ε)^k` [`epsilon_net`] agrees to build.
pub const NET_BUDGET: f64 = 1e6;

/// Largest number of pairwise spans [`cross_family`] agrees to build.
pub const CROSS_BUDGET: usize = 1 << 20;

/// Default number of sampling probes used to certify a net's covering radius.
pub const NET_PROBES: usize = 100_000;

/// A linear subspace of `ℝⁿ` stored as an `n × k` orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: DMatrix<f64>,
}

impl Subspace {
    /// Wraps a basis that is already orthonormal.
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Result<Self> {
        let (n, k) = basis.shape();
        if k == 0 || k > n {
            return Err(Error::Dimension(format!("basis shape {n}×{k} needs 1 ≤ k ≤ n")));
        }
        let gram = basis.transpose() * &basis;
        let dev = (gram - DMatrix::<f64>::identity(k, k)).amax();
        if dev > ORTHONORMAL_TOLERANCE {
            return Err(Error::Input(format!(
                "basis columns are not orthonormal (deviation {dev:e})"
            )));
        }
        Ok(Subspace { basis })
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Orthogonal projector `B Bᵀ`.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// Point `B c` for coefficient vector `c`.
    pub fn embed(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        &self.basis * coeffs
    }

    /// Image under a linear map with `n` columns, as an orthonormal basis of
    /// the rotated subspace `Qᵀ W` when `q` is orthogonal.
    pub fn transformed(&self, q: &DMatrix<f64>) -> Result<Subspace> {
        if q.ncols() != self.ambient_dim() {
            return Err(Error::Dimension(format!(
                "map has {} columns, subspace lives in ℝ^{}",
                q.ncols(),
                self.ambient_dim()
            )));
        }
        orthonormalize(&(q * &self.basis))
    }
}

/// A translate `base + W` of a linear subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSubspace {
    pub base_point: DVector<f64>,
    pub direction: Subspace,
}

impl AffineSubspace {
    pub fn new(base_point: DVector<f64>, direction: Subspace) -> Result<Self> {
        if base_point.len() != direction.ambient_dim() {
            return Err(Error::Dimension(format!(
                "base point has length {}, direction lives in ℝ^{}",
                base_point.len(),
                direction.ambient_dim()
            )));
        }
        Ok(AffineSubspace {
            base_point,
            direction,
        })
    }

    pub fn linear(direction: Subspace) -> Self {
        AffineSubspace {
            base_point: DVector::zeros(direction.ambient_dim()),
            direction,
        }
    }

    pub fn is_linear(&self) -> bool {
        self.base_point.iter().all(|&x| x == 0.0)
    }

    pub fn point(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        &self.base_point + self.direction.embed(coeffs)
    }
}

/// `p ≥ 1` affine subspaces sharing one ambient dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceFamily {
    ambient_dim: usize,
    members: Vec<AffineSubspace>,
}

impl SubspaceFamily {
    pub fn new(members: Vec<AffineSubspace>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::Input("a family needs at least one member".into()))?;
        let n = first.direction.ambient_dim();
        if let Some((i, m)) = members
            .iter()
            .enumerate()
            .find(|(_, m)| m.direction.ambient_dim() != n)
        {
            return Err(Error::Dimension(format!(
                "member {i} lives in ℝ^{}, expected ℝ^{n}",
                m.direction.ambient_dim()
            )));
        }
        Ok(SubspaceFamily {
            ambient_dim: n,
            members,
        })
    }

    pub fn from_linear(subspaces: Vec<Subspace>) -> Result<Self> {
        Self::new(subspaces.into_iter().map(AffineSubspace::linear).collect())
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[AffineSubspace] {
        &self.members
    }

    pub fn directions(&self) -> impl Iterator<Item = &Subspace> {
        self.members.iter().map(|m| &m.direction)
    }

    /// Largest member dimension.
    pub fn max_dim(&self) -> usize {
        self.directions().map(Subspace::dim).max().unwrap_or(0)
    }

    pub fn is_linear(&self) -> bool {
        self.members.iter().all(AffineSubspace::is_linear)
    }
}

/// Orthonormal basis of the numerical column span of `spanning`.
pub fn orthonormalize(spanning: &DMatrix<f64>) -> Result<Subspace> {
    let (n, j) = spanning.shape();
    if n == 0 || j == 0 {
        return Err(Error::Degenerate("empty spanning set".into()));
    }
    if spanning.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input("spanning set has non-finite entries".into()));
    }
    if !spanning.column_iter().any(|c| c.norm() > 1e-12) {
        return Err(Error::Degenerate("all spanning vectors are zero".into()));
    }
    let svd = spanning.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let sigma_max = svd.singular_values.max();
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > RANK_TOLERANCE * sigma_max)
        .map(|(i, _)| i)
        .collect();
    let basis = u.select_columns(keep.iter());
    Ok(Subspace { basis })
}

fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seed::rng(seed);
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

/// Haar-distributed `k`-dimensional subspace of `ℝⁿ`.
pub fn random_subspace(n: usize, k: usize, seed: u64) -> Result<Subspace> {
    if k == 0 || k > n {
        return Err(Error::Dimension(format!("need 1 ≤ k ≤ n, got k={k}, n={n}")));
    }
    let mut draw_seed = seed;
    for attempt in 1.. {
        // a Gaussian n×k matrix is rank-deficient with probability zero
        let s = orthonormalize(&gaussian_matrix(n, k, draw_seed))?;
        if s.dim() == k {
            return Ok(s);
        }
        draw_seed = seed::derive(seed, attempt);
    }
    unreachable!()
}

/// `span{e_i : i ∈ support}`.
pub fn sparse_subspace(n: usize, support: &[usize]) -> Result<Subspace> {
    if support.is_empty() {
        return Err(Error::Input("support must be non-empty".into()));
    }
    let mut seen = HashSet::with_capacity(support.len());
    for &i in support {
        if i >= n {
            return Err(Error::Input(format!("index {i} outside [0, {n})")));
        }
        if !seen.insert(i) {
            return Err(Error::Input(format!("duplicate index {i} in support")));
        }
    }
    let mut basis = DMatrix::zeros(n, support.len());
    for (col, &i) in support.iter().enumerate() {
        basis[(i, col)] = 1.0;
    }
    Ok(Subspace { basis })
}

/// `ρ(V, W) = max_{v ∈ V, ‖v‖=1} dist(v, W ∩ S^{n−1})`.
///
/// Asymmetric when the dimensions differ: the maximum runs over the first
/// argument. Equals `√(2 − 2σ)` where `σ` is the smallest of the `dim V`
/// cosines of principal angles between `V` and `W` (zero-padded when
/// `dim W < dim V`).
pub fn grassmann_distance(v: &Subspace, w: &Subspace) -> Result<f64> {
    if v.ambient_dim() != w.ambient_dim() {
        return Err(Error::Dimension(format!(
            "ambient dimensions differ: {} vs {}",
            v.ambient_dim(),
            w.ambient_dim()
        )));
    }
    let cross = w.basis.transpose() * &v.basis;
    let sigma_min = if w.dim() < v.dim() {
        0.0
    } else {
        cross.singular_values().min().min(1.0)
    };
    Ok((2.0 - 2.0 * sigma_min).max(0.0).sqrt())
}

/// Finite subset of `S^{k−1}` within `epsilon` of every point of the sphere.
#[derive(Debug, Clone)]
pub struct EpsilonNet {
    pub epsilon: f64,
    pub dim: usize,
    pub points: Vec<DVector<f64>>,
}

impl EpsilonNet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `(3/ε)^k`.
    pub fn cardinality_bound(&self) -> f64 {
        (3.0 / self.epsilon).powi(self.dim as i32)
    }

    /// Distance from `x` to the closest net point.
    pub fn nearest_distance(&self, x: &DVector<f64>) -> f64 {
        nearest_sq(&self.points, x).sqrt()
    }
}

fn nearest_sq(points: &[DVector<f64>], x: &DVector<f64>) -> f64 {
    points
        .iter()
        .map(|p| (p - x).norm_squared())
        .fold(f64::INFINITY, f64::min)
}

fn unit_draw<R: rand::Rng>(k: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let g: DVector<f64> = DVector::from_fn(k, |_, _| StandardNormal.sample(rng));
        let norm = g.norm();
        if norm > 1e-12 {
            return g / norm;
        }
    }
}

/// Randomized maximal ε-separated set on `S^{k−1}`, then certified by probing.
pub fn epsilon_net(k: usize, epsilon: f64, seed: u64) -> Result<EpsilonNet> {
    epsilon_net_with_probes(k, epsilon, seed, NET_PROBES)
}

/// [`epsilon_net`] with an explicit probe count for the covering check.
///
/// Points are kept pairwise more than `epsilon` apart, which bounds the size
/// by `(1 + 2/ε)^k ≤ (3/ε)^k`. Any probe left uncovered is itself added, so
/// separation is preserved; the check is repeated with fresh probes until a
/// round finds no gap or the re-seed budget runs out.
pub fn epsilon_net_with_probes(
    k: usize,
    epsilon: f64,
    seed: u64,
    probes: usize,
) -> Result<EpsilonNet> {
    if k == 0 {
        return Err(Error::Input("net dimension must be at least 1".into()));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Input(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    let bound = (3.0 / epsilon).powi(k as i32);
    if !(bound <= NET_BUDGET) {
        return Err(Error::Resource(format!(
            "net bound (3/ε)^k = {bound:.3e} exceeds budget {NET_BUDGET:e}"
        )));
    }
    let eps_sq = epsilon * epsilon;
    let mut rng = seed::rng(seed);
    let mut points: Vec<DVector<f64>> = Vec::new();

    let mut rejected_run = 0usize;
    while rejected_run < 200 + 20 * points.len() {
        let x = unit_draw(k, &mut rng);
        if nearest_sq(&points, &x) > eps_sq {
            points.push(x);
            rejected_run = 0;
        } else {
            rejected_run += 1;
        }
    }

    const ROUNDS: u64 = 4;
    for round in 0..ROUNDS {
        let mut probe_rng = seed::rng(seed::derive(seed, round));
        let mut gaps = 0usize;
        for _ in 0..probes {
            let x = unit_draw(k, &mut probe_rng);
            if nearest_sq(&points, &x) > eps_sq {
                points.push(x);
                gaps += 1;
            }
        }
        if gaps == 0 {
            return Ok(EpsilonNet {
                epsilon,
                dim: k,
                points,
            });
        }
    }
    Err(Error::Resource(format!(
        "could not certify an {epsilon}-net on S^{} after {ROUNDS} probe rounds",
        k - 1
    )))
}

/// Replaces each member by its direction space.
pub fn reduce_affine(family: &SubspaceFamily) -> SubspaceFamily {
    SubspaceFamily {
        ambient_dim: family.ambient_dim,
        members: family
            .members
            .iter()
            .map(|m| AffineSubspace::linear(m.direction.clone()))
            .collect(),
    }
}

/// All pairwise spans `V_{l,l'} = span(W_l ∪ W_{l'})` for `l ≤ l'`.
///
/// Certifying the output controls distances between points of different
/// members as well.
pub fn cross_family(family: &SubspaceFamily) -> Result<SubspaceFamily> {
    let p = family.len();
    let count = p * (p + 1) / 2;
    if count > CROSS_BUDGET {
        return Err(Error::Resource(format!(
            "{count} pairwise spans exceed budget {CROSS_BUDGET}"
        )));
    }
    let dirs: Vec<&Subspace> = family.directions().collect();
    let mut out = Vec::with_capacity(count);
    for l in 0..p {
        out.push(dirs[l].clone());
        for r in (l + 1)..p {
            let (a, b) = (dirs[l].basis(), dirs[r].basis());
            let mut joined = DMatrix::zeros(family.ambient_dim, a.ncols() + b.ncols());
            joined.columns_mut(0, a.ncols()).copy_from(a);
            joined.columns_mut(a.ncols(), b.ncols()).copy_from(b);
            out.push(orthonormalize(&joined)?);
        }
    }
    SubspaceFamily::from_linear(out)
}

/// `C(n, k)`, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// `p` distinct coordinate subspaces `span{e_{i₁},…,e_{i_k}}`.
///
/// Supports are drawn sequentially from one seeded stream, so the family for
/// `p` is a prefix of the family for any larger `p` with the same seed.
pub fn k_sparse_family(n: usize, k: usize, p: usize, seed: u64) -> Result<SubspaceFamily> {
    if k == 0 || k > n {
        return Err(Error::Dimension(format!("need 1 ≤ k ≤ n, got k={k}, n={n}")));
    }
    if p == 0 {
        return Err(Error::Input("family size p must be at least 1".into()));
    }
    let available = binomial(n, k);
    if (p as u128) > available {
        return Err(Error::Input(format!(
            "only C({n},{k}) = {available} distinct {k}-sparse subspaces exist, requested {p}"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut seen: HashSet<Vec<usize>> = HashSet::with_capacity(p);
    let mut members = Vec::with_capacity(p);
    while members.len() < p {
        let mut support = index::sample(&mut rng, n, k).into_vec();
        support.sort_unstable();
        if seen.insert(support.clone()) {
            members.push(sparse_subspace(n, &support)?);
        }
    }
    SubspaceFamily::from_linear(members)
}

/// `p` independent Haar-random `k`-dimensional subspaces.
pub fn haar_family(n: usize, k: usize, p: usize, seed: u64) -> Result<SubspaceFamily> {
    if p == 0 {
        return Err(Error::Input("family size p must be at least 1".into()));
    }
    let members = (0..p)
        .map(|l| random_subspace(n, k, seed::derive(seed, l as u64)))
        .collect::<Result<Vec<_>>>()?;
    SubspaceFamily::from_linear(members)
}

/// Smallest pairwise `ρ(W_i, W_j)` over `i ≠ j`, with the pair realizing it.
pub fn min_separation(family: &SubspaceFamily) -> Result<Option<(f64, usize, usize)>> {
    let dirs: Vec<&Subspace> = family.directions().collect();
    let mut best: Option<(f64, usize, usize)> = None;
    for i in 0..dirs.len() {
        for j in 0..dirs.len() {
            if i == j {
                continue;
            }
            let d = grassmann_distance(dirs[i], dirs[j])?;
            if best.is_none_or(|(b, _, _)| d < b) {
                best = Some((d, i, j));
            }
        }
    }
    Ok(best)
}
