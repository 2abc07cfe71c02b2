//! Subspace and splitting primitives.
//!
//! Subspaces carry orthonormal bases. The gap metric between two subspaces
//! is the Hausdorff distance between their unit spheres,
//!
//! ```text
//! d(E,F) = max{ sup_{v∈E∩S} inf_{u∈F∩S} |v−u|,  sup_{v∈F∩S} inf_{u∈E∩S} |v−u| }
//! ```
//!
//! with the conventions d({0},{0}) = 0 and d({0},E) = 2 for E ≠ {0}. The
//! separation index between a subspace L and a set C is
//!
//! ```text
//! dist_(L,C) = inf_{v∈L∩S} inf_{u∈C} |v−u|,
//! ```
//!
//! which for a splitting X = V ⊕ L equals 1/‖π_L‖ (the oblique projection
//! norm). Everything here is Euclidean; the norm is a fixed global choice.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cone::ConeRankK;
use crate::error::{Error, Result};

pub type RealVector = DVector<f64>;

/// Relative singular-value threshold for numerical rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Knobs for grid-based sphere optimization.
#[derive(Debug, Clone)]
pub struct NumericsConfig {
    /// Number of grid points on each unit sphere.
    pub sphere_grid: usize,
    /// Local refinement iterations after the grid pass.
    pub refine_iters: usize,
    /// Margin below which a vector no longer counts as interior.
    pub interior_tol: f64,
    /// Seed for the multi-start grids used above three dimensions.
    pub grid_seed: u64,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            sphere_grid: 4096,
            refine_iters: 80,
            interior_tol: 1e-9,
            grid_seed: 0,
        }
    }
}

/// A d×d real matrix acting on the state space.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    matrix: DMatrix<f64>,
    injective: bool,
}

impl LinearMap {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols(), "linear map must be square");
        let svals = matrix.clone().singular_values();
        let smax = svals.max();
        let smin = svals.min();
        let injective = smax > 0.0 && smin > RANK_TOL * smax;
        LinearMap { matrix, injective }
    }

    pub fn identity(dim: usize) -> Self {
        LinearMap::new(DMatrix::identity(dim, dim))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let d = rows.len();
        let mut m = DMatrix::zeros(d, d);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), d, "linear map must be square");
            for (j, &x) in row.iter().enumerate() {
                m[(i, j)] = x;
            }
        }
        LinearMap::new(m)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_injective(&self) -> bool {
        self.injective
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, v: &RealVector) -> RealVector {
        &self.matrix * v
    }

    /// Largest singular value.
    pub fn operator_norm(&self) -> f64 {
        operator_norm(&self.matrix)
    }
}

/// Largest singular value of a (not necessarily square) matrix.
///
/// Entries are prescaled by the largest absolute value so that extreme
/// magnitudes do not overflow or underflow inside the SVD.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let scale = m.amax();
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let scaled = m / scale;
    scale * scaled.singular_values().max()
}

/// A k-dimensional linear subspace stored as an orthonormal basis (columns).
#[derive(Debug, Clone)]
pub struct Subspace {
    basis: DMatrix<f64>,
}

impl Subspace {
    /// Orthonormalizes `raw_basis` (d×k columns spanning the subspace).
    ///
    /// Fails with `RankDeficient` when the numerical rank of the columns is
    /// below k.
    pub fn new(raw_basis: DMatrix<f64>) -> Result<Self> {
        let k = raw_basis.ncols();
        if k == 0 {
            return Ok(Subspace { basis: raw_basis });
        }
        let svd = raw_basis.clone().svd(true, false);
        let smax = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > RANK_TOL * smax)
            .count();
        if rank < k {
            return Err(Error::RankDeficient { rank, expected: k });
        }
        let u = svd.u.expect("svd with u requested");
        Ok(Subspace {
            basis: u.columns(0, k).into_owned(),
        })
    }

    /// The trivial subspace {0} of R^d.
    pub fn trivial(ambient_dim: usize) -> Self {
        Subspace {
            basis: DMatrix::zeros(ambient_dim, 0),
        }
    }

    /// Span of the given vectors (columns collected into a matrix).
    pub fn span(vectors: &[RealVector]) -> Result<Self> {
        assert!(!vectors.is_empty(), "span needs at least one vector");
        let d = vectors[0].len();
        let mut m = DMatrix::zeros(d, vectors.len());
        for (j, v) in vectors.iter().enumerate() {
            m.set_column(j, v);
        }
        Subspace::new(m)
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn is_trivial(&self) -> bool {
        self.dim() == 0
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Orthogonal projection of `v` onto the subspace.
    pub fn project(&self, v: &RealVector) -> RealVector {
        if self.is_trivial() {
            return RealVector::zeros(self.ambient_dim());
        }
        &self.basis * (self.basis.transpose() * v)
    }

    /// Euclidean distance from `v` to the subspace.
    pub fn distance(&self, v: &RealVector) -> f64 {
        (v - self.project(v)).norm()
    }

    /// Image under a linear map, re-orthonormalized.
    pub fn map_through(&self, a: &DMatrix<f64>) -> Result<Self> {
        Subspace::new(a * &self.basis)
    }

    /// Orthogonal complement.
    pub fn orthogonal_complement(&self) -> Subspace {
        let d = self.ambient_dim();
        let k = self.dim();
        if k == 0 {
            return Subspace {
                basis: DMatrix::identity(d, d),
            };
        }
        if k == d {
            return Subspace::trivial(d);
        }
        // Full SVD of the basis: trailing left singular vectors span the complement.
        let svd = self.basis.clone().svd(true, false);
        let u = svd.u.expect("svd with u requested");
        // svd returns u with min(d,k) columns; build the complement by
        // projecting the identity and re-orthonormalizing instead.
        let proj = &u * u.transpose();
        let resid = DMatrix::identity(d, d) - proj;
        let svd2 = resid.svd(true, false);
        let u2 = svd2.u.expect("svd with u requested");
        Subspace {
            basis: u2.columns(0, d - k).into_owned(),
        }
    }

    /// Cosines of the principal angles with another subspace, sorted
    /// non-increasing (largest cosine = smallest angle first).
    pub fn principal_cosines(&self, other: &Subspace) -> Vec<f64> {
        if self.is_trivial() || other.is_trivial() {
            return Vec::new();
        }
        let m = self.basis.transpose() * &other.basis;
        let mut c: Vec<f64> = m
            .svd(false, false)
            .singular_values
            .iter()
            .map(|s| s.clamp(0.0, 1.0))
            .collect();
        c.sort_by(|a, b| b.partial_cmp(a).unwrap());
        c
    }
}

/// Orthonormalizes raw basis columns into a `Subspace`.
pub fn make_subspace(raw_basis: DMatrix<f64>) -> Result<Subspace> {
    Subspace::new(raw_basis)
}

/// Gap metric between two subspaces (Hausdorff distance between unit
/// spheres), with d({0},{0}) = 0 and d({0},E) = 2 for nontrivial E.
pub fn gap_distance(e: &Subspace, f: &Subspace) -> f64 {
    match (e.is_trivial(), f.is_trivial()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return 2.0,
        _ => {}
    }
    let part = |a: &Subspace, b: &Subspace| -> f64 {
        // sup over unit v in a of inf over unit u in b of |v-u|
        //   = sqrt(2 - 2 min_{v∈a∩S} |π_b v|).
        let min_cos = if a.dim() > b.dim() {
            0.0
        } else {
            let m = b.basis().transpose() * a.basis();
            m.svd(false, false).singular_values.min().clamp(0.0, 1.0)
        };
        (2.0 - 2.0 * min_cos).max(0.0).sqrt()
    };
    part(e, f).max(part(f, e))
}

/// Target of a separation-index query.
pub enum SeparationTarget<'a> {
    Subspace(&'a Subspace),
    Cone(&'a ConeRankK),
}

impl<'a> From<&'a Subspace> for SeparationTarget<'a> {
    fn from(s: &'a Subspace) -> Self {
        SeparationTarget::Subspace(s)
    }
}

impl<'a> From<&'a ConeRankK> for SeparationTarget<'a> {
    fn from(c: &'a ConeRankK) -> Self {
        SeparationTarget::Cone(c)
    }
}

/// Separation index inf_{v∈L∩S} inf_{u∈target} |v−u|.
///
/// Closed form (principal angles) for subspace targets; grid plus local
/// refinement for cone targets. The result lies in [0,1] since every target
/// contains 0.
pub fn separation_index(l: &Subspace, target: SeparationTarget<'_>, cfg: &NumericsConfig) -> Result<f64> {
    if l.is_trivial() {
        return Err(Error::EmptySubspace);
    }
    match target {
        SeparationTarget::Subspace(v) => {
            if v.is_trivial() {
                return Ok(1.0);
            }
            let m = v.basis().transpose() * l.basis();
            let smax = m.svd(false, false).singular_values.max().clamp(0.0, 1.0);
            Ok((1.0 - smax * smax).max(0.0).sqrt())
        }
        SeparationTarget::Cone(c) => {
            // dist(v, C) for unit v equals sqrt(1 - max_{w∈C∩S} <v,w>^2)
            // because C is a union of lines. Taking the inf over v∈L∩S:
            //   sep = sqrt(1 - max_{w∈C∩S} |π_L w|^2).
            let objective = |w: &RealVector| -> f64 {
                let p = l.project(w);
                p.norm_squared()
            };
            let best = c.maximize_over_section(&objective, cfg);
            Ok((1.0 - best).max(0.0).sqrt())
        }
    }
}

/// An ordered pair (E, F) of complementary subspaces with the associated
/// oblique projections: range(proj_e) = E, kernel(proj_e) = F.
#[derive(Debug, Clone)]
pub struct Splitting {
    e: Subspace,
    f: Subspace,
    proj_e: DMatrix<f64>,
    proj_f: DMatrix<f64>,
}

impl Splitting {
    pub fn e(&self) -> &Subspace {
        &self.e
    }

    pub fn f(&self) -> &Subspace {
        &self.f
    }

    pub fn proj_e(&self) -> &DMatrix<f64> {
        &self.proj_e
    }

    pub fn proj_f(&self) -> &DMatrix<f64> {
        &self.proj_f
    }

    pub fn ambient_dim(&self) -> usize {
        self.e.ambient_dim()
    }

    pub fn project_e(&self, v: &RealVector) -> RealVector {
        &self.proj_e * v
    }

    pub fn project_f(&self, v: &RealVector) -> RealVector {
        &self.proj_f * v
    }

    /// Smallest principal sine between E and F; equals 1/max(‖π_E‖,‖π_F‖).
    pub fn min_principal_sine(&self) -> f64 {
        if self.e.is_trivial() || self.f.is_trivial() {
            return 1.0;
        }
        let m = self.e.basis().transpose() * self.f.basis();
        let smax = m.svd(false, false).singular_values.max().clamp(0.0, 1.0);
        (1.0 - smax * smax).max(0.0).sqrt()
    }
}

/// Builds the splitting E ⊕ F = X with its oblique projections.
///
/// Fails with `NotComplementary` when dim E + dim F ≠ d or the concatenated
/// basis is numerically rank deficient.
pub fn make_splitting(e: &Subspace, f: &Subspace) -> Result<Splitting> {
    let d = e.ambient_dim();
    if f.ambient_dim() != d {
        return Err(Error::NotComplementary(format!(
            "ambient dimensions differ: {} vs {}",
            d,
            f.ambient_dim()
        )));
    }
    let k = e.dim();
    let m = f.dim();
    if k + m != d {
        return Err(Error::NotComplementary(format!(
            "dim E + dim F = {} + {} != {}",
            k, m, d
        )));
    }
    if k == 0 || m == 0 {
        let id = DMatrix::identity(d, d);
        let z = DMatrix::zeros(d, d);
        let (pe, pf) = if k == 0 { (z, id) } else { (id, z) };
        return Ok(Splitting {
            e: e.clone(),
            f: f.clone(),
            proj_e: pe,
            proj_f: pf,
        });
    }
    let mut concat = DMatrix::zeros(d, d);
    concat.columns_mut(0, k).copy_from(e.basis());
    concat.columns_mut(k, m).copy_from(f.basis());
    let svals = concat.clone().singular_values();
    let smax = svals.max();
    if svals.min() <= RANK_TOL * smax {
        return Err(Error::NotComplementary(format!(
            "concatenated basis is rank deficient (sigma_min {:.3e})",
            svals.min()
        )));
    }
    let inv = concat
        .try_inverse()
        .ok_or_else(|| Error::NotComplementary("basis matrix not invertible".into()))?;
    let proj_e = e.basis() * inv.rows(0, k);
    let proj_f = DMatrix::identity(d, d) - &proj_e;
    Ok(Splitting {
        e: e.clone(),
        f: f.clone(),
        proj_e,
        proj_f,
    })
}

/// Roughly `n` well-spread points on the unit sphere of R^k.
///
/// Exact antipodal pair for k = 1, uniform circle for k = 2, Fibonacci
/// lattice for k = 3, seeded Gaussian multi-start above that.
pub fn unit_sphere_grid(k: usize, n: usize, seed: u64) -> Vec<RealVector> {
    assert!(k >= 1, "sphere grid needs ambient dimension >= 1");
    match k {
        1 => vec![
            RealVector::from_vec(vec![1.0]),
            RealVector::from_vec(vec![-1.0]),
        ],
        2 => {
            let n = n.max(4);
            (0..n)
                .map(|i| {
                    let t = 2.0 * std::f64::consts::PI * (i as f64) / (n as f64);
                    RealVector::from_vec(vec![t.cos(), t.sin()])
                })
                .collect()
        }
        3 => {
            let n = n.max(8);
            let golden = (1.0 + 5.0_f64.sqrt()) / 2.0;
            (0..n)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / (n as f64);
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let phi = 2.0 * std::f64::consts::PI * (i as f64) / golden;
                    RealVector::from_vec(vec![r * phi.cos(), r * phi.sin(), z])
                })
                .collect()
        }
        _ => {
            let n = n.max(16);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0000 ^ (k as u64));
            (0..n).map(|_| random_unit_vector(k, &mut rng)).collect()
        }
    }
}

/// Standard-normal draw via Box-Muller.
pub fn sample_gaussian<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        if u1 > f64::MIN_POSITIVE {
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}

/// Uniform point on the unit sphere of R^k.
pub fn random_unit_vector<R: Rng>(k: usize, rng: &mut R) -> RealVector {
    loop {
        let v = RealVector::from_fn(k, |_, _| sample_gaussian(rng));
        let n = v.norm();
        if n > 1e-8 {
            return v / n;
        }
    }
}

/// Local pattern-search maximization of `f` over the unit sphere of R^k,
/// starting from `start` (assumed unit). Deterministic.
pub fn refine_on_sphere<F: Fn(&RealVector) -> f64>(
    f: &F,
    start: &RealVector,
    iters: usize,
) -> (RealVector, f64) {
    let k = start.len();
    let mut best = start.clone();
    let mut best_val = f(&best);
    let mut step = 0.25_f64;
    for _ in 0..iters {
        let mut improved = false;
        for axis in 0..k {
            for dir in [1.0, -1.0] {
                let mut cand = best.clone();
                cand[axis] += dir * step;
                let n = cand.norm();
                if n <= 1e-12 {
                    continue;
                }
                cand /= n;
                let val = f(&cand);
                if val > best_val {
                    best_val = val;
                    best = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
            if step < 1e-13 {
                break;
            }
        }
    }
    (best, best_val)
}
