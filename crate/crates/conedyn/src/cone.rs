//! Cones of rank k and their contraction diagnostics.
//!
//! A rank-k cone is stored in splitting-norm form
//!
//! ```text
//! C = { v : ‖π_F v‖ ≤ l ‖π_E v‖ }
//! ```
//!
//! for a splitting X = E ⊕ F with dim E = k and an opening l > 0, or as the
//! unit sublevel set of a ζ index (a weighted series of F-to-E component
//! ratios along a forward orbit, see the splitting builder).
//!
//! The angle machinery follows the classical construction for cones of
//! higher rank: for u, v in the interior,
//!
//! ```text
//! α₀(u,v) = inf{ α ≥ 0 : βv − u ∈ int C for all β ≥ α },
//! α(u,v)  = α₀(u,v) · α₀(v,u),
//! ```
//!
//! extended to subspace pairs by taking suprema. The focusing number of a
//! map A between cones is the supremum of image angles; its strong variant
//! is the reciprocal separation of the image cone from the complement of
//! the target. Both feed Birkhoff-type contraction coefficients through the
//! polynomial p(x) = 4(x⁴ + 6x³ + 7x² + 6x + 2); the analytic coefficient is
//! τ_S = (p(χ_S) − 1)/(p(χ_S) + 1).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    make_splitting, random_unit_vector, refine_on_sphere, unit_sphere_grid, LinearMap,
    NumericsConfig, RealVector, Splitting, Subspace,
};
use crate::scaled::ScaledMatrix;

/// Openings outside this range are rejected.
pub const OPENING_RANGE: (f64, f64) = (1e-6, 1e6);

/// Vectors shorter than this (relative to context scale) count as zero.
pub const ZERO_TOL: f64 = 1e-12;

/// p(x) = 4(x⁴ + 6x³ + 7x² + 6x + 2), the focusing-to-angle polynomial.
pub fn focusing_polynomial(x: f64) -> f64 {
    4.0 * (x.powi(4) + 6.0 * x.powi(3) + 7.0 * x.powi(2) + 6.0 * x + 2.0)
}

/// τ_S = (p(χ) − 1)/(p(χ) + 1).
pub fn tau_s_from_chi(chi: f64) -> f64 {
    let p = focusing_polynomial(chi);
    (p - 1.0) / (p + 1.0)
}

/// Precomputed restricted products backing a ζ index at one orbit step.
///
/// Term n of the series is |Tⁿ v^F| / |Tⁿ v^E| · exp(nδ/2); the restricted
/// actions are stored as coordinate matrices with separated log scales so
/// that long windows do not overflow.
#[derive(Debug, Clone)]
pub struct ZetaSeries {
    delta: f64,
    e_terms: Vec<ScaledMatrix>,
    f_terms: Vec<ScaledMatrix>,
    k_bound: f64,
    /// For one-dimensional E and F the series is direction independent:
    /// ζ(v) = (‖v_F‖/‖v_E‖) · scalar.
    scalar: Option<f64>,
}

impl ZetaSeries {
    /// `e_terms[n]`, `f_terms[n]` must represent Tⁿ restricted to E and F in
    /// orthonormal coordinates, n = 0..=N. `k_bound` is the constant of the
    /// uniform-separation bound used for the tail certificate.
    pub fn new(
        delta: f64,
        e_terms: Vec<ScaledMatrix>,
        f_terms: Vec<ScaledMatrix>,
        k_bound: f64,
    ) -> Self {
        assert!(delta > 0.0, "zeta series needs a positive separation rate");
        assert_eq!(e_terms.len(), f_terms.len());
        assert!(!e_terms.is_empty());
        let mut series = ZetaSeries {
            delta,
            e_terms,
            f_terms,
            k_bound: k_bound.max(1.0),
            scalar: None,
        };
        if series.e_terms[0].ncols() == 1 && series.f_terms[0].ncols() == 1 {
            let one = DVector::from_vec(vec![1.0]);
            series.scalar = Some(series.ratio_series_general(&one, &one));
        }
        series
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn truncation(&self) -> usize {
        self.e_terms.len() - 1
    }

    /// Σ_{n≤N} |Tⁿ cf| / |Tⁿ ce| · exp(nδ/2) for coordinate vectors.
    pub fn ratio_series(&self, ce: &DVector<f64>, cf: &DVector<f64>) -> f64 {
        match self.scalar {
            Some(s) => s * cf.norm() / ce.norm(),
            None => self.ratio_series_general(ce, cf),
        }
    }

    fn ratio_series_general(&self, ce: &DVector<f64>, cf: &DVector<f64>) -> f64 {
        let mut sum = 0.0;
        for n in 0..self.e_terms.len() {
            let log_num = self.f_terms[n].apply_log_norm(cf);
            let log_den = self.e_terms[n].apply_log_norm(ce);
            sum += (log_num - log_den + 0.5 * (n as f64) * self.delta).exp();
        }
        sum
    }

    /// Certified geometric tail bound for the truncated series.
    pub fn tail_bound(&self, ce: &DVector<f64>, cf: &DVector<f64>) -> f64 {
        let n = self.truncation() as f64 + 1.0;
        let q = (-0.5 * self.delta).exp();
        self.k_bound * q.powf(n) / (1.0 - q) * (cf.norm() / ce.norm())
    }
}

/// Representation of the cone membership test.
#[derive(Debug, Clone)]
pub enum ConeKind {
    /// ‖π_F v‖ ≤ l ‖π_E v‖.
    SplittingNorm,
    /// ζ(v) ≤ 1 with the opening kept as a fitted splitting-norm summary.
    ZetaWeighted(ZetaSeries),
}

/// Solid cone of rank k over a splitting E ⊕ F.
#[derive(Debug, Clone)]
pub struct ConeRankK {
    splitting: Splitting,
    opening: f64,
    kind: ConeKind,
    planar_arc_cache: std::sync::OnceLock<Option<(f64, f64)>>,
}

impl ConeRankK {
    pub fn splitting_norm(splitting: Splitting, opening: f64) -> Result<Self> {
        if !(opening.is_finite() && opening >= OPENING_RANGE.0 && opening <= OPENING_RANGE.1) {
            return Err(Error::InvalidArgument(format!(
                "cone opening {opening} outside [{}, {}]",
                OPENING_RANGE.0, OPENING_RANGE.1
            )));
        }
        if splitting.e().is_trivial() || splitting.f().is_trivial() {
            return Err(Error::InvalidArgument(
                "cone needs a nontrivial splitting".into(),
            ));
        }
        Ok(ConeRankK {
            splitting,
            opening,
            kind: ConeKind::SplittingNorm,
            planar_arc_cache: std::sync::OnceLock::new(),
        })
    }

    /// Planar sector {|y| ≤ l |x|} in R², a convenient standard cone.
    pub fn planar_standard(opening: f64) -> Result<Self> {
        let e = Subspace::span(&[RealVector::from_vec(vec![1.0, 0.0])])?;
        let f = Subspace::span(&[RealVector::from_vec(vec![0.0, 1.0])])?;
        ConeRankK::splitting_norm(make_splitting(&e, &f)?, opening)
    }

    pub fn zeta_weighted(splitting: Splitting, fitted_opening: f64, series: ZetaSeries) -> Self {
        ConeRankK {
            splitting,
            opening: fitted_opening,
            kind: ConeKind::ZetaWeighted(series),
            planar_arc_cache: std::sync::OnceLock::new(),
        }
    }

    pub fn splitting(&self) -> &Splitting {
        &self.splitting
    }

    /// Rank k = dim E.
    pub fn rank(&self) -> usize {
        self.splitting.e().dim()
    }

    pub fn ambient_dim(&self) -> usize {
        self.splitting.ambient_dim()
    }

    pub fn opening(&self) -> f64 {
        self.opening
    }

    pub fn kind(&self) -> &ConeKind {
        &self.kind
    }

    pub fn is_zeta(&self) -> bool {
        matches!(self.kind, ConeKind::ZetaWeighted(_))
    }

    /// ζ value for ζ-weighted cones (∞ on F, 0 on E).
    pub fn zeta_value(&self, v: &RealVector) -> Option<f64> {
        match &self.kind {
            ConeKind::SplittingNorm => None,
            ConeKind::ZetaWeighted(series) => {
                let pe = self.splitting.project_e(v);
                let pf = self.splitting.project_f(v);
                let scale = v.norm();
                if pf.norm() <= ZERO_TOL * scale {
                    return Some(0.0);
                }
                if pe.norm() <= ZERO_TOL * scale {
                    return Some(f64::INFINITY);
                }
                let ce = self.splitting.e().basis().transpose() * &pe;
                let cf = self.splitting.f().basis().transpose() * &pf;
                Some(series.ratio_series(&ce, &cf))
            }
        }
    }

    /// Signed membership margin, positive in the interior, zero on the
    /// boundary, scale invariant.
    ///
    /// Splitting-norm cones use (l‖π_E v‖ − ‖π_F v‖)/|v|; ζ cones use
    /// (1 − ζ)/(1 + ζ).
    pub fn margin(&self, v: &RealVector) -> Result<f64> {
        let scale = v.norm();
        if scale <= ZERO_TOL {
            return Err(Error::ZeroVector);
        }
        match &self.kind {
            ConeKind::SplittingNorm => {
                let pe = self.splitting.project_e(v);
                let pf = self.splitting.project_f(v);
                Ok((self.opening * pe.norm() - pf.norm()) / scale)
            }
            ConeKind::ZetaWeighted(_) => {
                let z = self.zeta_value(v).expect("zeta cone");
                if z.is_infinite() {
                    Ok(-1.0)
                } else {
                    Ok((1.0 - z) / (1.0 + z))
                }
            }
        }
    }

    pub fn contains(&self, v: &RealVector) -> bool {
        matches!(self.margin(v), Ok(m) if m >= 0.0)
    }

    /// Largest admissible ‖F-part‖/‖E-part‖ along the direction pair.
    fn ratio_cap(&self, ce: &DVector<f64>, cf: &DVector<f64>) -> f64 {
        match &self.kind {
            ConeKind::SplittingNorm => self.opening,
            ConeKind::ZetaWeighted(series) => {
                let s = series.ratio_series(ce, cf);
                if s <= 0.0 {
                    OPENING_RANGE.1
                } else {
                    (1.0 / s).clamp(OPENING_RANGE.0 * 1e-3, OPENING_RANGE.1)
                }
            }
        }
    }

    fn assemble(&self, ce: &DVector<f64>, cf: &DVector<f64>, ratio: f64) -> RealVector {
        let v = self.splitting.e().basis() * ce + self.splitting.f().basis() * (cf * ratio);
        let n = v.norm();
        v / n
    }

    /// Deterministic unit-vector samples of the cone section C ∩ S.
    ///
    /// `boundary_fraction` of the samples sit on ∂C; the rest fill the
    /// interior at graded depths.
    pub fn section_samples(&self, count: usize, boundary_fraction: f64, seed: u64) -> Vec<RealVector> {
        let k = self.rank();
        let m = self.splitting.f().dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0de);
        let mut out = Vec::with_capacity(count);
        let n_boundary = ((count as f64) * boundary_fraction) as usize;
        for i in 0..count {
            let ce = random_unit_vector(k, &mut rng);
            let cf = random_unit_vector(m, &mut rng);
            let cap = self.ratio_cap(&ce, &cf);
            let t = if i < n_boundary {
                1.0
            } else {
                rng.random::<f64>()
            };
            out.push(self.assemble(&ce, &cf, cap * t));
        }
        out
    }

    /// Evenly spread boundary directions of the cone section.
    pub fn boundary_grid(&self, count: usize, seed: u64) -> Vec<RealVector> {
        let k = self.rank();
        let m = self.splitting.f().dim();
        let ge = unit_sphere_grid(k, (count as f64).sqrt().ceil() as usize, seed);
        let gf = unit_sphere_grid(m, (count as f64).sqrt().ceil() as usize, seed ^ 1);
        let mut out = Vec::new();
        for ce in &ge {
            for cf in &gf {
                let cap = self.ratio_cap(ce, cf);
                out.push(self.assemble(ce, cf, cap));
                if out.len() >= count {
                    return out;
                }
            }
        }
        out
    }

    /// Retracts an arbitrary nonzero vector onto the cone (scaling the
    /// F-part down to the boundary when outside), then normalizes.
    pub fn retract(&self, v: &RealVector) -> Option<RealVector> {
        let pe = self.splitting.project_e(v);
        let pf = self.splitting.project_f(v);
        if pe.norm() <= ZERO_TOL * v.norm() {
            return None;
        }
        if self.contains(v) {
            return Some(v / v.norm());
        }
        let ce = self.splitting.e().basis().transpose() * &pe;
        let cf = self.splitting.f().basis().transpose() * &pf;
        let cap = self.ratio_cap(&(ce.clone() / ce.norm()), &(cf.clone() / cf.norm()));
        let scale = cap * pe.norm() / pf.norm();
        let w = &pe + pf * scale;
        Some(&w / w.norm())
    }

    /// Maximizes `f` over the cone section C ∩ S by grid plus refinement.
    pub fn maximize_over_section<F: Fn(&RealVector) -> f64>(
        &self,
        f: &F,
        cfg: &NumericsConfig,
    ) -> f64 {
        let grid_n = (cfg.sphere_grid / 8).max(64);
        let mut best = f64::NEG_INFINITY;
        let mut best_v: Option<RealVector> = None;
        let mut consider = |v: RealVector| {
            let val = f(&v);
            if val > best {
                best = val;
                best_v = Some(v);
            }
        };
        for v in self.boundary_grid(grid_n, cfg.grid_seed) {
            consider(v);
        }
        // Interior coverage: E-sphere itself plus graded depths.
        let k = self.rank();
        let ge = unit_sphere_grid(k, grid_n.min(256), cfg.grid_seed ^ 2);
        for ce in &ge {
            consider(self.assemble(ce, &DVector::zeros(self.splitting.f().dim()), 0.0));
        }
        for v in self.section_samples(grid_n / 2, 0.3, cfg.grid_seed ^ 3) {
            consider(v);
        }
        if let Some(start) = best_v {
            let wrapped = |v: &RealVector| match self.retract(v) {
                Some(w) => f(&w),
                None => f64::NEG_INFINITY,
            };
            let (_, val) = refine_on_sphere(&wrapped, &start, cfg.refine_iters);
            best = best.max(val);
        }
        best
    }

    /// Retraction onto the closure of the complement X∖C.
    pub fn retract_complement(&self, v: &RealVector) -> Option<RealVector> {
        let pe = self.splitting.project_e(v);
        let pf = self.splitting.project_f(v);
        if pf.norm() <= ZERO_TOL * v.norm() {
            return None;
        }
        if matches!(self.margin(v), Ok(m) if m <= 0.0) {
            return Some(v / v.norm());
        }
        let ce = self.splitting.e().basis().transpose() * &pe;
        let cf = self.splitting.f().basis().transpose() * &pf;
        let cap = self.ratio_cap(&(ce.clone() / ce.norm()), &(cf.clone() / cf.norm()));
        // Shrink the E-part so that ‖π_F w‖ = cap · ‖π_E w‖ exactly.
        let shrink = pf.norm() / (cap * pe.norm());
        let w = pe * shrink.min(1.0) + &pf;
        Some(&w / w.norm())
    }

    /// Maximizes `f` over the section of the complement closure.
    pub fn maximize_over_complement<F: Fn(&RealVector) -> f64>(
        &self,
        f: &F,
        cfg: &NumericsConfig,
    ) -> f64 {
        let grid_n = (cfg.sphere_grid / 8).max(64);
        let k = self.rank();
        let m = self.splitting.f().dim();
        let ge = unit_sphere_grid(k, (grid_n as f64).sqrt().ceil() as usize, cfg.grid_seed ^ 4);
        let gf = unit_sphere_grid(m, (grid_n as f64).sqrt().ceil() as usize, cfg.grid_seed ^ 5);
        let mut best = f64::NEG_INFINITY;
        let mut best_v: Option<RealVector> = None;
        let mut consider = |v: RealVector| {
            let val = f(&v);
            if val > best {
                best = val;
                best_v = Some(v);
            }
        };
        // Complement section: w = F·cf + u · E·ce with u up to the boundary cap.
        for cf in &gf {
            consider(self.assemble_complement(&DVector::zeros(k), cf, 0.0));
            for ce in &ge {
                let cap = self.ratio_cap(ce, cf);
                for t in [1.0, 0.5, 0.1] {
                    consider(self.assemble_complement(ce, cf, t / cap));
                }
            }
        }
        if let Some(start) = best_v {
            let wrapped = |v: &RealVector| match self.retract_complement(v) {
                Some(w) => f(&w),
                None => f64::NEG_INFINITY,
            };
            let (_, val) = refine_on_sphere(&wrapped, &start, cfg.refine_iters);
            best = best.max(val);
        }
        best
    }

    fn assemble_complement(&self, ce: &DVector<f64>, cf: &DVector<f64>, e_amount: f64) -> RealVector {
        let v = self.splitting.f().basis() * cf + self.splitting.e().basis() * (ce * e_amount);
        let n = v.norm();
        v / n
    }
}

/// Signed membership margin of `v` in `c` (free-function form).
pub fn cone_margin(c: &ConeRankK, v: &RealVector) -> Result<f64> {
    c.margin(v)
}

/// α₀(u,v) = inf{α ≥ 0 : βv − u ∈ int C for all β ≥ α}, computed as the
/// supremum of the failure set of a sign scan over a log-spaced β grid with
/// bisection refinement. Collinear interior pairs give 0.
pub fn alpha_zero(c: &ConeRankK, u: &RealVector, v: &RealVector, cfg: &NumericsConfig) -> Result<f64> {
    alpha_zero_with_grid(c, u, v, cfg, 2048)
}

/// α₀ with an explicit β-grid size (the dichotomy check recomputes with a
/// finer grid).
pub fn alpha_zero_with_grid(
    c: &ConeRankK,
    u: &RealVector,
    v: &RealVector,
    cfg: &NumericsConfig,
    grid: usize,
) -> Result<f64> {
    let mu = c.margin(u)?;
    if mu <= cfg.interior_tol {
        return Err(Error::NotInterior { margin: mu });
    }
    let mv = c.margin(v)?;
    if mv <= cfg.interior_tol {
        return Err(Error::NotInterior { margin: mv });
    }
    let u = u / u.norm();
    let v = v / v.norm();

    // Negative margin means beta is in the failure set; near-zero combination
    // vectors count as passing (collinear directions).
    let failure_margin = |beta: f64| -> f64 {
        let w = &v * beta - &u;
        if w.norm() <= 1e-11 * (1.0 + beta) {
            return 1.0;
        }
        c.margin(&w).unwrap_or(1.0)
    };

    let lo: f64 = 1e-6;
    let hi: f64 = 1e6;
    let mut betas = Vec::with_capacity(grid + 1);
    betas.push(0.0);
    let step = (hi / lo).ln() / (grid as f64 - 1.0);
    for i in 0..grid {
        betas.push(lo * ((i as f64) * step).exp());
    }
    let margins: Vec<f64> = betas.iter().map(|&b| failure_margin(b)).collect();

    let mut last_fail: Option<usize> = None;
    for (i, &m) in margins.iter().enumerate() {
        if m <= 0.0 {
            last_fail = Some(i);
        }
    }
    let Some(idx) = last_fail else {
        return Ok(0.0);
    };
    if idx + 1 >= betas.len() {
        // Failure persists at the top of the grid; for interior v the margin
        // at large beta approaches margin(v) > 0, so extend geometrically.
        let mut b = hi;
        loop {
            b *= 4.0;
            if failure_margin(b) > 0.0 || b > 1e12 {
                break;
            }
        }
        return Ok(bisect_root(&failure_margin, hi, b));
    }
    Ok(bisect_root(&failure_margin, betas[idx], betas[idx + 1]))
}

/// Root of the margin sign change in [lo, hi] (margin(lo) ≤ 0 < margin(hi)).
fn bisect_root<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-10 * hi.max(1e-30) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Angle index α(u,v) = α₀(u,v)·α₀(v,u); symmetric, zero when the pair spans
/// a plane inside the cone.
pub fn angle_index_vectors(
    c: &ConeRankK,
    u: &RealVector,
    v: &RealVector,
    cfg: &NumericsConfig,
) -> Result<f64> {
    Ok(alpha_zero(c, u, v, cfg)? * alpha_zero(c, v, u, cfg)?)
}

/// Angle index with an explicit β-grid size, for dichotomy rechecks.
pub fn angle_index_vectors_with_grid(
    c: &ConeRankK,
    u: &RealVector,
    v: &RealVector,
    cfg: &NumericsConfig,
    grid: usize,
) -> Result<f64> {
    Ok(alpha_zero_with_grid(c, u, v, cfg, grid)? * alpha_zero_with_grid(c, v, u, cfg, grid)?)
}

/// Angle index of two k-dimensional subspaces inside int C: the supremum of
/// α(u,v) over the product of unit spheres.
///
/// Exact sign enumeration for k = 1; grid plus joint pattern-search
/// refinement for k ≥ 2 (an estimate from below).
pub fn angle_index_subspaces(
    c: &ConeRankK,
    e1: &Subspace,
    e2: &Subspace,
    cfg: &NumericsConfig,
) -> Result<f64> {
    angle_index_subspaces_detailed(c, e1, e2, cfg).map(|(a, _, _)| a)
}

/// As `angle_index_subspaces`, also returning the extremal vector pair.
pub fn angle_index_subspaces_detailed(
    c: &ConeRankK,
    e1: &Subspace,
    e2: &Subspace,
    cfg: &NumericsConfig,
) -> Result<(f64, RealVector, RealVector)> {
    for s in [e1, e2] {
        let worst = subspace_worst_margin(c, s, cfg);
        if worst <= cfg.interior_tol {
            return Err(Error::NotInCone { margin: worst });
        }
    }
    let k = e1.dim();
    if k == 1 {
        let u = e1.basis().column(0).into_owned();
        let v = e2.basis().column(0).into_owned();
        let a1 = angle_index_vectors(c, &u, &v, cfg)?;
        let a2 = angle_index_vectors(c, &u, &(-&v), cfg)?;
        return Ok(if a1 >= a2 {
            (a1, u, v)
        } else {
            (a2, u, -v)
        });
    }
    let grid = unit_sphere_grid(k, 24, cfg.grid_seed ^ 7);
    let mut best = 0.0_f64;
    let mut best_pair: Option<(RealVector, RealVector)> = None;
    for cu in &grid {
        let u = e1.basis() * cu;
        for cv in &grid {
            let v = e2.basis() * cv;
            let a = angle_index_vectors(c, &u, &v, cfg)?;
            if a >= best {
                best = a;
                best_pair = Some((u.clone(), v.clone()));
            }
        }
    }
    let (u0, v0) = best_pair.expect("sphere grid is never empty");
    let (u, v, val) = refine_vector_pair(
        |u, v| angle_index_vectors(c, u, v, cfg).unwrap_or(0.0),
        &u0,
        &v0,
        24,
    );
    if val > best {
        Ok((val, u, v))
    } else {
        Ok((best, u0, v0))
    }
}

/// Worst sampled interior margin of the unit sphere of `s` inside `c`.
pub fn subspace_worst_margin(c: &ConeRankK, s: &Subspace, cfg: &NumericsConfig) -> f64 {
    let grid = unit_sphere_grid(s.dim(), 128, cfg.grid_seed ^ 8);
    let mut worst = f64::INFINITY;
    for coeff in &grid {
        let v = s.basis() * coeff;
        worst = worst.min(c.margin(&v).unwrap_or(f64::NEG_INFINITY));
    }
    // The minimum margin over the sphere is what matters; refine it downward.
    let neg = |v: &RealVector| -> f64 {
        let w = s.project(v);
        if w.norm() < 1e-9 {
            return f64::NEG_INFINITY;
        }
        -c.margin(&w).unwrap_or(f64::NEG_INFINITY)
    };
    if let Some(start) = grid.first() {
        let v0 = s.basis() * start;
        let (_, val) = refine_on_sphere(&neg, &v0, 40);
        worst = worst.min(-val);
    }
    worst
}

/// Joint pattern-search maximization over a pair of unit vectors.
fn refine_vector_pair<F: Fn(&RealVector, &RealVector) -> f64>(
    f: F,
    u0: &RealVector,
    v0: &RealVector,
    iters: usize,
) -> (RealVector, RealVector, f64) {
    let mut u = u0 / u0.norm();
    let mut v = v0 / v0.norm();
    let mut best = f(&u, &v);
    let mut step = 0.1_f64;
    let d = u.len();
    for _ in 0..iters {
        let mut improved = false;
        for axis in 0..d {
            for dir in [1.0_f64, -1.0] {
                let mut cu = u.clone();
                cu[axis] += dir * step;
                cu /= cu.norm();
                let val = f(&cu, &v);
                if val > best {
                    best = val;
                    u = cu;
                    improved = true;
                }
                let mut cv = v.clone();
                cv[axis] += dir * step;
                cv /= cv.norm();
                let val = f(&u, &cv);
                if val > best {
                    best = val;
                    v = cv;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
            if step < 1e-10 {
                break;
            }
        }
    }
    (u, v, best)
}

/// A map between two cones of equal rank.
#[derive(Debug, Clone)]
pub struct ConePair {
    pub source: ConeRankK,
    pub target: ConeRankK,
    pub map: LinearMap,
}

impl ConePair {
    pub fn new(source: ConeRankK, target: ConeRankK, map: LinearMap) -> Result<Self> {
        if source.rank() != target.rank() {
            return Err(Error::InvalidArgument(format!(
                "cone ranks differ: {} vs {}",
                source.rank(),
                target.rank()
            )));
        }
        Ok(ConePair { source, target, map })
    }
}

/// One sampled vector pair with its angle indices before and after the map.
#[derive(Debug, Clone, Copy)]
pub struct PairRecord {
    pub alpha_before: f64,
    pub alpha_after: f64,
}

/// Empirical and analytic contraction statistics of a cone pair.
#[derive(Debug, Clone)]
pub struct ConePairStats {
    /// max over sampled u,v ∈ C₁ of α_{C₂}(Au, Av).
    pub chi_empirical: f64,
    /// 1 / dist_(A(C₁), X∖C₂), the strong focusing number.
    pub chi_strong: f64,
    /// Empirical supremum over sampled subspace pairs.
    pub tau_emp: f64,
    /// Empirical supremum over sampled vector pairs.
    pub tau_v_emp: f64,
    /// Analytic coefficient (p(χ_S) − 1)/(p(χ_S) + 1).
    pub tau_s: f64,
    pub admissible_pairs: usize,
    pub records: Vec<PairRecord>,
}

/// Section arc of a planar cone on the projective circle [0, π): the cone
/// is the union of the lines at angles inside the arc. Angles are found by
/// a margin sign scan plus bisection around the core axis.
pub fn planar_arc(c: &ConeRankK) -> Option<(f64, f64)> {
    if c.ambient_dim() != 2 {
        return None;
    }
    *c.planar_arc_cache.get_or_init(|| planar_arc_uncached(c))
}

fn planar_arc_uncached(c: &ConeRankK) -> Option<(f64, f64)> {
    let e = c.splitting().e().basis();
    let center = e[(1, 0)].atan2(e[(0, 0)]);
    let margin_at = |t: f64| -> f64 {
        let v = RealVector::from_vec(vec![t.cos(), t.sin()]);
        c.margin(&v).unwrap_or(-1.0)
    };
    if margin_at(center) <= 0.0 {
        return None;
    }
    let pi = std::f64::consts::PI;
    let scan = 512;
    let step = pi / scan as f64;
    let bisect = |mut inside: f64, mut outside: f64| -> f64 {
        for _ in 0..60 {
            let mid = 0.5 * (inside + outside);
            if margin_at(mid) >= 0.0 {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        0.5 * (inside + outside)
    };
    // Walk the full projective circle in both directions from the center
    // to the first sign change; together the sweeps cover every line.
    let mut hi = None;
    for i in 1..=scan {
        let t = center + step * i as f64;
        if margin_at(t) < 0.0 {
            hi = Some(bisect(t - step, t));
            break;
        }
    }
    let mut lo = None;
    for i in 1..=scan {
        let t = center - step * i as f64;
        if margin_at(t) < 0.0 {
            lo = Some(bisect(t + step, t));
            break;
        }
    }
    match (lo, hi) {
        (Some(a), Some(b)) => Some((a, b)),
        _ => None,
    }
}

/// Distance between two angles as lines (π-periodic, folded to [0, π/2]).
fn line_angle_distance(a: f64, b: f64) -> f64 {
    let mut d = (a - b).rem_euclid(std::f64::consts::PI);
    if d > std::f64::consts::FRAC_PI_2 {
        d = std::f64::consts::PI - d;
    }
    d
}

/// Minimal line-angle distance from interval [a1,a2] to the complement of
/// [b1,b2] on the projective circle; zero when the arc pokes outside.
fn arc_to_complement_distance(a1: f64, a2: f64, b1: f64, b2: f64) -> f64 {
    // Normalize to offsets relative to b1; the target arc is [0, span_b].
    let pi = std::f64::consts::PI;
    let span_b = (b2 - b1).rem_euclid(pi);
    let s1 = (a1 - b1).rem_euclid(pi);
    let s2 = s1 + (a2 - a1).rem_euclid(pi);
    if s2 > span_b + 1e-15 {
        return 0.0; // image arc exits the target arc
    }
    // Distance to the complement is attained at one of the boundary rays.
    line_angle_distance(s1, 0.0)
        .min(line_angle_distance(s1, span_b))
        .min(line_angle_distance(s2, 0.0))
        .min(line_angle_distance(s2, span_b))
        .min(std::f64::consts::FRAC_PI_2)
}

/// Planar closed route for the image/complement separation: boundary rays
/// of both sections are located by bisection and the separation is the
/// sine of the minimal line angle between the image arc and the complement.
pub fn planar_image_complement_separation(
    map: &DMatrix<f64>,
    source: &ConeRankK,
    target: &ConeRankK,
) -> Option<f64> {
    let (s1, s2) = planar_arc(source)?;
    let (t1, t2) = planar_arc(target)?;
    // Map a dense fan of source rays and unwrap the image angles
    // sequentially; consecutive rays stay close, so the unwrap is robust
    // for arcs of any width below π.
    let samples = 129;
    let pi = std::f64::consts::PI;
    let mut prev: Option<f64> = None;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..samples {
        let t = s1 + (s2 - s1) * (i as f64) / (samples as f64 - 1.0);
        let w = map * RealVector::from_vec(vec![t.cos(), t.sin()]);
        let mut a = w[1].atan2(w[0]);
        if let Some(p) = prev {
            while a - p > pi / 2.0 {
                a -= pi;
            }
            while p - a > pi / 2.0 {
                a += pi;
            }
        }
        prev = Some(a);
        lo = lo.min(a);
        hi = hi.max(a);
    }
    Some(arc_to_complement_distance(lo, hi, t1, t2).sin())
}

/// Separation of the image cone A(C₁) from the complement of C₂:
/// sqrt(1 − M²) with M the largest |cos| between the two sections. Planar
/// cones take the closed boundary-ray route; higher dimensions run a
/// joint product-grid search followed by pattern-search refinement of the
/// best (source, complement) pair.
pub fn image_complement_separation(pair: &ConePair, cfg: &NumericsConfig) -> f64 {
    if pair.source.ambient_dim() == 2 {
        if let Some(sep) =
            planar_image_complement_separation(pair.map.matrix(), &pair.source, &pair.target)
        {
            return sep;
        }
    }
    let a = pair.map.matrix();
    let grid_n = (cfg.sphere_grid / 8).max(64);

    // Image directions of the source section.
    let mut sources = pair.source.boundary_grid(grid_n, cfg.grid_seed ^ 71);
    sources.extend(pair.source.section_samples(grid_n / 2, 0.5, cfg.grid_seed ^ 72));
    let images: Vec<RealVector> = sources
        .iter()
        .map(|u| {
            let w = a * u;
            let n = w.norm();
            w / n
        })
        .collect();

    // Complement section of the target.
    let mut complements: Vec<RealVector> = Vec::new();
    {
        let k = pair.target.rank();
        let m = pair.target.splitting().f().dim();
        let side = (grid_n as f64).sqrt().ceil() as usize;
        let ge = unit_sphere_grid(k, side, cfg.grid_seed ^ 73);
        let gf = unit_sphere_grid(m, side, cfg.grid_seed ^ 74);
        for cf in &gf {
            complements.push(pair.target.assemble_complement(&DVector::zeros(k), cf, 0.0));
            for ce in &ge {
                let cap = pair.target.ratio_cap(ce, cf);
                for t in [1.0, 0.4] {
                    complements.push(pair.target.assemble_complement(ce, cf, t / cap));
                }
            }
        }
    }

    let mut best = f64::NEG_INFINITY;
    let mut best_pair: Option<(RealVector, RealVector)> = None;
    for (u, w) in sources.iter().zip(&images) {
        for z in &complements {
            let c = w.dot(z);
            let c2 = c * c;
            if c2 > best {
                best = c2;
                best_pair = Some((u.clone(), z.clone()));
            }
        }
    }
    if let Some((u0, z0)) = best_pair {
        let objective = |u: &RealVector, z: &RealVector| -> f64 {
            let (Some(uc), Some(zc)) = (pair.source.retract(u), pair.target.retract_complement(z))
            else {
                return f64::NEG_INFINITY;
            };
            let w = a * uc;
            let c = w.dot(&zc) / w.norm();
            c * c
        };
        let refined = refine_pair(&objective, &u0, &z0, cfg.refine_iters);
        best = best.max(refined);
    }
    (1.0 - best.clamp(0.0, 1.0)).max(0.0).sqrt()
}

/// Joint pattern-search maximization over two unit vectors with their own
/// retractions folded into the objective.
fn refine_pair<F: Fn(&RealVector, &RealVector) -> f64>(
    f: &F,
    u0: &RealVector,
    z0: &RealVector,
    iters: usize,
) -> f64 {
    let d = u0.len();
    let mut u = u0.clone();
    let mut z = z0.clone();
    let mut best = f(&u, &z);
    let mut step = 0.2_f64;
    for _ in 0..iters {
        let mut improved = false;
        for axis in 0..d {
            for dir in [1.0_f64, -1.0] {
                let mut cu = u.clone();
                cu[axis] += dir * step;
                let n = cu.norm();
                if n > 1e-12 {
                    cu /= n;
                    let val = f(&cu, &z);
                    if val > best {
                        best = val;
                        u = cu;
                        improved = true;
                    }
                }
                let mut cz = z.clone();
                cz[axis] += dir * step;
                let n = cz.norm();
                if n > 1e-12 {
                    cz /= n;
                    let val = f(&u, &cz);
                    if val > best {
                        best = val;
                        z = cz;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
            if step < 1e-12 {
                break;
            }
        }
    }
    best
}

/// Shared sampling analysis behind the focusing and contraction estimates.
pub fn analyze_cone_pair(
    pair: &ConePair,
    samples: usize,
    seed: u64,
    cfg: &NumericsConfig,
) -> Result<ConePairStats> {
    let a = pair.map.matrix();
    if !pair.map.is_injective() {
        return Err(Error::InvalidArgument("cone map must be injective".into()));
    }

    // Strict invariance: every sampled source vector (boundary included)
    // must land in the interior of the target.
    let source_samples = pair.source.section_samples(samples.max(16), 0.5, seed);
    for (i, u) in source_samples.iter().enumerate() {
        let img = a * u;
        let m = pair.target.margin(&img)?;
        if m <= cfg.interior_tol {
            return Err(Error::NotStrictlyInvariant { margin: m, sample: i });
        }
    }

    let n_pairs = (samples / 2).max(8);
    let mut records = Vec::with_capacity(n_pairs);
    let mut chi_emp = 0.0_f64;
    let mut tau_v: f64 = 0.0;
    let mut admissible = 0usize;

    let interior: Vec<&RealVector> = source_samples
        .iter()
        .filter(|u| matches!(pair.source.margin(u), Ok(m) if m > cfg.interior_tol))
        .collect();
    let mut eval_pair = |u: &RealVector, v: &RealVector| -> Result<()> {
        let before = angle_index_vectors(&pair.source, u, v, cfg)?;
        let au = a * u;
        let av = a * v;
        let after = angle_index_vectors(&pair.target, &au, &av, cfg)?;
        chi_emp = chi_emp.max(after);
        if before > 1.0 + 1e-12 {
            admissible += 1;
            tau_v = tau_v.max((after - 1.0) / (before - 1.0));
        }
        records.push(PairRecord {
            alpha_before: before,
            alpha_after: after,
        });
        // Boundary combinations used by the contraction argument: their
        // image angles also feed the empirical focusing number.
        let a0_uv = alpha_zero(&pair.source, u, v, cfg)?;
        let a0_vu = alpha_zero(&pair.source, v, u, cfg)?;
        if a0_uv > 1e-9 && a0_vu > 1e-9 {
            let w1 = u / a0_uv - v;
            let w2 = v - u * a0_vu;
            if w1.norm() > 1e-9 && w2.norm() > 1e-9 {
                let aw1 = a * &w1;
                let aw2 = a * &w2;
                if pair.target.margin(&aw1).map(|m| m > 0.0).unwrap_or(false)
                    && pair.target.margin(&aw2).map(|m| m > 0.0).unwrap_or(false)
                {
                    chi_emp = chi_emp.max(angle_index_vectors(&pair.target, &aw1, &aw2, cfg)?);
                }
            }
        }
        Ok(())
    };
    for i in 0..n_pairs {
        if interior.len() < 2 {
            break;
        }
        let u = interior[(2 * i) % interior.len()];
        let v = interior[(2 * i + 1) % interior.len()];
        eval_pair(u, v)?;
    }

    // Subspace route: one-dimensional spans for k = 1, graph perturbations
    // of the source splitting for higher rank. The extremal image pair's
    // pre-image ratio is folded into the vector-route supremum so the chain
    // tau <= tau_V stays exact as computed.
    let k = pair.source.rank();
    let mut tau_sub: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5b5b);
    let a_inv = a.clone().try_inverse();
    let n_sub = (samples / 8).clamp(4, 24);
    for i in 0..n_sub {
        let (s1, s2) = if k == 1 {
            if interior.len() < 2 {
                break;
            }
            let u = interior[(2 * i) % interior.len()].clone();
            let v = interior[(2 * i + 1) % interior.len()].clone();
            (Subspace::span(&[u])?, Subspace::span(&[v])?)
        } else {
            (
                graph_subspace_in_cone(&pair.source, 0.7, &mut rng)?,
                graph_subspace_in_cone(&pair.source, 0.7, &mut rng)?,
            )
        };
        let before = angle_index_subspaces(&pair.source, &s1, &s2, cfg)?;
        if before <= 1.0 + 1e-12 {
            continue;
        }
        let i1 = s1.map_through(a)?;
        let i2 = s2.map_through(a)?;
        let (after, img_u, img_v) = angle_index_subspaces_detailed(&pair.target, &i1, &i2, cfg)?;
        tau_sub = tau_sub.max((after - 1.0) / (before - 1.0));
        chi_emp = chi_emp.max(after);
        if let Some(inv) = &a_inv {
            let pu = inv * &img_u;
            let pv = inv * &img_v;
            if let Ok(pre) = angle_index_vectors(&pair.source, &pu, &pv, cfg) {
                if pre > 1.0 + 1e-12 {
                    tau_v = tau_v.max((after - 1.0) / (pre - 1.0));
                }
            }
        }
    }

    if admissible == 0 {
        return Err(Error::NoAdmissiblePairs);
    }

    let sep = image_complement_separation(pair, cfg);
    let chi_strong = if sep > 0.0 { 1.0 / sep } else { f64::INFINITY };
    let tau_s = tau_s_from_chi(chi_strong);
    let tau_v = tau_v.max(0.0);
    let tau_sub = tau_sub.max(0.0);

    assert!(
        chi_emp <= focusing_polynomial(chi_strong) + 1e-6,
        "focusing bound violated: chi_emp {chi_emp} > p(chi_strong) {}",
        focusing_polynomial(chi_strong)
    );
    assert!(
        tau_sub <= tau_v + 1e-9 && tau_v <= tau_s + 1e-9,
        "contraction chain violated: tau {tau_sub} tau_v {tau_v} tau_s {tau_s}"
    );

    Ok(ConePairStats {
        chi_empirical: chi_emp,
        chi_strong,
        tau_emp: tau_sub,
        tau_v_emp: tau_v,
        tau_s,
        admissible_pairs: admissible,
        records,
    })
}

/// A random k-dimensional subspace strictly inside the cone, built as the
/// graph of a small map from E to F.
pub fn graph_subspace_in_cone<R: Rng>(
    c: &ConeRankK,
    depth: f64,
    rng: &mut R,
) -> Result<Subspace> {
    let k = c.rank();
    let m = c.splitting().f().dim();
    let mut s = DMatrix::zeros(m, k);
    for i in 0..m {
        for j in 0..k {
            s[(i, j)] = crate::linalg::sample_gaussian(rng);
        }
    }
    let norm = crate::linalg::operator_norm(&s);
    if norm > 0.0 {
        let target = depth * c.opening() * rng.random::<f64>();
        s *= target / norm;
    }
    let basis = c.splitting().e().basis() + c.splitting().f().basis() * s;
    Subspace::new(basis)
}

/// Focusing numbers of a cone pair: the empirical χ and the strong χ_S.
pub fn focusing_numbers(
    pair: &ConePair,
    samples: usize,
    seed: u64,
    cfg: &NumericsConfig,
) -> Result<(f64, f64)> {
    let stats = analyze_cone_pair(pair, samples, seed, cfg)?;
    Ok((stats.chi_empirical, stats.chi_strong))
}

/// Birkhoff-type contraction coefficients (τ over subspaces, τ_V over
/// vectors, analytic τ_S).
pub fn contraction_coefficients(
    pair: &ConePair,
    samples: usize,
    seed: u64,
    cfg: &NumericsConfig,
) -> Result<(f64, f64, f64)> {
    let stats = analyze_cone_pair(pair, samples, seed, cfg)?;
    Ok((stats.tau_emp, stats.tau_v_emp, stats.tau_s))
}

/// Thickens the image cone A(C_prev) by chord radius 1/(4χ) on the unit
/// sphere and realizes the result as a splitting-norm cone over
/// (A·E_prev, F_prev).
///
/// The opening is chosen to minimize the sampled boundary deviation from
/// the set definition subject to the containment sandwich
/// A(C_prev) ⊂ C' ⊂ C_prev; `FitFailure` when no opening satisfies it.
pub fn thicken_cone(
    c_prev: &ConeRankK,
    a: &LinearMap,
    chi: f64,
    cfg: &NumericsConfig,
) -> Result<ConeRankK> {
    if !a.is_injective() {
        return Err(Error::InvalidArgument("thickening map must be injective".into()));
    }
    if chi < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "thickening needs chi >= 1, got {chi}"
        )));
    }
    let radius = 1.0 / (4.0 * chi);
    let am = a.matrix();

    // Dense image-section samples paired with their source directions; the
    // set is { v : dist(v, A(C_prev) ∩ S) <= radius }.
    let image_pairs: Vec<(RealVector, RealVector)> = c_prev
        .boundary_grid(512, cfg.grid_seed ^ 11)
        .into_iter()
        .chain(c_prev.section_samples(512, 0.4, cfg.grid_seed ^ 12))
        .map(|u| {
            let w = am * &u;
            let n = w.norm();
            (u, w / n)
        })
        .collect();
    let image: Vec<RealVector> = image_pairs.iter().map(|(_, w)| w.clone()).collect();
    let dist_to_image = |v: &RealVector| -> f64 {
        // dist(v, section) = sqrt(2 - 2 max |cos|); the max is refined over
        // source directions starting from the best grid candidate.
        let (mut best, mut start) = (f64::NEG_INFINITY, &image_pairs[0].0);
        for (u, w) in &image_pairs {
            let c = v.dot(w).abs();
            if c > best {
                best = c;
                start = u;
            }
        }
        let obj = |u: &RealVector| -> f64 {
            match c_prev.retract(u) {
                Some(w) => {
                    let iw = am * w;
                    (v.dot(&iw) / iw.norm()).abs()
                }
                None => f64::NEG_INFINITY,
            }
        };
        let (_, refined) = refine_on_sphere(&obj, start, 30);
        let best = best.max(refined).clamp(-1.0, 1.0);
        (2.0 - 2.0 * best).max(0.0).sqrt()
    };

    let e_new = c_prev.splitting().e().map_through(am)?;
    let f_new = c_prev.splitting().f().clone();
    let splitting = make_splitting(&e_new, &f_new)?;

    // Boundary points of the set definition: along each direction pair,
    // march the F-part until the set membership flips.
    let ge = unit_sphere_grid(e_new.dim(), 24, cfg.grid_seed ^ 13);
    let gf = unit_sphere_grid(f_new.dim(), 24, cfg.grid_seed ^ 14);
    let assemble = |ce: &DVector<f64>, cf: &DVector<f64>, t: f64| -> RealVector {
        let v = e_new.basis() * ce + f_new.basis() * (cf * t);
        let n = v.norm();
        v / n
    };
    let mut set_boundary: Vec<(f64, RealVector)> = Vec::new(); // (ratio, point)
    for ce in &ge {
        for cf in &gf {
            let inside = |t: f64| dist_to_image(&assemble(ce, cf, t)) <= radius;
            if !inside(0.0) {
                continue;
            }
            let mut lo = 0.0_f64;
            let mut hi = 1.0_f64;
            while inside(hi) && hi < 1e6 {
                lo = hi;
                hi *= 2.0;
            }
            if hi >= 1e6 {
                continue;
            }
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if inside(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t = 0.5 * (lo + hi);
            set_boundary.push((t, assemble(ce, cf, t)));
        }
    }
    if set_boundary.is_empty() {
        return Err(Error::FitFailure("no set boundary found".into()));
    }

    // Opening must contain the set samples; from there search upward only if
    // the sandwich allows it.
    let l_contain_set = set_boundary
        .iter()
        .map(|(t, _)| *t)
        .fold(0.0_f64, f64::max);
    let candidates: Vec<f64> = (0..24)
        .map(|i| l_contain_set * (1.0 + 0.05 * i as f64))
        .collect();

    let sandwich_ok = |l: f64| -> bool {
        let cone = match ConeRankK::splitting_norm(splitting.clone(), l) {
            Ok(c) => c,
            Err(_) => return false,
        };
        let img_ok = image.iter().all(|w| cone.margin(w).map(|m| m >= -1e-9).unwrap_or(false));
        let inside_prev = cone
            .boundary_grid(256, cfg.grid_seed ^ 15)
            .iter()
            .all(|v| c_prev.margin(v).map(|m| m >= -1e-9).unwrap_or(false));
        img_ok && inside_prev
    };
    let deviation = |l: f64| -> f64 {
        let cone = match ConeRankK::splitting_norm(splitting.clone(), l) {
            Ok(c) => c,
            Err(_) => return f64::INFINITY,
        };
        let cone_boundary = cone.boundary_grid(192, cfg.grid_seed ^ 16);
        let d1 = set_boundary
            .iter()
            .map(|(_, p)| {
                cone_boundary
                    .iter()
                    .map(|q| ((p - q).norm()).min((p + q).norm()))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0_f64, f64::max);
        let d2 = cone_boundary
            .iter()
            .map(|q| {
                set_boundary
                    .iter()
                    .map(|(_, p)| ((p - q).norm()).min((p + q).norm()))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0_f64, f64::max);
        d1.max(d2)
    };

    let mut best: Option<(f64, f64)> = None;
    for &l in &candidates {
        if !(OPENING_RANGE.0..=OPENING_RANGE.1).contains(&l) {
            continue;
        }
        if !sandwich_ok(l) {
            continue;
        }
        let dev = deviation(l);
        if best.map(|(_, bd)| dev < bd).unwrap_or(true) {
            best = Some((l, dev));
        }
    }
    let Some((l, _dev)) = best else {
        return Err(Error::FitFailure(format!(
            "no opening in [{l_contain_set:.4}, ..] satisfies A(C) ⊂ C' ⊂ C"
        )));
    };
    ConeRankK::splitting_norm(splitting, l)
}

/// Normality constant b = 4 / dist_(L, C) for a k-codimensional subspace L
/// separated from the cone; spot-checks the defining inequality on samples.
pub fn strong_normality_bound(
    c: &ConeRankK,
    l: &Subspace,
    cfg: &NumericsConfig,
) -> Result<f64> {
    let sep = crate::linalg::separation_index(l, crate::linalg::SeparationTarget::Cone(c), cfg)?;
    if sep <= 1e-6 {
        return Err(Error::NotSeparated { separation: sep });
    }
    let b = 4.0 / sep;

    // Spot check: dist(u, E ∩ ball) ≤ b log α_C(u, E) ≤ b (α_C(u, E) − 1)
    // on sampled interior directions against the cone's core subspace.
    // α_C(u, E) is a supremum over E, so it is refined upward before use.
    let e = c.splitting().e();
    for u in c.section_samples(16, 0.0, cfg.grid_seed ^ 21) {
        if c.margin(&u).unwrap_or(-1.0) <= cfg.interior_tol {
            continue;
        }
        let mut alpha = 0.0_f64;
        let mut best_v: Option<RealVector> = None;
        for coeff in unit_sphere_grid(e.dim(), 32, cfg.grid_seed ^ 22) {
            let v = e.basis() * &coeff;
            if let Ok(a) = angle_index_vectors(c, &u, &v, cfg) {
                if a > alpha {
                    alpha = a;
                    best_v = Some(v);
                }
            }
        }
        if e.dim() > 1 {
            if let Some(v0) = best_v {
                let obj = |v: &RealVector| -> f64 {
                    let w = e.project(v);
                    if w.norm() < 1e-9 {
                        return f64::NEG_INFINITY;
                    }
                    angle_index_vectors(c, &u, &w, cfg).unwrap_or(0.0)
                };
                let (_, refined) = refine_on_sphere(&obj, &v0, 30);
                alpha = alpha.max(refined);
            }
        }
        if alpha <= 1.05 {
            continue;
        }
        let p = e.project(&u);
        let target = if p.norm() <= 1.0 { p } else { p.clone() / p.norm() };
        let dist = (&u - target).norm();
        assert!(
            dist <= b * alpha.ln() * (1.0 + 1e-6) + 1e-9,
            "normality inequality violated: dist {dist} > b log alpha {}",
            b * alpha.ln()
        );
    }
    Ok(b)
}
