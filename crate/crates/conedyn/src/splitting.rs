//! Constructive routes to dominated splittings and co-invariant cones.
//!
//! Two directions are implemented. Cone → splitting: the push-forward
//! sequence Tⁿ(θ⁻ⁿω)E₀ is a Cauchy sequence in the gap metric and its limit
//! is the fast space; the slow complement is the graph of
//!
//! ```text
//! Ψ(ω) = −Σ_{n≥0} (T^{n+1}|_E)⁻¹ Π₁(θ^{n+1}ω) A(θⁿω) Π₂(θⁿω) Tⁿ(ω) Π₂(ω)
//! ```
//!
//! over the initial complement F₀. Splitting → cone: the index
//!
//! ```text
//! ζ_ω(v) = Σ_{n≥0} (|Tⁿ v^F| / |Tⁿ v^E|) e^{nδ/2}   (∞ on F, 0 on E)
//! ```
//!
//! has forward-invariant unit sublevel sets, which realize co-invariant
//! cones. All series are truncated with explicit geometric tail
//! certificates derived from the fitted uniform-separation constants.

use nalgebra::DMatrix;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::cocycle::{
    lyapunov_norm, lyapunov_spectrum, restricted_step, OrbitTrace, OseledetsData, FAMILY_GAP_TOL,
};
use crate::cone::{tau_s_from_chi, ConeRankK, ZetaSeries};
use crate::error::{Error, Result};
use crate::linalg::{
    gap_distance, make_splitting, operator_norm, unit_sphere_grid, NumericsConfig, RealVector,
    Splitting, Subspace,
};
use crate::scaled::ScaledMatrix;

/// A per-step cone assignment along a trace window. Per-step families wrap
/// around cyclically, which covers both constant and periodic families.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum ConeFamily {
    Constant(ConeRankK),
    PerStep { start: i64, cones: Vec<ConeRankK> },
}

impl ConeFamily {
    pub fn at(&self, j: i64) -> &ConeRankK {
        match self {
            ConeFamily::Constant(c) => c,
            ConeFamily::PerStep { start, cones } => {
                let idx = (j - start).rem_euclid(cones.len() as i64) as usize;
                &cones[idx]
            }
        }
    }

    pub fn rank(&self) -> usize {
        match self {
            ConeFamily::Constant(c) => c.rank(),
            ConeFamily::PerStep { cones, .. } => cones[0].rank(),
        }
    }

    /// Identity of the cone used at step j; equal phases share one cone.
    pub fn phase(&self, j: i64) -> i64 {
        match self {
            ConeFamily::Constant(_) => 0,
            ConeFamily::PerStep { start, cones } => (j - start).rem_euclid(cones.len() as i64),
        }
    }
}

/// A per-step χ assignment (the contraction witness function).
#[derive(Debug, Clone)]
pub enum ChiFunction {
    Constant(f64),
    PerStep { start: i64, values: Vec<f64> },
}

impl ChiFunction {
    pub fn at(&self, j: i64) -> f64 {
        match self {
            ChiFunction::Constant(c) => *c,
            ChiFunction::PerStep { start, values } => {
                let idx = (j - start).rem_euclid(values.len() as i64) as usize;
                values[idx]
            }
        }
    }
}

/// An invariant splitting family along a trace window with its fitted
/// uniform-separation constants: ‖(Tⁿ|_E)⁻¹‖ ‖Tⁿ|_F‖ ≤ K e^{−nδ}.
#[derive(Debug, Clone)]
pub struct SplittingFamily {
    pub start: i64,
    pub splittings: Vec<Splitting>,
    /// Fitted separation rate δ > 0.
    pub delta: f64,
    /// Certified constant K ≥ 1 making the bound hold at every fitted n.
    pub k_bound: f64,
    /// Raw least-squares slope of the log separation product (≈ −δ).
    pub rate_fit: f64,
}

impl SplittingFamily {
    pub fn end(&self) -> i64 {
        self.start + self.splittings.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.splittings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splittings.is_empty()
    }

    pub fn at(&self, j: i64) -> &Splitting {
        &self.splittings[(j - self.start) as usize]
    }
}

/// Internal abstraction over a two-sided matrix sequence, so the builders
/// run both on sampled traces and on restricted (sub-bundle) sequences.
pub(crate) trait MatrixSeq {
    fn dim(&self) -> usize;
    fn lo(&self) -> i64;
    fn hi(&self) -> i64;
    fn mat(&self, j: i64) -> &DMatrix<f64>;
}

impl MatrixSeq for OrbitTrace {
    fn dim(&self) -> usize {
        OrbitTrace::dim(self)
    }
    fn lo(&self) -> i64 {
        self.window().0
    }
    fn hi(&self) -> i64 {
        self.window().1
    }
    fn mat(&self, j: i64) -> &DMatrix<f64> {
        self.matrix(j).expect("index inside window")
    }
}

pub(crate) struct SliceSeq<'a> {
    pub mats: &'a [DMatrix<f64>],
    pub start: i64,
}

impl MatrixSeq for SliceSeq<'_> {
    fn dim(&self) -> usize {
        self.mats[0].nrows()
    }
    fn lo(&self) -> i64 {
        self.start
    }
    fn hi(&self) -> i64 {
        self.start + self.mats.len() as i64 - 1
    }
    fn mat(&self, j: i64) -> &DMatrix<f64> {
        &self.mats[(j - self.start) as usize]
    }
}

/// Result of a push-forward limit.
#[derive(Debug, Clone)]
pub struct PushForwardResult {
    /// The limiting subspace at the center step.
    pub subspace: Subspace,
    /// Fitted slope of log d(S_n, S_{n+1}); −∞ when already invariant.
    pub rate: f64,
    /// Gap increments d(S_n, S_{n+1}) for diagnostics.
    pub history: Vec<f64>,
}

/// Limit of the push-forward sequence S_n = Tⁿ(θ⁻ⁿω)E₀ at the center step.
///
/// Iterates until the gap increment drops below 1e-10 or the backward
/// window is exhausted. A perturbed twin sequence probes genuine
/// contraction: when the twin fails to merge (equal-exponent degeneracy)
/// the iteration reports `NoConvergence`.
pub fn push_forward_top_space(
    trace: &OrbitTrace,
    e0: &Subspace,
    cone: Option<&ConeRankK>,
    cfg: &NumericsConfig,
) -> Result<PushForwardResult> {
    if let Some(c) = cone {
        let worst = crate::cone::subspace_worst_margin(c, e0, cfg);
        if worst <= 0.0 {
            return Err(Error::NotInCone { margin: worst });
        }
    }
    push_forward_seq(trace, e0, 0, trace.len(), cfg.grid_seed)
}

pub(crate) fn push_forward_seq<S: MatrixSeq>(
    seq: &S,
    e0: &Subspace,
    at: i64,
    max_depth: usize,
    seed: u64,
) -> Result<PushForwardResult> {
    let depth = max_depth.min((at - seq.lo()) as usize);
    if depth == 0 {
        return Err(Error::InvalidArgument(
            "push-forward needs backward window".into(),
        ));
    }
    // Twin start: deterministic small perturbation of E0, probing whether
    // nearby starts actually merge.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let mut pert = e0.basis().clone();
    for i in 0..pert.nrows() {
        for j in 0..pert.ncols() {
            pert[(i, j)] += 1e-3 * crate::linalg::sample_gaussian(&mut rng);
        }
    }
    let twin0 = Subspace::new(pert)?;
    let probe0 = gap_distance(e0, &twin0);

    // S_n needs the product A(θ⁻¹)···A(θ⁻ⁿ); each S_n is built by its own
    // forward sweep from depth −n. Quadratic in the depth, which stays
    // small because convergence is exponential.
    let mut prev = e0.clone();
    let mut prev_twin = twin0.clone();
    let mut history: Vec<f64> = Vec::new();
    let mut best_incr = f64::INFINITY;
    let mut stagnant = 0usize;
    let mut converged = false;
    for n in 1..=depth {
        let mut v = e0.clone();
        let mut twin = twin0.clone();
        for j in (at - n as i64)..at {
            v = v.map_through(seq.mat(j))?;
            twin = twin.map_through(seq.mat(j))?;
        }
        let incr = gap_distance(&prev, &v);
        history.push(incr);
        prev = v;
        prev_twin = twin;
        if incr < best_incr - 1e-15 {
            best_incr = incr;
            stagnant = 0;
        } else {
            stagnant += 1;
        }
        if incr < 1e-10 && n >= 3 {
            converged = true;
            break;
        }
        if stagnant >= 15 && best_incr > 1e-10 {
            return Err(Error::NoConvergence(format!(
                "gap increments stagnated near {best_incr:.3e} after {n} steps"
            )));
        }
    }
    let probe_end = gap_distance(&prev, &prev_twin);
    if probe_end > 0.5 * probe0 && probe_end > 1e-8 {
        return Err(Error::NoConvergence(format!(
            "perturbed start did not merge (probe gap {probe_end:.3e}); \
             the leading exponents are likely equal"
        )));
    }
    if !converged && history.last().map(|&x| x > 1e-10).unwrap_or(true) {
        return Err(Error::NoConvergence(format!(
            "window exhausted with increment {:.3e}",
            history.last().copied().unwrap_or(f64::NAN)
        )));
    }

    // Rate: least-squares slope of log increments over the decaying range.
    let usable: Vec<(f64, f64)> = history
        .iter()
        .enumerate()
        .filter(|(_, &g)| g > 1e-14)
        .map(|(i, &g)| (i as f64, g.ln()))
        .collect();
    let rate = if usable.len() < 3 {
        f64::NEG_INFINITY
    } else {
        let n = usable.len() as f64;
        let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
        let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
        let num: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let den: f64 = usable.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        num / den
    };
    Ok(PushForwardResult {
        subspace: prev,
        rate,
        history,
    })
}

/// Forward family sweep: E(θʲω) for j in [start, end], obtained by pushing
/// `e_init` forward from the sequence's left end (the stretch before
/// `start` acts as burn-in).
pub(crate) fn forward_family<S: MatrixSeq>(
    seq: &S,
    e_init: &Subspace,
    start: i64,
    end: i64,
) -> Result<Vec<Subspace>> {
    let mut v = e_init.clone();
    for j in seq.lo()..start {
        v = v.map_through(seq.mat(j))?;
    }
    let mut out = Vec::with_capacity((end - start + 1) as usize);
    out.push(v.clone());
    for j in start..end {
        v = v.map_through(seq.mat(j))?;
        out.push(v.clone());
    }
    Ok(out)
}

/// Graph-transform series at one step: the invariant complement as the
/// graph of the truncated Ψ over F₀. Returns (subspace, terms used, last
/// term norm).
pub(crate) fn graph_transform_at<S: MatrixSeq>(
    seq: &S,
    e_family: &[Subspace],
    f0_family: &[Subspace],
    family_start: i64,
    at: i64,
    tol: f64,
) -> Result<(Subspace, usize, f64)> {
    let d = seq.dim();
    let idx = |j: i64| (j - family_start) as usize;
    let family_end = family_start + e_family.len() as i64 - 1;
    let avail = family_end.min(seq.hi());

    let split_at =
        |j: i64| -> Result<Splitting> { make_splitting(&e_family[idx(j)], &f0_family[idx(j)]) };
    let base = split_at(at)?;
    let k = base.e().dim();

    // Running pieces: cur = Tⁿ(θʲ)Π₂(θʲ) and the E-restricted product.
    let mut cur = ScaledMatrix::from_matrix(base.proj_f().clone());
    let mut e_prod = ScaledMatrix::identity(k);
    let mut sum: DMatrix<f64> = DMatrix::zeros(d, d);
    let mut prev_norm = f64::INFINITY;
    let mut non_decay = 0usize;
    let mut n = 0usize;
    let mut last_norm = f64::NAN;
    loop {
        let j_n = at + n as i64;
        if j_n + 1 > avail {
            break;
        }
        let a_n = seq.mat(j_n);
        let me = restricted_step(a_n, &e_family[idx(j_n)], &e_family[idx(j_n + 1)], j_n, 1e-6)?;
        e_prod = e_prod.premultiply(&me);
        let e_inv = e_prod
            .try_inverse()
            .ok_or_else(|| Error::InvalidArgument("restricted product is singular".into()))?;
        let next_split = split_at(j_n + 1)?;
        let cur_split = split_at(j_n)?;
        // Π₁(θⁿ⁺¹) A(θⁿ) Π₂(θⁿ), pulled back through (T^{n+1}|_E)⁻¹.
        let coupler = next_split.proj_e() * a_n * cur_split.proj_f();
        let pullback = e_family[idx(at)].basis()
            * e_inv.unit_factor()
            * e_family[idx(j_n + 1)].basis().transpose();
        let mut term = ScaledMatrix::from_matrix(pullback)
            .compose(&ScaledMatrix::from_matrix(coupler))
            .compose(&cur);
        term = term.rescale(e_inv.log_scale());
        let term_norm = term.log_operator_norm().exp();
        last_norm = term_norm;
        if term_norm.is_finite() && term_norm > 0.0 {
            sum += term.dense();
        }
        if term_norm >= prev_norm {
            non_decay += 1;
            if non_decay >= 10 && term_norm > tol {
                return Err(Error::SeriesDiverging {
                    term: n,
                    norm: term_norm,
                });
            }
        } else {
            non_decay = 0;
        }
        prev_norm = term_norm;
        n += 1;
        if term_norm < tol && n >= 2 {
            break;
        }
        // Advance cur to Tⁿ(θʲ)Π₂(θʲ) for the next term.
        cur = cur.premultiply(a_n);
    }

    let psi = -sum;
    let f0b = f0_family[idx(at)].basis();
    let graph = f0b + &psi * f0b;
    Ok((Subspace::new(graph)?, n, last_norm))
}

/// Invariant complement family over `f0_family` via the truncated
/// graph-transform series: F(θʲω) is the graph of Ψ(θʲω) over F₀(θʲω) for
/// j in [family_start, family_start + out_steps).
///
/// Truncation stops once a term norm drops under 1e-10; term norms failing
/// to decay over 10 consecutive terms raise `SeriesDiverging`. The output
/// satisfies A(θʲω)F(θʲω) ⊆ F(θʲ⁺¹ω) within the gap tolerance, and stays
/// disjoint from the supplied cone when one is given.
pub fn graph_transform_complement(
    trace: &OrbitTrace,
    e_family: &[Subspace],
    f0_family: &[Subspace],
    family_start: i64,
    out_steps: usize,
    cone: Option<&ConeRankK>,
    cfg: &NumericsConfig,
) -> Result<Vec<Subspace>> {
    if e_family.len() != f0_family.len() {
        return Err(Error::InvalidArgument(
            "E and F0 families must share a window".into(),
        ));
    }
    let mut out = Vec::with_capacity(out_steps);
    for i in 0..out_steps {
        let at = family_start + i as i64;
        let (f, _, _) = graph_transform_at(trace, e_family, f0_family, family_start, at, 1e-10)?;
        out.push(f);
    }
    for i in 0..out.len().saturating_sub(1) {
        let j = family_start + i as i64;
        let image = out[i].map_through(trace.matrix(j)?)?;
        let gap = gap_distance(&image, &out[i + 1]);
        if gap > FAMILY_GAP_TOL {
            return Err(Error::NotInvariant { step: j, gap });
        }
    }
    if let Some(c) = cone {
        for f in &out {
            let worst = crate::cone::subspace_worst_margin(c, f, cfg);
            if worst >= 0.0 {
                return Err(Error::NotInCone { margin: worst });
            }
        }
    }
    Ok(out)
}

/// Fits log(‖(Tⁿ|_E)⁻¹‖ ‖Tⁿ|_F‖) ≈ log K − δn along the family; returns
/// (δ, certified K, raw slope).
pub(crate) fn fit_uniform_separation<S: MatrixSeq>(
    seq: &S,
    family: &[Splitting],
    start: i64,
) -> Result<(f64, f64, f64)> {
    let steps = family.len() - 1;
    if steps < 4 {
        return Err(Error::InvalidArgument(
            "separation fit needs at least 4 steps".into(),
        ));
    }
    let mut prod_e = ScaledMatrix::identity(family[0].e().dim());
    let mut prod_f = ScaledMatrix::identity(family[0].f().dim());
    let mut ys = Vec::with_capacity(steps);
    for i in 0..steps {
        let j = start + i as i64;
        let a = seq.mat(j);
        let me = restricted_step(a, family[i].e(), family[i + 1].e(), j, FAMILY_GAP_TOL)?;
        let mf = restricted_step(a, family[i].f(), family[i + 1].f(), j, FAMILY_GAP_TOL)?;
        prod_e = prod_e.premultiply(&me);
        prod_f = prod_f.premultiply(&mf);
        ys.push(prod_e.log_inverse_norm() + prod_f.log_operator_norm());
    }
    let n = ys.len() as f64;
    let mx = (n + 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &y) in ys.iter().enumerate() {
        let x = (i + 1) as f64;
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    let slope = num / den;
    let delta = -slope;
    if delta.is_nan() || delta <= 0.0 {
        return Err(Error::NoConvergence(format!(
            "separation product does not decay (slope {slope:.3e})"
        )));
    }
    let k_bound = ys
        .iter()
        .enumerate()
        .map(|(i, &y)| y + delta * (i + 1) as f64)
        .fold(0.0_f64, f64::max)
        .exp()
        .max(1.0);
    Ok((delta, k_bound, slope))
}

/// Extracts the dominated splitting carried by a contracting cone family:
/// the fast space is the in-cone push-forward limit, the slow space the
/// graph-transform complement over the cone's F₀, and (δ, K) are fitted to
/// the uniform-separation bound.
///
/// The caller is responsible for the family having passed the contraction
/// checks; a cheap per-step invariance probe guards obvious misuse. The
/// fitted slope is asserted against the orbit average of
/// τ_S(ω) = (p(χ(ω))−1)/(p(χ(ω))+1), with χ estimated from per-step image
/// separations when not supplied.
pub fn extract_dominated_splitting(
    trace: &OrbitTrace,
    cones: &ConeFamily,
    chi: Option<&ChiFunction>,
    cfg: &NumericsConfig,
) -> Result<SplittingFamily> {
    let (lo, hi) = trace.window();
    let burn_in = ((hi - lo) / 4).clamp(8, 64);
    let reserve = ((hi - lo) / 4).clamp(8, 400);
    let start = lo + burn_in;
    let end = hi - reserve;
    if end - start < 8 {
        return Err(Error::InvalidArgument(
            "trace too short for extraction".into(),
        ));
    }

    // Quick invariance probe of the supplied cone family.
    for j in [lo, (lo + hi) / 2, end] {
        let c = cones.at(j);
        for (s, u) in c
            .section_samples(16, 0.5, cfg.grid_seed ^ 31)
            .iter()
            .enumerate()
        {
            let img = trace.matrix(j)? * u;
            let m = cones.at(j + 1).margin(&img)?;
            if m <= 0.0 {
                return Err(Error::NotStrictlyInvariant { margin: m, sample: s });
            }
        }
    }

    // Fast family: forward sweep of the cone's core space; the stretch
    // before `start` is burn-in. The family extends to the window end so
    // the graph series keeps full lookahead at every output step.
    let e0 = cones.at(lo).splitting().e().clone();
    let e_family = forward_family(trace, &e0, start, hi)?;

    // Slow family: graph transform over the cone's F₀ at each step.
    let f0_family: Vec<Subspace> = (start..=hi)
        .map(|j| cones.at(j).splitting().f().clone())
        .collect();
    let steps = (end - start) as usize;
    let f_family = graph_transform_complement(
        trace,
        &e_family,
        &f0_family,
        start,
        steps,
        Some(cones.at(start)),
        cfg,
    )?;

    let mut splittings = Vec::with_capacity(steps);
    for i in 0..steps {
        splittings.push(make_splitting(&e_family[i], &f_family[i])?);
    }
    let (delta, k_bound, rate_fit) = fit_uniform_separation(trace, &splittings, start)?;

    // The fitted decay may not be slower than the average analytic
    // contraction coefficient along the orbit.
    let mut tau_log_sum = 0.0;
    let mut tau_n = 0usize;
    let probe_step = (steps / 16).max(1) as i64;
    let mut j = start;
    while j < start + steps as i64 {
        let chi_j = match chi {
            Some(f) => f.at(j),
            None => {
                let pair = crate::cone::ConePair::new(
                    cones.at(j).clone(),
                    cones.at(j + 1).clone(),
                    crate::linalg::LinearMap::new(trace.matrix(j)?.clone()),
                )?;
                let sep = crate::cone::image_complement_separation(&pair, cfg);
                if sep > 0.0 {
                    1.0 / sep
                } else {
                    f64::INFINITY
                }
            }
        };
        tau_log_sum += tau_s_from_chi(chi_j.max(1.0)).ln();
        tau_n += 1;
        j += probe_step;
    }
    let tau_bar_log = tau_log_sum / tau_n as f64;
    assert!(
        rate_fit <= tau_bar_log + 0.05,
        "fitted separation slope {rate_fit:.4} exceeds the contraction budget {:.4}",
        tau_bar_log + 0.05
    );

    Ok(SplittingFamily {
        start,
        splittings,
        delta,
        k_bound,
        rate_fit,
    })
}

/// ζ-index data over a splitting family: rate δ (fitted value after a 5%
/// safety haircut unless overridden), truncation length and the constant
/// entering the tail certificate.
#[derive(Debug, Clone)]
pub struct ZetaConeData<'a> {
    pub trace: &'a OrbitTrace,
    pub family: &'a SplittingFamily,
    pub delta: f64,
    pub truncation: usize,
}

impl<'a> ZetaConeData<'a> {
    /// `delta_override` substitutes the fitted (haircut) rate — useful when
    /// the exact rate is known in closed form.
    pub fn new(
        trace: &'a OrbitTrace,
        family: &'a SplittingFamily,
        delta_override: Option<f64>,
    ) -> Result<Self> {
        let delta = match delta_override {
            Some(d) => {
                if d.is_nan() || d <= 0.0 {
                    return Err(Error::InvalidArgument("zeta rate must be positive".into()));
                }
                d
            }
            None => family.delta * 0.95,
        };
        let q = (-0.5 * delta).exp();
        let needed = ((family.k_bound / (1e-8 * (1.0 - q))).ln() / (0.5 * delta)).ceil() as usize;
        let avail = (family.end() - family.start) as usize;
        let truncation = needed.clamp(8, avail.max(8));
        Ok(ZetaConeData {
            trace,
            family,
            delta,
            truncation,
        })
    }

    /// Restricted-product series data at step j.
    pub fn series_at(&self, j: i64) -> Result<ZetaSeries> {
        let n = self
            .truncation
            .min((self.family.end() - j).max(0) as usize)
            .min((self.trace.window().1 - j).max(0) as usize);
        if n < 4 {
            return Err(Error::WindowExceeded {
                from: j,
                to: j + 4,
                lo: self.family.start,
                hi: self.family.end(),
            });
        }
        let sp0 = self.family.at(j);
        let mut e_terms = vec![ScaledMatrix::identity(sp0.e().dim())];
        let mut f_terms = vec![ScaledMatrix::identity(sp0.f().dim())];
        let mut pe = ScaledMatrix::identity(sp0.e().dim());
        let mut pf = ScaledMatrix::identity(sp0.f().dim());
        for m in 0..n {
            let jm = j + m as i64;
            let a = self.trace.matrix(jm)?;
            let me = restricted_step(
                a,
                self.family.at(jm).e(),
                self.family.at(jm + 1).e(),
                jm,
                FAMILY_GAP_TOL,
            )?;
            let mf = restricted_step(
                a,
                self.family.at(jm).f(),
                self.family.at(jm + 1).f(),
                jm,
                FAMILY_GAP_TOL,
            )?;
            pe = pe.premultiply(&me);
            pf = pf.premultiply(&mf);
            e_terms.push(pe.clone());
            f_terms.push(pf.clone());
        }
        Ok(ZetaSeries::new(
            self.delta,
            e_terms,
            f_terms,
            self.family.k_bound,
        ))
    }
}

/// ζ value with its certified truncation error. Vectors within 1e-12 of F
/// give ∞ (error 0), within 1e-12 of E give 0.
pub fn zeta_index(data: &ZetaConeData<'_>, j: i64, v: &RealVector) -> Result<(f64, f64)> {
    let sp = data.family.at(j);
    let scale = v.norm();
    if scale <= 1e-300 {
        return Err(Error::ZeroVector);
    }
    let pe = sp.project_e(v);
    let pf = sp.project_f(v);
    if pf.norm() <= 1e-12 * scale {
        return Ok((0.0, 0.0));
    }
    if pe.norm() <= 1e-12 * scale {
        return Ok((f64::INFINITY, 0.0));
    }
    let series = data.series_at(j)?;
    let ce = sp.e().basis().transpose() * &pe;
    let cf = sp.f().basis().transpose() * &pf;
    Ok((series.ratio_series(&ce, &cf), series.tail_bound(&ce, &cf)))
}

/// Realizes the unit sublevel set {v : ζ(v) ≤ 1} as a ζ-weighted cone. The
/// summary opening is the supremum of the boundary ratio over sampled
/// direction pairs (exact for constant diagonal cocycles).
pub fn build_zeta_cone(data: &ZetaConeData<'_>, j: i64, cfg: &NumericsConfig) -> Result<ConeRankK> {
    let sp = data.family.at(j).clone();
    let series = data.series_at(j)?;
    let ge = unit_sphere_grid(sp.e().dim(), 64, cfg.grid_seed ^ 41);
    let gf = unit_sphere_grid(sp.f().dim(), 64, cfg.grid_seed ^ 42);
    let mut opening = 0.0_f64;
    for ce in &ge {
        for cf in &gf {
            let s = series.ratio_series(ce, cf);
            if s > 0.0 {
                opening = opening.max(1.0 / s);
            }
        }
    }
    Ok(ConeRankK::zeta_weighted(sp, opening, series))
}

/// Full finite-dimensional Oseledets decomposition along the trace:
/// exponent clusters (gaps above 1e-3 separate; near-equal exponents merge
/// into one block) with their per-step block subspaces.
pub fn met_decomposition(trace: &OrbitTrace, _cfg: &NumericsConfig) -> Result<OseledetsData> {
    let report = lyapunov_spectrum(trace)?;
    let (lo, hi) = trace.window();
    let burn_in = ((hi - lo) / 6).clamp(8, 64);
    let reserve = ((hi - lo) / 6).clamp(8, 400);
    let start = lo + burn_in;
    let end = hi - reserve;
    if end - start < 8 {
        return Err(Error::InvalidArgument("trace too short for MET".into()));
    }

    let mut clusters: Vec<(f64, usize)> = Vec::new();
    for &l in &report.spectrum {
        match clusters.last_mut() {
            Some((mean, count)) if *mean - l < 1e-3 => {
                *mean = (*mean * *count as f64 + l) / (*count as f64 + 1.0);
                *count += 1;
            }
            _ => clusters.push((l, 1)),
        }
    }

    let steps = (end - start) as usize;
    let blocks = decompose_seq(trace, &clusters, start, steps)?;
    Ok(OseledetsData {
        start,
        exponents: clusters.iter().map(|c| c.0).collect(),
        stderr: report.spectrum_stderr.clone(),
        blocks,
    })
}

/// Recursive block extraction over a matrix sequence: peel the top cluster
/// by push-forward plus graph transform, then recurse on the slow bundle
/// in restricted coordinates.
fn decompose_seq<S: MatrixSeq>(
    seq: &S,
    clusters: &[(f64, usize)],
    start: i64,
    steps: usize,
) -> Result<Vec<Vec<Subspace>>> {
    let d = seq.dim();
    if clusters.len() == 1 {
        let full = Subspace::new(DMatrix::identity(d, d))?;
        return Ok(vec![vec![full; steps]]);
    }
    let k = clusters[0].1;

    // Top block seed: top-k left singular subspace of a short product.
    let probe_len = (32).min((seq.hi() - seq.lo()) as usize / 2).max(4);
    let mut probe = ScaledMatrix::identity(d);
    for j in seq.lo()..(seq.lo() + probe_len as i64) {
        probe = probe.premultiply(seq.mat(j));
    }
    let svd = probe.unit_factor().clone().svd(true, false);
    let u = svd.u.expect("svd with u");
    let e0 = Subspace::new(u.columns(0, k).into_owned())?;

    // Families run to the window end so the series keeps lookahead; the
    // slow family is kept only where the series decayed cleanly within the
    // window.
    let e_family = forward_family(seq, &e0, start, seq.hi())?;
    let f0_family: Vec<Subspace> = e_family.iter().map(|e| e.orthogonal_complement()).collect();
    let avail = (seq.hi() - start) as usize;
    let mut f_family: Vec<Subspace> = Vec::with_capacity(avail);
    for i in 0..avail {
        let at = start + i as i64;
        let (f, _, last_norm) = graph_transform_at(seq, &e_family, &f0_family, start, at, 1e-10)?;
        if last_norm.is_nan() || last_norm >= 1e-10 {
            break;
        }
        f_family.push(f);
    }
    if f_family.len() < 2 {
        return Err(Error::NoConvergence(
            "window too short for the complement series".into(),
        ));
    }

    // Restricted sequence on the slow bundle, in the f_family coordinates.
    let mut sub_mats = Vec::with_capacity(f_family.len() - 1);
    for i in 0..f_family.len() - 1 {
        let j = start + i as i64;
        let m = restricted_step(seq.mat(j), &f_family[i], &f_family[i + 1], j, FAMILY_GAP_TOL)?;
        sub_mats.push(m);
    }
    let sub_seq = SliceSeq {
        mats: &sub_mats,
        start,
    };
    let inner_steps = steps.min(sub_mats.len());
    let sub_blocks = decompose_seq(&sub_seq, &clusters[1..], start, inner_steps)?;

    let mut blocks: Vec<Vec<Subspace>> = Vec::with_capacity(clusters.len());
    blocks.push(e_family[..steps].to_vec());
    for sub in sub_blocks {
        let mut lifted = Vec::with_capacity(steps);
        for (i, b) in sub.iter().enumerate().take(steps) {
            lifted.push(Subspace::new(f_family[i].basis() * b.basis())?);
        }
        // Blocks are invariant, so the common window is completed by
        // pushing the last computed step forward.
        while lifted.len() < steps {
            let i = lifted.len();
            let prev = lifted.last().expect("nonempty");
            lifted.push(prev.map_through(seq.mat(start + i as i64 - 1))?);
        }
        blocks.push(lifted);
    }
    Ok(blocks)
}

/// A nested orbit-adapted cone of the level hierarchy: membership is
/// |π'v|_{ω,i} ≤ l |v − π'v|_{ω,i} in the Lyapunov norm of its level.
#[derive(Debug, Clone)]
pub struct LyapunovCone {
    pub level: usize,
    pub opening: f64,
    pub at: i64,
    pub window: usize,
    pub epsilon: f64,
    met: Arc<OseledetsData>,
}

impl LyapunovCone {
    /// Lyapunov norms of the upper and lower oblique components of v.
    pub fn component_norms(&self, trace: &OrbitTrace, v: &RealVector) -> Result<(f64, f64)> {
        let (upper, tail) = met_oblique_components(&self.met, self.level, self.at, v)?;
        let up = if upper.norm() <= 1e-14 * v.norm() {
            0.0
        } else {
            lyapunov_norm(
                trace,
                &self.met,
                self.level,
                &upper,
                self.at,
                self.window,
                Some(self.epsilon),
            )?
            .value
        };
        let lo = if tail.norm() <= 1e-14 * v.norm() {
            0.0
        } else {
            lyapunov_norm(
                trace,
                &self.met,
                self.level,
                &tail,
                self.at,
                self.window,
                Some(self.epsilon),
            )?
            .value
        };
        Ok((up, lo))
    }

    /// Scale-invariant signed membership margin.
    pub fn margin(&self, trace: &OrbitTrace, v: &RealVector) -> Result<f64> {
        let (up, lo) = self.component_norms(trace, v)?;
        Ok((self.opening * up - lo) / (up + lo).max(1e-300))
    }

    /// Unit samples of the cone section.
    pub fn section_samples(
        &self,
        trace: &OrbitTrace,
        count: usize,
        boundary_fraction: f64,
        seed: u64,
    ) -> Result<Vec<RealVector>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = trace.dim();
        let mut upper_basis = DMatrix::zeros(d, 0);
        for m in 0..=self.level {
            upper_basis = stack(&upper_basis, self.met.block(m, self.at).basis());
        }
        let tail = self.met.tail_space(self.level, self.at)?;
        let mut out = Vec::with_capacity(count);
        let n_boundary = (count as f64 * boundary_fraction) as usize;
        for i in 0..count {
            let cu = crate::linalg::random_unit_vector(upper_basis.ncols(), &mut rng);
            let ct = crate::linalg::random_unit_vector(tail.dim(), &mut rng);
            let u = &upper_basis * cu;
            let t = tail.basis() * ct;
            let (nu, _) = self.component_norms(trace, &u)?;
            let (_, nt) = self.component_norms(trace, &t)?;
            let cap = self.opening * nu / nt;
            let frac = if i < n_boundary {
                1.0
            } else {
                rand::Rng::random::<f64>(&mut rng)
            };
            let v = &u + &t * (cap * frac);
            out.push(&v / v.norm());
        }
        Ok(out)
    }
}

pub(crate) fn stack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let d = if a.ncols() > 0 { a.nrows() } else { b.nrows() };
    let mut out = DMatrix::zeros(d, a.ncols() + b.ncols());
    if a.ncols() > 0 {
        out.columns_mut(0, a.ncols()).copy_from(a);
    }
    if b.ncols() > 0 {
        out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    }
    out
}

/// Oblique components of v for the splitting (⊕_{m≤level} E_m) ⊕ E'_level.
pub fn met_oblique_components(
    met: &OseledetsData,
    level: usize,
    at: i64,
    v: &RealVector,
) -> Result<(RealVector, RealVector)> {
    let d = v.len();
    let mut basis = DMatrix::zeros(d, 0);
    for m in 0..=level {
        basis = stack(&basis, met.block(m, at).basis());
    }
    let upper_cols = basis.ncols();
    let tail = met.tail_space(level, at)?;
    basis = stack(&basis, tail.basis());
    if basis.ncols() != d {
        return Err(Error::InvalidArgument("blocks do not span the space".into()));
    }
    let inv = basis
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("block basis is singular".into()))?;
    let coords = inv * v;
    let mut upper = RealVector::zeros(d);
    for c in 0..upper_cols {
        upper += basis.column(c) * coords[c];
    }
    let lower = v - &upper;
    Ok((upper, lower))
}

/// One-step invariance witness of a level cone:
///
/// ```text
/// χ = (1 + (l·i + e^ε)(e^ε + l) / (l (e^{λ_i − λ_{i+1} − 2ε} − e^ε))) · K · max‖π‖
/// ```
///
/// where i counts the upper blocks, K is the norm-equivalence constant and
/// max‖π‖ the largest block-projection norm at the image step.
pub fn level_chi(
    met: &OseledetsData,
    level: usize,
    opening: f64,
    epsilon: f64,
    k_equiv: f64,
    max_proj_norm: f64,
) -> Result<f64> {
    if level + 1 >= met.levels() {
        return Err(Error::InvalidArgument(
            "level separation needs a lower block".into(),
        ));
    }
    let gap = met.exponents[level] - met.exponents[level + 1];
    let e_eps = epsilon.exp();
    let expanding = (gap - 2.0 * epsilon).exp() - e_eps;
    if expanding <= 0.0 {
        return Err(Error::GapTooSmall {
            gap,
            min: 2.0 * epsilon,
        });
    }
    let i = (level + 1) as f64;
    let l = opening;
    Ok((1.0 + (l * i + e_eps) * (e_eps + l) / (l * expanding)) * k_equiv * max_proj_norm)
}

/// Builds the nested family of orbit-adapted cones for the requested
/// levels. Openings follow the recursion l_{i+1} ≥ K_{i+1} K_i ‖π‖ l_i from
/// the supplied base opening; nesting C_i ⊂ C_{i+1} is asserted on samples.
pub fn build_nested_cones(
    trace: &OrbitTrace,
    met: &OseledetsData,
    levels: &[usize],
    base_opening: f64,
    at: i64,
    window: usize,
    cfg: &NumericsConfig,
) -> Result<Vec<LyapunovCone>> {
    if levels.is_empty() {
        return Err(Error::InvalidArgument("no levels requested".into()));
    }
    let p = met.levels();
    for &l in levels {
        if l >= p {
            return Err(Error::InvalidArgument(format!(
                "level {l} out of range for {p} blocks"
            )));
        }
        if l + 1 < p {
            let gap = met.exponents[l] - met.exponents[l + 1];
            if gap < 1e-3 {
                return Err(Error::GapTooSmall { gap, min: 1e-3 });
            }
        } else {
            // The deepest level has no separating gap below it.
            return Err(Error::GapTooSmall {
                gap: 0.0,
                min: 1e-3,
            });
        }
    }
    let met = Arc::new(met.clone());
    let mut min_gap = f64::INFINITY;
    for m in 0..p - 1 {
        min_gap = min_gap.min(met.exponents[m] - met.exponents[m + 1]);
    }
    let eps = min_gap / 10.0;

    let mut cones = Vec::with_capacity(levels.len());
    let mut opening = base_opening;
    let mut prev_level: Option<usize> = None;
    for &level in levels {
        if let Some(prev) = prev_level {
            // Opening recursion with empirical equivalence constants.
            let k_prev = empirical_k(trace, &met, prev, at, window, eps)?;
            let k_cur = empirical_k(trace, &met, level, at, window, eps)?;
            let tail = met.tail_space(level, at)?;
            let proj = if tail.is_trivial() {
                1.0
            } else {
                let mut basis = DMatrix::zeros(trace.dim(), 0);
                for m in 0..=level {
                    basis = stack(&basis, met.block(m, at).basis());
                }
                let joined = Subspace::new(basis)?;
                operator_norm(make_splitting(&joined, &tail)?.proj_f())
            };
            opening = opening.max(k_prev * k_cur * proj * opening);
        }
        cones.push(LyapunovCone {
            level,
            opening,
            at,
            window,
            epsilon: eps,
            met: Arc::clone(&met),
        });
        prev_level = Some(level);
    }

    // Sampled nesting check.
    for w in cones.windows(2) {
        let samples = w[0].section_samples(trace, 24, 0.5, cfg.grid_seed ^ 51)?;
        for v in &samples {
            let m = w[1].margin(trace, v)?;
            assert!(
                m >= -1e-9,
                "nesting violated between levels {} and {}: margin {m:.3e}",
                w[0].level,
                w[1].level
            );
        }
    }
    Ok(cones)
}

/// Empirical norm-equivalence constant sup |v|_{ω,i} / |v| over a sampled
/// sphere.
fn empirical_k(
    trace: &OrbitTrace,
    met: &OseledetsData,
    level: usize,
    at: i64,
    window: usize,
    eps: f64,
) -> Result<f64> {
    let d = trace.dim();
    let mut k = 1.0_f64;
    for v in unit_sphere_grid(d, 64, 7) {
        let val = lyapunov_norm(trace, met, level, &v, at, window, Some(eps))?;
        k = k.max(val.k_ratio);
    }
    Ok(k)
}

/// Serializable summary of a splitting family for reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplittingSummary {
    pub start: i64,
    pub steps: usize,
    pub dim_e: usize,
    pub dim_f: usize,
    pub delta: f64,
    pub k_bound: f64,
    pub rate_fit: f64,
    /// Per-step sine of the smallest principal angle between E and F.
    pub min_angles: Vec<f64>,
}

impl From<&SplittingFamily> for SplittingSummary {
    fn from(f: &SplittingFamily) -> Self {
        SplittingSummary {
            start: f.start,
            steps: f.len(),
            dim_e: f.splittings[0].e().dim(),
            dim_f: f.splittings[0].f().dim(),
            delta: f.delta,
            k_bound: f.k_bound,
            rate_fit: f.rate_fit,
            min_angles: f
                .splittings
                .iter()
                .map(|s| s.min_principal_sine())
                .collect(),
        }
    }
}
