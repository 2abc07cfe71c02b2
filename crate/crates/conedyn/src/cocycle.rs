//! Base dynamics, cocycle products and Lyapunov-exponent estimation.
//!
//! The cocycle over a base map θ is the ordered product
//!
//! ```text
//! Tⁿ(ω) = A(θⁿ⁻¹ω) ··· A(ω),
//! ```
//!
//! and the top exponent is λ₀ = lim (1/n) log ‖Tⁿ(ω)‖. The full spectrum is
//! estimated by QR renormalization along the orbit; products are cached in
//! log-scaled form so that windows of any length stay finite. In finite
//! dimension every operator is compact, so the measure-of-noncompactness
//! exponent is reported as the constant −∞.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{LinearMap, RealVector, Splitting, Subspace};
use crate::scaled::ScaledMatrix;

/// How many leading forward products are cached in matrix form.
const FORWARD_CACHE: usize = 256;

/// Driving base system: an ergodic measure-preserving invertible map
/// together with the data needed to sample two-sided symbol windows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseSystem {
    /// I.i.d. draws from a finite alphabet.
    Bernoulli { probabilities: Vec<f64> },
    /// Stationary finite-state chain (rows of `transition` sum to one).
    Markov {
        transition: Vec<Vec<f64>>,
        stationary: Vec<f64>,
    },
    /// Irrational rotation; the symbol is the partition cell of the point.
    CircleRotation {
        rotation_number: f64,
        partitions: usize,
        #[serde(default)]
        initial: Option<f64>,
    },
}

impl BaseSystem {
    pub fn symbol_count(&self) -> usize {
        match self {
            BaseSystem::Bernoulli { probabilities } => probabilities.len(),
            BaseSystem::Markov { transition, .. } => transition.len(),
            BaseSystem::CircleRotation { partitions, .. } => *partitions,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BaseSystem::Bernoulli { probabilities } => {
                if probabilities.is_empty() || probabilities.iter().any(|&p| p < 0.0) {
                    return Err(Error::InvalidArgument(
                        "bernoulli probabilities must be nonnegative and nonempty".into(),
                    ));
                }
                let s: f64 = probabilities.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidArgument(format!(
                        "bernoulli probabilities sum to {s}, expected 1"
                    )));
                }
            }
            BaseSystem::Markov {
                transition,
                stationary,
            } => {
                let m = transition.len();
                if m == 0 || stationary.len() != m {
                    return Err(Error::InvalidArgument(
                        "markov transition and stationary sizes disagree".into(),
                    ));
                }
                for (i, row) in transition.iter().enumerate() {
                    if row.len() != m {
                        return Err(Error::InvalidArgument(format!(
                            "markov transition row {i} has length {} != {m}",
                            row.len()
                        )));
                    }
                    let s: f64 = row.iter().sum();
                    if (s - 1.0).abs() > 1e-12 || row.iter().any(|&p| p < 0.0) {
                        return Err(Error::InvalidArgument(format!(
                            "markov transition row {i} is not a probability vector"
                        )));
                    }
                }
                let s: f64 = stationary.iter().sum();
                if (s - 1.0).abs() > 1e-12 || stationary.iter().any(|&p| p < 0.0) {
                    return Err(Error::InvalidArgument(
                        "markov stationary vector is not a distribution".into(),
                    ));
                }
                for j in 0..m {
                    let pj: f64 = (0..m).map(|i| stationary[i] * transition[i][j]).sum();
                    if (pj - stationary[j]).abs() > 1e-8 {
                        return Err(Error::InvalidArgument(format!(
                            "stationary vector is not invariant at state {j}"
                        )));
                    }
                }
            }
            BaseSystem::CircleRotation {
                rotation_number,
                partitions,
                initial,
            } => {
                if !(0.0..1.0).contains(rotation_number) {
                    return Err(Error::InvalidArgument(format!(
                        "rotation number {rotation_number} outside [0,1)"
                    )));
                }
                if *partitions == 0 {
                    return Err(Error::InvalidArgument(
                        "rotation needs partitions >= 1".into(),
                    ));
                }
                if let Some(x0) = initial {
                    if !(0.0..1.0).contains(x0) {
                        return Err(Error::InvalidArgument(format!(
                            "rotation initial point {x0} outside [0,1)"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Two-sided symbol window for j ∈ [−n, n], centered stationary draw.
    ///
    /// For the rotation the inverse is exact; for the shift kinds the past
    /// is sampled once and frozen.
    fn sample_window(&self, n: usize, seed: u64) -> Vec<usize> {
        let len = 2 * n + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            BaseSystem::Bernoulli { probabilities } => (0..len)
                .map(|_| draw_categorical(probabilities, &mut rng))
                .collect(),
            BaseSystem::Markov {
                transition,
                stationary,
            } => {
                let mut out = Vec::with_capacity(len);
                let mut state = draw_categorical(stationary, &mut rng);
                out.push(state);
                for _ in 1..len {
                    state = draw_categorical(&transition[state], &mut rng);
                    out.push(state);
                }
                out
            }
            BaseSystem::CircleRotation {
                rotation_number,
                partitions,
                initial,
            } => {
                let x0 = initial.unwrap_or_else(|| rng.random::<f64>());
                let m = *partitions as f64;
                (0..len)
                    .map(|i| {
                        let j = i as f64 - n as f64;
                        let x = (x0 + j * rotation_number).rem_euclid(1.0);
                        ((x * m) as usize).min(partitions - 1)
                    })
                    .collect()
            }
        }
    }
}

fn draw_categorical<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// A cocycle generator: one matrix per base symbol.
#[derive(Debug, Clone)]
pub struct CocycleSpec {
    pub base: BaseSystem,
    pub generators: Vec<LinearMap>,
    pub dim: usize,
}

impl CocycleSpec {
    pub fn new(base: BaseSystem, generators: Vec<LinearMap>) -> Result<Self> {
        base.validate()?;
        if generators.len() != base.symbol_count() {
            return Err(Error::InvalidArgument(format!(
                "{} generator matrices for {} base symbols",
                generators.len(),
                base.symbol_count()
            )));
        }
        let dim = generators
            .first()
            .ok_or_else(|| Error::InvalidArgument("no generator matrices".into()))?
            .dim();
        for (i, g) in generators.iter().enumerate() {
            if g.dim() != dim {
                return Err(Error::InvalidArgument(format!(
                    "generator {i} has dimension {} != {dim}",
                    g.dim()
                )));
            }
            if !g.is_injective() {
                return Err(Error::InvalidArgument(format!(
                    "generator {i} fails the injectivity check"
                )));
            }
        }
        Ok(CocycleSpec {
            base,
            generators,
            dim,
        })
    }

    /// Constant cocycle (one matrix, trivial base).
    pub fn constant(a: LinearMap) -> Result<Self> {
        CocycleSpec::new(
            BaseSystem::Bernoulli {
                probabilities: vec![1.0],
            },
            vec![a],
        )
    }
}

/// A realized base-orbit segment with the matrix sequence over a two-sided
/// window [−n, n], cached renormalized forward products and running
/// log ‖Tᵏ‖.
#[derive(Debug, Clone)]
pub struct OrbitTrace {
    dim: usize,
    half_window: usize,
    symbols: Vec<usize>,
    generators: Vec<DMatrix<f64>>,
    forward_cache: Vec<ScaledMatrix>,
    log_norm_partials: Vec<f64>,
    qr_log_diagonals: Vec<Vec<f64>>,
}

impl OrbitTrace {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Forward length n; the window covers steps j ∈ [−n, n].
    pub fn len(&self) -> usize {
        self.half_window
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn window(&self) -> (i64, i64) {
        (-(self.half_window as i64), self.half_window as i64)
    }

    pub fn symbol(&self, j: i64) -> Result<usize> {
        let (lo, hi) = self.window();
        if j < lo || j > hi {
            return Err(Error::WindowExceeded {
                from: j,
                to: j,
                lo,
                hi,
            });
        }
        Ok(self.symbols[(j + self.half_window as i64) as usize])
    }

    /// A(θʲω).
    pub fn matrix(&self, j: i64) -> Result<&DMatrix<f64>> {
        Ok(&self.generators[self.symbol(j)?])
    }

    /// Running log ‖Tᵏ(ω)‖ from the center, k = 0..=n.
    pub fn log_norm_partials(&self) -> &[f64] {
        &self.log_norm_partials
    }

    /// Per-step log |R_ii| of the QR renormalization stream from the center.
    pub fn qr_log_diagonals(&self) -> &[Vec<f64>] {
        &self.qr_log_diagonals
    }

    /// Ordered product A(θ^{j+s−1}ω)···A(θʲω) in log-scaled form.
    ///
    /// Satisfies the cocycle identity T^{m+n}(ω) = T^m(θⁿω) T^n(ω).
    pub fn product(&self, from: i64, steps: usize) -> Result<ScaledMatrix> {
        let (lo, hi) = self.window();
        let to = from + steps as i64;
        if from < lo || to > hi + 1 {
            return Err(Error::WindowExceeded { from, to, lo, hi });
        }
        if from == 0 && steps < self.forward_cache.len() {
            return Ok(self.forward_cache[steps].clone());
        }
        let mut p = ScaledMatrix::identity(self.dim);
        for j in from..to {
            p = p.premultiply(self.matrix(j)?);
        }
        Ok(p)
    }
}

/// Samples a deterministic orbit trace of forward length `n` (the two-sided
/// window holds 2n+1 symbols).
pub fn sample_orbit(spec: &CocycleSpec, n: usize, seed: u64) -> Result<OrbitTrace> {
    if n < 1 {
        return Err(Error::InvalidArgument(
            "orbit length must be at least 1".into(),
        ));
    }
    let symbols = spec.base.sample_window(n, seed);
    let generators: Vec<DMatrix<f64>> = spec
        .generators
        .iter()
        .map(|g| g.matrix().clone())
        .collect();
    let dim = spec.dim;

    let mut forward_cache = Vec::with_capacity(FORWARD_CACHE.min(n) + 1);
    forward_cache.push(ScaledMatrix::identity(dim));
    let mut log_norm_partials = Vec::with_capacity(n + 1);
    log_norm_partials.push(0.0);
    let mut qr_log_diagonals = Vec::with_capacity(n);

    let mut product = ScaledMatrix::identity(dim);
    let mut q = DMatrix::<f64>::identity(dim, dim);
    for k in 0..n {
        let a = &generators[symbols[n + k]];
        product = product.premultiply(a);
        if k < FORWARD_CACHE {
            forward_cache.push(product.clone());
        }
        log_norm_partials.push(product.log_operator_norm());

        let qr = (a * &q).qr();
        let r = qr.r();
        let mut logs = Vec::with_capacity(dim);
        for i in 0..dim {
            logs.push(r[(i, i)].abs().max(f64::MIN_POSITIVE).ln());
        }
        qr_log_diagonals.push(logs);
        q = qr.q();
        // Fix signs so the renormalized frame varies continuously.
        for i in 0..dim {
            if r[(i, i)] < 0.0 {
                for row in 0..dim {
                    q[(row, i)] = -q[(row, i)];
                }
            }
        }
    }

    Ok(OrbitTrace {
        dim,
        half_window: n,
        symbols,
        generators,
        forward_cache,
        log_norm_partials,
        qr_log_diagonals,
    })
}

/// Exponent estimates with batch-means standard errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentReport {
    pub lambda_top: f64,
    pub lambda_top_stderr: f64,
    /// Full spectrum, sorted non-increasing.
    pub spectrum: Vec<f64>,
    pub spectrum_stderr: Vec<f64>,
    /// Rates of the restricted cocycles, when a splitting family was given.
    pub lambda_e: Option<f64>,
    pub lambda_f: Option<f64>,
    pub lambda_e_minus: Option<f64>,
    /// Measure-of-noncompactness exponent: −∞ in finite dimension.
    pub kappa: f64,
}

impl ExponentReport {
    fn from_spectrum(
        lambda_top: f64,
        top_stderr: f64,
        spectrum: Vec<f64>,
        stderr: Vec<f64>,
    ) -> Self {
        ExponentReport {
            lambda_top,
            lambda_top_stderr: top_stderr,
            spectrum,
            spectrum_stderr: stderr,
            lambda_e: None,
            lambda_f: None,
            lambda_e_minus: None,
            kappa: f64::NEG_INFINITY,
        }
    }
}

/// Sample standard deviation of the mean over `segments` equal batches.
fn batch_means_stderr(values: &[f64], segments: usize) -> f64 {
    let seg = values.len() / segments;
    if seg == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..segments)
        .map(|s| values[s * seg..(s + 1) * seg].iter().sum::<f64>() / seg as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / segments as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (segments as f64 - 1.0);
    (var / segments as f64).sqrt()
}

/// Top Lyapunov exponent (1/n) log ‖Tⁿ‖ with a batch-means standard error
/// over 10 equal segments.
pub fn top_lyapunov(trace: &OrbitTrace) -> Result<(f64, f64)> {
    let n = trace.len();
    if n < 100 {
        return Err(Error::InvalidArgument(format!(
            "exponent estimation needs length >= 100, got {n}"
        )));
    }
    let lambda = trace.log_norm_partials[n] / n as f64;
    let seg = n / 10;
    let means: Vec<f64> = (0..10)
        .map(|s| {
            (trace.log_norm_partials[(s + 1) * seg] - trace.log_norm_partials[s * seg])
                / seg as f64
        })
        .collect();
    let grand = means.iter().sum::<f64>() / 10.0;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / 9.0;
    Ok((lambda, (var / 10.0).sqrt()))
}

/// Full Lyapunov spectrum via successive QR renormalization.
pub fn lyapunov_spectrum(trace: &OrbitTrace) -> Result<ExponentReport> {
    let n = trace.len();
    if n < 100 {
        return Err(Error::InvalidArgument(format!(
            "exponent estimation needs length >= 100, got {n}"
        )));
    }
    let d = trace.dim();
    let mut rows: Vec<Vec<f64>> = vec![Vec::with_capacity(n); d];
    for logs in &trace.qr_log_diagonals {
        for i in 0..d {
            rows[i].push(logs[i]);
        }
    }
    let mut entries: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| {
            let mean = r.iter().sum::<f64>() / n as f64;
            (mean, batch_means_stderr(r, 10))
        })
        .collect();
    entries.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let spectrum: Vec<f64> = entries.iter().map(|e| e.0).collect();
    let stderr: Vec<f64> = entries.iter().map(|e| e.1).collect();
    let (top, top_err) = top_lyapunov(trace)?;
    Ok(ExponentReport::from_spectrum(top, top_err, spectrum, stderr))
}

/// Tolerance for the invariance of supplied splitting families.
pub const FAMILY_GAP_TOL: f64 = 1e-6;

/// Restricted coordinate matrix of A between two subspaces with orthonormal
/// bases, with an invariance check: gap(A·cur, next) must stay below tol.
pub fn restricted_step(
    a: &DMatrix<f64>,
    cur: &Subspace,
    next: &Subspace,
    step: i64,
    tol: f64,
) -> Result<DMatrix<f64>> {
    let image = cur.map_through(a)?;
    let gap = crate::linalg::gap_distance(&image, next);
    if gap > tol {
        return Err(Error::NotInvariant { step, gap });
    }
    Ok(next.basis().transpose() * (a * cur.basis()))
}

/// Exponents of the cocycle restricted to an invariant splitting family:
/// λ_E = lim (1/n) log ‖Tⁿ|_E‖, λ_F likewise, λ_E⁻ = lim (1/n) log ‖(Tⁿ|_E)⁻¹‖.
///
/// `splittings[i]` is the splitting at step `start + i`; the E family must
/// be carried onto the next E within the gap tolerance, and F into F.
pub fn bundle_exponents(
    trace: &OrbitTrace,
    splittings: &[Splitting],
    start: i64,
) -> Result<ExponentReport> {
    if splittings.len() < 2 {
        return Err(Error::InvalidArgument(
            "bundle exponents need at least two steps".into(),
        ));
    }
    let steps = splittings.len() - 1;
    let mut prod_e = ScaledMatrix::identity(splittings[0].e().dim());
    let mut prod_f = ScaledMatrix::identity(splittings[0].f().dim());
    let mut log_e = Vec::with_capacity(steps);
    for i in 0..steps {
        let j = start + i as i64;
        let a = trace.matrix(j)?;
        let me = restricted_step(a, splittings[i].e(), splittings[i + 1].e(), j, FAMILY_GAP_TOL)?;
        let mf = restricted_step(a, splittings[i].f(), splittings[i + 1].f(), j, FAMILY_GAP_TOL)?;
        prod_e = prod_e.premultiply(&me);
        prod_f = prod_f.premultiply(&mf);
        log_e.push(prod_e.log_operator_norm());
    }
    let n = steps as f64;
    let lambda_e = prod_e.log_operator_norm() / n;
    let lambda_f = prod_f.log_operator_norm() / n;
    let lambda_e_minus = prod_e.log_inverse_norm() / n;
    let spectrum = vec![lambda_e, lambda_f];
    let mut report =
        ExponentReport::from_spectrum(lambda_e, f64::NAN, spectrum, vec![f64::NAN; 2]);
    if steps >= 100 {
        let incr_e: Vec<f64> = std::iter::once(log_e[0])
            .chain(log_e.windows(2).map(|w| w[1] - w[0]))
            .collect();
        report.lambda_top_stderr = batch_means_stderr(&incr_e, 10);
    }
    report.lambda_e = Some(lambda_e);
    report.lambda_f = Some(lambda_f);
    report.lambda_e_minus = Some(lambda_e_minus);
    Ok(report)
}

/// Least-squares slope of log f(θⁿω) against n over the trailing half, and
/// the temperedness verdict |slope| < tol.
pub fn temperedness_slope(values: &[f64], tol: f64) -> Result<(f64, bool)> {
    if values.len() < 100 {
        return Err(Error::InvalidArgument(format!(
            "temperedness check needs length >= 100, got {}",
            values.len()
        )));
    }
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() || v <= 0.0 {
            return Err(Error::NonPositiveValue { index: i });
        }
    }
    let half = values.len() / 2;
    let tail = &values[half..];
    let slope = regression_slope(tail);
    Ok((slope, slope.abs() < tol))
}

fn regression_slope(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = values.iter().map(|v| v.ln()).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &v) in values.iter().enumerate() {
        let dx = i as f64 - mean_x;
        num += dx * (v.ln() - mean_y);
        den += dx * dx;
    }
    num / den
}

/// Tempered envelope of a positive two-sided sequence:
///
/// ```text
/// R_j = max_n max(f, 1/f)(j+n) · exp(−γ|n|)
/// ```
///
/// computed exactly by forward/backward sweeps. Satisfies 1/R ≤ f ≤ R
/// everywhere and e^{−γ} R_j ≤ R_{j+1} ≤ e^{γ} R_j away from the window
/// edges. The symmetrized max(f, 1/f) keeps the lower bound valid for
/// values below one.
pub fn tempered_envelope(values: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if gamma <= 0.0 {
        return Err(Error::InvalidArgument(
            "envelope rate must be positive".into(),
        ));
    }
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() || v <= 0.0 {
            return Err(Error::NonPositiveValue { index: i });
        }
    }
    let g: Vec<f64> = values.iter().map(|&v| v.max(1.0 / v)).collect();
    let q = (-gamma).exp();
    let n = g.len();
    let mut fwd = vec![0.0; n];
    let mut acc = 0.0;
    for j in 0..n {
        acc = g[j].max(acc * q);
        fwd[j] = acc;
    }
    let mut out = vec![0.0; n];
    acc = 0.0;
    for j in (0..n).rev() {
        acc = g[j].max(acc * q);
        out[j] = acc.max(fwd[j]);
    }
    Ok(out)
}

/// Oseledets data consumed by the Lyapunov norm: per-cluster exponents and
/// the per-step block subspaces E_1, …, E_p (direct sum = X).
#[derive(Debug, Clone)]
pub struct OseledetsData {
    pub start: i64,
    pub exponents: Vec<f64>,
    pub stderr: Vec<f64>,
    /// blocks[level][step] is E_{level+1} at trace step start + step.
    pub blocks: Vec<Vec<Subspace>>,
}

impl OseledetsData {
    pub fn levels(&self) -> usize {
        self.exponents.len()
    }

    pub fn steps(&self) -> usize {
        self.blocks.first().map(|b| b.len()).unwrap_or(0)
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn block(&self, level: usize, j: i64) -> &Subspace {
        &self.blocks[level][(j - self.start) as usize]
    }

    /// ⊕_{m>level} E_m at step j, orthonormalized.
    pub fn tail_space(&self, level: usize, j: i64) -> Result<Subspace> {
        let d = self.blocks[0][0].ambient_dim();
        let mut cols: Vec<RealVector> = Vec::new();
        for m in (level + 1)..self.levels() {
            let b = self.block(m, j);
            for c in 0..b.dim() {
                cols.push(b.basis().column(c).into_owned());
            }
        }
        if cols.is_empty() {
            return Ok(Subspace::trivial(d));
        }
        Subspace::span(&cols)
    }
}

/// Value of a Lyapunov norm evaluation with its tail certificate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LyapunovNormValue {
    pub value: f64,
    /// Empirical equivalence constant |v|_{ω,i} / |v| ≥ 1.
    pub k_ratio: f64,
    /// Certified geometric bound on the truncated tail.
    pub tail_bound: f64,
}

/// Orbit-adapted norm |v|_{ω,i} at trace step `at`:
///
/// ```text
/// Σ_{n=−N..N} |Tⁿv| e^{−nλ_j−|n|ε}        for v ∈ E_j, j ≤ i,
/// Σ_{n=0..N}  |Tⁿv| e^{−n(λ_{i+1}+ε)}     for v ∈ E'_i,
/// Σ_j |π_j v|_{ω,i}                        otherwise,
/// ```
///
/// where E'_i is the sum of the blocks below level i. Requires all used
/// adjacent spectral gaps above 1e-3; ε defaults to (smallest adjacent
/// gap)/10 and can be overridden.
pub fn lyapunov_norm(
    trace: &OrbitTrace,
    met: &OseledetsData,
    level: usize,
    v: &RealVector,
    at: i64,
    window: usize,
    epsilon_override: Option<f64>,
) -> Result<LyapunovNormValue> {
    let p = met.levels();
    if level + 1 > p {
        return Err(Error::InvalidArgument(format!(
            "level {level} out of range for {p} blocks"
        )));
    }
    let mut min_gap = f64::INFINITY;
    for m in 0..p.saturating_sub(1) {
        if m <= level {
            min_gap = min_gap.min(met.exponents[m] - met.exponents[m + 1]);
        }
    }
    if min_gap < 1e-3 {
        return Err(Error::GapTooSmall {
            gap: min_gap,
            min: 1e-3,
        });
    }
    let eps = epsilon_override.unwrap_or(min_gap / 10.0);

    let scale = v.norm();
    if scale <= 1e-300 {
        return Err(Error::ZeroVector);
    }

    // Classify v against the blocks and the tail space.
    for m in 0..=level.min(p - 1) {
        let b = met.block(m, at);
        if b.distance(v) <= 1e-12 * scale {
            let (value, tail) =
                two_sided_block_series(trace, met, m, v, at, window, met.exponents[m], eps)?;
            check_tail(value, tail)?;
            return Ok(LyapunovNormValue {
                value,
                k_ratio: value / scale,
                tail_bound: tail,
            });
        }
    }
    let tail_space = met.tail_space(level, at)?;
    if !tail_space.is_trivial() && tail_space.distance(v) <= 1e-12 * scale {
        let rate = met.exponents[(level + 1).min(p - 1)] + eps;
        let (value, tail) = forward_series(trace, met, level, v, at, window, rate)?;
        check_tail(value, tail)?;
        return Ok(LyapunovNormValue {
            value,
            k_ratio: value / scale,
            tail_bound: tail,
        });
    }

    // General vector: sum the component norms for the splitting
    // (E_1, …, E_{level+1}, E'_{level}).
    let d = trace.dim();
    let mut basis = DMatrix::zeros(d, 0);
    let mut spans: Vec<(usize, usize)> = Vec::new();
    for m in 0..=level {
        let b = met.block(m, at);
        let off = basis.ncols();
        basis = stack_columns(&basis, b.basis());
        spans.push((off, b.dim()));
    }
    let off = basis.ncols();
    basis = stack_columns(&basis, tail_space.basis());
    spans.push((off, tail_space.dim()));
    if basis.ncols() != d {
        return Err(Error::InvalidArgument(
            "blocks do not span the space at this step".into(),
        ));
    }
    let inv = basis
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("block basis is singular".into()))?;
    let coords = inv * v;
    let mut value = 0.0;
    let mut tail_total = 0.0;
    for (idx, (off, width)) in spans.iter().enumerate() {
        if *width == 0 {
            continue;
        }
        let mut comp = RealVector::zeros(d);
        for c in 0..*width {
            comp += basis.column(off + c) * coords[off + c];
        }
        if comp.norm() <= 1e-14 * scale {
            continue;
        }
        let (val, tail) = if idx <= level {
            two_sided_block_series(trace, met, idx, &comp, at, window, met.exponents[idx], eps)?
        } else {
            forward_series(
                trace,
                met,
                level,
                &comp,
                at,
                window,
                met.exponents[(level + 1).min(p - 1)] + eps,
            )?
        };
        value += val;
        tail_total += tail;
    }
    check_tail(value, tail_total)?;
    Ok(LyapunovNormValue {
        value,
        k_ratio: value / scale,
        tail_bound: tail_total,
    })
}

fn check_tail(value: f64, tail: f64) -> Result<()> {
    if tail.is_nan() || tail > 1e-8 * value {
        return Err(Error::InvalidArgument(format!(
            "window too small: tail bound {tail:.3e} exceeds 1e-8 of the partial sum {value:.3e}"
        )));
    }
    Ok(())
}

fn stack_columns(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
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

/// Σ_{n=−N..N} |Tⁿ v| e^{−nλ−|n|ε} for v in block `m`, computed through the
/// restricted coordinate products (stable in both time directions).
#[allow(clippy::too_many_arguments)]
fn two_sided_block_series(
    trace: &OrbitTrace,
    met: &OseledetsData,
    m: usize,
    v: &RealVector,
    at: i64,
    window: usize,
    lambda: f64,
    eps: f64,
) -> Result<(f64, f64)> {
    let b0 = met.block(m, at);
    let coords0 = b0.basis().transpose() * v;
    let mut sum = coords0.norm();

    // Forward sweep.
    let mut log_mag = coords0.norm().ln();
    let mut dir = coords0.clone() / coords0.norm();
    let mut last_term = sum;
    for n in 1..=window {
        let j = at + n as i64 - 1;
        let a = trace.matrix(j)?;
        let me = restricted_step(a, met.block(m, j), met.block(m, j + 1), j, FAMILY_GAP_TOL)?;
        let w = &me * &dir;
        log_mag += w.norm().ln();
        dir = &w / w.norm();
        let term = (log_mag - (n as f64) * (lambda + eps)).exp();
        sum += term;
        last_term = term;
    }
    let q = (-0.5 * eps).exp();
    let mut tail = last_term * q / (1.0 - q);

    // Backward sweep through inverses of the restricted steps.
    log_mag = coords0.norm().ln();
    dir = coords0.clone() / coords0.norm();
    last_term = coords0.norm();
    for n in 1..=window {
        let j = at - n as i64;
        let a = trace.matrix(j)?;
        let me = restricted_step(a, met.block(m, j), met.block(m, j + 1), j, FAMILY_GAP_TOL)?;
        let inv = me
            .try_inverse()
            .ok_or_else(|| Error::InvalidArgument("restricted step not invertible".into()))?;
        let w = &inv * &dir;
        log_mag += w.norm().ln();
        dir = &w / w.norm();
        let term = (log_mag + (n as f64) * (lambda - eps)).exp();
        sum += term;
        last_term = term;
    }
    tail += last_term * q / (1.0 - q);
    Ok((sum, tail))
}

/// Σ_{n=0..N} |Tⁿ v| e^{−n·rate} for v in the slow bundle E'_level,
/// computed through restricted tail-space coordinates. Iterating the full
/// matrix instead would amplify float-level fast-direction contamination
/// at the spectral-gap rate and dominate the series on long windows.
fn forward_series(
    trace: &OrbitTrace,
    met: &OseledetsData,
    level: usize,
    v: &RealVector,
    at: i64,
    window: usize,
    rate: f64,
) -> Result<(f64, f64)> {
    let mut cur_space = met.tail_space(level, at)?;
    let coords = cur_space.basis().transpose() * v;
    let mut sum = coords.norm();
    let mut log_mag = coords.norm().ln();
    let mut dir = coords.clone() / coords.norm();
    let mut last_term = sum;
    for n in 1..=window {
        let j = at + n as i64 - 1;
        let next_space = met.tail_space(level, j + 1)?;
        let me = restricted_step(trace.matrix(j)?, &cur_space, &next_space, j, FAMILY_GAP_TOL)?;
        let w = &me * &dir;
        log_mag += w.norm().ln();
        dir = &w / w.norm();
        let term = (log_mag - (n as f64) * rate).exp();
        sum += term;
        last_term = term;
        cur_space = next_space;
    }
    // Slow-bundle terms decay at least like e^{−ε n} in the Oseledets
    // regime; certify with the measured tail ratio.
    let q = (last_term / sum).min(0.5);
    let tail = last_term * q / (1.0 - q);
    Ok((sum, tail))
}
