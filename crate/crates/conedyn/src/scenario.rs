//! Batch scenarios: configuration parsing, pipeline orchestration and
//! machine-readable reports.
//!
//! A scenario is a JSON document naming the base system, the generator
//! matrices (row-major, one per base symbol), the orbit length and seed,
//! and the list of requested analyses. Runs are deterministic given the
//! seed; independent analyses record their failures in the report instead
//! of aborting the run.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::checks::{
    check_contracting, check_dominated, check_dominated_in_probability,
    check_eventually_contracting, cone_splitting_roundtrip, equivalence_probe, ConditionId,
    EquivalenceProbeReport, ReturnSystemData, RoundtripReport, RoundtripStart, Verdict,
};
use crate::cocycle::{lyapunov_spectrum, sample_orbit, BaseSystem, CocycleSpec, ExponentReport};
use crate::cone::ConeRankK;
use crate::error::{Error, Result};
use crate::linalg::{make_splitting, LinearMap, NumericsConfig, Subspace};
use crate::splitting::{
    build_zeta_cone, extract_dominated_splitting, met_decomposition, zeta_index, ChiFunction,
    ConeFamily, SplittingFamily, SplittingSummary, ZetaConeData,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Declared tolerances, all overridable from the command line.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// |slope| bound for temperedness verdicts.
    pub temperedness_slope: f64,
    /// Lower bound on the Kac return frequency.
    pub kac_floor: f64,
    /// Probe window for the eventual-contraction search.
    pub probe_window: usize,
    /// Return-set window (m, n) for the in-probability check.
    pub return_window: (usize, usize),
    /// Sphere grid size for separation estimates.
    pub sphere_grid: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            temperedness_slope: 1e-2,
            kac_floor: 0.01,
            probe_window: 8,
            return_window: (1, 8),
            sphere_grid: 4096,
        }
    }
}

/// Optional cone input: splitting bases as lists of basis vectors, an
/// opening and a contraction witness χ.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConeConfig {
    pub e_basis: Vec<Vec<f64>>,
    pub f_basis: Vec<Vec<f64>>,
    pub opening: f64,
    pub chi: f64,
}

/// One requested analysis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Analysis {
    Spectrum,
    ExtractSplitting,
    BuildCones,
    Check(Vec<ConditionId>),
    Roundtrip,
    TheoremC,
}

impl Analysis {
    fn parse(s: &str) -> Option<Analysis> {
        match s {
            "spectrum" => Some(Analysis::Spectrum),
            "extract_splitting" => Some(Analysis::ExtractSplitting),
            "build_cones" => Some(Analysis::BuildCones),
            "roundtrip" => Some(Analysis::Roundtrip),
            "theoremC" => Some(Analysis::TheoremC),
            _ => {
                let rest = s.strip_prefix("check:")?;
                let mut ids = Vec::new();
                for tok in rest.split(',') {
                    let id = match tok.trim() {
                        "C1" => ConditionId::C1,
                        "C2" => ConditionId::C2,
                        "C3" => ConditionId::C3,
                        "C3'" => ConditionId::C3Prime,
                        "C4" => ConditionId::C4,
                        "D1" => ConditionId::D1,
                        "D2" => ConditionId::D2,
                        "D3" => ConditionId::D3,
                        "D3'" => ConditionId::D3Prime,
                        _ => return None,
                    };
                    ids.push(id);
                }
                if ids.is_empty() {
                    None
                } else {
                    Some(Analysis::Check(ids))
                }
            }
        }
    }
}

/// Scenario configuration (JSON).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub dim: usize,
    pub base: BaseSystem,
    /// Row-major matrices, one per base symbol.
    pub generator: Vec<Vec<Vec<f64>>>,
    pub orbit_length: i64,
    pub seed: u64,
    pub analyses: Vec<String>,
    #[serde(default)]
    pub cone: Option<ConeConfig>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_format")]
    pub output_format: String,
}

fn default_format() -> String {
    "json".into()
}

impl ScenarioConfig {
    /// Validates the whole document; all failures are reported together.
    pub fn validate(&self) -> Result<Vec<Analysis>> {
        let mut issues: Vec<String> = Vec::new();
        if self.dim == 0 {
            issues.push("dim: must be at least 1".into());
        }
        if let Err(e) = self.base.validate() {
            issues.push(format!("base: {e}"));
        }
        if self.generator.len() != self.base.symbol_count() {
            issues.push(format!(
                "generator: {} matrices for {} base symbols",
                self.generator.len(),
                self.base.symbol_count()
            ));
        }
        for (i, rows) in self.generator.iter().enumerate() {
            if rows.len() != self.dim || rows.iter().any(|r| r.len() != self.dim) {
                issues.push(format!("generator[{i}]: matrix is not {0}x{0}", self.dim));
                continue;
            }
            let m = LinearMap::from_rows(rows);
            if !m.is_injective() {
                issues.push(format!("generator[{i}]: fails the injectivity check"));
            }
        }
        if self.analyses.is_empty() {
            issues.push("analyses: list is empty".into());
        }
        let mut parsed = Vec::new();
        for (i, a) in self.analyses.iter().enumerate() {
            match Analysis::parse(a) {
                Some(p) => parsed.push(p),
                None => issues.push(format!("analyses[{i}]: unknown analysis '{a}'")),
            }
        }
        let needs_exponents = parsed.iter().any(|a| {
            matches!(
                a,
                Analysis::Spectrum
                    | Analysis::ExtractSplitting
                    | Analysis::BuildCones
                    | Analysis::Roundtrip
                    | Analysis::TheoremC
            )
        });
        if self.orbit_length <= 0 {
            issues.push(format!(
                "orbit_length: {} must be positive",
                self.orbit_length
            ));
        } else if needs_exponents && self.orbit_length < 100 {
            issues.push(format!(
                "orbit_length: {} below the minimum 100 for exponent analyses",
                self.orbit_length
            ));
        }
        let needs_cone = parsed.iter().any(|a| {
            matches!(a, Analysis::Roundtrip)
                || matches!(a, Analysis::Check(ids) if ids.iter().any(|id| matches!(
                    id,
                    ConditionId::C1 | ConditionId::C2 | ConditionId::C3 | ConditionId::C3Prime | ConditionId::C4
                )))
        });
        if needs_cone && self.cone.is_none() {
            issues.push("cone: required by the requested cone checks / roundtrip".into());
        }
        if let Some(c) = &self.cone {
            if c.e_basis.is_empty()
                || c.f_basis.is_empty()
                || c.e_basis.iter().chain(c.f_basis.iter()).any(|v| v.len() != self.dim)
            {
                issues.push("cone: basis vectors must be nonempty with length dim".into());
            }
            if c.opening.is_nan() || c.opening <= 0.0 {
                issues.push("cone.opening: must be positive".into());
            }
            if c.chi < 1.0 {
                issues.push("cone.chi: must be at least 1".into());
            }
        }
        if self.output_format != "json" && self.output_format != "csv" {
            issues.push(format!(
                "output_format: '{}' is not one of json|csv",
                self.output_format
            ));
        }
        if issues.is_empty() {
            Ok(parsed)
        } else {
            Err(Error::Validation(issues))
        }
    }

    pub fn cocycle_spec(&self) -> Result<CocycleSpec> {
        let gens = self
            .generator
            .iter()
            .map(|rows| LinearMap::from_rows(rows))
            .collect();
        CocycleSpec::new(self.base.clone(), gens)
    }

    fn cone_family(&self) -> Result<Option<(ConeFamily, crate::linalg::Splitting, ChiFunction)>> {
        let Some(c) = &self.cone else {
            return Ok(None);
        };
        let cols = |vecs: &[Vec<f64>]| -> Result<Subspace> {
            let vs: Vec<crate::linalg::RealVector> = vecs
                .iter()
                .map(|v| crate::linalg::RealVector::from_vec(v.clone()))
                .collect();
            Subspace::span(&vs)
        };
        let e = cols(&c.e_basis)?;
        let f = cols(&c.f_basis)?;
        let splitting = make_splitting(&e, &f)?;
        let cone = ConeRankK::splitting_norm(splitting.clone(), c.opening)?;
        Ok(Some((
            ConeFamily::Constant(cone),
            splitting,
            ChiFunction::Constant(c.chi),
        )))
    }
}

/// Parses and validates a scenario file.
pub fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    let config: ScenarioConfig =
        serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Summary of one built cone for the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConeSummary {
    pub step: i64,
    pub opening: f64,
    /// ζ of a probe direction with its truncation certificate.
    pub probe_zeta: f64,
    pub probe_tail: f64,
    /// Closed-formula contraction witness at this step.
    pub chi_estimate: f64,
}

/// Machine-readable run report. Every numeric estimate is paired with its
/// stderr or tail certificate. Wall-clock time is kept out of the
/// serialized form so identical runs produce identical bytes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub config: ScenarioConfig,
    pub exponents: Option<ExponentReport>,
    pub splitting: Option<SplittingSummary>,
    pub cones: Option<Vec<ConeSummary>>,
    pub verdicts: Vec<Verdict>,
    pub return_system: Option<ReturnSystemData>,
    pub roundtrip: Option<RoundtripReport>,
    pub equivalence_probe: Option<EquivalenceProbeReport>,
    /// Analyses that could not complete, with their errors.
    pub analyses_failed: BTreeMap<String, String>,
    #[serde(skip)]
    pub wall_clock: std::time::Duration,
}

impl RunReport {
    /// Exit code contract: 0 all verdicts pass, 1 some verdict failed,
    /// 3 numerical non-convergence in a requested analysis.
    pub fn exit_code(&self) -> i32 {
        if !self.analyses_failed.is_empty() {
            return 3;
        }
        let failed = self.verdicts.iter().any(|v| !v.passed)
            || self
                .roundtrip
                .as_ref()
                .map(|r| r.verdicts.iter().any(|v| !v.passed))
                .unwrap_or(false)
            || self
                .equivalence_probe
                .as_ref()
                .map(|p| p.witnesses.iter().any(|w| !w.witnessed))
                .unwrap_or(false);
        if failed {
            1
        } else {
            0
        }
    }
}

/// Derives the splitting family used by domination checks: extracted from
/// the supplied cone when present, otherwise from the top Oseledets block.
fn derive_family(
    trace: &crate::cocycle::OrbitTrace,
    cone: &Option<(ConeFamily, crate::linalg::Splitting, ChiFunction)>,
    cfg: &NumericsConfig,
) -> Result<SplittingFamily> {
    if let Some((family, _, chi)) = cone {
        return extract_dominated_splitting(trace, family, Some(chi), cfg);
    }
    let met = met_decomposition(trace, cfg)?;
    if met.levels() < 2 {
        return Err(Error::NoConvergence(
            "single exponent cluster: no splitting to derive".into(),
        ));
    }
    let steps = met.steps() - 1;
    let mut splittings = Vec::with_capacity(steps);
    for i in 0..steps {
        let j = met.start + i as i64;
        let tail = met.tail_space(0, j)?;
        splittings.push(make_splitting(met.block(0, j), &tail)?);
    }
    let mut family = SplittingFamily {
        start: met.start,
        splittings,
        delta: 1.0,
        k_bound: 1.0,
        rate_fit: 0.0,
    };
    let (delta, k_bound, rate) = refit(trace, &family)?;
    family.delta = delta;
    family.k_bound = k_bound;
    family.rate_fit = rate;
    Ok(family)
}

fn refit(
    trace: &crate::cocycle::OrbitTrace,
    family: &SplittingFamily,
) -> Result<(f64, f64, f64)> {
    use crate::cocycle::restricted_step;
    use crate::scaled::ScaledMatrix;
    let steps = family.len() - 1;
    let mut prod_e = ScaledMatrix::identity(family.splittings[0].e().dim());
    let mut prod_f = ScaledMatrix::identity(family.splittings[0].f().dim());
    let mut ys = Vec::with_capacity(steps);
    for i in 0..steps {
        let j = family.start + i as i64;
        let a = trace.matrix(j)?;
        let me = restricted_step(
            a,
            family.splittings[i].e(),
            family.splittings[i + 1].e(),
            j,
            crate::cocycle::FAMILY_GAP_TOL,
        )?;
        let mf = restricted_step(
            a,
            family.splittings[i].f(),
            family.splittings[i + 1].f(),
            j,
            crate::cocycle::FAMILY_GAP_TOL,
        )?;
        prod_e = prod_e.premultiply(&me);
        prod_f = prod_f.premultiply(&mf);
        ys.push(prod_e.log_inverse_norm() + prod_f.log_operator_norm());
    }
    let n = ys.len() as f64;
    let mx = (n + 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &y) in ys.iter().enumerate() {
        let x = (i + 1) as f64;
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    let slope = num / den;
    let k = ys
        .iter()
        .enumerate()
        .map(|(i, &y)| y + (-slope) * (i + 1) as f64)
        .fold(f64::NEG_INFINITY, f64::max)
        .exp()
        .max(1.0);
    Ok((-slope, k, slope))
}

/// Runs every requested analysis; partial failures are recorded in the
/// report without aborting the run. Deterministic given the seed.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunReport> {
    let started = std::time::Instant::now();
    let analyses = config.validate()?;
    let spec = config.cocycle_spec()?;
    let trace = sample_orbit(&spec, config.orbit_length.max(1) as usize, config.seed)?;
    let cfg = NumericsConfig {
        sphere_grid: config.tolerances.sphere_grid,
        grid_seed: config.seed,
        ..NumericsConfig::default()
    };
    let cone = config.cone_family()?;

    let mut report = RunReport {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        config: config.clone(),
        exponents: None,
        splitting: None,
        cones: None,
        verdicts: Vec::new(),
        return_system: None,
        roundtrip: None,
        equivalence_probe: None,
        analyses_failed: BTreeMap::new(),
        wall_clock: std::time::Duration::ZERO,
    };

    // Families are shared across analyses; derived lazily and memoized.
    let mut family_cache: Option<SplittingFamily> = None;
    let family = |report: &mut RunReport,
                      cache: &mut Option<SplittingFamily>|
     -> Option<SplittingFamily> {
        if cache.is_none() {
            match derive_family(&trace, &cone, &cfg) {
                Ok(f) => *cache = Some(f),
                Err(e) => {
                    report
                        .analyses_failed
                        .insert("splitting_family".into(), e.to_string());
                }
            }
        }
        cache.clone()
    };

    for analysis in &analyses {
        match analysis {
            Analysis::Spectrum => match lyapunov_spectrum(&trace) {
                Ok(rep) => report.exponents = Some(rep),
                Err(e) => {
                    report.analyses_failed.insert("spectrum".into(), e.to_string());
                }
            },
            Analysis::ExtractSplitting => {
                if let Some(f) = family(&mut report, &mut family_cache) {
                    report.splitting = Some(SplittingSummary::from(&f));
                } else {
                    let msg = report
                        .analyses_failed
                        .get("splitting_family")
                        .cloned()
                        .unwrap_or_default();
                    report.analyses_failed.insert("extract_splitting".into(), msg);
                }
            }
            Analysis::BuildCones => {
                let Some(f) = family(&mut report, &mut family_cache) else {
                    report
                        .analyses_failed
                        .insert("build_cones".into(), "no splitting family".into());
                    continue;
                };
                match build_cone_summaries(&trace, &f, &cfg) {
                    Ok(s) => report.cones = Some(s),
                    Err(e) => {
                        report.analyses_failed.insert("build_cones".into(), e.to_string());
                    }
                }
            }
            Analysis::Check(ids) => {
                let wants_cone_checks = ids.iter().any(|id| {
                    matches!(
                        id,
                        ConditionId::C1
                            | ConditionId::C2
                            | ConditionId::C3
                            | ConditionId::C3Prime
                            | ConditionId::C4
                    )
                });
                let wants_dom = ids.iter().any(|id| {
                    matches!(id, ConditionId::D1 | ConditionId::D2 | ConditionId::D3)
                });
                let wants_prob = ids.contains(&ConditionId::D3Prime);
                if wants_cone_checks {
                    let Some((fam, sp0, chi)) = &cone else {
                        report
                            .analyses_failed
                            .insert("check".into(), "cone checks need a cone".into());
                        continue;
                    };
                    match check_contracting(&trace, fam, sp0, chi, &cfg) {
                        Ok(vs) => report
                            .verdicts
                            .extend(vs.into_iter().filter(|v| ids.contains(&v.condition_id))),
                        Err(e) => {
                            report
                                .analyses_failed
                                .insert("check:contracting".into(), e.to_string());
                        }
                    }
                    if ids.contains(&ConditionId::C3Prime) {
                        match check_eventually_contracting(
                            &trace,
                            fam,
                            chi,
                            config.tolerances.probe_window,
                            &cfg,
                        ) {
                            Ok((v, _)) => report.verdicts.push(v),
                            Err(e) => {
                                report
                                    .analyses_failed
                                    .insert("check:eventual".into(), e.to_string());
                            }
                        }
                    }
                }
                if wants_dom || wants_prob {
                    let Some(f) = family(&mut report, &mut family_cache) else {
                        report
                            .analyses_failed
                            .insert("check:dominated".into(), "no splitting family".into());
                        continue;
                    };
                    if wants_dom {
                        match check_dominated(&trace, &f) {
                            Ok(vs) => report
                                .verdicts
                                .extend(vs.into_iter().filter(|v| ids.contains(&v.condition_id))),
                            Err(e) => {
                                report
                                    .analyses_failed
                                    .insert("check:dominated".into(), e.to_string());
                            }
                        }
                    }
                    if wants_prob {
                        let result = (|| -> Result<(Verdict, ReturnSystemData)> {
                            let (fam_c, _, chi) = cone.as_ref().ok_or_else(|| {
                                Error::InvalidArgument(
                                    "the in-probability check needs a cone for N(ω)".into(),
                                )
                            })?;
                            let (_, n_est) = check_eventually_contracting(
                                &trace,
                                fam_c,
                                chi,
                                config.tolerances.probe_window,
                                &cfg,
                            )?;
                            check_dominated_in_probability(
                                &trace,
                                &f,
                                &n_est,
                                trace.window().0,
                                config.tolerances.return_window,
                                config.tolerances.kac_floor,
                            )
                        })();
                        match result {
                            Ok((v, ret)) => {
                                report.verdicts.push(v);
                                report.return_system = Some(ret);
                            }
                            Err(e) => {
                                report
                                    .analyses_failed
                                    .insert("check:in_probability".into(), e.to_string());
                            }
                        }
                    }
                }
            }
            Analysis::Roundtrip => {
                let Some((fam, sp0, chi)) = &cone else {
                    report
                        .analyses_failed
                        .insert("roundtrip".into(), "roundtrip needs a cone".into());
                    continue;
                };
                let start = RoundtripStart::Cone {
                    family: fam.clone(),
                    splitting0: sp0.clone(),
                    chi: chi.clone(),
                };
                match cone_splitting_roundtrip(&trace, &start, &cfg) {
                    Ok(r) => report.roundtrip = Some(r),
                    Err(e) => {
                        report.analyses_failed.insert("roundtrip".into(), e.to_string());
                    }
                }
            }
            Analysis::TheoremC => match equivalence_probe(&trace, &cfg) {
                Ok(p) => report.equivalence_probe = Some(p),
                Err(e) => {
                    report.analyses_failed.insert("theoremC".into(), e.to_string());
                }
            },
        }
    }

    report.wall_clock = started.elapsed();
    Ok(report)
}

fn build_cone_summaries(
    trace: &crate::cocycle::OrbitTrace,
    family: &SplittingFamily,
    cfg: &NumericsConfig,
) -> Result<Vec<ConeSummary>> {
    let data = ZetaConeData::new(trace, family, None)?;
    let lo = family.start;
    let hi = (family.end() - data.truncation as i64 - 2).min(lo + 32);
    if hi < lo {
        return Err(Error::InvalidArgument("family too short for cones".into()));
    }
    let mut out = Vec::new();
    for j in lo..=hi {
        let cone = build_zeta_cone(&data, j, cfg)?;
        // Probe direction halfway between the core and the boundary.
        let probe = family.at(j).e().basis().column(0).into_owned()
            + family.at(j).f().basis().column(0).into_owned() * (0.5 * cone.opening());
        let (z, tail) = zeta_index(&data, j, &probe)?;
        let chi = crate::checks::rank_one_chi(
            crate::linalg::operator_norm(family.at(j).proj_e()),
            family.k_bound,
            data.delta,
        );
        out.push(ConeSummary {
            step: j,
            opening: cone.opening(),
            probe_zeta: z,
            probe_tail: tail,
            chi_estimate: chi,
        });
    }
    Ok(out)
}

/// Writes the report files; returns the paths written. Byte-stable given
/// identical report contents.
pub fn emit_report(report: &RunReport, format: &str, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    match format {
        "json" => {
            let path = dir.join("report.json");
            let mut text = serde_json::to_string_pretty(report)
                .map_err(|e| Error::Parse(e.to_string()))?;
            text.push('\n');
            std::fs::write(&path, text)?;
            Ok(vec![path])
        }
        "csv" => {
            let mut paths = Vec::new();
            // exponents.csv: analysis,index,value,stderr
            let p = dir.join("exponents.csv");
            let mut s = String::from("analysis,index,value,stderr\n");
            if let Some(e) = &report.exponents {
                s.push_str(&format!(
                    "lambda_top,0,{:.17e},{:.17e}\n",
                    e.lambda_top, e.lambda_top_stderr
                ));
                for (i, (v, se)) in e.spectrum.iter().zip(&e.spectrum_stderr).enumerate() {
                    s.push_str(&format!("spectrum,{i},{v:.17e},{se:.17e}\n"));
                }
            }
            std::fs::write(&p, s)?;
            paths.push(p);

            // margins.csv: condition,step,margin
            let p = dir.join("margins.csv");
            let mut s = String::from("condition,step,margin\n");
            for v in &report.verdicts {
                for (i, m) in v.margins.iter().enumerate() {
                    s.push_str(&format!("{},{i},{m:.17e}\n", v.condition_id));
                }
            }
            std::fs::write(&p, s)?;
            paths.push(p);

            // verdicts.csv: condition,passed,min_margin,witness_step,notes
            let p = dir.join("verdicts.csv");
            let mut s = String::from("condition,passed,min_margin,witness_step,notes\n");
            for v in &report.verdicts {
                let witness = v
                    .witness
                    .as_ref()
                    .map(|(j, _)| j.to_string())
                    .unwrap_or_default();
                s.push_str(&format!(
                    "{},{},{:.17e},{},\"{}\"\n",
                    v.condition_id,
                    v.passed,
                    v.min_margin(),
                    witness,
                    v.notes.replace('"', "'")
                ));
            }
            std::fs::write(&p, s)?;
            paths.push(p);
            Ok(paths)
        }
        other => Err(Error::Validation(vec![format!(
            "output_format: '{other}' is not one of json|csv"
        )])),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_config() -> ScenarioConfig {
        ScenarioConfig {
            dim: 2,
            base: BaseSystem::Bernoulli {
                probabilities: vec![0.5, 0.5],
            },
            generator: vec![
                vec![vec![3.0, 0.0], vec![0.0, 1.0 / 3.0]],
                vec![vec![2.0, 0.0], vec![0.0, 0.5]],
            ],
            orbit_length: 200,
            seed: 7,
            analyses: vec!["spectrum".into()],
            cone: None,
            tolerances: Tolerances::default(),
            output_format: "json".into(),
        }
    }

    #[test]
    fn minimal_config_round_trips_through_json() {
        let cfg = minimal_config();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&text).unwrap();
        assert!(back.validate().is_ok());
        // Defaults fill in when fields are omitted.
        let sparse = r#"{
            "dim": 2,
            "base": {"kind": "bernoulli", "probabilities": [1.0]},
            "generator": [[[2.0, 0.0], [0.0, 0.5]]],
            "orbit_length": 150,
            "seed": 1,
            "analyses": ["spectrum"]
        }"#;
        let parsed: ScenarioConfig = serde_json::from_str(sparse).unwrap();
        assert!(parsed.validate().is_ok());
        assert_eq!(parsed.output_format, "json");
        assert_eq!(parsed.tolerances.probe_window, 8);
    }

    #[test]
    fn validation_collects_all_failures() {
        let mut cfg = minimal_config();
        cfg.orbit_length = -5;
        cfg.generator[0] = vec![vec![1.0, 0.0]]; // not square
        cfg.analyses.push("nonsense".into());
        let err = cfg.validate().unwrap_err();
        match err {
            Error::Validation(issues) => {
                assert!(issues.iter().any(|m| m.contains("orbit_length")));
                assert!(issues.iter().any(|m| m.contains("generator[0]")));
                assert!(issues.iter().any(|m| m.contains("analyses[1]")));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn singular_generator_is_rejected() {
        let mut cfg = minimal_config();
        cfg.generator[0] = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let err = cfg.validate().unwrap_err();
        match err {
            Error::Validation(issues) => {
                assert!(issues.iter().any(|m| m.contains("injectivity")));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn spectrum_scenario_reports_exponents() {
        let mut cfg = minimal_config();
        cfg.generator = vec![
            vec![vec![2.0, 0.0], vec![0.0, 0.5]],
            vec![vec![2.0, 0.0], vec![0.0, 0.5]],
        ];
        let report = run_scenario(&cfg).unwrap();
        assert_eq!(report.exit_code(), 0);
        let e = report.exponents.unwrap();
        approx::assert_abs_diff_eq!(e.spectrum[0], 2.0_f64.ln(), epsilon = 1e-12);
        approx::assert_abs_diff_eq!(e.spectrum[1], -(2.0_f64.ln()), epsilon = 1e-12);
    }

    #[test]
    fn equal_exponent_extraction_fails_softly() {
        let mut cfg = minimal_config();
        cfg.generator = vec![
            vec![vec![2.0, 0.0], vec![0.0, 2.0]],
            vec![vec![2.0, 0.0], vec![0.0, 2.0]],
        ];
        cfg.analyses = vec!["spectrum".into(), "extract_splitting".into()];
        let report = run_scenario(&cfg).unwrap();
        assert!(report.exponents.is_some());
        assert!(report.splitting.is_none());
        assert!(!report.analyses_failed.is_empty());
        assert_eq!(report.exit_code(), 3);
    }

    #[test]
    fn build_cones_reports_summaries() {
        let mut cfg = minimal_config();
        cfg.generator = vec![
            vec![vec![2.0, 0.0], vec![0.0, 0.5]],
            vec![vec![2.0, 0.0], vec![0.0, 0.5]],
        ];
        cfg.orbit_length = 300;
        cfg.analyses = vec!["build_cones".into()];
        let report = run_scenario(&cfg).unwrap();
        assert_eq!(report.exit_code(), 0, "{:?}", report.analyses_failed);
        let cones = report.cones.unwrap();
        assert!(!cones.is_empty());
        for c in &cones {
            assert!(c.opening > 0.0 && c.opening.is_finite());
            assert!(c.chi_estimate >= 1.0 && c.chi_estimate.is_finite());
            assert!(c.probe_zeta.is_finite());
            assert!(c.probe_tail < 1e-6);
        }
    }

    #[test]
    fn json_report_is_byte_stable() {
        let cfg = minimal_config();
        let dir = std::env::temp_dir().join(format!("conedyn-test-{}", std::process::id()));
        let r1 = run_scenario(&cfg).unwrap();
        let p1 = emit_report(&r1, "json", &dir.join("a")).unwrap();
        let r2 = run_scenario(&cfg).unwrap();
        let p2 = emit_report(&r2, "json", &dir.join("b")).unwrap();
        let b1 = std::fs::read(&p1[0]).unwrap();
        let b2 = std::fs::read(&p2[0]).unwrap();
        assert_eq!(b1, b2);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn unknown_format_is_a_validation_error() {
        let cfg = minimal_config();
        let report = run_scenario(&cfg).unwrap();
        let dir = std::env::temp_dir().join("conedyn-format-test");
        assert!(matches!(
            emit_report(&report, "yaml", &dir),
            Err(Error::Validation(_))
        ));
        std::fs::remove_dir_all(&dir).ok();
    }
}
