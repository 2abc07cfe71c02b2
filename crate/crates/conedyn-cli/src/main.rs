//! Batch entry point: runs analysis scenarios described by JSON config
//! files and writes machine-readable reports.
//!
//! Exit codes: 0 all requested verdicts pass, 1 at least one verdict
//! failed, 2 usage or config error, 3 numerical non-convergence in a
//! requested analysis.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use conedyn::error::Error;
use conedyn::scenario::{emit_report, parse_config, run_scenario, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "conedyn",
    version,
    about = "Cone geometry, Lyapunov exponents and dominated splittings for random matrix cocycles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario config file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config orbit length.
    #[arg(long)]
    orbit_length: Option<i64>,
    /// Output directory for report files.
    #[arg(long, default_value = ".")]
    output: PathBuf,
    /// Report format: json or csv.
    #[arg(long)]
    format: Option<String>,
    /// Comma-separated tolerance overrides, e.g.
    /// temperedness_slope=0.02,kac_floor=0.05,probe_window=6.
    #[arg(long)]
    tolerance_overrides: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Lyapunov spectrum estimation.
    Spectrum(CommonArgs),
    /// Dominated-splitting extraction.
    Split(CommonArgs),
    /// Co-invariant cone construction over the extracted splitting.
    Cones(CommonArgs),
    /// Condition checks requested in the config (check:... analyses).
    Verify(CommonArgs),
    /// Cone -> splitting -> cone round trip.
    Roundtrip(CommonArgs),
    /// Equivalence-chain probe across the five conditions.
    Probe(CommonArgs),
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Spectrum(a)
            | Command::Split(a)
            | Command::Cones(a)
            | Command::Verify(a)
            | Command::Roundtrip(a)
            | Command::Probe(a) => a,
        }
    }

    /// Analyses implied by the subcommand; `verify` keeps the config list.
    fn analyses(&self, config: &ScenarioConfig) -> Vec<String> {
        match self {
            Command::Spectrum(_) => vec!["spectrum".into()],
            Command::Split(_) => vec!["extract_splitting".into()],
            Command::Cones(_) => vec!["build_cones".into()],
            Command::Verify(_) => {
                let checks: Vec<String> = config
                    .analyses
                    .iter()
                    .filter(|a| a.starts_with("check:"))
                    .cloned()
                    .collect();
                if checks.is_empty() {
                    vec!["check:C1,C2,C3,C4".into()]
                } else {
                    checks
                }
            }
            Command::Roundtrip(_) => vec!["roundtrip".into()],
            Command::Probe(_) => vec!["theoremC".into()],
        }
    }
}

fn apply_overrides(config: &mut ScenarioConfig, args: &CommonArgs) -> Result<(), String> {
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(n) = args.orbit_length {
        config.orbit_length = n;
    }
    if let Some(f) = &args.format {
        config.output_format = f.clone();
    }
    if let Some(overrides) = &args.tolerance_overrides {
        for pair in overrides.split(',') {
            let Some((key, value)) = pair.split_once('=') else {
                return Err(format!("tolerance override '{pair}' is not key=value"));
            };
            let t = &mut config.tolerances;
            match key.trim() {
                "temperedness_slope" => {
                    t.temperedness_slope = value.parse().map_err(|e| format!("{key}: {e}"))?
                }
                "kac_floor" => t.kac_floor = value.parse().map_err(|e| format!("{key}: {e}"))?,
                "probe_window" => {
                    t.probe_window = value.parse().map_err(|e| format!("{key}: {e}"))?
                }
                "sphere_grid" => {
                    t.sphere_grid = value.parse().map_err(|e| format!("{key}: {e}"))?
                }
                "return_window_lo" => {
                    t.return_window.0 = value.parse().map_err(|e| format!("{key}: {e}"))?
                }
                "return_window_hi" => {
                    t.return_window.1 = value.parse().map_err(|e| format!("{key}: {e}"))?
                }
                other => return Err(format!("unknown tolerance '{other}'")),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = cli.command.common();

    let mut config = match parse_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(msg) = apply_overrides(&mut config, args) {
        eprintln!("usage error: {msg}");
        return ExitCode::from(2);
    }
    config.analyses = cli.command.analyses(&config);
    if let Err(e) = config.validate() {
        eprintln!("config error: {e}");
        return ExitCode::from(2);
    }

    let report = match run_scenario(&config) {
        Ok(r) => r,
        Err(e @ Error::Io(_)) => {
            eprintln!("i/o error: {e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    match emit_report(&report, &config.output_format, &args.output) {
        Ok(paths) => {
            for p in &paths {
                println!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("report error: {e}");
            return ExitCode::from(2);
        }
    }

    for v in &report.verdicts {
        println!(
            "{}: {} (min margin {:.3e})",
            v.condition_id,
            if v.passed { "pass" } else { "FAIL" },
            v.min_margin()
        );
    }
    if let Some(rt) = &report.roundtrip {
        println!("roundtrip max per-step gap: {:.3e}", rt.max_gap);
        for v in &rt.verdicts {
            println!(
                "roundtrip {}: {}",
                v.condition_id,
                if v.passed { "pass" } else { "FAIL" }
            );
        }
    }
    if let Some(p) = &report.equivalence_probe {
        for w in &p.witnesses {
            println!(
                "condition {}: {}",
                w.name,
                if w.witnessed { "witnessed" } else { "NOT witnessed" }
            );
        }
    }
    for (name, err) in &report.analyses_failed {
        println!("analysis {name} failed: {err}");
    }
    println!(
        "done in {:.2}s (seed {})",
        report.wall_clock.as_secs_f64(),
        report.seed
    );

    ExitCode::from(report.exit_code() as u8)
}
