//! `cachemimo` command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 infeasible configuration, 3 solver
//! non-convergence or failed validation, 4 I/O.

use std::path::PathBuf;
use std::process::ExitCode;

use cachemimo::config::{ConfigBuilder, SystemConfig};
use cachemimo::export::{create, write_run, write_sweep_summary};
use cachemimo::rng::{derive_seed, tag};
use cachemimo::sim::{run_scheme, ExperimentResult, Scheme, SimOptions};
use cachemimo::validate::run_checks;
use cachemimo::Error;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

const EXIT_USAGE: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_IO: u8 = 4;

/// Keys whose value is itself a comma-separated list; their sweep points are
/// separated by `;` instead.
const LIST_KEYS: &[&str] = &["F", "mu", "rho"];

#[derive(Debug, Parser)]
#[command(name = "cachemimo", version, about = "Cache-induced opportunistic CoMP simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the proposed scheme.
    Run(Common),
    /// Simulate one baseline scheme.
    Baseline {
        #[command(flatten)]
        common: Common,
        /// coordinated, conventional_comp or uniform_caching.
        #[arg(long)]
        baseline: String,
    },
    /// Simulate every scheme at each value of one swept key.
    Sweep(Common),
    /// Run the invariant suite on instances drawn from the configuration.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Channel/profile draws per check.
        #[arg(long, default_value_t = 20)]
        instances: usize,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `key=value`, applied after the file; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, env = "CACHEMIMO_OUTPUT_DIR", default_value = "cachemimo-out")]
    output_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Slots to simulate.
    #[arg(long)]
    horizon: Option<usize>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::Parse { .. } => EXIT_USAGE,
            Error::Config(_) | Error::Infeasible(_) | Error::Unavailable(_) | Error::Domain(_) => EXIT_INFEASIBLE,
            Error::Io(_) => EXIT_IO,
            _ => EXIT_SOLVER,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn split_override(raw: &str) -> Result<(&str, &str), Failure> {
    match raw.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() && !v.trim().is_empty() => Ok((k.trim(), v.trim())),
        _ => Err(Failure::usage(format!(
            "malformed override `{raw}`, expected KEY=VALUE"
        ))),
    }
}

fn base_builder(common: &Common) -> Result<ConfigBuilder, Failure> {
    let builder = ConfigBuilder::new();
    match &common.config {
        Some(path) if !path.is_file() => Err(Failure::usage(format!("config file not found: {}", path.display()))),
        Some(path) => Ok(builder.parse_file(path)?),
        None => Ok(builder),
    }
}

fn finish(mut builder: ConfigBuilder, common: &Common, extra: &[(&str, &str)]) -> Result<SystemConfig, Failure> {
    for (k, v) in extra {
        builder = builder.set(k, v)?;
    }
    if let Some(seed) = common.seed {
        builder = builder.set("rng_seed", &seed.to_string())?;
    }
    if let Some(h) = common.horizon {
        builder = builder.set("horizon", &h.to_string())?;
    }
    Ok(builder.build()?)
}

fn load(common: &Common) -> Result<SystemConfig, Failure> {
    let overrides = common
        .overrides
        .iter()
        .map(|o| split_override(o))
        .collect::<Result<Vec<_>, _>>()?;
    finish(base_builder(common)?, common, &overrides)
}

fn simulate(cfg: &SystemConfig, scheme: Scheme) -> Result<ExperimentResult, Failure> {
    Ok(run_scheme(
        cfg,
        scheme,
        cfg.horizon_slots,
        &SimOptions::from_config(cfg),
    )?)
}

fn report(r: &ExperimentResult) {
    println!(
        "{}: power {} W ({:.4} dB), backhaul {:.6} Mbps, interruptions {}, precoder iterations {:.1} mean",
        r.scheme.name(),
        r.avg_power,
        r.avg_power_db,
        r.avg_backhaul_bps / 1e6,
        r.interruptions,
        r.sp_stats.mean_iterations()
    );
}

fn non_converged(results: &[&ExperimentResult]) -> Result<(), Failure> {
    let n: usize = results.iter().map(|r| r.sp_stats.non_converged).sum();
    if n > 0 {
        return Err(Failure {
            code: EXIT_SOLVER,
            message: format!("{n} precoder solves stopped at the iteration cap (results were still written)"),
        });
    }
    Ok(())
}

fn single(common: &Common, scheme: Scheme) -> Result<(), Failure> {
    let cfg = load(common)?;
    let r = simulate(&cfg, scheme)?;
    write_run(&common.output_dir, &r)?;
    report(&r);
    println!("wrote {}", common.output_dir.display());
    non_converged(&[&r])
}

/// Swept key, its points, and the overrides applied as is.
type SweepAxis<'a> = (String, Vec<String>, Vec<(&'a str, &'a str)>);

fn sweep_axis(overrides: &[String]) -> Result<SweepAxis<'_>, Failure> {
    let mut axis = None;
    let mut fixed = Vec::new();
    for raw in overrides {
        let (k, v) = split_override(raw)?;
        let sep = if LIST_KEYS.contains(&k) { ';' } else { ',' };
        if v.contains(sep) {
            if axis.is_some() {
                return Err(Failure::usage(format!(
                    "only one key can be swept, `{k}` is the second"
                )));
            }
            axis = Some((
                k.to_string(),
                v.split(sep).map(|p| p.trim().to_string()).collect::<Vec<_>>(),
            ));
        } else {
            fixed.push((k, v));
        }
    }
    let (key, points) =
        axis.ok_or_else(|| Failure::usage("sweep needs an override with several values, e.g. mu0=1e6,2e6"))?;
    if points.iter().any(|p| p.is_empty()) {
        return Err(Failure::usage(format!("empty sweep point in `{key}`")));
    }
    Ok((key, points, fixed))
}

fn sweep(common: &Common) -> Result<(), Failure> {
    let (key, points, fixed) = sweep_axis(&common.overrides)?;
    let base = base_builder(common)?;
    let master = finish(base.clone(), common, &fixed)?.rng_seed;
    let mut configs = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let mut extra = fixed.clone();
        extra.push((&key, p));
        let mut cfg = finish(base.clone(), common, &extra)?;
        cfg.rng_seed = derive_seed(master, tag::SWEEP, &[i as u64]);
        configs.push(cfg);
    }
    let runs: Vec<(String, Vec<ExperimentResult>)> = points
        .par_iter()
        .zip(configs.par_iter())
        .map(|(p, cfg)| {
            let results = Scheme::ALL
                .iter()
                .map(|&s| simulate(cfg, s))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((p.clone(), results))
        })
        .collect::<Result<_, Failure>>()?;
    for (i, (p, results)) in runs.iter().enumerate() {
        println!("{key} = {p}");
        for r in results {
            write_run(&common.output_dir.join(format!("point_{i}")).join(r.scheme.name()), r)?;
            report(r);
        }
    }
    std::fs::create_dir_all(&common.output_dir).map_err(Error::from)?;
    write_sweep_summary(&key, &runs, create(&common.output_dir.join("summary.csv"))?)?;
    println!("wrote {}", common.output_dir.display());
    non_converged(&runs.iter().flat_map(|(_, rs)| rs.iter()).collect::<Vec<_>>())
}

fn validate(common: &Common, instances: usize) -> Result<(), Failure> {
    let cfg = load(common)?;
    let checks = run_checks(&cfg, instances)?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    for c in &checks {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if failed > 0 {
        return Err(Failure {
            code: EXIT_SOLVER,
            message: format!("{failed} invariant checks failed"),
        });
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(common) => single(&common, Scheme::Proposed),
        Command::Baseline { common, baseline } => {
            let scheme = Scheme::parse(&baseline).map_err(|e| Failure::usage(e.to_string()))?;
            if scheme == Scheme::Proposed {
                return Err(Failure::usage("`proposed` is not a baseline; use `run`"));
            }
            single(&common, scheme)
        }
        Command::Sweep(common) => sweep(&common),
        Command::Validate { common, instances } => validate(&common, instances),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
