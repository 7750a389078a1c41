mod config;
mod experiments;
mod output;
mod report;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use lyapscope_core::Error as CoreError;

use config::{config_error, resolve_output_dir, ConfigError, ExperimentConfig, ExperimentKind};
use output::{write_run, RunManifest};

#[derive(Parser)]
#[command(name = "lyapscope", version, about = "Lyapunov exponent, entropy and dimension experiments for surface maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `rng_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory; defaults to `output_dir` or `runs/<experiment>-<hash>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Top and bottom exponents over random starts.
    Exponents(RunArgs),
    /// Bowen or Katok covering-number entropy brackets.
    Entropy(RunArgs),
    /// Neutral-block decompositions of lifted orbits.
    Neutral(RunArgs),
    /// Exact decompositions of the periodic-word example on the 3-shift.
    ShiftExample1(RunArgs),
    /// Reparametrization counts for a curve pushed forward by the map.
    CurveGrowth(RunArgs),
    /// Limits of a map family against the exponent and entropy identities.
    SweepIdentityCheck(RunArgs),
    /// Renders tables and a plot for a finished run directory.
    Report { run_dir: PathBuf },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return match e {
                CoreError::InvalidParameter(_)
                | CoreError::NonTransitive
                | CoreError::LengthMismatch { .. }
                | CoreError::IndexOutOfRange { .. } => 2,
                _ => 3,
            };
        }
    }
    1
}

fn run_experiment(kind: ExperimentKind, args: &RunArgs) -> Result<PathBuf> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    cfg.validate(kind)?;
    if let Some(seed) = args.seed {
        cfg.rng_seed = seed;
    }
    let workers = match args.workers {
        Some(0) => return Err(config_error("--workers must be positive")),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    let out = pool.install(|| experiments::run(&cfg))?;
    let dir = resolve_output_dir(&cfg, args.out.as_deref());
    let manifest = RunManifest {
        experiment: kind.as_str().to_string(),
        config_hash: cfg.hash(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        rng_seed: cfg.rng_seed,
        workers,
        timing: BTreeMap::new(),
        row_counts: BTreeMap::new(),
        json_files: Vec::new(),
    };
    write_run(&dir, &serde_json::to_value(&cfg)?, &out, manifest)?;
    Ok(dir)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (kind, args) = match cli.command {
        Command::Exponents(a) => (ExperimentKind::Exponents, a),
        Command::Entropy(a) => (ExperimentKind::Entropy, a),
        Command::Neutral(a) => (ExperimentKind::Neutral, a),
        Command::ShiftExample1(a) => (ExperimentKind::ShiftExample1, a),
        Command::CurveGrowth(a) => (ExperimentKind::CurveGrowth, a),
        Command::SweepIdentityCheck(a) => (ExperimentKind::SweepIdentityCheck, a),
        Command::Report { run_dir } => {
            return match report::render(&run_dir) {
                Ok(r) => {
                    print!("{}", r.text);
                    eprintln!("wrote {} and {}", r.markdown.display(), r.svg.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(2)
                }
            };
        }
    };
    match run_experiment(kind, &args) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use lyapscope_core::Point2;

    #[test]
    fn errors_map_to_exit_codes() {
        assert_eq!(exit_code(&config_error("x")), 2);
        assert_eq!(exit_code(&CoreError::InvalidParameter("a".into()).into()), 2);
        let escape: anyhow::Error = CoreError::OrbitEscape { step: 3, point: Point2::new(9.0, 9.0) }.into();
        assert_eq!(exit_code(&escape.context("running")), 3);
        assert_eq!(exit_code(&anyhow::anyhow!("io")), 1);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
