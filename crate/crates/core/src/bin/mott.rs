use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mott::config::{ExperimentConfig, ExperimentKind};
use mott::experiments;
use mott::Error;

#[derive(Parser)]
#[command(name = "mott", version, about = "Mott variable-range hopping experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Diffusion coefficient over a beta grid and the Mott-law fit
    MottScan(Common),
    /// Critical radius, crossing tables, subcritical decay, cluster moments
    PercRc(Common),
    /// Campbell-resampled against direct Palm statistics
    PalmCheck(Common),
    /// Coupling audit of thinned crystals under a Poisson field
    DominationCheck(Common),
    /// Variational and cluster bounds against the empirical diffusion matrix
    BoundCompare(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults are used when absent
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// worker threads (default: all cores)
    #[arg(long)]
    workers: Option<usize>,
    /// override the replica count
    #[arg(long)]
    replicas: Option<usize>,
    /// print the effective configuration and exit
    #[arg(long)]
    print_config: bool,
}

const EXIT_CONFIG: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::InvalidParameter(_) | Error::InvalidArgument(_) | Error::Io(_) => EXIT_CONFIG,
        Error::InsufficientData(_) => 1,
        Error::CapViolation { .. } | Error::DensityBound { .. } | Error::StuckWalker { .. } | Error::Numerical(_) => 2,
    }
}

fn load(kind: ExperimentKind, c: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &c.config {
        Some(p) => {
            let cfg = ExperimentConfig::load(p)?;
            if cfg.experiment != kind {
                return Err(Error::Config {
                    line: None,
                    message: format!("config is for {}, not {}", cfg.experiment.name(), kind.name()),
                });
            }
            cfg
        }
        None => ExperimentConfig::new(kind),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(n) = c.replicas {
        cfg.sizes.replicas = n;
    }
    if let Some(o) = &c.out {
        cfg.output = Some(o.display().to_string());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = match &cli.command {
        Command::MottScan(c) => (ExperimentKind::MottScan, c),
        Command::PercRc(c) => (ExperimentKind::PercRc, c),
        Command::PalmCheck(c) => (ExperimentKind::PalmCheck, c),
        Command::DominationCheck(c) => (ExperimentKind::DominationCheck, c),
        Command::BoundCompare(c) => (ExperimentKind::BoundCompare, c),
    };
    let cfg = match load(kind, common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    if common.print_config {
        match cfg.to_toml() {
            Ok(t) => {
                print!("{t}");
                return ExitCode::SUCCESS;
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    }
    if let Some(n) = common.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} workers: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let out_dir = PathBuf::from(cfg.output.clone().unwrap_or_else(|| format!("out/{}", kind.name())));
    let result = experiments::run(&cfg).and_then(|r| r.write(&out_dir).map(|_| r));
    match result {
        Ok(r) => {
            match &r.outcome {
                experiments::Outcome::Pass => eprintln!("{}: pass ({})", kind.name(), out_dir.display()),
                experiments::Outcome::Rejected(m) | experiments::Outcome::Violation(m) => {
                    for line in m {
                        eprintln!("{}: {line}", kind.name());
                    }
                }
            }
            ExitCode::from(r.outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
