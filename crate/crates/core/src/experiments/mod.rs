//! The five canned experiments behind the command-line tool.
//!
//! Each experiment turns an [`ExperimentConfig`] into CSV tables, a JSON
//! summary and an [`Outcome`]. All randomness is derived from the config seed
//! and replica indices, so outputs do not depend on the worker count.

mod bound_compare;
mod diffusion;
mod domination_check;
mod mott_scan;
mod palm_check;
mod perc_rc;

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, ExperimentKind, ProcessKind};
use crate::env::{CrystalSource, MarkedConfiguration, PalmSource, PoissonSource, StationarySource};
use crate::error::Result;
use crate::geometry::BoxGeometry;
use crate::rng::SimRng;

pub use bound_compare::run_bound_compare;
pub use diffusion::{diffusion_at, pilot_t_max, DiffusionRun};
pub use domination_check::run_domination_check;
pub use mott_scan::run_mott_scan;
pub use palm_check::{run_palm_check, run_palm_check_with};
pub use perc_rc::run_perc_rc;

/// Version of the CSV layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Result of the checks an experiment performs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", content = "reasons", rename_all = "kebab-case")]
pub enum Outcome {
    Pass,
    /// a statistical test rejected
    Rejected(Vec<String>),
    /// an exact assertion failed
    Violation(Vec<String>),
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Pass => 0,
            Outcome::Rejected(_) => 1,
            Outcome::Violation(_) => 2,
        }
    }

    /// Combine rejection and violation messages; violations take precedence.
    pub fn from_findings(rejected: Vec<String>, violated: Vec<String>) -> Self {
        if !violated.is_empty() {
            Outcome::Violation(violated)
        } else if !rejected.is_empty() {
            Outcome::Rejected(rejected)
        } else {
            Outcome::Pass
        }
    }

    pub fn passed(&self) -> bool {
        *self == Outcome::Pass
    }
}

/// Tables and summary of one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub experiment: ExperimentKind,
    /// `(file name, contents)`
    pub tables: Vec<(String, String)>,
    pub summary: Value,
    pub outcome: Outcome,
}

impl RunOutput {
    /// Write the tables and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, text) in &self.tables {
            std::fs::write(dir.join(name), text)?;
        }
        let s = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        std::fs::write(dir.join("summary.json"), s + "\n")?;
        Ok(())
    }
}

/// CSV text with the `# schema=.. seed=.. params=..` line and a header row.
pub(crate) struct Csv {
    header: String,
    writer: csv::Writer<Vec<u8>>,
}

impl Csv {
    pub(crate) fn new(cfg: &ExperimentConfig, columns: &[&str]) -> Self {
        let header = format!("# schema={SCHEMA_VERSION} seed={} params={}\n", cfg.seed, cfg.echo());
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        writer.write_record(columns).expect("write to memory");
        Self { header, writer }
    }

    pub(crate) fn row(&mut self, fields: &[String]) {
        self.writer.write_record(fields).expect("write to memory");
    }

    pub(crate) fn finish(self) -> String {
        let body = self.writer.into_inner().expect("flush to memory");
        self.header + &String::from_utf8(body).expect("fields are UTF-8")
    }
}

/// Shortest round-trip decimal form.
pub(crate) fn num(x: f64) -> String {
    let mut s = String::new();
    write!(s, "{x}").expect("write to string");
    s
}

/// Palm and stationary sampler for the configured process.
#[derive(Debug, Clone)]
pub enum ProcessSource {
    Poisson(PoissonSource),
    Crystal(CrystalSource),
}

impl ProcessSource {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let geometry = cfg.geometry()?;
        let nu = cfg.nu()?;
        Ok(match cfg.process.kind {
            ProcessKind::Poisson => ProcessSource::Poisson(PoissonSource { rho: cfg.process.rho, geometry, nu }),
            ProcessKind::Crystal => {
                ProcessSource::Crystal(CrystalSource { crystal: cfg.crystal_spec().validate()?, geometry, nu })
            }
        })
    }
}

impl PalmSource for ProcessSource {
    fn geometry(&self) -> &BoxGeometry {
        match self {
            ProcessSource::Poisson(s) => &s.geometry,
            ProcessSource::Crystal(s) => &s.geometry,
        }
    }

    fn sample_palm(&self, rng: &mut SimRng) -> Result<MarkedConfiguration> {
        match self {
            ProcessSource::Poisson(s) => s.sample_palm(rng),
            ProcessSource::Crystal(s) => s.sample_palm(rng),
        }
    }
}

impl StationarySource for ProcessSource {
    fn geometry(&self) -> &BoxGeometry {
        PalmSource::geometry(self)
    }

    fn intensity(&self) -> f64 {
        match self {
            ProcessSource::Poisson(s) => s.rho,
            ProcessSource::Crystal(s) => s.crystal.intensity(),
        }
    }

    fn sample(&self, rng: &mut SimRng) -> Result<MarkedConfiguration> {
        match self {
            ProcessSource::Poisson(s) => s.sample(rng),
            ProcessSource::Crystal(s) => s.sample(rng),
        }
    }
}

/// Run the configured experiment.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let mut out = match cfg.experiment {
        ExperimentKind::MottScan => run_mott_scan(cfg)?,
        ExperimentKind::PercRc => run_perc_rc(cfg)?,
        ExperimentKind::PalmCheck => run_palm_check(cfg)?,
        ExperimentKind::DominationCheck => run_domination_check(cfg)?,
        ExperimentKind::BoundCompare => run_bound_compare(cfg)?,
    };
    if let Value::Object(m) = &mut out.summary {
        m.insert("timings".into(), json!({ "total_s": start.elapsed().as_secs_f64() }));
    }
    Ok(out)
}

/// Summary skeleton shared by all experiments.
pub(crate) fn summary(cfg: &ExperimentConfig, outcome: &Outcome, results: Value) -> Value {
    json!({
        "schema": SCHEMA_VERSION,
        "experiment": cfg.experiment.name(),
        "seed": cfg.seed,
        "config": cfg,
        "outcome": outcome,
        "results": results,
    })
}
