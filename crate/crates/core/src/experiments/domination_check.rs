use serde_json::json;

use super::{num, summary, Csv, Outcome, RunOutput};
use crate::config::{ExperimentConfig, ProcessKind};
use crate::domination::{coupling_replicas, CouplingParams};
use crate::env::{count_field, CrystalSource, CrystalSpec, StationarySource};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, replica_rng};
use crate::stats::{ks_distance_counts, ks_threshold_3sigma};

/// Coupling audit on the crystal: the configured crystal is the bounded
/// process and `domination.p` the thinning.
pub fn run_domination_check(cfg: &ExperimentConfig) -> Result<RunOutput> {
    if cfg.process.kind != ProcessKind::Crystal {
        return Err(Error::Config {
            line: None,
            message: "domination-check needs process.kind = \"crystal\" (a process with bounded cell counts)".into(),
        });
    }
    let dc = &cfg.domination;
    let n = cfg.sizes.replicas;
    let geometry = cfg.geometry()?;
    let source = CrystalSource { crystal: cfg.crystal_spec().validate()?, geometry: geometry.clone(), nu: cfg.nu()? };
    let params = CouplingParams { p: dc.p, k: dc.k, n: dc.n };
    let audit_seed = derive_seed(cfg.seed, 1);
    let (rows, y1) = coupling_replicas(&source, params, n, audit_seed)?;

    let mut audit = Csv::new(cfg, &["replica", "seed", "min_gap", "violations"]);
    for r in &rows {
        audit.row(&[r.replica.to_string(), r.seed.to_string(), r.min_gap.to_string(), r.violations.to_string()]);
    }
    let failed: Vec<&_> = rows.iter().filter(|r| r.violations > 0).collect();
    let violated: Vec<String> = failed
        .iter()
        .map(|r| format!("replica {}: {} sites with Y1 > Y2", r.replica, r.violations))
        .collect();

    // marginal of Y1 against directly sampled thinned crystals
    let mut spec: CrystalSpec = cfg.crystal_spec();
    spec.dilution_p *= dc.p;
    let mut rejected = Vec::new();
    let (ks, threshold) = if spec.dilution_p > 0.0 {
        let thinned = CrystalSource { crystal: spec.validate()?, geometry: geometry.clone(), nu: cfg.nu()? };
        let seed = derive_seed(cfg.seed, 2);
        let mut direct = Vec::with_capacity(y1.len());
        for i in 0..n as u64 {
            let c = thinned.sample(&mut replica_rng(seed, i))?;
            direct.extend_from_slice(count_field(c.points(), dc.k, &geometry)?.counts());
        }
        let ks = ks_distance_counts(&y1, &direct);
        let threshold = ks_threshold_3sigma(y1.len(), direct.len());
        if ks >= threshold {
            rejected.push(format!("Y1 cell-count marginal: KS distance {ks:.4} >= {threshold:.4}"));
        }
        (ks, threshold)
    } else {
        if y1.iter().any(|&c| c != 0) {
            rejected.push("p = 0 but Y1 is not identically zero".into());
        }
        (0.0, 0.0)
    };
    let mut marg = Csv::new(cfg, &["statistic", "value", "threshold"]);
    marg.row(&["ks_distance".into(), num(ks), num(threshold)]);

    let holding = rows.len() - failed.len();
    let outcome = Outcome::from_findings(rejected, violated);
    let results = json!({
        "replicas": rows.len(),
        "replicas_holding": holding,
        "min_gap": rows.iter().map(|r| r.min_gap).min(),
        "ks_distance": ks,
        "ks_threshold": threshold,
    });
    Ok(RunOutput {
        experiment: cfg.experiment,
        tables: vec![("domination_audit.csv".into(), audit.finish()), ("domination_marginal.csv".into(), marg.finish())],
        summary: summary(cfg, &outcome, results),
        outcome,
    })
}
