use rayon::prelude::*;
use serde_json::json;

use super::{num, summary, Csv, Outcome, RunOutput};
use crate::config::ExperimentConfig;
use crate::env::{
    campbell_battery, palm_battery, CrystalSource, LocalBattery, PalmSource, PoissonSource, StationarySource,
};
use crate::error::Result;
use crate::rng::{derive_seed, replica_rng};
use crate::stats::{Estimate, RunningStats};

/// Campbell-resampled against direct Palm statistics, for the Poisson
/// process and the diluted square crystal.
pub fn run_palm_check(cfg: &ExperimentConfig) -> Result<RunOutput> {
    run_palm_check_with(cfg, None)
}

/// As [`run_palm_check`], optionally replacing the direct Poisson Palm
/// sampler (used to check that a wrong sampler is rejected).
pub fn run_palm_check_with(cfg: &ExperimentConfig, poisson_palm: Option<&dyn PalmSource>) -> Result<RunOutput> {
    let pa = &cfg.palm;
    let n = cfg.sizes.replicas;
    let geometry = cfg.geometry()?;
    let nu = cfg.nu()?;
    let battery = LocalBattery { annuli: pa.annuli.clone(), nn_radii: pa.nn_radii.clone() };
    let names = battery.names();
    let stat = |c: &_| battery.evaluate(c);

    let poisson = PoissonSource { rho: cfg.process.rho, geometry: geometry.clone(), nu: nu.clone() };
    let crystal = CrystalSource { crystal: cfg.crystal_spec().validate()?, geometry: geometry.clone(), nu };

    let mut csv = Csv::new(cfg, &["process", "statistic", "campbell", "campbell_se", "direct", "direct_se", "z", "pass"]);
    let mut rejected = Vec::new();
    let mut rows = Vec::new();
    let mut compare = |process: &str, camp: &[Estimate], direct: &[Estimate], names: &[String]| {
        for (m, ((name, c), dr)) in names.iter().zip(camp).zip(direct).enumerate() {
            let mut dr = *dr;
            if battery.is_indicator(m) {
                // pooled Bernoulli variance: the plug-in error vanishes when no miss is observed
                let p = 0.5 * (c.value + dr.value);
                dr.stderr = dr.stderr.max((p * (1.0 - p) / dr.n as f64).sqrt());
            }
            let z = c.z_score(&dr);
            let pass = z.is_finite() && z <= pa.sigma || (c.value == dr.value);
            if !pass {
                rejected.push(format!("{process} {name}: z = {z:.2}"));
            }
            csv.row(&[
                process.into(),
                name.clone(),
                num(c.value),
                num(c.stderr),
                num(dr.value),
                num(dr.stderr),
                num(z),
                pass.to_string(),
            ]);
            rows.push(json!({ "process": process, "statistic": name, "z": z, "pass": pass }));
        }
    };

    let camp = campbell_battery(&poisson, pa.k, stat, n, derive_seed(cfg.seed, 1))?;
    let direct = match poisson_palm {
        Some(s) => palm_battery(s, stat, n, derive_seed(cfg.seed, 2))?,
        None => palm_battery(&poisson, stat, n, derive_seed(cfg.seed, 2))?,
    };
    compare("poisson", &camp, &direct, &names);

    let camp = campbell_battery(&crystal, pa.k, stat, n, derive_seed(cfg.seed, 3))?;
    let direct = palm_battery(&crystal, stat, n, derive_seed(cfg.seed, 4))?;
    compare("crystal", &camp, &direct, &names);

    // crystal intensity against p |Delta ∩ Gamma| / |Delta|
    let vol = geometry.volume();
    let seed = derive_seed(cfg.seed, 5);
    let dens: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| crystal.sample(&mut replica_rng(seed, i)).map(|c| c.len() as f64 / vol))
        .collect::<Result<_>>()?;
    let est = dens.into_iter().collect::<RunningStats>().estimate();
    let expected = crystal.intensity();
    let z = (est.value - expected).abs() / est.stderr;
    let pass = z <= pa.sigma || est.value == expected;
    if !pass {
        rejected.push(format!("crystal intensity: z = {z:.2}"));
    }
    csv.row(&[
        "crystal".into(),
        "intensity".into(),
        num(est.value),
        num(est.stderr),
        num(expected),
        "0".into(),
        num(z),
        pass.to_string(),
    ]);
    rows.push(json!({ "process": "crystal", "statistic": "intensity", "z": z, "pass": pass }));

    let outcome = Outcome::from_findings(rejected, Vec::new());
    Ok(RunOutput {
        experiment: cfg.experiment,
        tables: vec![("palm_check.csv".into(), csv.finish())],
        summary: summary(cfg, &outcome, json!({ "statistics": rows })),
        outcome,
    })
}
