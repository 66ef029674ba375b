use serde_json::{json, Value};

use super::{diffusion_at, num, summary, Csv, Outcome, RunOutput};
use crate::bounds::fit_mott_exponent;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::stats::weighted_linear_fit;

/// `D(beta)` over the grid, then the Mott-law fit.
pub fn run_mott_scan(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let d = cfg.model.d;
    let mut csv = Csv::new(cfg, &["beta", "axis", "D", "stderr", "L", "t_max", "n"]);
    let mut pairs = Vec::new();
    let mut sigmas = Vec::new();
    let mut per_beta = Vec::new();
    for (k, &beta) in cfg.model.beta.values().iter().enumerate() {
        let run = diffusion_at(cfg, beta, derive_seed(cfg.seed, k as u64))?;
        let e = &run.estimate;
        for a in 0..d {
            let v = e.axis(a);
            csv.row(&[
                num(beta),
                (a + 1).to_string(),
                num(v.value),
                num(v.stderr),
                num(cfg.sizes.l),
                num(run.t_max),
                e.n_environments.to_string(),
            ]);
        }
        let mean = e.mean_axis();
        let se = (0..d).map(|a| e.axis(a).stderr.powi(2)).sum::<f64>().sqrt() / d as f64;
        pairs.push((beta, mean));
        sigmas.push(se);
        per_beta.push(json!({
            "beta": beta,
            "D_mean_axis": mean,
            "stderr": se,
            "t_max": run.t_max,
            "t_max_jumps": run.t_max_jumps,
            "mean_escape_rate": run.mean_escape_rate,
            "pilot_doublings": run.pilot_doublings,
            "mean_jumps": e.mean_jumps,
            "stuck_walks": e.n_stuck,
        }));
    }
    let mut rejected = Vec::new();
    let fit = match fit_mott_exponent(&pairs, cfg.model.alpha, d) {
        Ok(f) => {
            let [lo, hi] = cfg.model.exponent_window;
            if !(f.slope.slope >= lo && f.slope.slope <= hi) {
                rejected.push(format!("fitted exponent {:.4} outside [{lo}, {hi}]", f.slope.slope));
            }
            let usable: Vec<usize> = (0..pairs.len()).filter(|&i| pairs[i].1 > 0.0 && pairs[i].1 < 1.0).collect();
            let x: Vec<f64> = usable.iter().map(|&i| pairs[i].0.ln()).collect();
            let y: Vec<f64> = usable.iter().map(|&i| (-pairs[i].1.ln()).ln()).collect();
            // delta method: sd of log(-log D) is sd(D) / (D |log D|)
            let s: Vec<f64> = usable.iter().map(|&i| sigmas[i] / (pairs[i].1 * pairs[i].1.ln().abs())).collect();
            let weighted = weighted_linear_fit(&x, &y, Some(&s));
            json!({ "fit": f, "weighted_slope": weighted })
        }
        Err(Error::InsufficientData(msg)) => json!({ "fit": Value::Null, "reason": msg }),
        Err(e) => return Err(e),
    };
    let outcome = Outcome::from_findings(rejected, Vec::new());
    let results = json!({ "per_beta": per_beta, "exponent": fit });
    Ok(RunOutput {
        experiment: cfg.experiment,
        tables: vec![("mott_scan.csv".into(), csv.finish())],
        summary: summary(cfg, &outcome, results),
        outcome,
    })
}
