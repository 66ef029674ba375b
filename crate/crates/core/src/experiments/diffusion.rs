use rayon::prelude::*;
use serde::Serialize;

use super::ProcessSource;
use crate::config::ExperimentConfig;
use crate::env::PalmSource;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, replica_rng};
use crate::walk::{
    escape_rate, estimate_diffusion, msd_grouped, per_environment_slopes, simulate_sampled, slope_weights,
    DiffusionEstimate, Engine, NeighborIndex, RateModel, SampledWalk,
};

/// Doublings of the pilot horizon before giving up.
const MAX_DOUBLINGS: usize = 40;

/// Empirical diffusion matrix at one `beta`.
#[derive(Debug, Clone, Serialize)]
pub struct DiffusionRun {
    pub beta: f64,
    pub t_max: f64,
    /// `t_max E[lambda_0]`
    pub t_max_jumps: f64,
    pub mean_escape_rate: f64,
    pub pilot_doublings: usize,
    pub estimate: DiffusionEstimate,
    /// per-environment slope matrices, row-major
    #[serde(skip)]
    pub per_env: Vec<Vec<f64>>,
}

fn sample_times(t_max: f64, points: usize) -> Vec<f64> {
    (0..=points).map(|k| t_max * k as f64 / points as f64).collect()
}

fn walks(
    source: &ProcessSource,
    model: &RateModel,
    times: &[f64],
    n_env: usize,
    per_env: usize,
    seed: u64,
) -> Result<Vec<Vec<SampledWalk>>> {
    let cell = (model.r_cut() / 4.0).max(1.0);
    (0..n_env as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(seed, i);
            let cfg = source.sample_palm(&mut rng)?;
            let index = NeighborIndex::new(&cfg, cell);
            let mut engine = Engine::new(&cfg, model, &index)?;
            (0..per_env).map(|_| simulate_sampled(&mut engine, times, &mut rng)).collect()
        })
        .collect()
}

/// `E[lambda_0]` under the Palm law: closed form for Poisson, otherwise the
/// mean over `n` Palm samples.
fn mean_escape_rate(source: &ProcessSource, model: &RateModel, cfg: &ExperimentConfig, n: usize, seed: u64) -> Result<f64> {
    if let ProcessSource::Poisson(p) = source {
        if model.is_mean_field() {
            return Ok(model.mean_escape_rate_poisson(p.rho, cfg.model.d, &p.nu, 0, &mut replica_rng(seed, 0)));
        }
    }
    let rates: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let c = source.sample_palm(&mut replica_rng(seed, i))?;
            let index = NeighborIndex::new(&c, (model.r_cut() / 4.0).max(1.0));
            Ok(escape_rate(0, &c, model, &index))
        })
        .collect::<Result<_>>()?;
    Ok(rates.iter().sum::<f64>() / n as f64)
}

/// Horizon for one `beta`: starting from `100 / E[lambda_0]`, double until
/// the pilot mean per-axis MSD at the horizon reaches `msd_target`. Returns
/// `(t_max, E[lambda_0], doublings)`.
pub fn pilot_t_max(cfg: &ExperimentConfig, beta: f64, seed: u64) -> Result<(f64, f64, usize)> {
    let source = ProcessSource::from_config(cfg)?;
    let model = cfg.rate_model(beta)?;
    let s = &cfg.sizes;
    let lam = mean_escape_rate(&source, &model, cfg, s.pilot_walkers, derive_seed(seed, 1))?;
    if let Some(t) = s.t_max {
        return Ok((t, lam, 0));
    }
    let mut t = 100.0 / lam;
    for k in 0..MAX_DOUBLINGS {
        let times = sample_times(t, s.sample_points);
        let g = walks(&source, &model, &times, s.pilot_walkers, 1, derive_seed(seed, 2))?;
        let table = msd_grouped(&g, &times, cfg.model.d)?;
        let last = times.len() - 1;
        let mean: f64 = (0..cfg.model.d).map(|a| table.get(last, a, cfg.model.d).msd).sum::<f64>() / cfg.model.d as f64;
        if mean >= s.msd_target {
            return Ok((t, lam, k));
        }
        t *= 2.0;
    }
    Err(Error::InsufficientData(format!(
        "pilot MSD at beta = {beta} stayed below {} after {MAX_DOUBLINGS} doublings",
        s.msd_target
    )))
}

/// Diffusion matrix at `beta` from `sizes.replicas` Palm environments.
pub fn diffusion_at(cfg: &ExperimentConfig, beta: f64, seed: u64) -> Result<DiffusionRun> {
    let (t_max, lam, doublings) = pilot_t_max(cfg, beta, derive_seed(seed, 0xB11))?;
    let source = ProcessSource::from_config(cfg)?;
    let model = cfg.rate_model(beta)?;
    let s = &cfg.sizes;
    let times = sample_times(t_max, s.sample_points);
    let groups = walks(&source, &model, &times, s.replicas, s.walks_per_env, seed)?;
    let d = cfg.model.d;
    let estimate = estimate_diffusion(&groups, &times, s.window_fraction, d)?;
    let w = slope_weights(&times, s.window_fraction)?;
    let per_env = per_environment_slopes(&groups, &w, d);
    Ok(DiffusionRun {
        beta,
        t_max,
        t_max_jumps: t_max * lam,
        mean_escape_rate: lam,
        pilot_doublings: doublings,
        estimate,
        per_env,
    })
}
