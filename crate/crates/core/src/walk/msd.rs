//! Mean-square displacement and diffusion-matrix estimation.

use serde::{Deserialize, Serialize};

use super::{SampledWalk, Trajectory};
use crate::error::{invalid_arg, Error, Result};
use crate::stats::{Estimate, RunningStats};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsdRow {
    pub t: f64,
    pub axis: usize,
    pub msd: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Per-axis mean-square displacement at each sample time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsdTable {
    pub rows: Vec<MsdRow>,
}

impl MsdTable {
    pub fn get(&self, k: usize, axis: usize, dim: usize) -> &MsdRow {
        &self.rows[k * dim + axis]
    }

    /// CSV body with header `t,axis,msd,stderr,n` (axes numbered from 1).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,axis,msd,stderr,n\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{},{}\n", r.t, r.axis + 1, r.msd, r.stderr, r.n));
        }
        s
    }
}

fn table_from_groups(groups: &[Vec<&[f64]>], times: &[f64], dim: usize) -> Result<MsdTable> {
    if groups.iter().all(|g| g.is_empty()) {
        return Err(Error::InsufficientData("no trajectories".into()));
    }
    let mut rows = Vec::with_capacity(times.len() * dim);
    for (k, &t) in times.iter().enumerate() {
        for a in 0..dim {
            let s: RunningStats = groups
                .iter()
                .filter(|g| !g.is_empty())
                .map(|g| g.iter().map(|p| p[k * dim + a].powi(2)).sum::<f64>() / g.len() as f64)
                .collect();
            rows.push(MsdRow {
                t,
                axis: a,
                msd: s.mean(),
                stderr: s.stderr(),
                n: s.count(),
            });
        }
    }
    Ok(MsdTable { rows })
}

/// MSD of independent trajectories, each treated as its own environment.
pub fn msd(trajectories: &[Trajectory], sample_times: &[f64]) -> Result<MsdTable> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::InsufficientData("no trajectories".into()))?;
    let dim = first.dim();
    if let Some(&t) = sample_times.iter().find(|&&t| t < 0.0 || t > first.t_max()) {
        return Err(invalid_arg(format!("sample time {t} outside [0, t_max]")));
    }
    let sampled: Vec<Vec<f64>> = trajectories
        .iter()
        .map(|tr| sample_times.iter().flat_map(|&t| tr.position_at(t).to_vec()).collect())
        .collect();
    let groups: Vec<Vec<&[f64]>> = sampled.iter().map(|s| vec![s.as_slice()]).collect();
    table_from_groups(&groups, sample_times, dim)
}

/// MSD from sampled walks grouped by environment: walks of one environment
/// are averaged first, then environments are averaged.
pub fn msd_grouped(groups: &[Vec<SampledWalk>], sample_times: &[f64], dim: usize) -> Result<MsdTable> {
    let g: Vec<Vec<&[f64]>> = groups
        .iter()
        .map(|w| w.iter().map(|s| s.positions.as_slice()).collect())
        .collect();
    table_from_groups(&g, sample_times, dim)
}

/// Least-squares slope weights over the sample times in the final
/// `window_fraction` of `[0, t_max]`: `slope = sum_k w_k y_k`.
pub fn slope_weights(times: &[f64], window_fraction: f64) -> Result<Vec<(usize, f64)>> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(invalid_arg(format!("window fraction {window_fraction} outside (0, 1]")));
    }
    let t_max = times.last().copied().unwrap_or(0.0);
    let from = t_max * (1.0 - window_fraction);
    let sel: Vec<usize> = (0..times.len()).filter(|&k| times[k] >= from - 1e-12 * t_max).collect();
    if sel.len() < 2 {
        return Err(Error::InsufficientData(
            "need at least two sample times in the fit window".into(),
        ));
    }
    let mean = sel.iter().map(|&k| times[k]).sum::<f64>() / sel.len() as f64;
    let sxx: f64 = sel.iter().map(|&k| (times[k] - mean).powi(2)).sum();
    Ok(sel.iter().map(|&k| (k, (times[k] - mean) / sxx)).collect())
}

/// Diffusion matrix estimated from the MSD slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionEstimate {
    pub dim: usize,
    /// row-major `D_ab`
    pub matrix: Vec<Estimate>,
    pub n_environments: usize,
    pub n_walks: usize,
    pub n_stuck: usize,
    pub mean_jumps: f64,
}

impl DiffusionEstimate {
    pub fn axis(&self, a: usize) -> Estimate {
        self.matrix[a * self.dim + a]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|a| self.axis(a).value).sum()
    }

    /// `a . D a` for a direction `a` (not normalized here).
    pub fn quadratic_form(&self, a: &[f64]) -> f64 {
        let d = self.dim;
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += a[i] * self.matrix[i * d + j].value * a[j];
            }
        }
        s
    }

    /// Standard error of `a . D a` from the per-environment spread; filled in
    /// by [`estimate_diffusion`] for the requested directions.
    pub fn mean_axis(&self) -> f64 {
        self.trace() / self.dim as f64
    }
}

/// `D_ab = lim E[X_a X_b] / t`, estimated per walk as the least-squares slope
/// of `X_a(t) X_b(t)` over the final `window_fraction` of the sample times.
/// Walks of one environment are averaged, and the standard error is taken
/// across environments.
pub fn estimate_diffusion(
    groups: &[Vec<SampledWalk>],
    sample_times: &[f64],
    window_fraction: f64,
    dim: usize,
) -> Result<DiffusionEstimate> {
    let w = slope_weights(sample_times, window_fraction)?;
    let per_env = per_environment_slopes(groups, &w, dim);
    if per_env.is_empty() {
        return Err(Error::InsufficientData("no walks".into()));
    }
    let matrix = (0..dim * dim)
        .map(|m| per_env.iter().map(|v| v[m]).collect::<RunningStats>().estimate())
        .collect();
    let walks: Vec<&SampledWalk> = groups.iter().flatten().collect();
    Ok(DiffusionEstimate {
        dim,
        matrix,
        n_environments: per_env.len(),
        n_walks: walks.len(),
        n_stuck: walks.iter().filter(|s| s.stuck).count(),
        mean_jumps: walks.iter().map(|s| s.jumps as f64).sum::<f64>() / walks.len() as f64,
    })
}

/// Per-environment slope matrices (row-major), one entry per non-empty group.
pub fn per_environment_slopes(groups: &[Vec<SampledWalk>], weights: &[(usize, f64)], dim: usize) -> Vec<Vec<f64>> {
    groups
        .iter()
        .filter(|g| !g.is_empty())
        .map(|g| {
            let mut acc = vec![0.0; dim * dim];
            for s in g {
                for &(k, wk) in weights {
                    let x = &s.positions[k * dim..(k + 1) * dim];
                    for i in 0..dim {
                        for j in 0..dim {
                            acc[i * dim + j] += wk * x[i] * x[j];
                        }
                    }
                }
            }
            acc.iter().map(|v| v / g.len() as f64).collect()
        })
        .collect()
}

/// Standard error of `a . D a` using the per-environment slopes.
pub fn quadratic_form_estimate(per_env: &[Vec<f64>], a: &[f64]) -> Estimate {
    let d = a.len();
    per_env
        .iter()
        .map(|m| {
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..d {
                    s += a[i] * m[i * d + j] * a[j];
                }
            }
            s
        })
        .collect::<RunningStats>()
        .estimate()
}

/// Trajectory CSV: `t,site,x1..xd` with unwrapped positions.
pub fn trajectory_csv(tr: &Trajectory) -> String {
    let d = tr.dim();
    let mut s = String::from("t,site");
    for a in 1..=d {
        s.push_str(&format!(",x{a}"));
    }
    s.push('\n');
    for k in 0..tr.len() {
        s.push_str(&format!("{},{}", tr.times()[k], tr.sites()[k]));
        for v in tr.position(k) {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    s
}
