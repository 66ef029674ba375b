//! Rare-event crossing probabilities by multilevel splitting.
//!
//! The cluster of `W_r(B_r(0))` is explored breadth first while the Poisson
//! process is revealed one grid cell at a time. Given the revealed cells the
//! rest of the window is still an independent Poisson process, so a partial
//! exploration can be cloned and continued with fresh randomness. Levels are
//! sup-norm heights `|x|_inf`; the final level `L/2 - r` is the crossing event.

use std::collections::{HashMap, VecDeque};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::poisson_count;
use crate::error::{invalid_param, Result};
use crate::rng::{derive_seed, replica_rng, SimRng};
use crate::stats::RunningStats;

#[derive(Debug, Clone)]
struct Explorer {
    cells: HashMap<Vec<i64>, (u32, u32)>,
    coords: Vec<f64>,
    in_cluster: Vec<bool>,
    queue: VecDeque<u32>,
    height: f64,
}

struct Window {
    d: usize,
    half: f64,
    /// grid cell side and cells per axis
    s: f64,
    n: i64,
    r: f64,
    rho: f64,
}

enum Outcome {
    Reached,
    Died,
}

impl Window {
    fn cell_range(&self, lo: f64, hi: f64) -> (i64, i64) {
        let a = (((lo + self.half) / self.s).floor() as i64).max(0);
        let b = (((hi + self.half) / self.s).floor() as i64).min(self.n - 1);
        (a, b)
    }

    fn reveal(&self, ex: &mut Explorer, cell: &[i64], rng: &mut SimRng) -> Result<(u32, u32)> {
        if let Some(&span) = ex.cells.get(cell) {
            return Ok(span);
        }
        let vol = self.s.powi(self.d as i32);
        let k = poisson_count(self.rho * vol, rng)? as u32;
        let start = ex.in_cluster.len() as u32;
        for _ in 0..k {
            for a in 0..self.d {
                let u: f64 = rng.random();
                ex.coords.push(-self.half + (cell[a] as f64 + u) * self.s);
            }
            ex.in_cluster.push(false);
        }
        ex.cells.insert(cell.to_vec(), (start, k));
        Ok((start, k))
    }

    /// Add every revealed point within `2r` of `x` to the cluster, revealing
    /// cells as needed. Returns true once a point at height `>= level` joins.
    fn absorb_near(&self, ex: &mut Explorer, x: &[f64], level: f64, rng: &mut SimRng) -> Result<bool> {
        let d = self.d;
        let reach = 2.0 * self.r;
        let ranges: Vec<(i64, i64)> = x.iter().map(|&v| self.cell_range(v - reach, v + reach)).collect();
        let mut cell: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        let mut hit = false;
        loop {
            let (start, k) = self.reveal(ex, &cell, rng)?;
            for j in start..start + k {
                let j = j as usize;
                if ex.in_cluster[j] {
                    continue;
                }
                let y = &ex.coords[j * d..(j + 1) * d];
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                if d2 <= reach * reach {
                    let h = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    ex.in_cluster[j] = true;
                    ex.queue.push_back(j as u32);
                    ex.height = ex.height.max(h);
                    hit |= h >= level;
                }
            }
            let mut a = 0;
            loop {
                if a == d {
                    return Ok(hit);
                }
                cell[a] += 1;
                if cell[a] <= ranges[a].1 {
                    break;
                }
                cell[a] = ranges[a].0;
                a += 1;
            }
        }
    }

    fn start(&self, rng: &mut SimRng, level: f64) -> Result<(Explorer, Outcome)> {
        let mut ex = Explorer {
            cells: HashMap::new(),
            coords: Vec::new(),
            in_cluster: Vec::new(),
            queue: VecDeque::new(),
            height: 0.0,
        };
        let origin = vec![0.0; self.d];
        if self.absorb_near(&mut ex, &origin, level, rng)? {
            return Ok((ex, Outcome::Reached));
        }
        self.advance(ex, level, rng)
    }

    fn advance(&self, mut ex: Explorer, level: f64, rng: &mut SimRng) -> Result<(Explorer, Outcome)> {
        if ex.height >= level {
            return Ok((ex, Outcome::Reached));
        }
        while let Some(i) = ex.queue.pop_front() {
            let i = i as usize;
            let x = ex.coords[i * self.d..(i + 1) * self.d].to_vec();
            if self.absorb_near(&mut ex, &x, level, rng)? {
                return Ok((ex, Outcome::Reached));
            }
        }
        Ok((ex, Outcome::Died))
    }
}

/// Splitting estimate of a crossing probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingEstimate {
    pub l: f64,
    pub r: f64,
    /// mean over independent batches
    pub p: f64,
    pub stderr: f64,
    /// mean and standard error of `ln p` over batches with `p > 0`
    pub log_p: f64,
    pub log_stderr: f64,
    pub levels: Vec<f64>,
    pub batches: usize,
    pub per_level: usize,
}

fn one_batch(w: &Window, levels: &[f64], n: usize, seed: u64) -> Result<f64> {
    let first: Vec<(Explorer, Outcome)> = (0..n)
        .into_par_iter()
        .map(|i| w.start(&mut replica_rng(derive_seed(seed, 0), i as u64), levels[0]))
        .collect::<Result<_>>()?;
    let mut alive: Vec<Explorer> = first
        .into_iter()
        .filter_map(|(e, o)| matches!(o, Outcome::Reached).then_some(e))
        .collect();
    let mut p = alive.len() as f64 / n as f64;
    for (k, &level) in levels.iter().enumerate().skip(1) {
        if alive.is_empty() {
            return Ok(0.0);
        }
        let mut pick = replica_rng(derive_seed(seed, 2 * k as u64 + 1), 0);
        let parents: Vec<usize> = (0..n).map(|_| pick.random_range(0..alive.len())).collect();
        let step: Vec<(Explorer, Outcome)> = parents
            .into_par_iter()
            .enumerate()
            .map(|(i, j)| {
                let mut rng = replica_rng(derive_seed(seed, 2 * k as u64), i as u64);
                w.advance(alive[j].clone(), level, &mut rng)
            })
            .collect::<Result<_>>()?;
        alive = step
            .into_iter()
            .filter_map(|(e, o)| matches!(o, Outcome::Reached).then_some(e))
            .collect();
        p *= alive.len() as f64 / n as f64;
    }
    Ok(p)
}

/// Probability that the component of `W_r(B_r(0))` for Poisson(`rho`) in the
/// open cube `[-L/2, L/2)^d` reaches the boundary, by fixed-effort splitting
/// with `per_level` particles and levels every `step` in sup-norm height.
/// Each of `batches` independent runs is unbiased; the spread across them
/// gives the standard error.
pub fn crossing_probability_splitting(
    rho: f64,
    r: f64,
    d: usize,
    l: f64,
    per_level: usize,
    batches: usize,
    step: f64,
    seed: u64,
) -> Result<SplittingEstimate> {
    if !(r > 0.0 && rho > 0.0 && l > 4.0 * r && step > 0.0) {
        return Err(invalid_param(format!(
            "need positive rho, r, step and L > 4r (rho={rho}, r={r}, L={l}, step={step})"
        )));
    }
    if per_level == 0 || batches < 2 {
        return Err(invalid_param("need per_level >= 1 and at least two batches"));
    }
    let n = ((l / (2.0 * r)).floor() as i64).max(1);
    let w = Window { d, half: l / 2.0, s: l / n as f64, n, r, rho };
    let top = l / 2.0 - r;
    let mut levels: Vec<f64> = (1..).map(|k| k as f64 * step).take_while(|&h| h < top).collect();
    levels.push(top);
    let ps: Vec<f64> = (0..batches)
        .map(|b| one_batch(&w, &levels, per_level, derive_seed(seed, b as u64)))
        .collect::<Result<_>>()?;
    let lin: RunningStats = ps.iter().copied().collect();
    let logs: RunningStats = ps.iter().filter(|&&p| p > 0.0).map(|p| p.ln()).collect();
    Ok(SplittingEstimate {
        l,
        r,
        p: lin.mean(),
        stderr: lin.stderr(),
        log_p: if logs.count() > 0 { logs.mean() } else { f64::NEG_INFINITY },
        log_stderr: logs.stderr(),
        levels,
        batches,
        per_level,
    })
}
