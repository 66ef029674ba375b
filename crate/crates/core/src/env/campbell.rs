//! Palm expectations: direct samplers and Campbell resampling of stationary
//! samplers.

use rayon::prelude::*;

use super::{palm_poisson, randomize, sample_poisson, Crystal, MarkedConfiguration, NuLaw};
use crate::error::{Error, Result};
use crate::geometry::BoxGeometry;
use crate::rng::{replica_rng, SimRng};
use crate::stats::{ratio_estimate, Estimate, RunningStats};

/// Sampler of marked configurations of a stationary process.
pub trait StationarySource: Sync {
    fn geometry(&self) -> &BoxGeometry;
    fn intensity(&self) -> f64;
    fn sample(&self, rng: &mut SimRng) -> Result<MarkedConfiguration>;
}

/// Sampler of the Palm version of a process: origin present, at index 0.
pub trait PalmSource: Sync {
    fn geometry(&self) -> &BoxGeometry;
    fn sample_palm(&self, rng: &mut SimRng) -> Result<MarkedConfiguration>;
}

/// Marked Poisson process.
#[derive(Debug, Clone)]
pub struct PoissonSource {
    pub rho: f64,
    pub geometry: BoxGeometry,
    pub nu: NuLaw,
}

impl StationarySource for PoissonSource {
    fn geometry(&self) -> &BoxGeometry {
        &self.geometry
    }

    fn intensity(&self) -> f64 {
        self.rho
    }

    fn sample(&self, rng: &mut SimRng) -> Result<MarkedConfiguration> {
        let pts = sample_poisson(self.rho, &self.geometry, rng)?;
        Ok(randomize(pts, &self.nu, &self.geometry, rng))
    }
}

impl PalmSource for PoissonSource {
    fn geometry(&self) -> &BoxGeometry {
        &self.geometry
    }

    fn sample_palm(&self, rng: &mut SimRng) -> Result<MarkedConfiguration> {
        palm_poisson(self.rho, &self.geometry, &self.nu, rng)
    }
}

/// Marked diluted crystal.
#[derive(Debug, Clone)]
pub struct CrystalSource {
    pub crystal: Crystal,
    pub geometry: BoxGeometry,
    pub nu: NuLaw,
}

impl StationarySource for CrystalSource {
    fn geometry(&self) -> &BoxGeometry {
        &self.geometry
    }

    fn intensity(&self) -> f64 {
        self.crystal.intensity()
    }

    fn sample(&self, rng: &mut SimRng) -> Result<MarkedConfiguration> {
        let pts = self.crystal.sample(&self.geometry, rng)?;
        Ok(randomize(pts, &self.nu, &self.geometry, rng))
    }
}

impl PalmSource for CrystalSource {
    fn geometry(&self) -> &BoxGeometry {
        &self.geometry
    }

    fn sample_palm(&self, rng: &mut SimRng) -> Result<MarkedConfiguration> {
        self.crystal.sample_palm(&self.geometry, &self.nu, rng)
    }
}

/// Campbell resampling of a vector of statistics.
///
/// For each replica, every point `x` in the cube `[-k/2, k/2)^d` contributes
/// `statistic(S_x xi)`; the estimate is the ratio of the summed statistic to
/// the number of contributing points, i.e. the normalization uses the
/// empirical intensity. Standard errors by the delta method over replicas.
pub fn campbell_battery<S, F>(
    source: &S,
    k: f64,
    statistic: F,
    n: usize,
    seed: u64,
) -> Result<Vec<Estimate>>
where
    S: StationarySource + ?Sized,
    F: Fn(&MarkedConfiguration) -> Vec<f64> + Sync,
{
    let d = source.geometry().dim();
    let center = vec![0.0; d];
    let per_replica: Vec<(Vec<f64>, f64)> = (0..n as u64)
        .into_par_iter()
        .map(|i| -> Result<(Vec<f64>, f64)> {
            let mut rng = replica_rng(seed, i);
            let cfg = source.sample(&mut rng)?;
            let mut sums: Vec<f64> = Vec::new();
            let idx = cfg.indices_in_cell(&center, k);
            for &j in &idx {
                let v = statistic(&cfg.translate(j)?);
                if sums.is_empty() {
                    sums = v;
                } else {
                    for (s, x) in sums.iter_mut().zip(v) {
                        *s += x;
                    }
                }
            }
            Ok((sums, idx.len() as f64))
        })
        .collect::<Result<_>>()?;
    let width = per_replica
        .iter()
        .find(|(s, _)| !s.is_empty())
        .map(|(s, _)| s.len())
        .ok_or_else(|| {
            Error::InsufficientData("no points fell in the averaging cell in any replica".into())
        })?;
    let den: Vec<f64> = per_replica.iter().map(|(_, c)| *c).collect();
    (0..width)
        .map(|m| {
            let num: Vec<f64> = per_replica
                .iter()
                .map(|(s, _)| if s.is_empty() { 0.0 } else { s[m] })
                .collect();
            ratio_estimate(&num, &den)
                .ok_or_else(|| Error::InsufficientData("zero total count".into()))
        })
        .collect()
}

/// Scalar form of [`campbell_battery`].
pub fn campbell_estimate<S, F>(source: &S, k: f64, statistic: F, n: usize, seed: u64) -> Result<Estimate>
where
    S: StationarySource + ?Sized,
    F: Fn(&MarkedConfiguration) -> f64 + Sync,
{
    Ok(campbell_battery(source, k, |c| vec![statistic(c)], n, seed)?[0])
}

/// Plain Monte Carlo means of a statistic battery under a Palm sampler.
pub fn palm_battery<S, F>(source: &S, statistic: F, n: usize, seed: u64) -> Result<Vec<Estimate>>
where
    S: PalmSource + ?Sized,
    F: Fn(&MarkedConfiguration) -> Vec<f64> + Sync,
{
    let rows: Vec<Vec<f64>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(seed, i);
            source.sample_palm(&mut rng).map(|c| statistic(&c))
        })
        .collect::<Result<_>>()?;
    let width = rows.first().map_or(0, |r| r.len());
    Ok((0..width)
        .map(|m| rows.iter().map(|r| r[m]).collect::<RunningStats>().estimate())
        .collect())
}

/// Fixed statistic battery seen from the origin: counts of other points in
/// annuli between consecutive `annuli` radii (starting at 0), and the
/// indicators `nearest-neighbor distance <= r` for each `nn_radii` entry.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalBattery {
    pub annuli: Vec<f64>,
    pub nn_radii: Vec<f64>,
}

impl Default for LocalBattery {
    /// Radii avoid the distances of the square lattice so that grid rounding
    /// cannot move a crystal point across an edge.
    fn default() -> Self {
        Self {
            annuli: vec![0.7, 1.2, 1.7, 2.1, 2.6],
            nn_radii: vec![0.5, 0.9, 1.1, 1.5, 2.1],
        }
    }
}

impl LocalBattery {
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut lo = 0.0;
        for &r in &self.annuli {
            out.push(format!("count[{lo},{r})"));
            lo = r;
        }
        for &r in &self.nn_radii {
            out.push(format!("nn<={r}"));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.annuli.len() + self.nn_radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether statistic `m` is a 0/1 indicator (the nearest-neighbor entries).
    pub fn is_indicator(&self, m: usize) -> bool {
        m >= self.annuli.len()
    }

    /// Evaluate on a configuration with its origin set.
    pub fn evaluate(&self, cfg: &MarkedConfiguration) -> Vec<f64> {
        let o = cfg.origin_index().expect("battery needs an origin");
        let g = cfg.geometry();
        let zero = cfg.point(o);
        let mut counts = vec![0.0; self.annuli.len()];
        let mut nn = f64::INFINITY;
        for i in 0..cfg.len() {
            if i == o {
                continue;
            }
            let r = g.dist(zero, cfg.point(i));
            nn = nn.min(r);
            if let Some(b) = self.annuli.iter().position(|&edge| r < edge) {
                counts[b] += 1.0;
            }
        }
        counts.extend(self.nn_radii.iter().map(|&r| if nn <= r { 1.0 } else { 0.0 }));
        counts
    }
}
