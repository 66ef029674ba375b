use std::collections::{HashMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{MarkedConfiguration, NuLaw, PalmSource};
use crate::error::{invalid_param, Result};
use crate::geometry::PointSet;
use crate::rng::replica_rng;
use crate::stats::{Estimate, RunningStats};
use crate::walk::NeighborIndex;

/// Thresholds of the graph `G^beta`: vertices need `|E| <= e_beta`, edges
/// need both energies below it and distance at most `ell_beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MottGraphParams {
    pub e_beta: f64,
    pub ell_beta: f64,
}

/// `E(beta) = beta^{-d/(alpha+1+d)}`.
pub fn energy_scale(beta: f64, alpha: f64, d: usize) -> f64 {
    beta.powf(-(d as f64) / (alpha + 1.0 + d as f64))
}

/// The Mott exponent `(alpha+1)/(alpha+1+d)`.
pub fn mott_exponent(alpha: f64, d: usize) -> f64 {
    (alpha + 1.0) / (alpha + 1.0 + d as f64)
}

impl MottGraphParams {
    pub fn new(e_beta: f64, ell_beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&e_beta) {
            return Err(invalid_param(format!("E(beta) must lie in [0, 1], got {e_beta}")));
        }
        if !(ell_beta >= 0.0 && ell_beta.is_finite()) {
            return Err(invalid_param(format!("ell(beta) must be nonnegative, got {ell_beta}")));
        }
        Ok(Self { e_beta, ell_beta })
    }

    /// Poisson scaling: `E = E(beta)` and `ell = gamma * r_c(rho(beta))` with
    /// `rho(beta) = rho * nu([-E, E])` and `r_c(rho) = rho^{-1/d} r_c(1)`.
    pub fn poisson_scaling(beta: f64, nu: &NuLaw, d: usize, rho: f64, gamma: f64, rc1: f64) -> Result<Self> {
        let e = energy_scale(beta, nu.alpha(), d);
        let rho_beta = rho * nu.mass_within(e);
        Self::new(e, gamma * rc1 * rho_beta.powf(-1.0 / d as f64))
    }

    /// Power-law length scale `ell = lambda * beta^{(alpha+1)/(alpha+1+d)}`.
    pub fn power_law(beta: f64, alpha: f64, d: usize, lambda: f64) -> Result<Self> {
        Self::new(energy_scale(beta, alpha, d), lambda * beta.powf(mott_exponent(alpha, d)))
    }

    /// Density of vertices-to-be, `rho * nu([-E, E])`.
    pub fn thinned_density(&self, rho: f64, nu: &NuLaw) -> f64 {
        rho * nu.mass_within(self.e_beta)
    }
}

/// Largest `lambda` for [`MottGraphParams::power_law`] keeping the coarse
/// graph subcritical: `2 sqrt(d) lambda / (3c) <= r_c(1)/2`, where for the
/// concrete energy law `c = (p / rho')^{1/d}` with `p` the dilution and `rho'`
/// the dominating Poisson density.
pub fn admissible_lambda(rc1: f64, p: f64, rho_prime: f64, d: usize) -> f64 {
    let c = (p / rho_prime).powf(1.0 / d as f64);
    3.0 * c * rc1 / (4.0 * (d as f64).sqrt())
}

fn low_energy(cfg: &MarkedConfiguration, e_beta: f64) -> Vec<usize> {
    (0..cfg.len()).filter(|&i| cfg.energy(i).abs() <= e_beta).collect()
}

/// Component `C_x^beta` of point `x` in `G^beta`, as sorted indices; empty if
/// `x` is not a vertex.
pub fn mott_cluster_of(cfg: &MarkedConfiguration, x: usize, params: &MottGraphParams) -> Vec<usize> {
    if cfg.energy(x).abs() > params.e_beta || params.ell_beta <= 0.0 {
        return Vec::new();
    }
    let a = low_energy(cfg, params.e_beta);
    let mut pts = PointSet::with_capacity(cfg.dim(), a.len());
    for &i in &a {
        pts.push(cfg.point(i));
    }
    let g = cfg.geometry();
    let index = NeighborIndex::for_point_set(&pts, g, params.ell_beta);
    let start = a.binary_search(&x).expect("x is low-energy");
    let mut seen = vec![false; a.len()];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    let mut comp = vec![start];
    while let Some(i) = queue.pop_front() {
        index.for_each_within_points(&pts, g, pts.point(i), params.ell_beta, |j, _| {
            if j != i && !seen[j] {
                seen[j] = true;
                comp.push(j);
                queue.push_back(j);
            }
        });
    }
    if comp.len() == 1 {
        return Vec::new();
    }
    let mut out: Vec<usize> = comp.into_iter().map(|j| a[j]).collect();
    out.sort_unstable();
    out
}

/// `C_0^beta` of a Palm configuration.
pub fn mott_graph_cluster(cfg: &MarkedConfiguration, params: &MottGraphParams) -> Result<Vec<usize>> {
    let o = cfg.require_origin()?;
    Ok(mott_cluster_of(cfg, o, params))
}

/// Edge length of the coarse lattice graph on `K`-cells. Two cells holding
/// points joined in `G^beta` have centres at most `ell + sqrt(d) K` apart.
/// The larger of that and `ell + d sqrt(K)` is used so the coarse graph
/// always contains the projection of `G^beta`.
pub fn coarse_edge_length(ell: f64, k: f64, d: usize) -> f64 {
    let df = d as f64;
    ell + (df * k.sqrt()).max(df.sqrt() * k)
}

struct Lattice {
    k: f64,
    /// cells per axis on a periodic box
    wrap: Option<Vec<i64>>,
}

impl Lattice {
    fn new(cfg: &MarkedConfiguration, k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(invalid_param(format!("cell side K must be positive, got {k}")));
        }
        let g = cfg.geometry();
        let wrap = if g.is_periodic() {
            let mut n = Vec::with_capacity(g.dim());
            for &s in g.sides() {
                let m = (s / k).round();
                if (m * k - s).abs() > 1e-9 * s || m < 1.0 {
                    return Err(invalid_param(format!(
                        "periodic side {s} is not a multiple of K = {k}"
                    )));
                }
                n.push(m as i64);
            }
            Some(n)
        } else {
            None
        };
        Ok(Self { k, wrap })
    }

    /// Label `u` of the cell `Lambda_K(uK) = uK + [-K/2, K/2)^d` holding `x`.
    fn cell(&self, x: &[f64]) -> Vec<i64> {
        let mut u: Vec<i64> = x.iter().map(|&v| (v / self.k + 0.5).floor() as i64).collect();
        self.normalize(&mut u);
        u
    }

    fn normalize(&self, u: &mut [i64]) {
        if let Some(n) = &self.wrap {
            for (a, v) in u.iter_mut().enumerate() {
                // representatives in [-n/2, n/2)
                *v = (*v + n[a] / 2).rem_euclid(n[a]) - n[a] / 2;
            }
        }
    }
}

/// Lattice offsets `v != 0` with `|v| K <= reach`.
fn offsets(d: usize, k: f64, reach: f64) -> Vec<Vec<i64>> {
    let m = (reach / k).floor() as i64;
    let mut out = Vec::new();
    let mut v = vec![-m; d];
    loop {
        let n2: i64 = v.iter().map(|c| c * c).sum();
        if n2 > 0 && (n2 as f64).sqrt() * k <= reach {
            out.push(v.clone());
        }
        let mut a = 0;
        loop {
            if a == d {
                return out;
            }
            v[a] += 1;
            if v[a] <= m {
                break;
            }
            v[a] = -m;
            a += 1;
        }
    }
}

/// Coarse cluster `C_K^beta`: points of `A = {|E| <= E(beta)}` lying in the
/// cells of the lattice component of the origin cell, sorted. Cells are
/// `Lambda_K(u) = u + [-K/2, K/2)^d` for `u` in `K Z^d`.
pub fn coarse_graph_cluster(cfg: &MarkedConfiguration, k: f64, params: &MottGraphParams) -> Result<Vec<usize>> {
    let lat = Lattice::new(cfg, k)?;
    let d = cfg.dim();
    let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for i in low_energy(cfg, params.e_beta) {
        cells.entry(lat.cell(cfg.point(i))).or_default().push(i);
    }
    let zero = vec![0i64; d];
    if !cells.contains_key(&zero) {
        return Ok(Vec::new());
    }
    let offs = offsets(d, k, coarse_edge_length(params.ell_beta, k, d));
    let mut seen: HashMap<Vec<i64>, ()> = HashMap::from([(zero.clone(), ())]);
    let mut queue = VecDeque::from([zero]);
    let mut out = Vec::new();
    while let Some(u) = queue.pop_front() {
        out.extend_from_slice(&cells[&u]);
        for o in &offs {
            let mut v: Vec<i64> = u.iter().zip(o).map(|(a, b)| a + b).collect();
            lat.normalize(&mut v);
            if cells.contains_key(&v) && !seen.contains_key(&v) {
                seen.insert(v.clone(), ());
                queue.push_back(v);
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Points `x` of the origin cell `Lambda_K(0)` whose cluster `C_x^beta`
/// escapes `(xi ∩ Lambda_K(0)) ∪ C_K^beta`. Empty on every realization when
/// the coarse graph is built correctly.
pub fn coarse_containment_violations(
    cfg: &MarkedConfiguration,
    k: f64,
    params: &MottGraphParams,
) -> Result<Vec<usize>> {
    let lat = Lattice::new(cfg, k)?;
    let zero = vec![0i64; cfg.dim()];
    let coarse = coarse_graph_cluster(cfg, k, params)?;
    let in_cell: Vec<usize> = (0..cfg.len()).filter(|&i| lat.cell(cfg.point(i)) == zero).collect();
    let mut bad = Vec::new();
    for &x in &in_cell {
        let escapes = mott_cluster_of(cfg, x, params)
            .iter()
            .any(|z| in_cell.binary_search(z).is_err() && coarse.binary_search(z).is_err());
        if escapes {
            bad.push(x);
        }
    }
    Ok(bad)
}

/// `|C_0^beta|` over `n` Palm replicas (replica `i` uses `replica_rng(seed, i)`).
pub fn cluster_sizes<S: PalmSource>(source: &S, params: &MottGraphParams, n: usize, seed: u64) -> Result<Vec<usize>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(seed, i as u64);
            let cfg = source.sample_palm(&mut rng)?;
            Ok(mott_graph_cluster(&cfg, params)?.len())
        })
        .collect()
}

/// Monte Carlo estimate of `E|C_0^beta|^s`.
pub fn cluster_moment<S: PalmSource>(source: &S, params: &MottGraphParams, s: f64, n: usize, seed: u64) -> Result<Estimate> {
    if !(s > 0.0) {
        return Err(invalid_param(format!("moment order must be positive, got {s}")));
    }
    Ok(moment_of_sizes(&cluster_sizes(source, params, n, seed)?, s))
}

pub fn moment_of_sizes(sizes: &[usize], s: f64) -> Estimate {
    sizes.iter().map(|&m| (m as f64).powf(s)).collect::<RunningStats>().estimate()
}
