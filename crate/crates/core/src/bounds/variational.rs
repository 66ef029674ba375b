use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::test_function::{Evaluator, TestFunction};
use crate::env::{MarkedConfiguration, PalmSource};
use crate::error::{invalid_arg, Result};
use crate::percolation::MottGraphParams;
use crate::rng::replica_rng;
use crate::stats::{Estimate, RunningStats};
use crate::walk::{NeighborIndex, RateModel};

/// One realization of `sum_x c_{0,x} (a.x - grad_x f)^2`, split by whether
/// `x` lies in `C_0^beta` and whether that cluster is within the cap.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrandTerms {
    /// `x` in `C_0`, `|C_0| <= N`
    pub on_cluster: f64,
    /// `x` in `C_0`, `|C_0| > N`
    pub large_cluster: f64,
    /// `x` outside `C_0`
    pub off_cluster: f64,
    /// number of `x` in `C_0` with `|C_0| <= N`
    pub n_on_cluster: usize,
}

impl IntegrandTerms {
    pub fn total(&self) -> f64 {
        self.on_cluster + self.large_cluster + self.off_cluster
    }
}

fn check_direction(a: &[f64], d: usize) -> Result<()> {
    let n2: f64 = a.iter().map(|v| v * v).sum();
    if a.len() != d || (n2 - 1.0).abs() > 1e-9 {
        return Err(invalid_arg(format!("direction must be a unit {d}-vector, got {a:?}")));
    }
    Ok(())
}

fn neighbor_index(cfg: &MarkedConfiguration, model: &RateModel) -> NeighborIndex {
    NeighborIndex::new(cfg, (model.r_cut() / 4.0).max(1.0))
}

/// Integrand of the variational formula on one Palm configuration, summed
/// over points `0 < |x| <= r_cut`.
pub fn variational_terms(
    f: &TestFunction,
    cfg: &MarkedConfiguration,
    model: &RateModel,
    a: &[f64],
) -> Result<IntegrandTerms> {
    check_direction(a, cfg.dim())?;
    model.check_geometry(cfg)?;
    let o = cfg.require_origin()?;
    let index = neighbor_index(cfg, model);
    let mut ev = Evaluator::new(f, cfg);
    let f0 = ev.at(o)?;
    let (c0, cap) = match f {
        TestFunction::Cluster(c) => {
            let m = ev.cluster_of(o).unwrap_or_default();
            (m, c.n_cap)
        }
        _ => (Vec::new(), usize::MAX),
    };
    let small = !c0.is_empty() && c0.len() <= cap;
    let g = cfg.geometry();
    let x0 = cfg.point(o).to_vec();
    let e0 = cfg.energy(o);
    let mut near = Vec::new();
    index.for_each_within(cfg, &x0, model.r_cut(), |j, d2| {
        if j != o {
            near.push((j, d2));
        }
    });
    near.sort_unstable_by_key(|&(j, _)| j);
    let mut t = IntegrandTerms::default();
    for (j, d2) in near {
        let c = model.rate_from(d2.sqrt(), e0, cfg.energy(j));
        let ax: f64 = (0..a.len()).map(|k| a[k] * g.delta(k, x0[k], cfg.point(j)[k])).sum();
        let grad = ev.at(j)? - f0;
        let term = c * (ax - grad) * (ax - grad);
        if c0.binary_search(&j).is_ok() {
            if small {
                t.on_cluster += term;
                t.n_on_cluster += 1;
            } else {
                t.large_cluster += term;
            }
        } else {
            t.off_cluster += term;
        }
    }
    Ok(t)
}

/// Per-replica integrand terms over `n` Palm configurations.
pub fn variational_samples<S: PalmSource>(
    f: &TestFunction,
    source: &S,
    model: &RateModel,
    a: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<IntegrandTerms>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let cfg = source.sample_palm(&mut replica_rng(seed, i as u64))?;
            variational_terms(f, &cfg, model, a)
        })
        .collect()
}

/// Monte Carlo estimate of the right side of the variational formula for a
/// fixed test function `f`; an upper bound on `a . D(beta) a`.
pub fn variational_rhs<S: PalmSource>(
    f: &TestFunction,
    source: &S,
    model: &RateModel,
    a: &[f64],
    n: usize,
    seed: u64,
) -> Result<Estimate> {
    let s = variational_samples(f, source, model, a, n, seed)?;
    Ok(s.iter().map(IntegrandTerms::total).collect::<RunningStats>().estimate())
}

/// `6 sum_{x not in C_0} c_{0,x} ((x^(i))^2 + ell^2 |C_0|^2)` on one
/// configuration, `0 < |x| <= r_cut`.
pub fn everest_integrand(
    cfg: &MarkedConfiguration,
    model: &RateModel,
    params: &MottGraphParams,
    axis: usize,
) -> Result<f64> {
    if axis >= cfg.dim() {
        return Err(invalid_arg(format!("axis {axis} out of range")));
    }
    model.check_geometry(cfg)?;
    let o = cfg.require_origin()?;
    let cluster = crate::percolation::mott_graph_cluster(cfg, params)?;
    let size2 = (cluster.len() as f64).powi(2);
    let ell2 = params.ell_beta * params.ell_beta;
    let g = cfg.geometry();
    let x0 = cfg.point(o).to_vec();
    let e0 = cfg.energy(o);
    let mut near = Vec::new();
    neighbor_index(cfg, model).for_each_within(cfg, &x0, model.r_cut(), |j, d2| {
        if j != o && cluster.binary_search(&j).is_err() {
            near.push((j, d2));
        }
    });
    near.sort_unstable_by_key(|&(j, _)| j);
    let s: f64 = near
        .into_iter()
        .map(|(j, d2)| {
            let xi = g.delta(axis, x0[axis], cfg.point(j)[axis]);
            model.rate_from(d2.sqrt(), e0, cfg.energy(j)) * (xi * xi + ell2 * size2)
        })
        .sum();
    Ok(6.0 * s)
}

/// Monte Carlo estimate of the cluster upper bound on `D_ii(beta)`.
pub fn everest_bound<S: PalmSource>(
    source: &S,
    model: &RateModel,
    params: &MottGraphParams,
    axis: usize,
    n: usize,
    seed: u64,
) -> Result<Estimate> {
    let v: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let cfg = source.sample_palm(&mut replica_rng(seed, i as u64))?;
            everest_integrand(&cfg, model, params, axis)
        })
        .collect::<Result<_>>()?;
    Ok(v.into_iter().collect::<RunningStats>().estimate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{palm_poisson, NuLaw, PoissonSource};
    use crate::geometry::{Boundary, BoxGeometry, PointSet};
    use crate::percolation::mott_graph_cluster;

    fn model() -> RateModel {
        RateModel::mean_field(2.0, 5.0).unwrap()
    }

    fn five_points() -> MarkedConfiguration {
        let g = BoxGeometry::cube(2, 20.0, Boundary::Open).unwrap();
        let rows = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, -2.0],
            vec![3.0, 4.0],
            vec![6.0, 0.0],
        ];
        let e = vec![0.1, -0.2, 0.3, 0.05, -0.4];
        MarkedConfiguration::new(PointSet::from_rows(2, &rows).unwrap(), e, g, Some(0)).unwrap()
    }

    #[test]
    fn zero_function_matches_hand_sum() {
        let cfg = five_points();
        let m = model();
        let a = [0.6, 0.8];
        let t = variational_terms(&TestFunction::Zero, &cfg, &m, &a).unwrap();
        let mut hand = 0.0;
        for j in 1..4 {
            // point 4 is beyond r_cut = 5
            let x = cfg.point(j);
            let dist = (x[0] * x[0] + x[1] * x[1]).sqrt();
            let c = m.rate_from(dist, 0.1, cfg.energy(j));
            hand += c * (0.6 * x[0] + 0.8 * x[1]).powi(2);
        }
        assert!((t.total() - hand).abs() < 1e-15 * hand.max(1.0));
        assert!(t.total() > 0.0);
        assert!(variational_terms(&TestFunction::Zero, &cfg, &m, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn cluster_function_cancels_on_cluster_exactly() {
        let g = BoxGeometry::cube(2, 30.0, Boundary::Periodic).unwrap();
        let nu = NuLaw::with_alpha(0.0).unwrap();
        let m = RateModel::mean_field(5.0, 10.0).unwrap();
        let p = MottGraphParams::new(0.6, 1.0).unwrap();
        let mut hits = 0;
        for seed in 0..60 {
            let cfg = palm_poisson(1.0, &g, &nu, &mut replica_rng(seed, 1)).unwrap();
            for axis in 0..2 {
                let mut a = [0.0; 2];
                a[axis] = 1.0;
                let t = variational_terms(&TestFunction::cluster(50, axis, p), &cfg, &m, &a).unwrap();
                assert_eq!(t.on_cluster, 0.0);
                hits += t.n_on_cluster;
            }
        }
        assert!(hits > 50);
    }

    #[test]
    fn everest_vanishes_when_cluster_swallows_neighbourhood() {
        let cfg = five_points().with_energies(vec![0.0; 5]).unwrap();
        let m = model();
        let p = MottGraphParams::new(1.0, 7.0).unwrap();
        assert_eq!(mott_graph_cluster(&cfg, &p).unwrap().len(), 5);
        assert_eq!(everest_integrand(&cfg, &m, &p, 0).unwrap(), 0.0);
    }

    #[test]
    fn everest_with_zero_length_is_six_times_zero_function() {
        let cfg = five_points();
        let m = model();
        let p = MottGraphParams::new(1.0, 0.0).unwrap();
        let t = variational_terms(&TestFunction::Zero, &cfg, &m, &[1.0, 0.0]).unwrap();
        let e = everest_integrand(&cfg, &m, &p, 0).unwrap();
        assert!((e - 6.0 * t.total()).abs() < 1e-14);
    }

    #[test]
    fn estimates_are_positive() {
        let src = PoissonSource {
            rho: 1.0,
            geometry: BoxGeometry::cube(2, 30.0, Boundary::Periodic).unwrap(),
            nu: NuLaw::with_alpha(0.0).unwrap(),
        };
        let m = RateModel::mean_field(3.0, 10.0).unwrap();
        let p = MottGraphParams::new(0.5, 1.2).unwrap();
        let v = variational_rhs(&TestFunction::Zero, &src, &m, &[1.0, 0.0], 50, 1).unwrap();
        let e = everest_bound(&src, &m, &p, 0, 50, 1).unwrap();
        assert!(v.value > 0.0 && e.value > 0.0);
    }

    #[test]
    fn large_cluster_term_vanishes_as_cap_grows() {
        let g = BoxGeometry::cube(2, 30.0, Boundary::Periodic).unwrap();
        let nu = NuLaw::with_alpha(0.0).unwrap();
        let m = RateModel::mean_field(5.0, 10.0).unwrap();
        let p = MottGraphParams::new(0.6, 1.0).unwrap();
        for seed in 0..30 {
            let cfg = palm_poisson(1.0, &g, &nu, &mut replica_rng(seed, 2)).unwrap();
            let size = mott_graph_cluster(&cfg, &p).unwrap().len();
            let mut last = f64::INFINITY;
            for n in [1, 2, 4, 8, 16, 32, 64] {
                let t = variational_terms(&TestFunction::cluster(n, 0, p), &cfg, &m, &[1.0, 0.0]).unwrap();
                if n >= size {
                    assert_eq!(t.large_cluster, 0.0);
                    assert_eq!(t.on_cluster, 0.0);
                }
                assert!(t.large_cluster <= last);
                last = t.large_cluster;
            }
        }
    }

    #[test]
    fn everest_dominates_cluster_function_on_average() {
        let src = PoissonSource {
            rho: 1.0,
            geometry: BoxGeometry::cube(2, 30.0, Boundary::Periodic).unwrap(),
            nu: NuLaw::with_alpha(0.0).unwrap(),
        };
        let m = RateModel::mean_field(8.0, 10.0).unwrap();
        let p = MottGraphParams::new(0.6, 1.0).unwrap();
        let v = variational_rhs(&TestFunction::cluster(1000, 0, p), &src, &m, &[1.0, 0.0], 400, 3).unwrap();
        let e = everest_bound(&src, &m, &p, 0, 400, 3).unwrap();
        assert!(e.value + 3.0 * e.stderr >= v.value - 3.0 * v.stderr);
    }
}
