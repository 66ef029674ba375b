use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::env::MarkedConfiguration;
use crate::error::{invalid_arg, Result};
use crate::geometry::{BoxGeometry, PointSet};
use crate::percolation::{mott_graph_cluster, ClusterStructure, MottGraphParams};
use crate::walk::NeighborIndex;

/// User-supplied test function, evaluated on configurations with an origin.
pub type UserFn = Arc<dyn Fn(&MarkedConfiguration) -> Result<f64> + Send + Sync>;

/// Cluster test function `f_N^beta`: minus the smallest `axis` coordinate
/// over `C_0^beta` when `1 <= |C_0^beta| <= n_cap`, else zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterTest {
    pub n_cap: usize,
    pub axis: usize,
    pub params: MottGraphParams,
}

#[derive(Clone)]
pub enum TestFunction {
    Zero,
    Cluster(ClusterTest),
    User(UserFn),
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::Zero => write!(f, "Zero"),
            TestFunction::Cluster(c) => write!(f, "Cluster({c:?})"),
            TestFunction::User(_) => write!(f, "User"),
        }
    }
}

/// Coordinate of `z` along `axis` in the frame centred at `x`, computed the
/// same way [`MarkedConfiguration::translate`] does.
#[inline]
fn relative(g: &BoxGeometry, axis: usize, x: f64, z: f64) -> f64 {
    let v = z - x;
    if g.is_periodic() {
        g.wrap_coord(axis, v)
    } else {
        v
    }
}

impl TestFunction {
    pub fn cluster(n_cap: usize, axis: usize, params: MottGraphParams) -> Self {
        TestFunction::Cluster(ClusterTest { n_cap, axis, params })
    }

    pub fn label(&self) -> String {
        match self {
            TestFunction::Zero => "zero".into(),
            TestFunction::Cluster(c) => format!("cluster_N{}", c.n_cap),
            TestFunction::User(_) => "user".into(),
        }
    }

    /// `f(xi)` for a configuration with a distinguished origin.
    pub fn evaluate(&self, cfg: &MarkedConfiguration) -> Result<f64> {
        match self {
            TestFunction::Zero => Ok(0.0),
            TestFunction::Cluster(c) => {
                let o = cfg.require_origin()?;
                let members = mott_graph_cluster(cfg, &c.params)?;
                Ok(cluster_value(cfg, o, &members, c))
            }
            TestFunction::User(f) => f(cfg),
        }
    }

    /// `sup |f|` when known: `N ell(beta)` for the cluster kind.
    pub fn sup_bound(&self) -> Option<f64> {
        match self {
            TestFunction::Zero => Some(0.0),
            TestFunction::Cluster(c) => Some(c.n_cap as f64 * c.params.ell_beta),
            TestFunction::User(_) => None,
        }
    }
}

fn cluster_value(cfg: &MarkedConfiguration, x: usize, members: &[usize], c: &ClusterTest) -> f64 {
    if members.is_empty() || members.len() > c.n_cap {
        return 0.0;
    }
    let g = cfg.geometry();
    let xa = cfg.point(x)[c.axis];
    let m = members
        .iter()
        .map(|&z| relative(g, c.axis, xa, cfg.point(z)[c.axis]))
        .fold(f64::INFINITY, f64::min);
    -m
}

/// `grad_x f(xi) = f(S_x xi) - f(xi)`.
pub fn gradient(f: &TestFunction, cfg: &MarkedConfiguration, x: usize) -> Result<f64> {
    if x >= cfg.len() {
        return Err(invalid_arg(format!("{x} is not a point index")));
    }
    Ok(f.evaluate(&cfg.translate(x)?)? - f.evaluate(cfg)?)
}

/// Evaluates `f(S_x xi)` for many `x` of one configuration. The cluster kind
/// reuses one component decomposition of `G^beta`; by covariance the cluster
/// of the origin in `S_x xi` is the cluster of `x` in `xi`.
pub struct Evaluator<'a> {
    f: &'a TestFunction,
    cfg: &'a MarkedConfiguration,
    comps: Option<Components>,
}

struct Components {
    /// index into `low` for each point, or `usize::MAX`
    slot: Vec<usize>,
    low: Vec<usize>,
    uf: ClusterStructure,
    members: HashMap<usize, Vec<usize>>,
}

impl Components {
    fn build(cfg: &MarkedConfiguration, p: &MottGraphParams) -> Self {
        let mut slot = vec![usize::MAX; cfg.len()];
        let mut low = Vec::new();
        let mut pts = PointSet::new(cfg.dim());
        for i in 0..cfg.len() {
            if cfg.energy(i).abs() <= p.e_beta {
                slot[i] = low.len();
                low.push(i);
                pts.push(cfg.point(i));
            }
        }
        let mut uf = ClusterStructure::new(&pts);
        if p.ell_beta > 0.0 && !low.is_empty() {
            let g = cfg.geometry();
            let index = NeighborIndex::for_point_set(&pts, g, p.ell_beta);
            for i in 0..pts.len() {
                index.for_each_within_points(&pts, g, pts.point(i), p.ell_beta, |j, _| {
                    if j > i {
                        uf.union(i, j);
                    }
                });
            }
        }
        Self { slot, low, uf, members: HashMap::new() }
    }

    /// Sorted members of `C_x^beta` (empty if `x` is not a vertex).
    fn cluster_of(&mut self, x: usize) -> &[usize] {
        let s = self.slot[x];
        if s == usize::MAX || self.uf.size_of(s) < 2 {
            return &[];
        }
        let root = self.uf.root(s);
        if !self.members.contains_key(&root) {
            let mut m: Vec<usize> = (0..self.low.len())
                .filter(|&j| self.uf.root(j) == root)
                .map(|j| self.low[j])
                .collect();
            m.sort_unstable();
            self.members.insert(root, m);
        }
        &self.members[&root]
    }
}

impl<'a> Evaluator<'a> {
    pub fn new(f: &'a TestFunction, cfg: &'a MarkedConfiguration) -> Self {
        let comps = match f {
            TestFunction::Cluster(c) => Some(Components::build(cfg, &c.params)),
            _ => None,
        };
        Self { f, cfg, comps }
    }

    /// `f(S_x xi)`; for `x` the origin this is `f(xi)`.
    pub fn at(&mut self, x: usize) -> Result<f64> {
        match self.f {
            TestFunction::Zero => Ok(0.0),
            TestFunction::Cluster(c) => {
                let comps = self.comps.as_mut().expect("built for cluster kind");
                let members = comps.cluster_of(x).to_vec();
                Ok(cluster_value(self.cfg, x, &members, c))
            }
            TestFunction::User(_) => {
                if Some(x) == self.cfg.origin_index() {
                    self.f.evaluate(self.cfg)
                } else {
                    self.f.evaluate(&self.cfg.translate(x)?)
                }
            }
        }
    }

    /// `C_x^beta` under the cluster kind's parameters.
    pub fn cluster_of(&mut self, x: usize) -> Option<Vec<usize>> {
        self.comps.as_mut().map(|c| c.cluster_of(x).to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{palm_poisson, NuLaw};
    use crate::geometry::Boundary;
    use crate::rng::replica_rng;

    fn palm(seed: u64, boundary: Boundary) -> MarkedConfiguration {
        let g = BoxGeometry::cube(2, 24.0, boundary).unwrap();
        palm_poisson(1.0, &g, &NuLaw::with_alpha(0.0).unwrap(), &mut replica_rng(seed, 0)).unwrap()
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let cfg = palm(1, Boundary::Periodic);
        let f = TestFunction::User(Arc::new(|_| Ok(2.5)));
        for x in [0, 3, 17] {
            assert_eq!(gradient(&f, &cfg, x).unwrap(), 0.0);
        }
        assert_eq!(gradient(&TestFunction::Zero, &cfg, 5).unwrap(), 0.0);
    }

    #[test]
    fn gradient_inside_small_cluster_is_the_coordinate() {
        let p = MottGraphParams::new(0.6, 1.0).unwrap();
        let mut seen = 0;
        for seed in 0..100 {
            let cfg = palm(seed, Boundary::Periodic);
            let f = TestFunction::cluster(50, 0, p);
            let c = mott_graph_cluster(&cfg, &p).unwrap();
            for &x in &c {
                assert_eq!(gradient(&f, &cfg, x).unwrap(), cfg.point(x)[0]);
                seen += 1;
            }
        }
        assert!(seen > 20);
    }

    #[test]
    fn evaluator_matches_direct_translation() {
        let p = MottGraphParams::new(0.5, 1.5).unwrap();
        for boundary in [Boundary::Periodic, Boundary::Open] {
            let cfg = palm(7, boundary);
            for f in [TestFunction::cluster(4, 1, p), TestFunction::cluster(50, 0, p)] {
                let mut ev = Evaluator::new(&f, &cfg);
                for x in 0..cfg.len() {
                    let direct = f.evaluate(&cfg.translate(x).unwrap()).unwrap();
                    assert_eq!(ev.at(x).unwrap(), direct, "x = {x}");
                }
            }
        }
    }

    #[test]
    fn cluster_function_is_bounded() {
        let p = MottGraphParams::new(0.7, 1.5).unwrap();
        let f = TestFunction::cluster(20, 0, p);
        for seed in 0..50 {
            let cfg = palm(seed, Boundary::Periodic);
            let v = f.evaluate(&cfg).unwrap();
            let size = mott_graph_cluster(&cfg, &p).unwrap().len();
            assert!(v >= 0.0 && v <= size as f64 * p.ell_beta && v <= f.sup_bound().unwrap());
        }
    }
}
