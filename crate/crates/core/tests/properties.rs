use std::collections::VecDeque;

use proptest::prelude::*;

use mott::config::{BetaGrid, ExperimentConfig, ExperimentKind, ProcessKind};
use mott::domination::{choose_rho_prime, coupled_thinnings, domination_coupling, CouplingParams};
use mott::env::{palm_poisson, MarkedConfiguration, NuLaw};
use mott::geometry::{quantize, BoxGeometry, Boundary, PointSet};
use mott::percolation::{boolean_clusters, mott_cluster_of, w_r, MottGraphParams, Region};
use mott::rng::replica_rng;
use mott::walk::RateModel;
use mott::bounds::TestFunction;
use mott::Error;

fn points_in(geom: &BoxGeometry, raw: &[(f64, f64)]) -> PointSet {
    let l = geom.side(0);
    let mut pts = PointSet::new(2);
    for &(a, b) in raw {
        pts.push(&[quantize((a - 0.5) * l), quantize((b - 0.5) * l)]);
    }
    pts
}

fn bfs_labels(points: &PointSet, r: f64, geom: &BoxGeometry) -> Vec<usize> {
    let n = points.len();
    let mut label = vec![usize::MAX; n];
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = s;
        let mut q = VecDeque::from([s]);
        while let Some(i) = q.pop_front() {
            for j in 0..n {
                if label[j] == usize::MAX && geom.dist(points.point(i), points.point(j)) <= 2.0 * r {
                    label[j] = s;
                    q.push_back(j);
                }
            }
        }
    }
    label
}

fn unit_square() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 0..200)
}

fn marked(raw: &[(f64, f64)], energies: &[f64]) -> MarkedConfiguration {
    let geom = BoxGeometry::cube(2, 20.0, Boundary::Open).unwrap();
    let pts = points_in(&geom, raw);
    let e = energies.iter().cycle().take(pts.len()).copied().collect();
    MarkedConfiguration::new(pts, e, geom, None).unwrap()
}

fn subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|x| b.binary_search(x).is_ok())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn union_find_matches_bfs(raw in unit_square(), r in 0.05..1.5f64, periodic in any::<bool>()) {
        let b = if periodic { Boundary::Periodic } else { Boundary::Open };
        let geom = BoxGeometry::cube(2, 10.0, b).unwrap();
        let pts = points_in(&geom, &raw);
        let cs = boolean_clusters(&pts, r, &geom);
        let bfs = bfs_labels(&pts, r, &geom);
        for i in 0..pts.len() {
            for j in 0..i {
                prop_assert_eq!(cs.root(i) == cs.root(j), bfs[i] == bfs[j]);
            }
        }
    }

    #[test]
    fn mott_cluster_grows_with_ell_and_energy(
        raw in unit_square(),
        energies in prop::collection::vec(-1.0..1.0f64, 1..50),
        e in 0.05..0.8f64,
        de in 0.0..0.2f64,
        ell in 0.2..2.0f64,
        dl in 0.0..1.0f64,
    ) {
        let cfg = marked(&raw, &energies);
        let small = MottGraphParams::new(e, ell).unwrap();
        let wide_e = MottGraphParams::new(e + de, ell).unwrap();
        let wide_l = MottGraphParams::new(e, ell + dl).unwrap();
        for x in 0..cfg.len() {
            let c = mott_cluster_of(&cfg, x, &small);
            prop_assert!(subset(&c, &mott_cluster_of(&cfg, x, &wide_e)));
            prop_assert!(subset(&c, &mott_cluster_of(&cfg, x, &wide_l)));
        }
    }

    #[test]
    fn w_r_holds_whole_components(
        raw in unit_square(),
        r in 0.1..1.0f64,
        cx in -3.0..3.0f64,
        radius in 0.0..3.0f64,
    ) {
        let geom = BoxGeometry::cube(2, 10.0, Boundary::Open).unwrap();
        let pts = points_in(&geom, &raw);
        let region = Region::Ball { center: vec![cx, 0.0], radius };
        let w = w_r(&pts, r, &region, &geom);
        let cs = boolean_clusters(&pts, r, &geom);
        for i in 0..pts.len() {
            if region.distance(pts.point(i), &geom) <= r {
                prop_assert!(w.binary_search(&i).is_ok());
            }
        }
        for &i in &w {
            for j in 0..pts.len() {
                if cs.root(j) == cs.root(i) {
                    prop_assert!(w.binary_search(&j).is_ok());
                }
            }
        }
    }

    #[test]
    fn coupled_thinnings_are_nested(n in 0usize..500, mut levels in prop::collection::vec(0.0..=1.0f64, 1..6), seed in any::<u64>()) {
        levels.sort_by(f64::total_cmp);
        let masks = coupled_thinnings(n, &levels, &mut replica_rng(seed, 0)).unwrap();
        for w in masks.windows(2) {
            for i in 0..n {
                prop_assert!(!w[0][i] || w[1][i]);
            }
        }
    }

    #[test]
    fn coupling_dominates_pointwise(
        raw in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 0..120),
        p in 0.0..0.99f64,
        n in 1u32..4,
        seed in any::<u64>(),
    ) {
        let geom = BoxGeometry::cube(2, 12.0, Boundary::Periodic).unwrap();
        let pts = points_in(&geom, &raw);
        let params = CouplingParams { p, k: 2.0, n };
        match domination_coupling(&pts, &geom, params, &mut replica_rng(seed, 0)) {
            Ok(pair) => prop_assert!(pair.verify().holds()),
            Err(Error::DensityBound { count, bound, .. }) => prop_assert!(count > bound),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }

    #[test]
    fn rho_prime_is_monotone(p in 0.01..0.98f64, dp in 0.0..0.01f64, n in 1u32..6, k in 0.5..3.0f64) {
        let a = choose_rho_prime(p, n, k, 2).unwrap();
        let b = choose_rho_prime(p + dp, n, k, 2).unwrap();
        let c = choose_rho_prime(p, n + 1, k, 2).unwrap();
        prop_assert!(b.rho >= a.rho * (1.0 - 1e-12));
        prop_assert!(c.rho >= a.rho * (1.0 - 1e-12));
    }

    #[test]
    fn rates_are_symmetric_and_decrease_in_beta(
        dist in 0.0..10.0f64,
        ex in -1.0..1.0f64,
        ey in -1.0..1.0f64,
        beta in 1.0..100.0f64,
        db in 0.1..50.0f64,
    ) {
        let m = RateModel::mean_field(beta, 40.0).unwrap();
        prop_assert_eq!(m.rate_from(dist, ex, ey), m.rate_from(dist, ey, ex));
        if m.u(ex, ey) > 0.0 && dist < 30.0 {
            let hot = m.with_beta(beta + db).unwrap();
            prop_assert!(hot.rate_from(dist, ex, ey) < m.rate_from(dist, ex, ey));
        }
    }

    #[test]
    fn cluster_test_function_is_bounded(seed in any::<u64>(), e in 0.2..1.0f64, ell in 0.5..1.2f64, cap in 1usize..40) {
        let geom = BoxGeometry::cube(2, 16.0, Boundary::Periodic).unwrap();
        let nu = NuLaw::with_alpha(0.0).unwrap();
        let cfg = palm_poisson(1.0, &geom, &nu, &mut replica_rng(seed, 0)).unwrap();
        let params = MottGraphParams::new(e, ell).unwrap();
        for axis in 0..2 {
            let f = TestFunction::cluster(cap, axis, params);
            let v = f.evaluate(&cfg).unwrap();
            prop_assert!(v.abs() <= f.sup_bound().unwrap() + 1e-12, "{} > {}", v, f.sup_bound().unwrap());
        }
    }

    #[test]
    fn config_round_trips(
        kind in prop::sample::select(ExperimentKind::ALL.to_vec()),
        seed in any::<u64>(),
        rho in 0.1..5.0f64,
        l in 4.0..300.0f64,
        replicas in 1usize..100_000,
        crystal in any::<bool>(),
        mut betas in prop::collection::vec(1.0..1000.0f64, 1..6),
        geometric in any::<bool>(),
    ) {
        betas.sort_by(f64::total_cmp);
        betas.dedup();
        let mut c = ExperimentConfig::new(kind);
        c.seed = seed;
        c.process.rho = rho;
        c.process.kind = if crystal { ProcessKind::Crystal } else { ProcessKind::Poisson };
        c.sizes.l = l;
        c.sizes.replicas = replicas;
        c.model.beta = if geometric {
            BetaGrid::Geometric { min: 1.0, max: 1.0 + betas[0], points: betas.len() }
        } else {
            BetaGrid::List(betas)
        };
        let text = c.to_toml().unwrap();
        let back = ExperimentConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.to_toml().unwrap(), text);
    }
}

#[test]
fn shuffled_marks_leave_positions_unchanged() {
    let geom = BoxGeometry::cube(2, 16.0, Boundary::Periodic).unwrap();
    let nu = NuLaw::with_alpha(0.0).unwrap();
    let cfg = palm_poisson(1.0, &geom, &nu, &mut replica_rng(5, 0)).unwrap();
    let mut e = cfg.energies().to_vec();
    e.reverse();
    let shuffled = cfg.with_energies(e).unwrap();
    assert_eq!(shuffled.points().as_flat(), cfg.points().as_flat());
    let a = boolean_clusters(cfg.points(), 0.6, &geom);
    let b = boolean_clusters(shuffled.points(), 0.6, &geom);
    for i in 0..cfg.len() {
        assert_eq!(a.root(i), b.root(i));
    }
}
