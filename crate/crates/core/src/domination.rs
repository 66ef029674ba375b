//! Stochastic-domination couplings: sequential Bernoulli domination of
//! binary fields with a conditional-probability cap, and the coupling of a
//! thinned bounded-density process under a Poisson count field.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{count_field, CountField, NuLaw, StationarySource};
use crate::error::{invalid_arg, invalid_param, Error, Result};
use crate::geometry::{BoxGeometry, PointSet};
use crate::percolation::energy_scale;
use crate::rng::replica_rng;
use crate::stats::{poisson_pmf, poisson_tail_ge};

/// Binary field whose law is given by conditional probabilities
/// `P(sigma_x = 1 | sigma_y, y < x)` in a fixed site order.
pub trait ConditionalField {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Conditional probability of `sigma_site = 1` given `revealed`, the
    /// values at sites `0..site`.
    fn conditional(&self, site: usize, revealed: &[bool]) -> f64;
}

/// Independent sites with the given success probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductField {
    pub probs: Vec<f64>,
}

impl ConditionalField for ProductField {
    fn len(&self) -> usize {
        self.probs.len()
    }

    fn conditional(&self, site: usize, _revealed: &[bool]) -> f64 {
        self.probs[site]
    }
}

/// Coupled `(sigma', omega)` with `sigma'` distributed as the field and
/// `omega` i.i.d. Bernoulli(`p`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BernoulliCoupling {
    pub sigma: Vec<bool>,
    pub omega: Vec<bool>,
}

/// Slack for conditional probabilities computed in floating point against
/// the cap.
const CAP_SLACK: f64 = 1e-12;

/// Visit sites in order; one uniform `U` per site gives `omega = 1{U < p}`
/// and `sigma' = 1{U < q}` with `q` the conditional probability given the
/// revealed `sigma'`. Fails with [`Error::CapViolation`] if some `q > p`.
pub fn bernoulli_dominate<F: ConditionalField + ?Sized, R: Rng + ?Sized>(
    field: &F,
    p: f64,
    rng: &mut R,
) -> Result<BernoulliCoupling> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid_param(format!("p must lie in [0, 1], got {p}")));
    }
    let n = field.len();
    let mut sigma = Vec::with_capacity(n);
    let mut omega = Vec::with_capacity(n);
    for site in 0..n {
        let q = field.conditional(site, &sigma);
        if !(0.0..=1.0).contains(&q) {
            return Err(invalid_arg(format!("conditional probability {q} at site {site}")));
        }
        if q > p * (1.0 + CAP_SLACK) {
            return Err(Error::CapViolation { site, observed: q, cap: p });
        }
        let u: f64 = rng.random();
        omega.push(u < p);
        sigma.push(u < q);
    }
    Ok(BernoulliCoupling { sigma, omega })
}

/// Smallest `rho'` with `1 - (1-p)^N <= P(Poisson(rho' K^d) >= N)`, with the
/// bisection bracket as a certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoPrime {
    pub rho: f64,
    /// `p' = 1 - (1-p)^N`
    pub p_prime: f64,
    /// `p~ = P(Poisson(rho' K^d) >= N)` at the returned `rho`
    pub p_tilde: f64,
    /// `(lo, hi)`: `lo` violates the condition, `hi = rho` satisfies it
    pub bracket: (f64, f64),
}

/// `1 - (1-p)^n`, accurate for small `p`.
fn occupied_prob(p: f64, n: u32) -> f64 {
    -(n as f64 * (-p).ln_1p()).exp_m1()
}

pub fn choose_rho_prime(p: f64, n: u32, k: f64, d: usize) -> Result<RhoPrime> {
    if !(p > 0.0 && p < 1.0) || n == 0 || !(k > 0.0 && k.is_finite()) || d == 0 {
        return Err(invalid_param(format!(
            "need p in (0, 1), N >= 1, K > 0, d >= 1 (p={p}, N={n}, K={k}, d={d})"
        )));
    }
    let vol = k.powi(d as i32);
    let target = occupied_prob(p, n);
    let ok = |rho: f64| poisson_tail_ge(rho * vol, n as u64) >= target;
    let mut hi = 1.0 / vol;
    while !ok(hi) {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(RhoPrime {
        rho: hi,
        p_prime: target,
        p_tilde: poisson_tail_ge(hi * vol, n as u64),
        bracket: (lo, hi),
    })
}

/// Parameters of the thinning coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    /// retention probability of the thinning
    pub p: f64,
    /// cell side
    pub k: f64,
    /// almost-sure bound on points per cell
    pub n: u32,
}

/// Coupled count fields `Y1 <= Y2` on one lattice window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingPair {
    /// counts of the `p`-thinned process
    pub y1: CountField,
    /// Poisson(`rho'`) counts
    pub y2: CountField,
    pub params: CouplingParams,
    pub rho_prime: RhoPrime,
}

/// Draw `k` in `[lo, hi)` from the Poisson(`mu`) law restricted there, by
/// inversion.
fn poisson_restricted<R: Rng + ?Sized>(mu: f64, lo: u32, hi: Option<u32>, rng: &mut R) -> u32 {
    let mass = match hi {
        Some(h) => (lo..h).map(|k| poisson_pmf(mu, k as u64)).sum::<f64>(),
        None => poisson_tail_ge(mu, lo as u64),
    };
    let mut u = rng.random::<f64>() * mass;
    let mut k = lo;
    loop {
        let w = poisson_pmf(mu, k as u64);
        if u < w || hi.is_some_and(|h| k + 1 >= h) || (w == 0.0 && k as f64 > mu) {
            return k;
        }
        u -= w;
        k += 1;
    }
}

/// Coupling of one realization `points` of a process with at most `N`
/// points per `K`-cell. Conditionally on the points, cell occupancies of the
/// `p`-thinning are independent with probability `1-(1-p)^{n_x} <= p'`;
/// these are dominated by `tau_x = 1{Poisson cell count >= N}` through
/// [`bernoulli_dominate`], giving `Y1 <= N sigma' <= N tau <= Y2`.
pub fn domination_coupling<R: Rng + ?Sized>(
    points: &PointSet,
    geom: &BoxGeometry,
    params: CouplingParams,
    rng: &mut R,
) -> Result<CouplingPair> {
    let CouplingParams { p, k, n } = params;
    if !(0.0..1.0).contains(&p) {
        return Err(invalid_param(format!("p must lie in [0, 1), got {p}")));
    }
    let counts = count_field(points, k, geom)?;
    if let Some((i, &c)) = counts.counts().iter().enumerate().find(|&(_, &c)| c > n) {
        return Err(Error::DensityBound { cell: counts.site_label(i), count: c, bound: n });
    }
    let mut by_cell: Vec<Vec<usize>> = vec![Vec::new(); counts.len()];
    for (j, x) in points.iter().enumerate() {
        if let Some(i) = counts.cell_of(x) {
            by_cell[i].push(j);
        }
    }
    let rp = if p == 0.0 {
        RhoPrime { rho: 0.0, p_prime: 0.0, p_tilde: 0.0, bracket: (0.0, 0.0) }
    } else {
        choose_rho_prime(p, n, k, geom.dim())?
    };
    let field = ProductField { probs: counts.counts().iter().map(|&c| occupied_prob(p, c)).collect() };
    let BernoulliCoupling { sigma, omega: tau } = bernoulli_dominate(&field, rp.p_tilde, rng)?;
    let mu = rp.rho * k.powi(geom.dim() as i32);
    let mut y1 = CountField::zeros(k, geom)?;
    let mut y2 = CountField::zeros(k, geom)?;
    for i in 0..counts.len() {
        let m = by_cell[i].len() as u32;
        if sigma[i] {
            // thinned count given at least one retained: first retained
            // index by inversion, the rest independent
            let q = field.probs[i];
            let u: f64 = rng.random::<f64>() * q;
            let mut first = 0;
            let mut acc = p;
            while first + 1 < m && u >= acc {
                first += 1;
                acc += p * (1.0 - p).powi(first as i32);
            }
            let rest = (first + 1..m).filter(|_| rng.random::<f64>() < p).count() as u32;
            y1.counts_mut()[i] = 1 + rest;
        }
        y2.counts_mut()[i] = if tau[i] {
            poisson_restricted(mu, n, None, rng)
        } else {
            poisson_restricted(mu, 0, Some(n), rng)
        };
    }
    Ok(CouplingPair { y1, y2, params, rho_prime: rp })
}

/// A site where `Y1 > Y2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub site: Vec<i64>,
    pub y1: u32,
    pub y2: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DominationReport {
    pub violations: Vec<Violation>,
    /// `min_x (Y2(x) - Y1(x))`
    pub min_gap: i64,
}

impl DominationReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Exact pointwise comparison `Y1(x) <= Y2(x)`.
pub fn verify_domination(y1: &CountField, y2: &CountField) -> Result<DominationReport> {
    if !y1.same_window(y2) {
        return Err(invalid_arg("count fields are on different lattice windows"));
    }
    let mut violations = Vec::new();
    let mut min_gap = i64::MAX;
    for (i, (&a, &b)) in y1.counts().iter().zip(y2.counts()).enumerate() {
        min_gap = min_gap.min(b as i64 - a as i64);
        if a > b {
            violations.push(Violation { site: y1.site_label(i), y1: a, y2: b });
        }
    }
    Ok(DominationReport { violations, min_gap: if y1.is_empty() { 0 } else { min_gap } })
}

impl CouplingPair {
    pub fn verify(&self) -> DominationReport {
        verify_domination(&self.y1, &self.y2).expect("coupled fields share a window")
    }
}

/// One line of the coupling audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub replica: u64,
    pub seed: u64,
    pub min_gap: i64,
    pub violations: usize,
}

/// Run [`domination_coupling`] on `n` independent realizations of `source`.
/// Returns the audit rows and the per-cell counts of every `Y1`.
pub fn coupling_replicas<S: StationarySource>(
    source: &S,
    params: CouplingParams,
    n: usize,
    seed: u64,
) -> Result<(Vec<AuditRow>, Vec<u32>)> {
    let out: Vec<(AuditRow, Vec<u32>)> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(seed, i);
            let cfg = source.sample(&mut rng)?;
            let pair = domination_coupling(cfg.points(), source.geometry(), params, &mut rng)?;
            let rep = pair.verify();
            let row = AuditRow { replica: i, seed, min_gap: rep.min_gap, violations: rep.violations.len() };
            Ok((row, pair.y1.counts().to_vec()))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(n);
    let mut y1 = Vec::new();
    for (r, c) in out {
        rows.push(r);
        y1.extend(c);
    }
    Ok((rows, y1))
}

/// Retention masks for several thinning levels from one set of uniforms:
/// point `i` is kept at level `g` iff `U_i < g`, so lower levels keep
/// subsets of higher ones.
pub fn coupled_thinnings<R: Rng + ?Sized>(n_points: usize, levels: &[f64], rng: &mut R) -> Result<Vec<Vec<bool>>> {
    if let Some(g) = levels.iter().find(|g| !(0.0..=1.0).contains(*g)) {
        return Err(invalid_param(format!("thinning level {g} outside [0, 1]")));
    }
    let u: Vec<f64> = (0..n_points).map(|_| rng.random()).collect();
    Ok(levels.iter().map(|&g| u.iter().map(|&v| v < g).collect()).collect())
}

/// The `beta*` with `nu([-E(beta*), E(beta*)]) = p`.
pub fn beta_star(nu: &NuLaw, p: f64, d: usize) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) || d == 0 {
        return Err(invalid_param(format!("need p in (0, 1] and d >= 1 (p={p}, d={d})")));
    }
    let e = nu.threshold_for_mass(p);
    let b = e.powf(-(nu.alpha() + 1.0 + d as f64) / d as f64);
    debug_assert!((energy_scale(b, nu.alpha(), d) - e).abs() <= 1e-9 * e.max(1e-300));
    Ok(b)
}
