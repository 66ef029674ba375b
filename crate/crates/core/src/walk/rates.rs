use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NeighborIndex;
use crate::env::{MarkedConfiguration, NuLaw};
use crate::error::{invalid_param, Error, Result};
use crate::stats::{unit_sphere_surface, upper_gamma_int};

/// Default truncation radius of the rate sum.
pub const DEFAULT_R_CUT: f64 = 40.0;

/// Energy cost `u(E_x, E_y)` of a hop.
#[derive(Clone)]
pub enum EnergyCost {
    /// `(|E_x - E_y| + |E_x| + |E_y|) / 2`
    MeanField,
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for EnergyCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnergyCost::MeanField => write!(f, "MeanField"),
            EnergyCost::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl EnergyCost {
    #[inline]
    pub fn eval(&self, ex: f64, ey: f64) -> f64 {
        match self {
            EnergyCost::MeanField => 0.5 * ((ex - ey).abs() + (ex.abs() + ey.abs())),
            EnergyCost::Custom(u) => u(ex, ey),
        }
    }
}

/// Serializable description of a mean-field rate model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    pub beta: f64,
    #[serde(default = "default_r_cut")]
    pub r_cut: f64,
}

fn default_r_cut() -> f64 {
    DEFAULT_R_CUT
}

/// Hopping rates `c_{x,y} = exp(-|x - y| - beta u(E_x, E_y))`, summed over
/// neighbors within `r_cut`.
#[derive(Debug, Clone)]
pub struct RateModel {
    beta: f64,
    cost: EnergyCost,
    kappa1: f64,
    kappa2: f64,
    r_cut: f64,
}

impl RateModel {
    /// Mean-field cost with `kappa1 = 1/2`, `kappa2 = 3/2`.
    pub fn mean_field(beta: f64, r_cut: f64) -> Result<Self> {
        Self::build(beta, EnergyCost::MeanField, 0.5, 1.5, r_cut)
    }

    pub fn from_params(p: &RateParams) -> Result<Self> {
        Self::mean_field(p.beta, p.r_cut)
    }

    /// Custom cost. The bounds `kappa1 (|a|+|b|) <= u(a,b) <= kappa2 (|a|+|b|)`
    /// are checked on `n_check` random mark pairs.
    pub fn custom<R: Rng + ?Sized>(
        beta: f64,
        u: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
        kappa1: f64,
        kappa2: f64,
        r_cut: f64,
        n_check: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let m = Self::build(beta, EnergyCost::Custom(u), kappa1, kappa2, r_cut)?;
        for _ in 0..n_check {
            let a = rng.random_range(-1.0..=1.0);
            let b = rng.random_range(-1.0..=1.0);
            m.check_cost_bounds(a, b)?;
        }
        for &(a, b) in &[(0.0, 0.0), (1.0, 1.0), (-1.0, 1.0), (1.0, 0.0)] {
            m.check_cost_bounds(a, b)?;
        }
        Ok(m)
    }

    fn build(beta: f64, cost: EnergyCost, kappa1: f64, kappa2: f64, r_cut: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(invalid_param(format!("beta must be positive, got {beta}")));
        }
        if !(kappa1 > 0.0 && kappa1 <= kappa2 && kappa2.is_finite()) {
            return Err(invalid_param(format!(
                "need 0 < kappa1 <= kappa2, got {kappa1}, {kappa2}"
            )));
        }
        if !(r_cut > 0.0 && r_cut.is_finite()) {
            return Err(invalid_param(format!("r_cut must be positive, got {r_cut}")));
        }
        Ok(Self {
            beta,
            cost,
            kappa1,
            kappa2,
            r_cut,
        })
    }

    fn check_cost_bounds(&self, a: f64, b: f64) -> Result<()> {
        let u = self.cost.eval(a, b);
        let s = a.abs() + b.abs();
        let slack = 1e-12 * (1.0 + s);
        if !(u >= self.kappa1 * s - slack && u <= self.kappa2 * s + slack) {
            return Err(invalid_param(format!(
                "energy cost u({a}, {b}) = {u} outside [{}, {}]",
                self.kappa1 * s,
                self.kappa2 * s
            )));
        }
        Ok(())
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn kappa1(&self) -> f64 {
        self.kappa1
    }

    pub fn kappa2(&self) -> f64 {
        self.kappa2
    }

    pub fn r_cut(&self) -> f64 {
        self.r_cut
    }

    pub fn cost(&self) -> &EnergyCost {
        &self.cost
    }

    pub fn is_mean_field(&self) -> bool {
        matches!(self.cost, EnergyCost::MeanField)
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::build(beta, self.cost.clone(), self.kappa1, self.kappa2, self.r_cut)
    }

    #[inline]
    pub fn u(&self, ex: f64, ey: f64) -> f64 {
        self.cost.eval(ex, ey)
    }

    /// Rate for a hop of length `dist` between marks `ex`, `ey`.
    #[inline]
    pub fn rate_from(&self, dist: f64, ex: f64, ey: f64) -> f64 {
        (-dist - self.beta * self.cost.eval(ex, ey)).exp()
    }

    /// Periodic boxes must exceed twice the cutoff so the minimum image is
    /// the only image within range.
    pub fn check_geometry(&self, cfg: &MarkedConfiguration) -> Result<()> {
        let g = cfg.geometry();
        if g.is_periodic() && g.min_side() <= 2.0 * self.r_cut {
            return Err(invalid_param(format!(
                "periodic box side {} must exceed 2 r_cut = {}",
                g.min_side(),
                2.0 * self.r_cut
            )));
        }
        Ok(())
    }

    /// Analytic bound on the part of `lambda_x` beyond the cutoff for a
    /// configuration of intensity `rho`: `rho |S^{d-1}| Gamma(d, r_cut)`.
    pub fn tail_bound(&self, rho: f64, d: usize) -> f64 {
        rho * unit_sphere_surface(d) * upper_gamma_int(d, self.r_cut)
    }

    /// `E[exp(-beta u(E_0, E_1))]` for independent `nu` marks. Closed form for
    /// the mean-field cost; Monte Carlo with `n_mc` draws otherwise.
    pub fn mean_energy_factor<R: Rng + ?Sized>(&self, nu: &NuLaw, n_mc: usize, rng: &mut R) -> f64 {
        use statrs::function::gamma::{gamma_lr, ln_gamma};
        match self.cost {
            EnergyCost::MeanField => {
                // same sign: max of two marks has density 2(a+1) m^{2a+1}
                // opposite signs: u = |E_0| + |E_1| factorizes
                let a1 = nu.alpha() + 1.0;
                let b = self.beta;
                let same = ((2.0 * a1).ln() - 2.0 * a1 * b.ln() + ln_gamma(2.0 * a1)).exp()
                    * gamma_lr(2.0 * a1, b);
                let single = (a1.ln() - a1 * b.ln() + ln_gamma(a1)).exp() * gamma_lr(a1, b);
                0.5 * same + 0.5 * single * single
            }
            EnergyCost::Custom(_) => {
                let s: f64 = (0..n_mc)
                    .map(|_| (-self.beta * self.u(nu.sample(rng), nu.sample(rng))).exp())
                    .sum();
                s / n_mc.max(1) as f64
            }
        }
    }

    /// `E_{P_0}[lambda_0]` for the marked Poisson process of intensity `rho`
    /// with the cutoff: `rho |S^{d-1}| gamma(d, r_cut) E[exp(-beta u)]`.
    pub fn mean_escape_rate_poisson<R: Rng + ?Sized>(
        &self,
        rho: f64,
        d: usize,
        nu: &NuLaw,
        n_mc: usize,
        rng: &mut R,
    ) -> f64 {
        let fact: f64 = (1..d).map(|k| k as f64).product();
        let radial = fact - upper_gamma_int(d, self.r_cut);
        rho * unit_sphere_surface(d) * radial * self.mean_energy_factor(nu, n_mc, rng)
    }
}

/// `c_{x,y}`; zero on the diagonal. Minimum-image distance on periodic boxes.
pub fn rate(x: usize, y: usize, cfg: &MarkedConfiguration, model: &RateModel) -> f64 {
    if x == y {
        return 0.0;
    }
    let d = cfg.geometry().dist(cfg.point(x), cfg.point(y));
    model.rate_from(d, cfg.energy(x), cfg.energy(y))
}

/// `lambda_x = sum_z c_{x,z}` over neighbors within the cutoff.
pub fn escape_rate(
    x: usize,
    cfg: &MarkedConfiguration,
    model: &RateModel,
    index: &NeighborIndex,
) -> f64 {
    let mut terms = Vec::new();
    index.for_each_within(cfg, cfg.point(x), model.r_cut(), |j, d2| {
        if j != x {
            terms.push(model.rate_from(d2.sqrt(), cfg.energy(x), cfg.energy(j)));
        }
    });
    // sum smallest first for a stable total
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

/// Escape rate together with the truncation diagnostic and stuck flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EscapeRate {
    pub lambda: f64,
    pub tail_bound: f64,
    pub stuck: bool,
}

pub fn escape_rate_report(
    x: usize,
    cfg: &MarkedConfiguration,
    model: &RateModel,
    index: &NeighborIndex,
) -> EscapeRate {
    let lambda = escape_rate(x, cfg, model, index);
    let rho = cfg.len() as f64 / cfg.geometry().volume();
    EscapeRate {
        lambda,
        tail_bound: model.tail_bound(rho, cfg.dim()),
        stuck: lambda == 0.0,
    }
}

/// Jump law `c_{x,y} / lambda_x` as `(neighbor, probability)` pairs.
pub fn jump_distribution(
    x: usize,
    cfg: &MarkedConfiguration,
    model: &RateModel,
    index: &NeighborIndex,
) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::new();
    index.for_each_within(cfg, cfg.point(x), model.r_cut(), |j, d2| {
        if j != x {
            let c = model.rate_from(d2.sqrt(), cfg.energy(x), cfg.energy(j));
            if c > 0.0 {
                out.push((j, c));
            }
        }
    });
    let total: f64 = out.iter().map(|p| p.1).sum();
    if total == 0.0 {
        return Err(Error::StuckWalker { site: x });
    }
    out.sort_by_key(|p| p.0);
    for p in &mut out {
        p.1 /= total;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Boundary, BoxGeometry, PointSet};

    fn pair(dist: f64, ex: f64, ey: f64) -> MarkedConfiguration {
        let g = BoxGeometry::cube(2, 20.0, Boundary::Open).unwrap();
        let p = PointSet::from_rows(2, &[vec![0.0, 0.0], vec![dist, 0.0]]).unwrap();
        MarkedConfiguration::new(p, vec![ex, ey], g, Some(0)).unwrap()
    }

    #[test]
    fn diagonal_and_unit_distance() {
        let m = RateModel::mean_field(3.0, 40.0).unwrap();
        let c = pair(1.0, 0.0, 0.0);
        assert_eq!(rate(0, 0, &c, &m), 0.0);
        assert!((rate(0, 1, &c, &m) - (-1f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn mean_field_example() {
        let m = RateModel::mean_field(3.0, 40.0).unwrap();
        let c = pair(2.0, 1.0, 0.0);
        assert!((rate(0, 1, &c, &m) - (-5f64).exp()).abs() < 1e-18);
        assert_eq!(rate(0, 1, &c, &m), rate(1, 0, &c, &m));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(RateModel::mean_field(0.0, 40.0).is_err());
        assert!(RateModel::mean_field(1.0, -1.0).is_err());
        let mut rng = crate::rng::replica_rng(1, 0);
        let bad = Arc::new(|a: f64, b: f64| 3.0 * (a.abs() + b.abs()));
        assert!(RateModel::custom(1.0, bad, 0.5, 1.5, 40.0, 1000, &mut rng).is_err());
        let ok = Arc::new(|a: f64, b: f64| a.abs() + b.abs());
        assert!(RateModel::custom(1.0, ok, 0.5, 1.5, 40.0, 1000, &mut rng).is_ok());
    }

    #[test]
    fn energy_factor_closed_form_matches_quadrature() {
        let nu = NuLaw::with_alpha(0.0).unwrap();
        let m = RateModel::mean_field(7.0, 40.0).unwrap();
        let mut rng = crate::rng::replica_rng(2, 0);
        let exact = m.mean_energy_factor(&nu, 0, &mut rng);
        // midpoint rule on [-1,1]^2 with the uniform density 1/4
        let n = 2000;
        let h = 2.0 / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            let a = -1.0 + (i as f64 + 0.5) * h;
            for j in 0..n {
                let b = -1.0 + (j as f64 + 0.5) * h;
                s += (-7.0 * m.u(a, b)).exp();
            }
        }
        let quad = s * h * h / 4.0;
        assert!((exact - quad).abs() < 1e-4 * quad, "{exact} vs {quad}");
    }

    #[test]
    fn jump_law_two_equidistant() {
        let g = BoxGeometry::cube(2, 20.0, Boundary::Open).unwrap();
        let p = PointSet::from_rows(2, &[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        let c = MarkedConfiguration::new(p, vec![0.0; 3], g, Some(0)).unwrap();
        let m = RateModel::mean_field(2.0, 5.0).unwrap();
        let idx = NeighborIndex::new(&c, 5.0);
        let j = jump_distribution(0, &c, &m, &idx).unwrap();
        assert_eq!(j.len(), 2);
        assert!((j[0].1 - 0.5).abs() < 1e-15 && (j[1].1 - 0.5).abs() < 1e-15);
        let lone = MarkedConfiguration::new(
            PointSet::from_rows(2, &[vec![0.0, 0.0], vec![8.0, 0.0]]).unwrap(),
            vec![0.0; 2],
            BoxGeometry::cube(2, 20.0, Boundary::Open).unwrap(),
            Some(0),
        )
        .unwrap();
        let idx = NeighborIndex::new(&lone, 5.0);
        assert!(matches!(jump_distribution(0, &lone, &m, &idx), Err(Error::StuckWalker { site: 0 })));
        assert!(escape_rate_report(0, &lone, &m, &idx).stuck);
    }
}
