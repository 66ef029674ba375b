use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Result};

/// Energy-mark law with density `((alpha+1)/2) |E|^alpha` on `[-1, 1]`.
///
/// This saturates the small-energy bound `nu([-E, E]) <= c0 E^{alpha+1}`
/// with `c0 = 1`; `c0` is kept only to validate user-supplied caps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuLaw {
    alpha: f64,
    c0: f64,
}

impl NuLaw {
    pub fn new(alpha: f64, c0: f64) -> Result<Self> {
        if !(alpha > -1.0 && alpha.is_finite()) {
            return Err(invalid_param(format!("alpha must exceed -1, got {alpha}")));
        }
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(invalid_param(format!("c0 must be positive, got {c0}")));
        }
        Ok(Self { alpha, c0 })
    }

    /// `c0 = 1`, the tight constant for this density.
    pub fn with_alpha(alpha: f64) -> Result<Self> {
        Self::new(alpha, 1.0)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    /// Inverse-CDF draw: random sign times `U^{1/(alpha+1)}`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        let mag = u.powf(1.0 / (self.alpha + 1.0));
        if rng.random::<bool>() {
            mag
        } else {
            -mag
        }
    }

    /// `nu([-E, E])` for `E` in `[0, 1]`.
    pub fn mass_within(&self, e: f64) -> f64 {
        e.clamp(0.0, 1.0).powf(self.alpha + 1.0)
    }

    /// The `E` with `nu([-E, E]) = p`.
    pub fn threshold_for_mass(&self, p: f64) -> f64 {
        p.clamp(0.0, 1.0).powf(1.0 / (self.alpha + 1.0))
    }

    pub fn density(&self, e: f64) -> f64 {
        if e.abs() > 1.0 {
            0.0
        } else {
            0.5 * (self.alpha + 1.0) * e.abs().powf(self.alpha)
        }
    }

    /// `E|E|^k = (alpha+1)/(alpha+1+k)`.
    pub fn abs_moment(&self, k: f64) -> f64 {
        (self.alpha + 1.0) / (self.alpha + 1.0 + k)
    }

    /// Whether the concrete law respects the declared cap `c0`.
    pub fn satisfies_cap(&self) -> bool {
        self.c0 >= 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_rng;
    use crate::stats::RunningStats;

    #[test]
    fn rejects_alpha_at_or_below_minus_one() {
        assert!(NuLaw::with_alpha(-1.0).is_err());
        assert!(NuLaw::with_alpha(-0.5).is_ok());
        assert!(NuLaw::new(0.0, 0.0).is_err());
    }

    #[test]
    fn uniform_case_moments() {
        let nu = NuLaw::with_alpha(0.0).unwrap();
        let mut rng = replica_rng(11, 0);
        let n = 200_000;
        let mut mean = RunningStats::new();
        let mut abs = RunningStats::new();
        for _ in 0..n {
            let e = nu.sample(&mut rng);
            assert!((-1.0..=1.0).contains(&e));
            mean.push(e);
            abs.push(e.abs());
        }
        assert!(mean.mean().abs() < 3.0 * mean.stderr());
        assert!((abs.mean() - 0.5).abs() < 3.0 * abs.stderr());
    }

    #[test]
    fn alpha_one_abs_moments_match_integral() {
        let nu = NuLaw::with_alpha(1.0).unwrap();
        let mut rng = replica_rng(12, 0);
        let xs: Vec<f64> = (0..200_000).map(|_| nu.sample(&mut rng).abs()).collect();
        for k in 1..=3 {
            let s: RunningStats = xs.iter().map(|x| x.powi(k)).collect();
            let exact = 2.0 / (2.0 + k as f64);
            assert!((nu.abs_moment(k as f64) - exact).abs() < 1e-15);
            assert!((s.mean() - exact).abs() < 3.0 * s.stderr(), "k={k}");
        }
    }

    #[test]
    fn small_energy_mass_matches_cdf() {
        for &alpha in &[0.0, 1.0, -0.5] {
            let nu = NuLaw::with_alpha(alpha).unwrap();
            let mut rng = replica_rng(13, alpha.to_bits());
            let n = 100_000;
            let xs: Vec<f64> = (0..n).map(|_| nu.sample(&mut rng).abs()).collect();
            for &e in &[0.1, 0.5] {
                let p = nu.mass_within(e);
                let hits = xs.iter().filter(|&&x| x <= e).count() as f64 / n as f64;
                let sigma = (p * (1.0 - p) / n as f64).sqrt();
                assert!((hits - p).abs() < 3.0 * sigma, "alpha={alpha} e={e}");
            }
        }
    }

    #[test]
    fn threshold_inverts_mass() {
        let nu = NuLaw::with_alpha(2.0).unwrap();
        let e = nu.threshold_for_mass(0.3);
        assert!((nu.mass_within(e) - 0.3).abs() < 1e-14);
    }
}
