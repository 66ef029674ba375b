use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, invalid_param, Error, Result};
use crate::percolation::{mott_exponent, MottGraphParams};
use crate::stats::{linear_fit, LinearFit};
use crate::walk::RateModel;

/// `c1 beta^{c2} exp(-C beta^{(alpha+1)/(alpha+1+d)})`.
pub fn closed_form_bound(beta: f64, alpha: f64, d: usize, c1: f64, c2: f64, c: f64) -> Result<f64> {
    if !(beta > 0.0) || !(alpha > -1.0) || d < 2 {
        return Err(invalid_param(format!(
            "need beta > 0, alpha > -1, d >= 2 (beta={beta}, alpha={alpha}, d={d})"
        )));
    }
    Ok(c1 * beta.powf(c2) * (-c * beta.powf(mott_exponent(alpha, d))).exp())
}

/// `C(beta) = exp(-min(ell(beta), kappa_1 beta E(beta)))`.
pub fn a3_rate_cap(model: &RateModel, params: &MottGraphParams) -> f64 {
    (-(params.ell_beta.min(model.kappa1() * model.beta() * params.e_beta))).exp()
}

/// Pair `(|x - y|, E_x, E_y)` that is not an edge of `G^beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub dist: f64,
    pub ex: f64,
    pub ey: f64,
}

impl PairSample {
    pub fn is_edge(&self, p: &MottGraphParams) -> bool {
        self.ex.abs() <= p.e_beta && self.ey.abs() <= p.e_beta && self.dist <= p.ell_beta
    }
}

/// Result of checking the rate cap on sampled non-edge pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCapCheck {
    pub cap: f64,
    pub n_pairs: usize,
    pub max_rate: f64,
    pub violations: Vec<PairSample>,
}

/// Draw `n` non-edge pairs concentrated near the edge thresholds (distance
/// up to `2 ell`, marks on `[-1, 1]` with half the draws within twice
/// `E(beta)`) and compare every rate with `C(beta)` exactly.
pub fn check_rate_cap<R: Rng + ?Sized>(
    model: &RateModel,
    params: &MottGraphParams,
    n: usize,
    rng: &mut R,
) -> RateCapCheck {
    let cap = a3_rate_cap(model, params);
    let e_hi = (2.0 * params.e_beta).min(1.0);
    let d_hi = (2.0 * params.ell_beta).max(1.0);
    let mark = |rng: &mut R| {
        let m = if rng.random::<bool>() { rng.random::<f64>() * e_hi } else { rng.random::<f64>() };
        if rng.random::<bool>() {
            m
        } else {
            -m
        }
    };
    let mut out = RateCapCheck { cap, n_pairs: 0, max_rate: 0.0, violations: Vec::new() };
    while out.n_pairs < n {
        let s = PairSample { dist: rng.random::<f64>() * d_hi, ex: mark(rng), ey: mark(rng) };
        if s.is_edge(params) {
            continue;
        }
        let c = model.rate_from(s.dist, s.ex, s.ey);
        out.max_rate = out.max_rate.max(c);
        if c > cap {
            out.violations.push(s);
        }
        out.n_pairs += 1;
    }
    out
}

/// Fit of the Mott law to `(beta, D)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MottFit {
    /// slope of `log(-log D)` against `log beta`
    pub slope: LinearFit,
    /// approximate 95% interval for the slope
    pub slope_ci: (f64, f64),
    /// `-log D = C beta^x + b` with `x` the theoretical exponent
    pub fixed: FixedExponentFit,
    /// `-log D = C beta^x - c2 log beta - log c1`
    pub with_prefactor: PrefactorFit,
    /// points dropped for non-positive `D` or `D >= 1`
    pub dropped: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedExponentFit {
    pub exponent: f64,
    pub c: f64,
    pub c_stderr: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrefactorFit {
    pub exponent: f64,
    pub c1: f64,
    pub c2: f64,
    pub c: f64,
}

/// Least squares for `y ~ X b`, solved by SVD.
fn lstsq(rows: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let n = rows.len();
    let k = rows.first().map_or(0, |r| r.len());
    let x = DMatrix::from_fn(n, k, |i, j| rows[i][j]);
    let b = DVector::from_column_slice(y);
    let sol = x
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::Numerical(format!("least squares failed: {e}")))?;
    Ok(sol.iter().copied().collect())
}

/// Fit `log(-log D)` against `log beta`; also fits `-log D` against
/// `beta^x` at the theoretical exponent `x = (alpha+1)/(alpha+1+d)`.
/// Needs at least four usable points spanning a decade in `beta`.
pub fn fit_mott_exponent(pairs: &[(f64, f64)], alpha: f64, d: usize) -> Result<MottFit> {
    let (good, dropped): (Vec<(f64, f64)>, Vec<(f64, f64)>) =
        pairs.iter().copied().partition(|&(b, v)| b > 0.0 && v > 0.0 && v < 1.0);
    if good.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "need at least 4 usable (beta, D) points, got {}",
            good.len()
        )));
    }
    let lo = good.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = good.iter().map(|p| p.0).fold(0.0, f64::max);
    if hi < 10.0 * lo {
        return Err(Error::InsufficientData(format!("beta range [{lo}, {hi}] spans less than a decade")));
    }
    let lx: Vec<f64> = good.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = good.iter().map(|p| (-p.1.ln()).ln()).collect();
    let slope = linear_fit(&lx, &ly).ok_or_else(|| Error::Numerical("degenerate slope fit".into()))?;
    let t = statrs::distribution::StudentsT::new(0.0, 1.0, (good.len() - 2) as f64)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let q = statrs::distribution::ContinuousCDF::inverse_cdf(&t, 0.975);
    let x = mott_exponent(alpha, d);
    let bx: Vec<f64> = good.iter().map(|p| p.0.powf(x)).collect();
    let nl: Vec<f64> = good.iter().map(|p| -p.1.ln()).collect();
    let f = linear_fit(&bx, &nl).ok_or_else(|| Error::Numerical("degenerate fixed-exponent fit".into()))?;
    let rows: Vec<Vec<f64>> = good.iter().map(|p| vec![p.0.powf(x), -p.0.ln(), -1.0]).collect();
    let sol = lstsq(&rows, &nl)?;
    Ok(MottFit {
        slope_ci: (slope.slope - q * slope.slope_stderr, slope.slope + q * slope.slope_stderr),
        slope,
        fixed: FixedExponentFit {
            exponent: x,
            c: f.slope,
            c_stderr: f.slope_stderr,
            intercept: f.intercept,
            r_squared: f.r_squared,
        },
        with_prefactor: PrefactorFit { exponent: x, c: sol[0], c2: sol[1], c1: sol[2].exp() },
        dropped,
    })
}

/// Constants `(c1, c2, C)` of the closed-form law fitted to `(beta, value)`
/// pairs by least squares on `log value`, then `c1` raised until the law
/// bounds every point from above.
pub fn calibrate_closed_form(pairs: &[(f64, f64)], alpha: f64, d: usize) -> Result<PrefactorFit> {
    let good: Vec<(f64, f64)> = pairs.iter().copied().filter(|&(b, v)| b > 0.0 && v > 0.0).collect();
    if good.len() < 3 {
        return Err(invalid_arg(format!("need at least 3 positive points, got {}", good.len())));
    }
    let x = mott_exponent(alpha, d);
    let rows: Vec<Vec<f64>> = good.iter().map(|p| vec![p.0.powf(x), -p.0.ln(), -1.0]).collect();
    let y: Vec<f64> = good.iter().map(|p| -p.1.ln()).collect();
    let sol = lstsq(&rows, &y)?;
    let (c, c2) = (sol[0], sol[1]);
    // smallest log c1 with log value <= log c1 + c2 log beta - C beta^x everywhere
    let log_c1 = good
        .iter()
        .map(|p| p.1.ln() - c2 * p.0.ln() + c * p.0.powf(x))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(PrefactorFit { exponent: x, c1: log_c1.exp(), c2, c })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_rng;

    fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
        sxy / sxx
    }

    fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
    }

    #[test]
    fn exponents() {
        assert!((mott_exponent(0.0, 2) - 1.0 / 3.0).abs() < 1e-15);
        assert!((mott_exponent(1.0, 3) - 0.4).abs() < 1e-15);
        let v = closed_form_bound(8.0, 0.0, 2, 2.0, 1.5, 0.0).unwrap();
        assert!((v - 2.0 * 8f64.powf(1.5)).abs() < 1e-12);
        assert!(closed_form_bound(0.0, 0.0, 2, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn pure_stretched_exponential_slope_is_one_third() {
        let pairs: Vec<(f64, f64)> = geometric(10.0, 500.0, 8)
            .into_iter()
            .map(|b| (b, (-2.0 * b.powf(1.0 / 3.0)).exp()))
            .collect();
        let f = fit_mott_exponent(&pairs, 0.0, 2).unwrap();
        assert!((f.slope.slope - 1.0 / 3.0).abs() < 1e-10);
        assert!((f.fixed.c - 2.0).abs() < 1e-10);
    }

    #[test]
    fn prefactor_contamination_matches_direct_regression() {
        let betas = geometric(10.0, 1e4, 8);
        let pairs: Vec<(f64, f64)> = betas
            .iter()
            .map(|&b| (b, b.powf(1.5) * (-2.0 * b.powf(1.0 / 3.0)).exp()))
            .collect();
        let f = fit_mott_exponent(&pairs, 0.0, 2).unwrap();
        let x: Vec<f64> = betas.iter().map(|b| b.ln()).collect();
        let y: Vec<f64> = pairs.iter().map(|p| (-p.1.ln()).ln()).collect();
        let oracle = ols_slope(&x, &y);
        assert!((f.slope.slope - oracle).abs() < 1e-10);
        // the prefactor pushes the naive slope well above 1/3
        assert!(oracle > 0.5 && oracle < 0.6);
        let p = f.with_prefactor;
        assert!((p.c - 2.0).abs() < 1e-8 && (p.c2 - 1.5).abs() < 1e-8 && (p.c1 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn fit_preconditions() {
        let few = [(10.0, 0.1), (20.0, 0.05), (40.0, 0.01)];
        assert!(matches!(fit_mott_exponent(&few, 0.0, 2), Err(Error::InsufficientData(_))));
        let narrow = [(10.0, 0.1), (12.0, 0.05), (14.0, 0.01), (16.0, 0.001)];
        assert!(fit_mott_exponent(&narrow, 0.0, 2).is_err());
        let with_bad = [(10.0, 0.1), (20.0, -1.0), (40.0, 0.02), (80.0, 0.005), (160.0, 0.001)];
        let f = fit_mott_exponent(&with_bad, 0.0, 2).unwrap();
        assert_eq!(f.dropped, vec![(20.0, -1.0)]);
    }

    #[test]
    fn rate_cap_examples() {
        let m = RateModel::mean_field(1.0, 40.0).unwrap();
        let p = MottGraphParams::new(1.0, 1.0).unwrap();
        // kappa_1 beta E = 1/2 < ell = 1
        assert!((a3_rate_cap(&m, &p) - (-0.5f64).exp()).abs() < 1e-15);
        let p = MottGraphParams::new(1.0, 1.0).unwrap();
        let m4 = RateModel::mean_field(4.0, 40.0).unwrap();
        assert!((a3_rate_cap(&m4, &p) - (-1.0f64).exp()).abs() < 1e-15);
        let mut rng = replica_rng(1, 0);
        let beta = 50.0;
        let m = RateModel::mean_field(beta, 40.0).unwrap();
        let p = MottGraphParams::power_law(beta, 0.0, 2, 1.0).unwrap();
        let check = check_rate_cap(&m, &p, 20_000, &mut rng);
        assert!(check.violations.is_empty() && check.max_rate <= check.cap);
        assert!((m.kappa1() * beta * p.e_beta - 0.5 * beta.powf(1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn calibrated_law_bounds_points() {
        let pairs: Vec<(f64, f64)> = geometric(10.0, 500.0, 8)
            .into_iter()
            .enumerate()
            .map(|(k, b)| (b, 3.0 * b.powf(0.5) * (-1.5 * b.powf(1.0 / 3.0)).exp() * (1.0 + 0.1 * (k % 3) as f64)))
            .collect();
        let p = calibrate_closed_form(&pairs, 0.0, 2).unwrap();
        for &(b, v) in &pairs {
            assert!(closed_form_bound(b, 0.0, 2, p.c1, p.c2, p.c).unwrap() >= v * (1.0 - 1e-12));
        }
    }
}
