//! Small statistics kit: mergeable moments, linear fits, Poisson tails.

use serde::{Deserialize, Serialize};

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn new(value: f64, stderr: f64, n: usize) -> Self {
        Self { value, stderr, n }
    }

    /// `|a - b|` in units of the combined standard error.
    pub fn z_score(&self, other: &Estimate) -> f64 {
        let s = (self.stderr * self.stderr + other.stderr * other.stderr).sqrt();
        let d = (self.value - other.value).abs();
        if s == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / s
        }
    }

    /// Whether the two estimates agree within `k` combined standard errors.
    pub fn agrees_with(&self, other: &Estimate, k: f64) -> bool {
        self.z_score(other) <= k
    }
}

impl std::fmt::Display for Estimate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.6e} ± {:.2e} (n={})", self.value, self.stderr, self.n)
    }
}

/// Welford accumulator. `merge` is associative up to rounding, and the
/// callers always merge in replica order, so results are reproducible.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    n: usize,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate::new(self.mean(), self.stderr(), self.n)
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = RunningStats::new();
        for x in iter {
            s.push(x);
        }
        s
    }
}

/// Ratio estimator `sum(num) / sum(den)` with a delta-method standard error.
pub fn ratio_estimate(num: &[f64], den: &[f64]) -> Option<Estimate> {
    let n = num.len();
    let sn: f64 = num.iter().sum();
    let sd: f64 = den.iter().sum();
    if n == 0 || sd == 0.0 {
        return None;
    }
    let r = sn / sd;
    let mean_den = sd / n as f64;
    let resid: RunningStats = num.iter().zip(den).map(|(a, b)| a - r * b).collect();
    let se = (resid.variance() / n as f64).sqrt() / mean_den;
    Some(Estimate::new(r, se, n))
}

/// Ordinary least squares fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub intercept_stderr: f64,
    pub r_squared: f64,
    pub n: usize,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    weighted_linear_fit(x, y, None)
}

/// Least squares with optional weights `1/sigma_i^2`. With weights the slope
/// error is the propagated one; without, it comes from the residual scatter.
pub fn weighted_linear_fit(x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let w: Vec<f64> = match sigma {
        Some(s) => s.iter().map(|&v| 1.0 / (v * v).max(1e-300)).collect(),
        None => vec![1.0; n],
    };
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * dy;
        syy += w[i] * dy * dy;
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = (0..n)
        .map(|i| {
            let r = y[i] - intercept - slope * x[i];
            w[i] * r * r
        })
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    let (slope_stderr, intercept_stderr) = if sigma.is_some() {
        ((1.0 / sxx).sqrt(), (1.0 / sw + mx * mx / sxx).sqrt())
    } else if n > 2 {
        let s2 = ss_res / (n - 2) as f64;
        ((s2 / sxx).sqrt(), (s2 * (1.0 / n as f64 + mx * mx / sxx)).sqrt())
    } else {
        (0.0, 0.0)
    };
    Some(LinearFit {
        slope,
        intercept,
        slope_stderr,
        intercept_stderr,
        r_squared,
        n,
    })
}

/// `log(k!)`
pub fn ln_factorial(k: u64) -> f64 {
    statrs::function::factorial::ln_factorial(k)
}

/// Poisson probability mass `e^{-mu} mu^k / k!`.
pub fn poisson_pmf(mu: f64, k: u64) -> f64 {
    if mu == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (k as f64 * mu.ln() - mu - ln_factorial(k)).exp()
}

/// `P(Z >= n)` for `Z ~ Poisson(mu)`.
pub fn poisson_tail_ge(mu: f64, n: u64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    if mu <= 0.0 {
        return 0.0;
    }
    if (n as f64) > mu {
        // upper tail summed directly is accurate when it is small
        let mut term = poisson_pmf(mu, n);
        let mut sum = 0.0;
        let mut k = n;
        while term > sum * 1e-17 && k < n + 100_000 {
            sum += term;
            k += 1;
            term *= mu / k as f64;
        }
        sum.min(1.0)
    } else {
        let lower: f64 = (0..n).map(|k| poisson_pmf(mu, k)).sum();
        (1.0 - lower).max(0.0)
    }
}

/// Surface area of the unit sphere in `R^d`.
pub fn unit_sphere_surface(d: usize) -> f64 {
    // S_d = 2 pi^{d/2} / Gamma(d/2)
    2.0 * std::f64::consts::PI.powf(d as f64 / 2.0) / gamma_half_integer(d)
}

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    unit_sphere_surface(d) / d as f64
}

// Gamma(d/2) for positive integer d.
fn gamma_half_integer(d: usize) -> f64 {
    if d % 2 == 0 {
        (1..d / 2).map(|k| k as f64).product()
    } else {
        let mut g = std::f64::consts::PI.sqrt();
        let mut x = 0.5;
        while x < d as f64 / 2.0 - 0.25 {
            g *= x;
            x += 1.0;
        }
        g
    }
}

/// Upper incomplete gamma `Gamma(d, x)` for positive integer `d`.
pub fn upper_gamma_int(d: usize, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..d {
        term *= x / k as f64;
        sum += term;
    }
    let fact: f64 = (1..d).map(|k| k as f64).product();
    fact * (-x).exp() * sum
}

/// Two-sample Kolmogorov–Smirnov distance between integer-valued samples.
pub fn ks_distance_counts(a: &[u32], b: &[u32]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let max = a.iter().chain(b).copied().max().unwrap_or(0) as usize;
    let mut ha = vec![0usize; max + 1];
    let mut hb = vec![0usize; max + 1];
    for &v in a {
        ha[v as usize] += 1;
    }
    for &v in b {
        hb[v as usize] += 1;
    }
    let (mut ca, mut cb, mut d) = (0.0, 0.0, 0.0f64);
    for k in 0..=max {
        ca += ha[k] as f64 / a.len() as f64;
        cb += hb[k] as f64 / b.len() as f64;
        d = d.max((ca - cb).abs());
    }
    d
}

/// KS two-sample rejection threshold at the two-sided 3-sigma level
/// (`alpha = 0.0027`).
pub fn ks_threshold_3sigma(n: usize, m: usize) -> f64 {
    let alpha: f64 = 0.0027;
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Pearson goodness-of-fit result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square test of observed counts against cell probabilities.
///
/// Cells are scanned in order and pooled until each pooled cell expects at
/// least 5 observations; a short remainder is folded into the last pool.
/// `probs` may sum to less than one, the rest forming an implicit tail cell.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Option<ChiSquare> {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let n: u64 = observed.iter().sum();
    if n == 0 || observed.len() != probs.len() {
        return None;
    }
    let nf = n as f64;
    let tail_p = (1.0 - probs.iter().sum::<f64>()).max(0.0);
    let tail_o = 0u64;
    let mut pools: Vec<(f64, f64)> = Vec::new();
    let (mut e, mut o) = (0.0, 0.0);
    for (&ob, &p) in observed.iter().zip(probs).chain(std::iter::once((&tail_o, &tail_p))) {
        e += p * nf;
        o += ob as f64;
        if e >= 5.0 {
            pools.push((o, e));
            e = 0.0;
            o = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match pools.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => pools.push((o, e)),
        }
    }
    if pools.len() < 2 {
        return Some(ChiSquare {
            statistic: 0.0,
            dof: 0,
            p_value: 1.0,
        });
    }
    let stat: f64 = pools.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = pools.len() - 1;
    let p_value = ChiSquared::new(dof as f64).ok()?.sf(stat);
    Some(ChiSquare {
        statistic: stat,
        dof,
        p_value,
    })
}

/// Two-sided tail probability of a 3-sigma normal deviation.
pub const THREE_SIGMA_P: f64 = 0.0027;
