//! TOML experiment configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{CrystalSpec, NuLaw};
use crate::error::{Error, Result};
use crate::geometry::{Boundary, BoxGeometry};
use crate::walk::RateModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    MottScan,
    PercRc,
    PalmCheck,
    DominationCheck,
    BoundCompare,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::MottScan,
        ExperimentKind::PercRc,
        ExperimentKind::PalmCheck,
        ExperimentKind::DominationCheck,
        ExperimentKind::BoundCompare,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::MottScan => "mott-scan",
            ExperimentKind::PercRc => "perc-rc",
            ExperimentKind::PalmCheck => "palm-check",
            ExperimentKind::DominationCheck => "domination-check",
            ExperimentKind::BoundCompare => "bound-compare",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProcessKind {
    Poisson,
    /// diluted square crystal
    Crystal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcessConfig {
    pub kind: ProcessKind,
    /// Poisson intensity
    pub rho: f64,
    /// crystal retention probability
    pub dilution: f64,
    pub periodic: bool,
}

impl Default for ProcessConfig {
    fn default() -> Self {
        Self { kind: ProcessKind::Poisson, rho: 1.0, dilution: 0.5, periodic: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostKind {
    /// `(|a - b| + |a| + |b|) / 2`
    MeanField,
    /// `|a| + |b|`
    Sum,
}

/// `beta` values: an explicit list or a geometric grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaGrid {
    List(Vec<f64>),
    Geometric { min: f64, max: f64, points: usize },
}

impl BetaGrid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            BetaGrid::List(v) => v.clone(),
            BetaGrid::Geometric { min, max, points } => match points {
                0 => Vec::new(),
                1 => vec![*min],
                n => (0..*n).map(|k| min * (max / min).powf(k as f64 / (n - 1) as f64)).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d: usize,
    pub alpha: f64,
    pub cost: CostKind,
    pub r_cut: f64,
    pub beta: BetaGrid,
    /// accepted range of the fitted Mott exponent
    pub exponent_window: [f64; 2],
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 2,
            alpha: 0.0,
            cost: CostKind::MeanField,
            r_cut: 40.0,
            beta: BetaGrid::Geometric { min: 10.0, max: 500.0, points: 8 },
            exponent_window: [0.2, 0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SizesConfig {
    /// box side
    pub l: f64,
    pub replicas: usize,
    /// fixed time horizon; when absent a pilot run picks it per `beta`
    pub t_max: Option<f64>,
    pub walks_per_env: usize,
    /// fraction of the time window used for the MSD slope
    pub window_fraction: f64,
    pub sample_points: usize,
    /// pilot target for the mean per-axis MSD at `t_max`
    pub msd_target: f64,
    pub pilot_walkers: usize,
}

impl Default for SizesConfig {
    fn default() -> Self {
        Self {
            l: 200.0,
            replicas: 2000,
            t_max: None,
            walks_per_env: 1,
            window_fraction: 0.5,
            sample_points: 20,
            msd_target: 2500.0,
            pilot_walkers: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PercolationConfig {
    pub rho_grid: Vec<f64>,
    /// box sides of the finite-size ladder; the last one gives the estimate
    pub ladder: Vec<f64>,
    pub r_max: f64,
    pub tolerance: f64,
    /// radii, as multiples of the estimated `r_c`, for the crossing table
    pub r_factors: Vec<f64>,
    /// box sides for the subcritical decay fit
    pub decay_ladder: Vec<f64>,
    /// radius of the decay fit as a multiple of `r_c(1)`
    pub decay_factor: f64,
    pub splitting_per_level: usize,
    pub splitting_batches: usize,
    /// spacing of the splitting levels
    pub splitting_step: f64,
    /// order of the cluster moment tracked over the `beta` grid
    pub moment_order: f64,
}

impl Default for PercolationConfig {
    fn default() -> Self {
        Self {
            rho_grid: vec![0.5, 1.0, 2.0],
            ladder: vec![32.0, 64.0, 128.0],
            r_max: 2.0,
            tolerance: 1e-4,
            r_factors: vec![0.8, 0.9, 1.0, 1.1, 1.2],
            decay_ladder: vec![16.0, 32.0, 64.0, 128.0],
            decay_factor: 0.8,
            splitting_per_level: 1000,
            splitting_batches: 10,
            splitting_step: 2.0,
            moment_order: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PalmConfig {
    /// side of the averaging cell of the Campbell estimator
    pub k: f64,
    pub annuli: Vec<f64>,
    pub nn_radii: Vec<f64>,
    /// rejection threshold in standard errors
    pub sigma: f64,
}

impl Default for PalmConfig {
    fn default() -> Self {
        Self {
            k: 4.0,
            annuli: vec![0.7, 1.2, 1.7, 2.1, 2.6],
            nn_radii: vec![0.5, 0.9, 1.1, 1.5, 2.1],
            sigma: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DominationConfig {
    /// thinning retention probability
    pub p: f64,
    pub k: f64,
    /// points per cell of the bounded process
    pub n: u32,
}

impl Default for DominationConfig {
    fn default() -> Self {
        Self { p: 0.5, k: 1.0, n: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    /// caps of the cluster test functions
    pub n_caps: Vec<usize>,
    /// `ell(beta) = gamma r_c(rho(beta))`
    pub gamma: f64,
    /// replicas of the bound estimators (the walk uses `sizes.replicas`)
    pub bound_replicas: usize,
    /// random unit directions in addition to the axes
    pub random_directions: usize,
    pub sigma: f64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self { n_caps: vec![10, 100, 1000], gamma: 1.0, bound_replicas: 2000, random_directions: 2, sigma: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub process: ProcessConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub sizes: SizesConfig,
    #[serde(default)]
    pub percolation: PercolationConfig,
    #[serde(default)]
    pub palm: PalmConfig,
    #[serde(default)]
    pub domination: DominationConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Line of the first `key =` assignment, or of the `[section]` header.
fn line_of_key(text: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            current = Some(h.trim().to_string());
            if section == Some(h.trim()) && key.is_empty() {
                return Some(i + 1);
            }
            continue;
        }
        let in_section = current.as_deref() == section;
        let dotted = section.map(|s| format!("{s}.{key}"));
        let lhs = line.split('=').next().unwrap_or("").trim();
        if (in_section && lhs == key) || (current.is_none() && dotted.as_deref() == Some(lhs)) {
            return Some(i + 1);
        }
    }
    None
}

fn config_error(text: &str, section: Option<&str>, key: &str, message: String) -> Error {
    let line = line_of_key(text, section, key).or_else(|| section.and_then(|s| line_of_key(text, Some(s), "")));
    Error::Config { line, message }
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        let mut c = Self {
            experiment,
            seed: 0,
            output: None,
            process: ProcessConfig::default(),
            model: ModelConfig::default(),
            sizes: SizesConfig::default(),
            percolation: PercolationConfig::default(),
            palm: PalmConfig::default(),
            domination: DominationConfig::default(),
            bounds: BoundsConfig::default(),
        };
        match experiment {
            ExperimentKind::PalmCheck => {
                c.sizes.l = 20.0;
                c.sizes.replicas = 10_000;
            }
            ExperimentKind::DominationCheck => {
                c.process.kind = ProcessKind::Crystal;
                c.process.dilution = 1.0;
                c.sizes.l = 21.0;
                c.sizes.replicas = 1000;
            }
            ExperimentKind::BoundCompare => {
                c.model.beta = BetaGrid::Geometric { min: 10.0, max: 100.0, points: 4 };
                c.sizes.replicas = 500;
                c.sizes.l = 120.0;
                c.bounds.bound_replicas = 500;
            }
            ExperimentKind::PercRc => {
                c.sizes.l = 128.0;
            }
            ExperimentKind::MottScan => {}
        }
        c
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config {
            line: e.span().map(|s| line_of_offset(text, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.validate_with_source(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config { line: None, message: format!("{}: {e}", path.display()) })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config { line: None, message: e.to_string() })
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with_source("")
    }

    fn validate_with_source(&self, text: &str) -> Result<()> {
        let err = |section: Option<&str>, key: &str, msg: String| Err(config_error(text, section, key, msg));
        let m = &self.model;
        if m.d < 2 {
            return err(Some("model"), "d", format!("d must be at least 2, got {}", m.d));
        }
        if !(m.alpha >= 0.0 && m.alpha.is_finite()) {
            return err(Some("model"), "alpha", format!("alpha must be nonnegative, got {}", m.alpha));
        }
        if let Err(e) = NuLaw::with_alpha(m.alpha) {
            return err(Some("model"), "alpha", e.to_string());
        }
        let betas = m.beta.values();
        if betas.is_empty() {
            return err(Some("model"), "beta", "beta grid is empty".into());
        }
        if betas.windows(2).any(|w| !(w[0] < w[1])) {
            return err(Some("model"), "beta", format!("beta grid must be strictly increasing, got {betas:?}"));
        }
        for &b in &betas {
            if let Err(e) = RateModel::mean_field(b, m.r_cut) {
                return err(Some("model"), if b > 0.0 { "r_cut" } else { "beta" }, e.to_string());
            }
        }
        if !(m.exponent_window[0] < m.exponent_window[1]) {
            return err(Some("model"), "exponent_window", "exponent_window must be an increasing pair".into());
        }
        let p = &self.process;
        if !(p.rho > 0.0 && p.rho.is_finite()) {
            return err(Some("process"), "rho", format!("rho must be positive, got {}", p.rho));
        }
        if !(p.dilution > 0.0 && p.dilution <= 1.0) {
            return err(Some("process"), "dilution", format!("dilution must lie in (0, 1], got {}", p.dilution));
        }
        let s = &self.sizes;
        if self.sizes.replicas < 1 {
            return err(Some("sizes"), "replicas", "replicas must be at least 1".into());
        }
        if let Err(e) = self.geometry() {
            return err(Some("sizes"), "l", e.to_string());
        }
        if let Some(t) = s.t_max {
            if !(t > 0.0 && t.is_finite()) {
                return err(Some("sizes"), "t_max", format!("t_max must be positive, got {t}"));
            }
        }
        if !(s.window_fraction > 0.0 && s.window_fraction <= 1.0) {
            return err(Some("sizes"), "window_fraction", format!("window_fraction must lie in (0, 1], got {}", s.window_fraction));
        }
        if s.sample_points < 2 || s.walks_per_env < 1 || s.pilot_walkers < 1 {
            return err(Some("sizes"), "sample_points", "need sample_points >= 2, walks_per_env >= 1, pilot_walkers >= 1".into());
        }
        if !(s.msd_target > 0.0) {
            return err(Some("sizes"), "msd_target", "msd_target must be positive".into());
        }
        let pc = &self.percolation;
        if pc.rho_grid.is_empty() || pc.rho_grid.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return err(Some("percolation"), "rho_grid", "rho_grid must be non-empty and positive".into());
        }
        if pc.ladder.is_empty() || pc.ladder.iter().any(|&l| !(l > 0.0)) || pc.ladder.windows(2).any(|w| w[0] >= w[1]) {
            return err(Some("percolation"), "ladder", "ladder must be non-empty, positive and increasing".into());
        }
        if !(pc.r_max > 0.0 && pc.tolerance > 0.0) || pc.r_factors.iter().any(|&f| !(f > 0.0)) {
            return err(Some("percolation"), "r_max", "r_max, tolerance and r_factors must be positive".into());
        }
        if pc.decay_ladder.windows(2).any(|w| w[0] >= w[1])
            || !(pc.decay_factor > 0.0 && pc.splitting_step > 0.0 && pc.moment_order > 0.0)
            || pc.splitting_per_level < 2
            || pc.splitting_batches < 2
        {
            return err(
                Some("percolation"),
                "decay_ladder",
                "decay_ladder must increase; decay_factor, splitting_step, moment_order positive; at least 2 particles and 2 batches".into(),
            );
        }
        let pa = &self.palm;
        if !(pa.k > 0.0 && pa.sigma > 0.0) {
            return err(Some("palm"), "k", "k and sigma must be positive".into());
        }
        if pa.annuli.windows(2).any(|w| w[0] >= w[1]) || pa.annuli.iter().chain(&pa.nn_radii).any(|&r| !(r > 0.0)) {
            return err(Some("palm"), "annuli", "radii must be positive and annuli increasing".into());
        }
        let dc = &self.domination;
        if !(0.0..1.0).contains(&dc.p) || !(dc.k > 0.0) || dc.n < 1 {
            return err(Some("domination"), "p", "need p in [0, 1), k > 0, n >= 1".into());
        }
        let bc = &self.bounds;
        if bc.n_caps.iter().any(|&n| n == 0) || !(bc.gamma > 0.0 && bc.gamma < 2.0) || bc.bound_replicas < 1 {
            return err(Some("bounds"), "gamma", "need n_caps >= 1, gamma in (0, 2), bound_replicas >= 1".into());
        }
        if !(bc.sigma > 0.0) {
            return err(Some("bounds"), "sigma", "sigma must be positive".into());
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<BoxGeometry> {
        let b = if self.process.periodic { Boundary::Periodic } else { Boundary::Open };
        BoxGeometry::cube(self.model.d, self.sizes.l, b)
    }

    pub fn nu(&self) -> Result<NuLaw> {
        NuLaw::with_alpha(self.model.alpha)
    }

    pub fn crystal_spec(&self) -> CrystalSpec {
        CrystalSpec::square(self.model.d, self.process.dilution)
    }

    /// Rate model at one `beta`.
    pub fn rate_model(&self, beta: f64) -> Result<RateModel> {
        match self.model.cost {
            CostKind::MeanField => RateModel::mean_field(beta, self.model.r_cut),
            CostKind::Sum => {
                let u = std::sync::Arc::new(|a: f64, b: f64| a.abs() + b.abs());
                let mut rng = crate::rng::replica_rng(0, 0);
                RateModel::custom(beta, u, 1.0, 1.0, self.model.r_cut, 0, &mut rng)
            }
        }
    }

    /// Single-line parameter echo for CSV headers. The output directory
    /// is left out so that tables do not depend on where they are written.
    pub fn echo(&self) -> String {
        let c = ExperimentConfig { output: None, ..self.clone() };
        serde_json::to_string(&c).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        for kind in ExperimentKind::ALL {
            let c = ExperimentConfig::new(kind);
            c.validate().unwrap();
            let text = c.to_toml().unwrap();
            assert_eq!(ExperimentConfig::parse(&text).unwrap(), c, "{text}");
        }
    }

    #[test]
    fn minimal_file_uses_defaults() {
        let c = ExperimentConfig::parse("experiment = \"perc-rc\"\nseed = 5\n").unwrap();
        assert_eq!(c.seed, 5);
        assert_eq!(c.percolation, PercolationConfig::default());
        let c = ExperimentConfig::parse("experiment = \"mott-scan\"\n[model]\nbeta = [10.0, 20.0]\nd = 2\nalpha = 0.0\ncost = \"mean-field\"\nr_cut = 30.0\n").unwrap();
        assert_eq!(c.model.beta.values(), vec![10.0, 20.0]);
    }

    #[test]
    fn geometric_grid() {
        let g = BetaGrid::Geometric { min: 10.0, max: 500.0, points: 8 };
        let v = g.values();
        assert_eq!(v.len(), 8);
        assert!((v[0] - 10.0).abs() < 1e-12 && (v[7] - 500.0).abs() < 1e-9);
    }

    fn error_line(text: &str) -> Option<usize> {
        match ExperimentConfig::parse(text) {
            Err(Error::Config { line, .. }) => line,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let mut base = ExperimentConfig::new(ExperimentKind::MottScan).to_toml().unwrap();
        // syntax error on a known line
        base.push_str("oops = = 1\n");
        let n = base.lines().count();
        assert_eq!(error_line(&base), Some(n));

        let text = "experiment = \"mott-scan\"\nseed = 1\n\n[model]\nd = 2\nalpha = 0.0\ncost = \"mean-field\"\nr_cut = 40.0\nbeta = [20.0, 10.0]\n";
        assert_eq!(error_line(text), Some(9));

        let text = "experiment = \"mott-scan\"\n[sizes]\nl = 200.0\nreplicas = 0\nwalks_per_env = 1\nwindow_fraction = 0.5\nsample_points = 20\nmsd_target = 2500.0\npilot_walkers = 100\n";
        assert_eq!(error_line(text), Some(4));

        assert_eq!(error_line("experiment = \"nope\"\n"), Some(1));
        assert_eq!(error_line("experiment = \"perc-rc\"\nbogus = 3\n"), Some(2));
    }
}
