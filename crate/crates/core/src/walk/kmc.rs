//! Kinetic Monte Carlo for the hopping walk.

use rand::distr::Open01;
use rand::Rng;

use super::{NeighborIndex, RateModel};
use crate::env::MarkedConfiguration;
use crate::error::{invalid_arg, Result};

/// Rates below this fraction of the largest rate out of a site are dropped
/// from the sampling tables. With at most a few thousand neighbors inside
/// the cutoff this perturbs each escape rate by less than `1e-14` relative.
pub const PRUNE_RELATIVE: f64 = 1e-18;

#[derive(Debug, Clone, Default)]
struct SiteTable {
    targets: Vec<u32>,
    cum: Vec<f64>,
}

impl SiteTable {
    fn total(&self) -> f64 {
        self.cum.last().copied().unwrap_or(0.0)
    }
}

/// Walk engine bound to one environment. Per-site jump tables are built on
/// first visit and reused by later walks on the same environment.
pub struct Engine<'a> {
    cfg: &'a MarkedConfiguration,
    model: &'a RateModel,
    index: &'a NeighborIndex,
    slot: Vec<u32>,
    tables: Vec<SiteTable>,
}

/// What the walk did, as seen by an observer.
pub trait Observer {
    /// Called before the jump at `time` with the pre-jump unwrapped position.
    fn jump(&mut self, time: f64, from: usize, to: usize, pos_after: &[f64], pos_before: &[f64]);
}

impl<'a> Engine<'a> {
    pub fn new(cfg: &'a MarkedConfiguration, model: &'a RateModel, index: &'a NeighborIndex) -> Result<Self> {
        model.check_geometry(cfg)?;
        Ok(Self {
            cfg,
            model,
            index,
            slot: vec![u32::MAX; cfg.len()],
            tables: Vec::new(),
        })
    }

    pub fn config(&self) -> &MarkedConfiguration {
        self.cfg
    }

    /// Number of distinct sites whose table has been built.
    pub fn cached_sites(&self) -> usize {
        self.tables.len()
    }

    fn table(&mut self, x: usize) -> &SiteTable {
        if self.slot[x] == u32::MAX {
            let t = self.build(x);
            self.slot[x] = self.tables.len() as u32;
            self.tables.push(t);
        }
        &self.tables[self.slot[x] as usize]
    }

    fn build(&self, x: usize) -> SiteTable {
        let cfg = self.cfg;
        let ex = cfg.energy(x);
        let mut pairs: Vec<(u32, f64)> = Vec::new();
        self.index.for_each_within(cfg, cfg.point(x), self.model.r_cut(), |j, d2| {
            if j != x {
                let c = self.model.rate_from(d2.sqrt(), ex, cfg.energy(j));
                if c > 0.0 {
                    pairs.push((j as u32, c));
                }
            }
        });
        let max = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
        let floor = max * PRUNE_RELATIVE;
        pairs.retain(|p| p.1 >= floor);
        let mut acc = 0.0;
        let mut t = SiteTable {
            targets: Vec::with_capacity(pairs.len()),
            cum: Vec::with_capacity(pairs.len()),
        };
        for (j, c) in pairs {
            acc += c;
            t.targets.push(j);
            t.cum.push(acc);
        }
        t
    }

    /// Escape rate as used by the sampler.
    pub fn lambda(&mut self, x: usize) -> f64 {
        self.table(x).total()
    }

    /// One jump target drawn from `c_{x,.} / lambda_x`.
    pub fn draw_target<R: Rng + ?Sized>(&mut self, x: usize, rng: &mut R) -> Option<usize> {
        let t = self.table(x);
        let total = t.total();
        if total == 0.0 {
            return None;
        }
        let v = rng.random::<f64>() * total;
        let k = t.cum.partition_point(|&c| c <= v).min(t.cum.len() - 1);
        Some(t.targets[k] as usize)
    }

    /// Run from `start` until the first event after `t_max`, reporting every
    /// jump. Returns `(jumps, stuck, final_site)`.
    pub fn run<R: Rng + ?Sized, O: Observer>(
        &mut self,
        start: usize,
        t_max: f64,
        rng: &mut R,
        obs: &mut O,
    ) -> (u64, bool, usize) {
        let d = self.cfg.dim();
        let mut pos = vec![0.0; d];
        let mut before = vec![0.0; d];
        let mut t = 0.0;
        let mut x = start;
        let mut jumps = 0u64;
        loop {
            let total = self.table(x).total();
            if total == 0.0 {
                return (jumps, true, x);
            }
            let u: f64 = rng.sample(Open01);
            let dt = -u.ln() / total;
            if t + dt > t_max {
                return (jumps, false, x);
            }
            let y = self.draw_target(x, rng).expect("positive total");
            t = advance(t, dt);
            before.copy_from_slice(&pos);
            let g = self.cfg.geometry();
            let (px, py) = (self.cfg.point(x), self.cfg.point(y));
            for a in 0..d {
                pos[a] += g.delta(a, px[a], py[a]);
            }
            obs.jump(t, x, y, &pos, &before);
            x = y;
            jumps += 1;
        }
    }
}

/// Piecewise-constant path: event times, visited sites and unwrapped
/// positions (row `k` is the position from `times[k]` on).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    sites: Vec<usize>,
    positions: Vec<f64>,
    t_max: f64,
    stuck: bool,
}

impl Trajectory {
    /// Build from raw parts, checking the structural invariants.
    pub fn from_parts(
        dim: usize,
        times: Vec<f64>,
        sites: Vec<usize>,
        positions: Vec<f64>,
        t_max: f64,
    ) -> Result<Self> {
        if times.is_empty() || times[0] != 0.0 {
            return Err(invalid_arg("trajectory must start at time 0"));
        }
        if sites.len() != times.len() || positions.len() != dim * times.len() {
            return Err(invalid_arg("trajectory columns have different lengths"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid_arg("trajectory times must increase strictly"));
        }
        if sites.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid_arg("consecutive trajectory sites must differ"));
        }
        if times.last().is_some_and(|&t| t > t_max) {
            return Err(invalid_arg("trajectory extends past t_max"));
        }
        Ok(Self {
            dim,
            times,
            sites,
            positions,
            t_max,
            stuck: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn position(&self, k: usize) -> &[f64] {
        &self.positions[k * self.dim..(k + 1) * self.dim]
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    /// The walker hit a site with zero escape rate and stayed there.
    pub fn stuck(&self) -> bool {
        self.stuck
    }

    pub fn jumps(&self) -> usize {
        self.times.len() - 1
    }

    /// Unwrapped displacement at the end of the path.
    pub fn displacement(&self) -> &[f64] {
        self.position(self.len() - 1)
    }

    /// Position at time `t`: that of the last event at or before `t`.
    pub fn position_at(&self, t: f64) -> &[f64] {
        let k = self.times.partition_point(|&s| s <= t).max(1) - 1;
        self.position(k)
    }
}

struct Recorder {
    times: Vec<f64>,
    sites: Vec<usize>,
    positions: Vec<f64>,
}

impl Observer for Recorder {
    fn jump(&mut self, time: f64, _from: usize, to: usize, pos: &[f64], _before: &[f64]) {
        self.times.push(time);
        self.sites.push(to);
        self.positions.extend_from_slice(pos);
    }
}

/// Next event time. A holding time below the resolution of `t` still moves
/// the clock by one ulp, so long walks do not stall.
#[inline]
fn advance(t: f64, dt: f64) -> f64 {
    (t + dt).max(t.next_up())
}

/// Full KMC trajectory of the walker started at the configuration's origin.
pub fn simulate<R: Rng + ?Sized>(
    cfg: &MarkedConfiguration,
    model: &RateModel,
    index: &NeighborIndex,
    t_max: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    let mut engine = Engine::new(cfg, model, index)?;
    simulate_with(&mut engine, t_max, rng)
}

/// As [`simulate`], reusing the jump tables of `engine`.
pub fn simulate_with<R: Rng + ?Sized>(engine: &mut Engine<'_>, t_max: f64, rng: &mut R) -> Result<Trajectory> {
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(invalid_arg(format!("t_max must be finite and nonnegative, got {t_max}")));
    }
    let start = engine.config().require_origin()?;
    let d = engine.config().dim();
    let mut rec = Recorder {
        times: vec![0.0],
        sites: vec![start],
        positions: vec![0.0; d],
    };
    let (_, stuck, _) = engine.run(start, t_max, rng, &mut rec);
    Ok(Trajectory {
        dim: d,
        times: rec.times,
        sites: rec.sites,
        positions: rec.positions,
        t_max,
        stuck,
    })
}

/// Positions of one walk at fixed sample times, without storing the path.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledWalk {
    /// row-major `[sample][axis]`
    pub positions: Vec<f64>,
    pub jumps: u64,
    pub stuck: bool,
}

struct Sampler<'s> {
    times: &'s [f64],
    next: usize,
    dim: usize,
    out: Vec<f64>,
}

impl Observer for Sampler<'_> {
    fn jump(&mut self, time: f64, _from: usize, _to: usize, _pos: &[f64], before: &[f64]) {
        while self.next < self.times.len() && self.times[self.next] < time {
            self.out[self.next * self.dim..(self.next + 1) * self.dim].copy_from_slice(before);
            self.next += 1;
        }
    }
}

/// Run one walk from the origin up to the last sample time and record the
/// unwrapped position at each (sorted) sample time.
pub fn simulate_sampled<R: Rng + ?Sized>(
    engine: &mut Engine<'_>,
    sample_times: &[f64],
    rng: &mut R,
) -> Result<SampledWalk> {
    if sample_times.windows(2).any(|w| w[1] < w[0]) || sample_times.first().is_some_and(|&t| t < 0.0) {
        return Err(invalid_arg("sample times must be nonnegative and sorted"));
    }
    let start = engine.config().require_origin()?;
    let d = engine.config().dim();
    let t_max = sample_times.last().copied().unwrap_or(0.0);
    let mut s = Sampler {
        times: sample_times,
        next: 0,
        dim: d,
        out: vec![0.0; d * sample_times.len()],
    };
    // final position is needed for sample times after the last jump
    struct Tail<'s, 't> {
        inner: &'t mut Sampler<'s>,
        pos: Vec<f64>,
    }
    impl Observer for Tail<'_, '_> {
        fn jump(&mut self, time: f64, from: usize, to: usize, pos: &[f64], before: &[f64]) {
            self.inner.jump(time, from, to, pos, before);
            self.pos.copy_from_slice(pos);
        }
    }
    let mut tail = Tail {
        inner: &mut s,
        pos: vec![0.0; d],
    };
    let (jumps, stuck, _) = engine.run(start, t_max, rng, &mut tail);
    let last = tail.pos;
    for k in s.next..sample_times.len() {
        s.out[k * d..(k + 1) * d].copy_from_slice(&last);
    }
    Ok(SampledWalk {
        positions: s.out,
        jumps,
        stuck,
    })
}
