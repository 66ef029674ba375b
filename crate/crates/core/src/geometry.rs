//! Simulation box and flat point storage.
//!
//! All coordinates produced by the samplers live on a dyadic grid with
//! spacing [`QUANTUM`]. Box sides are rounded to a multiple of twice that
//! spacing. Sums and differences of grid values below `2^22` in magnitude are
//! then exact in `f64`, so translating a configuration by one of its points and
//! translating back reproduces it bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Result};

/// Coordinate grid spacing, `2^-30`.
pub const QUANTUM: f64 = 1.0 / (1u64 << 30) as f64;

/// Largest admissible box side.
pub const MAX_SIDE: f64 = (1u64 << 20) as f64;

/// Round a coordinate to the nearest grid value.
#[inline]
pub fn quantize(x: f64) -> f64 {
    (x / QUANTUM).round() * QUANTUM
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Periodic,
    Open,
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Boundary::Periodic => write!(f, "periodic"),
            Boundary::Open => write!(f, "open"),
        }
    }
}

impl std::str::FromStr for Boundary {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(Boundary::Periodic),
            "open" => Ok(Boundary::Open),
            other => Err(invalid_param(format!("unknown boundary `{other}`"))),
        }
    }
}

/// Axis-aligned box `lower + [0, side)` per axis.
///
/// Periodic boxes are always centered at the origin. Open boxes start
/// centered and move when a configuration is translated.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxGeometry {
    sides: Vec<f64>,
    lower: Vec<f64>,
    boundary: Boundary,
}

impl BoxGeometry {
    /// Cube `[-L/2, L/2)^d`.
    pub fn cube(dim: usize, side: f64, boundary: Boundary) -> Result<Self> {
        Self::new(vec![side; dim], boundary)
    }

    pub fn new(sides: Vec<f64>, boundary: Boundary) -> Result<Self> {
        let dim = sides.len();
        if dim < 2 {
            return Err(invalid_param(format!(
                "dimension must be at least 2, got {dim}"
            )));
        }
        let mut rounded = Vec::with_capacity(dim);
        for &s in &sides {
            if !(s.is_finite() && s > 0.0) {
                return Err(invalid_param(format!("box side must be positive, got {s}")));
            }
            if s > MAX_SIDE {
                return Err(invalid_param(format!("box side {s} exceeds {MAX_SIDE}")));
            }
            let r = ((s / (2.0 * QUANTUM)).round() * 2.0 * QUANTUM).max(2.0 * QUANTUM);
            rounded.push(r);
        }
        let lower = rounded.iter().map(|s| -s / 2.0).collect();
        Ok(Self {
            sides: rounded,
            lower,
            boundary,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.sides.len()
    }

    #[inline]
    pub fn sides(&self) -> &[f64] {
        &self.sides
    }

    #[inline]
    pub fn side(&self, axis: usize) -> f64 {
        self.sides[axis]
    }

    #[inline]
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    #[inline]
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn is_periodic(&self) -> bool {
        self.boundary == Boundary::Periodic
    }

    pub fn volume(&self) -> f64 {
        self.sides.iter().product()
    }

    /// Smallest side, used for cutoff validation.
    pub fn min_side(&self) -> f64 {
        self.sides.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.sides))
            .all(|(&v, (&lo, &s))| v >= lo && v < lo + s)
    }

    /// Map a coordinate back into the box on a periodic axis.
    #[inline]
    pub fn wrap_coord(&self, axis: usize, v: f64) -> f64 {
        let lo = self.lower[axis];
        let s = self.sides[axis];
        let mut w = v;
        if w >= lo + s || w < lo {
            w -= s * ((w - lo) / s).floor();
            // floor can land one period off at the boundary
            if w >= lo + s {
                w -= s;
            }
            if w < lo {
                w += s;
            }
        }
        w
    }

    /// Displacement `y - x`, using the minimum image on periodic boxes.
    #[inline]
    pub fn delta(&self, axis: usize, x: f64, y: f64) -> f64 {
        let mut d = y - x;
        if self.boundary == Boundary::Periodic {
            let s = self.sides[axis];
            let h = s / 2.0;
            if d >= h {
                d -= s;
            } else if d < -h {
                d += s;
            }
        }
        d
    }

    pub fn displacement_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        for a in 0..x.len() {
            out[a] = self.delta(a, x[a], y[a]);
        }
    }

    #[inline]
    pub fn dist2(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s = 0.0;
        for a in 0..x.len() {
            let d = self.delta(a, x[a], y[a]);
            s += d * d;
        }
        s
    }

    #[inline]
    pub fn dist(&self, x: &[f64], y: &[f64]) -> f64 {
        self.dist2(x, y).sqrt()
    }

    /// Box translated by `-shift` (open boxes only move; periodic boxes stay).
    pub(crate) fn shifted(&self, shift: &[f64]) -> Self {
        let mut g = self.clone();
        if self.boundary == Boundary::Open {
            for (lo, s) in g.lower.iter_mut().zip(shift) {
                *lo -= s;
            }
        }
        g
    }

    /// Euclidean distance from an interior point to the box boundary.
    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(a, &v)| {
                let lo = self.lower[a];
                (v - lo).min(lo + self.sides[a] - v)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Points in `R^d` stored row-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            coords: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Self {
            dim,
            coords: Vec::with_capacity(dim * n),
        }
    }

    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.len() % dim != 0 {
            return Err(invalid_param(format!(
                "flat coordinate buffer of length {} is not a multiple of {dim}",
                coords.len()
            )));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut p = Self::with_capacity(dim, rows.len());
        for r in rows {
            if r.len() != dim {
                return Err(invalid_param(format!(
                    "point has {} coordinates, expected {dim}",
                    r.len()
                )));
            }
            p.push(r);
        }
        Ok(p)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.coords.len() / self.dim
        }
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn point_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        self.coords.extend_from_slice(x);
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim.max(1))
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    /// Keep the points whose flag is set, preserving order.
    pub fn select(&self, keep: &[bool]) -> PointSet {
        let mut out = PointSet::new(self.dim);
        for (x, &k) in self.iter().zip(keep) {
            if k {
                out.push(x);
            }
        }
        out
    }

    /// Map every coordinate through `f`.
    pub fn map_coords(&self, f: impl Fn(f64) -> f64) -> PointSet {
        PointSet {
            dim: self.dim,
            coords: self.coords.iter().map(|&v| f(v)).collect(),
        }
    }
}
