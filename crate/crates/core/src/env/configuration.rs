use std::collections::HashSet;

use crate::error::{invalid_arg, invalid_param, Result};
use crate::geometry::{BoxGeometry, PointSet};

/// Finite-window realization of a marked point process: positions, energy
/// marks in `[-1, 1]`, the box, and (for Palm configurations) the index of
/// the point sitting at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedConfiguration {
    points: PointSet,
    energies: Vec<f64>,
    geometry: BoxGeometry,
    origin: Option<usize>,
}

impl MarkedConfiguration {
    /// Validating constructor.
    pub fn new(
        points: PointSet,
        energies: Vec<f64>,
        geometry: BoxGeometry,
        origin: Option<usize>,
    ) -> Result<Self> {
        if points.dim() != geometry.dim() {
            return Err(invalid_param(format!(
                "points are {}-dimensional but the box is {}-dimensional",
                points.dim(),
                geometry.dim()
            )));
        }
        if points.len() != energies.len() {
            return Err(invalid_param(format!(
                "{} points but {} energy marks",
                points.len(),
                energies.len()
            )));
        }
        if let Some(e) = energies.iter().find(|e| !(-1.0..=1.0).contains(*e)) {
            return Err(invalid_param(format!("energy mark {e} outside [-1, 1]")));
        }
        if let Some(x) = points.iter().find(|x| !geometry.contains(x)) {
            return Err(invalid_param(format!("point {x:?} outside the box")));
        }
        let mut seen = HashSet::with_capacity(points.len());
        for x in points.iter() {
            let key: Vec<u64> = x.iter().map(|v| (v + 0.0).to_bits()).collect();
            if !seen.insert(key) {
                return Err(invalid_param(format!("duplicate point {x:?}")));
            }
        }
        if let Some(o) = origin {
            if o >= points.len() {
                return Err(invalid_param(format!("origin index {o} out of range")));
            }
            if points.point(o).iter().any(|&v| v != 0.0) {
                return Err(invalid_param(format!(
                    "origin index {o} points at {:?}, not the zero vector",
                    points.point(o)
                )));
            }
        }
        Ok(Self {
            points,
            energies,
            geometry,
            origin,
        })
    }

    /// Samplers produce valid configurations by construction (duplicates
    /// have probability zero), so they skip the O(n) validation pass.
    pub(crate) fn from_parts(
        points: PointSet,
        energies: Vec<f64>,
        geometry: BoxGeometry,
        origin: Option<usize>,
    ) -> Self {
        debug_assert_eq!(points.len(), energies.len());
        Self {
            points,
            energies,
            geometry,
            origin,
        }
    }

    pub fn empty(geometry: BoxGeometry) -> Self {
        Self {
            points: PointSet::new(geometry.dim()),
            energies: Vec::new(),
            geometry,
            origin: None,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        self.points.point(i)
    }

    #[inline]
    pub fn energy(&self, i: usize) -> f64 {
        self.energies[i]
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn geometry(&self) -> &BoxGeometry {
        &self.geometry
    }

    pub fn origin_index(&self) -> Option<usize> {
        self.origin
    }

    pub(crate) fn require_origin(&self) -> Result<usize> {
        self.origin
            .ok_or_else(|| invalid_arg("configuration has no distinguished origin point"))
    }

    /// Same positions, new marks.
    pub fn with_energies(&self, energies: Vec<f64>) -> Result<Self> {
        Self::new(
            self.points.clone(),
            energies,
            self.geometry.clone(),
            self.origin,
        )
    }

    /// Index of the point with exactly these coordinates.
    pub fn find(&self, x: &[f64]) -> Option<usize> {
        self.points.iter().position(|p| p == x)
    }

    /// The configuration seen from point `idx`: every coordinate shifted by
    /// `-x_idx`, marks carried along, `idx` becomes the origin. Periodic
    /// boxes wrap; open boxes move with the shift.
    pub fn translate(&self, idx: usize) -> Result<Self> {
        if idx >= self.len() {
            return Err(invalid_arg(format!(
                "index {idx} is not a point of the configuration ({} points)",
                self.len()
            )));
        }
        let shift = self.points.point(idx).to_vec();
        let g = &self.geometry;
        let periodic = g.is_periodic();
        let mut pts = PointSet::with_capacity(self.dim(), self.len());
        let mut buf = vec![0.0; self.dim()];
        for x in self.points.iter() {
            for a in 0..buf.len() {
                let v = x[a] - shift[a];
                buf[a] = if periodic { g.wrap_coord(a, v) } else { v };
            }
            pts.push(&buf);
        }
        Ok(Self {
            points: pts,
            energies: self.energies.clone(),
            geometry: g.shifted(&shift),
            origin: Some(idx),
        })
    }

    /// `translate` addressed by coordinates instead of index.
    pub fn translate_to(&self, x: &[f64]) -> Result<Self> {
        let idx = self
            .find(x)
            .ok_or_else(|| invalid_arg(format!("{x:?} is not a point of the configuration")))?;
        self.translate(idx)
    }

    /// Indices of points inside the half-open cube `center + [-K/2, K/2)^d`.
    pub fn indices_in_cell(&self, center: &[f64], k: f64) -> Vec<usize> {
        let h = k / 2.0;
        (0..self.len())
            .filter(|&i| {
                let x = self.point(i);
                (0..self.dim()).all(|a| {
                    let d = self.geometry.delta(a, center[a], x[a]);
                    d >= -h && d < h
                })
            })
            .collect()
    }
}
