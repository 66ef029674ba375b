use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, invalid_param, Result};
use crate::geometry::{BoxGeometry, PointSet};

/// Per-cell point counts on a lattice of half-open cubes of side `k` that
/// tile the window.
///
/// Cell `j` (a multi-index in `0..shape[a]`) is centered at
/// `lower + (j + 1/2) k`. For the centered periodic box with an odd number
/// of cells per axis the centers are exactly `k Z^d`; with an even number
/// they are `k Z^d` shifted by `k/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountField {
    k: f64,
    lower: Vec<f64>,
    shape: Vec<usize>,
    counts: Vec<u32>,
}

impl CountField {
    pub fn zeros(k: f64, geom: &BoxGeometry) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(invalid_param(format!("cell size must be positive, got {k}")));
        }
        let mut shape = Vec::with_capacity(geom.dim());
        for a in 0..geom.dim() {
            let n = geom.side(a) / k;
            if (n - n.round()).abs() > 1e-9 || n.round() < 1.0 {
                return Err(invalid_param(format!(
                    "cell size {k} does not divide the box side {}",
                    geom.side(a)
                )));
            }
            shape.push(n.round() as usize);
        }
        let total = shape.iter().product();
        Ok(Self {
            k,
            lower: geom.lower().to_vec(),
            shape,
            counts: vec![0; total],
        })
    }

    pub fn from_counts(k: f64, geom: &BoxGeometry, counts: Vec<u32>) -> Result<Self> {
        let mut f = Self::zeros(k, geom)?;
        if counts.len() != f.counts.len() {
            return Err(invalid_arg(format!(
                "{} counts for a field of {} cells",
                counts.len(),
                f.counts.len()
            )));
        }
        f.counts = counts;
        Ok(f)
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn counts_mut(&mut self) -> &mut [u32] {
        &mut self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Same cell size and cell layout.
    pub fn same_window(&self, other: &CountField) -> bool {
        self.k == other.k && self.shape == other.shape && self.lower == other.lower
    }

    /// Flat index of the cell containing `x`, if inside the window.
    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0usize;
        for a in (0..self.shape.len()).rev() {
            let j = ((x[a] - self.lower[a]) / self.k).floor();
            if j < 0.0 || j >= self.shape[a] as f64 {
                return None;
            }
            idx = idx * self.shape[a] + j as usize;
        }
        Some(idx)
    }

    /// Multi-index of a flat index; axis 0 varies fastest.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        self.shape
            .iter()
            .map(|&n| {
                let j = flat % n;
                flat /= n;
                j
            })
            .collect()
    }

    /// Center of cell `flat`.
    pub fn center(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.lower)
            .map(|(&j, &lo)| lo + (j as f64 + 0.5) * self.k)
            .collect()
    }

    /// Center of cell `flat` in units of `k`, rounded to the nearest integer
    /// lattice label.
    pub fn site_label(&self, flat: usize) -> Vec<i64> {
        self.center(flat)
            .iter()
            .map(|c| (c / self.k).round() as i64)
            .collect()
    }
}

/// Exact per-cell counts `Y(x) = #points in x + [-k/2, k/2)^d`.
pub fn count_field(points: &PointSet, k: f64, geom: &BoxGeometry) -> Result<CountField> {
    let mut f = CountField::zeros(k, geom)?;
    for x in points.iter() {
        if let Some(i) = f.cell_of(x) {
            f.counts[i] += 1;
        }
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Boundary;

    #[test]
    fn single_origin_point() {
        let g = BoxGeometry::cube(2, 5.0, Boundary::Periodic).unwrap();
        let p = PointSet::from_rows(2, &[vec![0.0, 0.0]]).unwrap();
        let f = count_field(&p, 1.0, &g).unwrap();
        assert_eq!(f.total(), 1);
        let i = f.cell_of(&[0.0, 0.0]).unwrap();
        assert_eq!(f.counts()[i], 1);
        assert_eq!(f.site_label(i), vec![0, 0]);
        assert_eq!(f.center(i), vec![0.0, 0.0]);
    }

    #[test]
    fn half_open_cells() {
        let g = BoxGeometry::cube(2, 5.0, Boundary::Periodic).unwrap();
        let p = PointSet::from_rows(2, &[vec![0.5, -0.5], vec![-0.5, 0.49]]).unwrap();
        let f = count_field(&p, 1.0, &g).unwrap();
        let a = f.cell_of(&[0.5, -0.5]).unwrap();
        assert_eq!(f.site_label(a), vec![1, 0]);
        let b = f.cell_of(&[-0.5, 0.49]).unwrap();
        assert_eq!(f.site_label(b), vec![0, 0]);
    }

    #[test]
    fn rejects_bad_cell_sizes() {
        let g = BoxGeometry::cube(2, 5.0, Boundary::Periodic).unwrap();
        let p = PointSet::new(2);
        assert!(count_field(&p, 0.0, &g).is_err());
        assert!(count_field(&p, 2.0, &g).is_err());
        assert!(count_field(&p, 2.5, &g).is_ok());
    }
}
