use crate::env::MarkedConfiguration;
use crate::geometry::{BoxGeometry, PointSet};

/// Uniform cell list over the box for fixed-radius neighbor queries.
///
/// Queries at any radius are exact; the cell size only trades memory for
/// the number of cells visited. Periodic boxes use the minimum-image metric.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    cell: Vec<f64>,
    shape: Vec<usize>,
    lower: Vec<f64>,
    periodic: bool,
    /// CSR layout: points of cell `c` are `items[start[c]..start[c+1]]`
    start: Vec<u32>,
    items: Vec<u32>,
}

impl NeighborIndex {
    /// Index with cells of side at least `cell_size` (capped at one cell per
    /// axis for small boxes).
    pub fn new(cfg: &MarkedConfiguration, cell_size: f64) -> Self {
        Self::from_points(cfg.geometry(), cfg.points().iter(), cell_size)
    }

    pub fn for_point_set(points: &PointSet, geom: &BoxGeometry, cell_size: f64) -> Self {
        Self::from_points(geom, points.iter(), cell_size)
    }

    pub fn from_points<'a>(
        geom: &BoxGeometry,
        points: impl Iterator<Item = &'a [f64]> + Clone,
        cell_size: f64,
    ) -> Self {
        let d = geom.dim();
        let mut shape = Vec::with_capacity(d);
        let mut cell = Vec::with_capacity(d);
        for a in 0..d {
            let n = ((geom.side(a) / cell_size).floor() as usize).clamp(1, 1 << 16);
            shape.push(n);
            cell.push(geom.side(a) / n as f64);
        }
        let mut idx = Self {
            cell,
            shape,
            lower: geom.lower().to_vec(),
            periodic: geom.is_periodic(),
            start: Vec::new(),
            items: Vec::new(),
        };
        let total: usize = idx.shape.iter().product();
        let cells: Vec<usize> = points.clone().map(|x| idx.cell_of(x)).collect();
        let mut count = vec![0u32; total + 1];
        for &c in &cells {
            count[c + 1] += 1;
        }
        for c in 0..total {
            count[c + 1] += count[c];
        }
        let mut fill = count.clone();
        let mut items = vec![0u32; cells.len()];
        for (i, &c) in cells.iter().enumerate() {
            items[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        idx.start = count;
        idx.items = items;
        idx
    }

    fn axis_cell(&self, a: usize, v: f64) -> usize {
        let j = ((v - self.lower[a]) / self.cell[a]).floor();
        (j.max(0.0) as usize).min(self.shape[a] - 1)
    }

    fn cell_of(&self, x: &[f64]) -> usize {
        let mut c = 0;
        for a in (0..x.len()).rev() {
            c = c * self.shape[a] + self.axis_cell(a, x[a]);
        }
        c
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Call `f(j, |x_j - x|^2)` for every point within distance `r` of `x`
    /// (including a point at `x` itself).
    pub fn for_each_within(&self, cfg: &MarkedConfiguration, x: &[f64], r: f64, f: impl FnMut(usize, f64)) {
        self.for_each_within_points(cfg.points(), cfg.geometry(), x, r, f)
    }

    /// As [`for_each_within`](Self::for_each_within) for a bare point set
    /// indexed with the same geometry.
    pub fn for_each_within_points(
        &self,
        points: &PointSet,
        g: &BoxGeometry,
        x: &[f64],
        r: f64,
        mut f: impl FnMut(usize, f64),
    ) {
        let d = x.len();
        let r2 = r * r;
        // candidate cell ranges per axis
        let mut ranges: Vec<Vec<usize>> = Vec::with_capacity(d);
        for a in 0..d {
            let n = self.shape[a];
            let c = self.axis_cell(a, x[a]) as i64;
            let reach = (r / self.cell[a]).ceil() as i64;
            if self.periodic {
                if 2 * reach + 1 >= n as i64 {
                    ranges.push((0..n).collect());
                } else {
                    ranges.push(
                        (c - reach..=c + reach)
                            .map(|k| k.rem_euclid(n as i64) as usize)
                            .collect(),
                    );
                }
            } else {
                let lo = (c - reach).max(0) as usize;
                let hi = ((c + reach) as usize).min(n - 1);
                ranges.push((lo..=hi).collect());
            }
        }
        let mut pos = vec![0usize; d];
        loop {
            let mut cell = 0;
            for a in (0..d).rev() {
                cell = cell * self.shape[a] + ranges[a][pos[a]];
            }
            for &j in &self.items[self.start[cell] as usize..self.start[cell + 1] as usize] {
                let j = j as usize;
                let d2 = g.dist2(x, points.point(j));
                if d2 <= r2 {
                    f(j, d2);
                }
            }
            let mut a = 0;
            loop {
                if a == d {
                    return;
                }
                pos[a] += 1;
                if pos[a] < ranges[a].len() {
                    break;
                }
                pos[a] = 0;
                a += 1;
            }
        }
    }

    /// Indices within distance `r` of `x`, sorted.
    pub fn within(&self, cfg: &MarkedConfiguration, x: &[f64], r: f64) -> Vec<usize> {
        let mut v = Vec::new();
        self.for_each_within(cfg, x, r, |j, _| v.push(j));
        v.sort_unstable();
        v
    }
}
