use crate::geometry::{BoxGeometry, PointSet};
use crate::walk::NeighborIndex;

/// Union-find over point indices with per-root size and bounding extent.
///
/// Extents are taken over raw coordinates, so on a periodic box a cluster
/// that wraps reports the full side.
#[derive(Debug, Clone)]
pub struct ClusterStructure {
    parent: Vec<u32>,
    rank: Vec<u8>,
    size: Vec<u32>,
    dim: usize,
    /// per index `[min_1..min_d, max_1..max_d]`, valid at roots
    extent: Vec<f64>,
}

impl ClusterStructure {
    pub fn new(points: &PointSet) -> Self {
        let n = points.len();
        let d = points.dim();
        let mut extent = Vec::with_capacity(2 * d * n);
        for x in points.iter() {
            extent.extend_from_slice(x);
            extent.extend_from_slice(x);
        }
        Self {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
            size: vec![1; n],
            dim: d,
            extent,
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn find(&mut self, i: usize) -> usize {
        let mut root = i;
        while self.parent[root] as usize != root {
            root = self.parent[root] as usize;
        }
        let mut j = i;
        while self.parent[j] as usize != root {
            let next = self.parent[j] as usize;
            self.parent[j] = root as u32;
            j = next;
        }
        root
    }

    /// Root without path compression.
    pub fn root(&self, mut i: usize) -> usize {
        while self.parent[i] as usize != i {
            i = self.parent[i] as usize;
        }
        i
    }

    /// Merge the components of `i` and `j`; returns false if already joined.
    pub fn union(&mut self, i: usize, j: usize) -> bool {
        let (a, b) = (self.find(i), self.find(j));
        if a == b {
            return false;
        }
        let (big, small) = if self.rank[a] >= self.rank[b] { (a, b) } else { (b, a) };
        self.parent[small] = big as u32;
        if self.rank[big] == self.rank[small] {
            self.rank[big] += 1;
        }
        self.size[big] += self.size[small];
        let d = self.dim;
        for a in 0..d {
            let lo = self.extent[2 * d * small + a];
            let hi = self.extent[2 * d * small + d + a];
            let e = &mut self.extent[2 * d * big..2 * d * (big + 1)];
            e[a] = e[a].min(lo);
            e[d + a] = e[d + a].max(hi);
        }
        true
    }

    pub fn connected(&self, i: usize, j: usize) -> bool {
        self.root(i) == self.root(j)
    }

    /// Size of the component containing `i`.
    pub fn size_of(&self, i: usize) -> usize {
        self.size[self.root(i)] as usize
    }

    /// `(min corner, max corner)` of the component containing `i`.
    pub fn extent_of(&self, i: usize) -> (&[f64], &[f64]) {
        let d = self.dim;
        let r = self.root(i);
        let e = &self.extent[2 * d * r..2 * d * (r + 1)];
        (&e[..d], &e[d..])
    }

    /// Root label of every index.
    pub fn labels(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.root(i)).collect()
    }

    /// Members of every component, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); self.len()];
        for i in 0..self.len() {
            by_root[self.root(i)].push(i);
        }
        let mut out: Vec<Vec<usize>> = by_root.into_iter().filter(|c| !c.is_empty()).collect();
        out.sort_by_key(|c| c[0]);
        out
    }

    pub fn n_components(&self) -> usize {
        (0..self.len()).filter(|&i| self.parent[i] as usize == i).count()
    }

    /// Members of the component containing `i`, sorted.
    pub fn members(&self, i: usize) -> Vec<usize> {
        let r = self.root(i);
        (0..self.len()).filter(|&j| self.root(j) == r).collect()
    }
}

/// Occupied components of the union of radius-`r` balls: two points are
/// adjacent iff their distance is at most `2r`.
pub fn boolean_clusters(points: &PointSet, r: f64, geom: &BoxGeometry) -> ClusterStructure {
    let mut cs = ClusterStructure::new(points);
    if points.is_empty() || r <= 0.0 {
        return cs;
    }
    let index = NeighborIndex::for_point_set(points, geom, 2.0 * r);
    for i in 0..points.len() {
        index.for_each_within_points(points, geom, points.point(i), 2.0 * r, |j, _| {
            if j > i {
                cs.union(i, j);
            }
        });
    }
    cs
}

/// Region `A` for [`w_r`].
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Ball { center: Vec<f64>, radius: f64 },
    Cuboid { lower: Vec<f64>, upper: Vec<f64> },
}

impl Region {
    /// Euclidean distance from `x` to the region (zero inside).
    pub fn distance(&self, x: &[f64], geom: &BoxGeometry) -> f64 {
        match self {
            Region::Ball { center, radius } => (geom.dist(x, center) - radius).max(0.0),
            Region::Cuboid { lower, upper } => x
                .iter()
                .enumerate()
                .map(|(a, &v)| {
                    let e = (lower[a] - v).max(v - upper[a]).max(0.0);
                    e * e
                })
                .sum::<f64>()
                .sqrt(),
        }
    }
}

/// Indices of all points whose occupied component (balls of radius `r`)
/// meets `region`, sorted. A component meets the region iff one of its
/// points lies within `r` of it.
pub fn w_r(points: &PointSet, r: f64, region: &Region, geom: &BoxGeometry) -> Vec<usize> {
    let cs = boolean_clusters(points, r, geom);
    let mut hit = vec![false; points.len()];
    for (i, x) in points.iter().enumerate() {
        if region.distance(x, geom) <= r {
            hit[cs.root(i)] = true;
        }
    }
    (0..points.len()).filter(|&i| hit[cs.root(i)]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Boundary;

    fn brute_components(points: &PointSet, r: f64, geom: &BoxGeometry) -> Vec<Vec<usize>> {
        let n = points.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            let mut comp = vec![s];
            seen[s] = true;
            let mut k = 0;
            while k < comp.len() {
                let i = comp[k];
                for j in 0..n {
                    if !seen[j] && geom.dist(points.point(i), points.point(j)) <= 2.0 * r {
                        seen[j] = true;
                        comp.push(j);
                    }
                }
                k += 1;
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    fn geom() -> BoxGeometry {
        BoxGeometry::cube(2, 20.0, Boundary::Open).unwrap()
    }

    #[test]
    fn touching_balls() {
        let g = geom();
        let p = PointSet::from_rows(2, &[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(boolean_clusters(&p, 0.5, &g).n_components(), 1);
        assert_eq!(boolean_clusters(&p, 0.5 - 1e-9, &g).n_components(), 2);
    }

    #[test]
    fn hand_built_ten_points() {
        let g = geom();
        let rows = [
            [0.0, 0.0],
            [0.9, 0.0],
            [1.8, 0.3],
            [5.0, 5.0],
            [5.5, 5.2],
            [-4.0, 3.0],
            [-4.0, 3.95],
            [-4.0, 4.9],
            [8.0, -8.0],
            [2.7, 0.4],
        ];
        let p = PointSet::from_rows(2, &rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        let cs = boolean_clusters(&p, 0.5, &g);
        assert_eq!(cs.components(), brute_components(&p, 0.5, &g));
        assert_eq!(cs.components(), vec![vec![0, 1, 2, 9], vec![3, 4], vec![5, 6, 7], vec![8]]);
        assert_eq!(cs.size_of(9), 4);
        let (lo, hi) = cs.extent_of(1);
        assert_eq!(lo, &[0.0, 0.0]);
        assert_eq!(hi, &[2.7, 0.4]);
    }

    #[test]
    fn small_radius_gives_singletons() {
        let g = geom();
        let p = PointSet::from_rows(2, &[vec![0.0, 0.0], vec![0.3, 0.0], vec![0.0, 0.4]]).unwrap();
        assert_eq!(boolean_clusters(&p, 0.14, &g).n_components(), 3);
    }

    #[test]
    fn w_r_filters_components() {
        let g = geom();
        let p = PointSet::from_rows(2, &[vec![0.0, 0.0], vec![0.8, 0.0], vec![6.0, 0.0], vec![6.5, 0.0]]).unwrap();
        let ball = Region::Ball { center: vec![-0.6, 0.0], radius: 0.2 };
        assert_eq!(w_r(&p, 0.5, &ball, &g), vec![0, 1]);
        let far = Region::Ball { center: vec![3.0, 5.0], radius: 0.2 };
        assert!(w_r(&p, 0.5, &far, &g).is_empty());
        let all = Region::Cuboid { lower: vec![-10.0, -10.0], upper: vec![10.0, 10.0] };
        assert_eq!(w_r(&p, 0.5, &all, &g), vec![0, 1, 2, 3]);
    }
}
