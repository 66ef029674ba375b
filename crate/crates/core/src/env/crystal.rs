//! Diluted crystals and their Palm version.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{MarkedConfiguration, NuLaw};
use crate::error::{invalid_param, Result};
use crate::geometry::{quantize, BoxGeometry, PointSet};

const LATTICE_TOL: f64 = 1e-9;

/// A lattice `Gamma = {sum n_i v_i + c : n in Z^d, c in cell_points}`,
/// diluted by independent retention with probability `dilution_p`.
///
/// The elementary cell is `Delta = {sum t_i v_i : t in [0,1)^d}` and
/// `cell_points` lists `Delta ∩ Gamma` in Cartesian coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrystalSpec {
    pub basis: Vec<Vec<f64>>,
    pub dilution_p: f64,
    pub cell_points: Vec<Vec<f64>>,
}

/// Validated crystal with cached inverse basis.
#[derive(Debug, Clone)]
pub struct Crystal {
    spec: CrystalSpec,
    /// rows are the basis vectors
    b: DMatrix<f64>,
    /// `t = y * binv` gives lattice coordinates of `y`
    binv: DMatrix<f64>,
}

impl CrystalSpec {
    /// Square lattice `Z^d` with one point per cell.
    pub fn square(dim: usize, p: f64) -> Self {
        let basis = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self {
            basis,
            dilution_p: p,
            cell_points: vec![vec![0.0; dim]],
        }
    }

    pub fn validate(&self) -> Result<Crystal> {
        Crystal::new(self.clone())
    }
}

impl Crystal {
    pub fn new(spec: CrystalSpec) -> Result<Self> {
        let d = spec.basis.len();
        if d < 2 {
            return Err(invalid_param(format!("crystal dimension must be at least 2, got {d}")));
        }
        if spec.basis.iter().any(|v| v.len() != d || v.iter().any(|x| !x.is_finite())) {
            return Err(invalid_param("basis must be d finite vectors of length d"));
        }
        if !(spec.dilution_p > 0.0 && spec.dilution_p <= 1.0) {
            return Err(invalid_param(format!(
                "dilution probability must lie in (0, 1], got {}",
                spec.dilution_p
            )));
        }
        let b = DMatrix::from_fn(d, d, |i, j| spec.basis[i][j]);
        let det = b.determinant();
        let scale: f64 = spec
            .basis
            .iter()
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .product();
        if !(det.abs() > 1e-12 * scale) {
            return Err(invalid_param("degenerate crystal basis"));
        }
        let binv = b
            .clone()
            .try_inverse()
            .ok_or_else(|| invalid_param("degenerate crystal basis"))?;
        if spec.cell_points.is_empty() {
            return Err(invalid_param("crystal needs at least one point per cell"));
        }
        let c = Crystal { spec, b, binv };
        for (k, p) in c.spec.cell_points.iter().enumerate() {
            if p.len() != d {
                return Err(invalid_param(format!("cell point {k} has wrong dimension")));
            }
            let t = c.lattice_coords(p);
            if t.iter().any(|&ti| !(-LATTICE_TOL..1.0 - LATTICE_TOL).contains(&ti)) {
                return Err(invalid_param(format!("cell point {p:?} lies outside the elementary cell")));
            }
            for q in &c.spec.cell_points[..k] {
                if p.iter().zip(q).all(|(a, b)| (a - b).abs() < LATTICE_TOL) {
                    return Err(invalid_param(format!("duplicate cell point {p:?}")));
                }
            }
        }
        Ok(c)
    }

    pub fn spec(&self) -> &CrystalSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.basis.len()
    }

    pub fn points_per_cell(&self) -> usize {
        self.spec.cell_points.len()
    }

    pub fn cell_volume(&self) -> f64 {
        self.b.determinant().abs()
    }

    /// `p |Delta ∩ Gamma| / |Delta|`.
    pub fn intensity(&self) -> f64 {
        self.spec.dilution_p * self.points_per_cell() as f64 / self.cell_volume()
    }

    fn lattice_coords(&self, y: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| (0..d).map(|a| y[a] * self.binv[(a, i)]).sum())
            .collect()
    }

    fn cartesian(&self, t: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (a, o) in out.iter_mut().enumerate() {
            *o = (0..d).map(|i| t[i] * self.b[(i, a)]).sum();
        }
    }

    /// Uniform point of the elementary cell.
    fn uniform_in_cell<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let t: Vec<f64> = (0..self.dim()).map(|_| rng.random::<f64>()).collect();
        let mut v = vec![0.0; self.dim()];
        self.cartesian(&t, &mut v);
        v
    }

    /// Upper bound on the number of crystal points in any half-open cube of
    /// side `k`, uniform over shifts and dilutions.
    ///
    /// A cube of side `k` spans an interval of length `k |w_i|_1` in lattice
    /// coordinate `i`, where `w_i` is the i-th column of the inverse basis.
    /// Axis-aligned columns map the half-open cube to a half-open interval,
    /// which holds at most `ceil(len)` integers; otherwise `floor(len) + 1`.
    pub fn density_bound(&self, k: f64) -> u32 {
        let d = self.dim();
        let mut cells = 1u64;
        for i in 0..d {
            let col: Vec<f64> = (0..d).map(|a| self.binv[(a, i)]).collect();
            let len = k * col.iter().map(|x| x.abs()).sum::<f64>();
            let nonzero = col.iter().filter(|x| x.abs() > LATTICE_TOL).count();
            let m = if nonzero == 1 {
                (len - LATTICE_TOL).ceil().max(1.0)
            } else {
                len.floor() + 1.0
            };
            cells = cells.saturating_mul(m as u64);
        }
        (cells.saturating_mul(self.points_per_cell() as u64)).min(u32::MAX as u64) as u32
    }

    fn check_window(&self, geom: &BoxGeometry) -> Result<()> {
        if geom.dim() != self.dim() {
            return Err(invalid_param("crystal and box dimensions differ"));
        }
        for a in 0..self.dim() {
            let extent: f64 = self.spec.basis.iter().map(|v| v[a].abs()).sum();
            if geom.side(a) < 5.0 * extent {
                return Err(invalid_param(format!(
                    "box side {} on axis {a} holds fewer than 5 crystal cells",
                    geom.side(a)
                )));
            }
        }
        if geom.is_periodic() {
            for a in 0..self.dim() {
                let mut e = vec![0.0; self.dim()];
                e[a] = geom.side(a);
                let t = self.lattice_coords(&e);
                if t.iter().any(|x| (x - x.round()).abs() > 1e-6) {
                    return Err(invalid_param(format!(
                        "periodic box side {} on axis {a} is not a lattice period",
                        geom.side(a)
                    )));
                }
            }
        }
        Ok(())
    }

    /// Range of integer lattice coordinates that can reach the box after any
    /// offset inside one cell.
    fn index_ranges(&self, geom: &BoxGeometry) -> Vec<(i64, i64)> {
        let d = self.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        let mut corner = vec![0.0; d];
        for mask in 0..(1u32 << d) {
            for a in 0..d {
                corner[a] = geom.lower()[a] + if mask >> a & 1 == 1 { geom.side(a) } else { 0.0 };
            }
            let t = self.lattice_coords(&corner);
            for i in 0..d {
                lo[i] = lo[i].min(t[i]);
                hi[i] = hi[i].max(t[i]);
            }
        }
        // offsets (cell point plus shift) add up to two cells in each coordinate
        lo.iter()
            .zip(&hi)
            .map(|(&l, &h)| (l.floor() as i64 - 3, h.ceil() as i64 + 3))
            .collect()
    }

    /// Visit every point `sum n_i v_i + offset` inside the box, quantized.
    fn for_each_in_box(
        &self,
        geom: &BoxGeometry,
        offsets: &[Vec<f64>],
        mut f: impl FnMut(usize, &[i64], &[f64]),
    ) {
        let d = self.dim();
        let ranges = self.index_ranges(geom);
        let mut n: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        let mut y = vec![0.0; d];
        let mut tf = vec![0.0; d];
        loop {
            for i in 0..d {
                tf[i] = n[i] as f64;
            }
            let mut base = vec![0.0; d];
            self.cartesian(&tf, &mut base);
            for (k, off) in offsets.iter().enumerate() {
                for a in 0..d {
                    y[a] = quantize(base[a] + off[a]);
                }
                if geom.contains(&y) {
                    f(k, &n, &y);
                }
            }
            let mut i = 0;
            loop {
                if i == d {
                    return;
                }
                n[i] += 1;
                if n[i] <= ranges[i].1 {
                    break;
                }
                n[i] = ranges[i].0;
                i += 1;
            }
        }
    }

    /// Stationary diluted crystal: `Gamma` shifted by one uniform `V` in the
    /// elementary cell, then thinned.
    pub fn sample<R: Rng + ?Sized>(&self, geom: &BoxGeometry, rng: &mut R) -> Result<PointSet> {
        self.check_window(geom)?;
        let v = self.uniform_in_cell(rng);
        let offsets: Vec<Vec<f64>> = self
            .spec
            .cell_points
            .iter()
            .map(|c| c.iter().zip(&v).map(|(a, b)| a + b).collect())
            .collect();
        let p = self.spec.dilution_p;
        let mut pts = PointSet::new(self.dim());
        self.for_each_in_box(geom, &offsets, |_, _, y| {
            if rng.random::<f64>() < p {
                pts.push(y);
            }
        });
        Ok(pts)
    }

    /// Palm version: `u` uniform in `Delta ∩ Gamma`, origin plus the thinned
    /// `Gamma - u` without its zero, marks on all points. Origin at index 0.
    pub fn sample_palm<R: Rng + ?Sized>(
        &self,
        geom: &BoxGeometry,
        nu: &NuLaw,
        rng: &mut R,
    ) -> Result<MarkedConfiguration> {
        self.check_window(geom)?;
        let j = rng.random_range(0..self.points_per_cell());
        let u = &self.spec.cell_points[j];
        let offsets: Vec<Vec<f64>> = self
            .spec
            .cell_points
            .iter()
            .map(|c| c.iter().zip(u).map(|(a, b)| a - b).collect())
            .collect();
        let p = self.spec.dilution_p;
        let d = self.dim();
        let mut pts = PointSet::new(d);
        pts.push(&vec![0.0; d]);
        self.for_each_in_box(geom, &offsets, |k, n, y| {
            let is_origin = k == j && n.iter().all(|&v| v == 0);
            if !is_origin && y.iter().any(|&v| v != 0.0) && rng.random::<f64>() < p {
                pts.push(y);
            }
        });
        let energies = (0..pts.len()).map(|_| nu.sample(rng)).collect();
        Ok(MarkedConfiguration::from_parts(pts, energies, geom.clone(), Some(0)))
    }
}

/// Free-function form of [`Crystal::sample`].
pub fn diluted_crystal<R: Rng + ?Sized>(
    spec: &CrystalSpec,
    geom: &BoxGeometry,
    rng: &mut R,
) -> Result<PointSet> {
    spec.validate()?.sample(geom, rng)
}

/// Free-function form of [`Crystal::sample_palm`].
pub fn palm_crystal<R: Rng + ?Sized>(
    spec: &CrystalSpec,
    geom: &BoxGeometry,
    nu: &NuLaw,
    rng: &mut R,
) -> Result<MarkedConfiguration> {
    spec.validate()?.sample_palm(geom, nu, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Boundary;
    use crate::rng::replica_rng;
    use crate::stats::RunningStats;

    fn honeycomb() -> CrystalSpec {
        let s3 = 3f64.sqrt();
        CrystalSpec {
            basis: vec![vec![1.0, 0.0], vec![0.5, s3 / 2.0]],
            dilution_p: 1.0,
            cell_points: vec![vec![0.0, 0.0], vec![0.5, s3 / 6.0]],
        }
    }

    #[test]
    fn rejects_degenerate_basis_and_bad_offsets() {
        let mut s = CrystalSpec::square(2, 0.5);
        s.basis = vec![vec![1.0, 0.0], vec![2.0, 0.0]];
        assert!(s.validate().is_err());
        let mut s = CrystalSpec::square(2, 0.5);
        s.cell_points = vec![vec![1.5, 0.0]];
        assert!(s.validate().is_err());
        let mut s = CrystalSpec::square(2, 0.5);
        s.cell_points = vec![vec![0.2, 0.2], vec![0.2, 0.2]];
        assert!(s.validate().is_err());
        assert!(CrystalSpec::square(2, 0.0).validate().is_err());
    }

    #[test]
    fn full_square_crystal_has_one_point_per_cell() {
        let c = CrystalSpec::square(2, 1.0).validate().unwrap();
        let g = BoxGeometry::cube(2, 12.0, Boundary::Periodic).unwrap();
        let mut rng = replica_rng(1, 0);
        let pts = c.sample(&g, &mut rng).unwrap();
        assert_eq!(pts.len(), 144);
        let f = crate::env::count_field(&pts, 1.0, &g).unwrap();
        assert!(f.counts().iter().all(|&n| n == 1));
    }

    #[test]
    fn periodic_window_must_be_commensurate() {
        let c = CrystalSpec::square(2, 1.0).validate().unwrap();
        let g = BoxGeometry::cube(2, 12.5, Boundary::Periodic).unwrap();
        let mut rng = replica_rng(2, 0);
        assert!(c.sample(&g, &mut rng).is_err());
        let small = BoxGeometry::cube(2, 4.0, Boundary::Periodic).unwrap();
        assert!(c.sample(&small, &mut rng).is_err());
    }

    #[test]
    fn intensity_matches_cell_formula() {
        let c = CrystalSpec { dilution_p: 0.5, ..honeycomb() }.validate().unwrap();
        let expected = 0.5 * 2.0 / (3f64.sqrt() / 2.0);
        assert!((c.intensity() - expected).abs() < 1e-12);
        let g = BoxGeometry::cube(2, 20.0, Boundary::Open).unwrap();
        let s: RunningStats = (0..2000)
            .map(|i| {
                let mut rng = replica_rng(3, i);
                c.sample(&g, &mut rng).unwrap().len() as f64 / g.volume()
            })
            .collect();
        assert!((s.mean() - expected).abs() < 3.0 * s.stderr(), "{} vs {expected}", s.mean());
    }

    #[test]
    fn density_bound_holds_on_samples() {
        for spec in [CrystalSpec::square(2, 1.0), honeycomb()] {
            let c = spec.validate().unwrap();
            for &k in &[1.0, 1.5, 3.0] {
                let bound = c.density_bound(k);
                let g = BoxGeometry::cube(2, 30.0, Boundary::Open).unwrap();
                for i in 0..50 {
                    let mut rng = replica_rng(4, i);
                    let pts = c.sample(&g, &mut rng).unwrap();
                    let f = crate::env::count_field(&pts, k, &g).unwrap();
                    assert!(f.counts().iter().all(|&n| n <= bound), "k={k} bound={bound}");
                }
            }
        }
        assert_eq!(CrystalSpec::square(2, 1.0).validate().unwrap().density_bound(1.0), 1);
    }

    #[test]
    fn palm_square_crystal_is_shifted_lattice() {
        let c = CrystalSpec::square(2, 1.0).validate().unwrap();
        let g = BoxGeometry::cube(2, 10.0, Boundary::Periodic).unwrap();
        let nu = NuLaw::with_alpha(0.0).unwrap();
        let mut rng = replica_rng(5, 0);
        let cfg = c.sample_palm(&g, &nu, &mut rng).unwrap();
        assert_eq!(cfg.len(), 100);
        assert_eq!(cfg.point(0), &[0.0, 0.0]);
        assert!(cfg.points().iter().all(|x| x.iter().all(|v| v.fract() == 0.0)));
        MarkedConfiguration::new(cfg.points().clone(), cfg.energies().to_vec(), g, Some(0)).unwrap();
    }

    #[test]
    fn palm_honeycomb_picks_both_sublattices() {
        let c = honeycomb().validate().unwrap();
        let g = BoxGeometry::cube(2, 20.0, Boundary::Open).unwrap();
        let nu = NuLaw::with_alpha(0.0).unwrap();
        let mut seen = [false; 2];
        for i in 0..40 {
            let mut rng = replica_rng(6, i);
            let cfg = c.sample_palm(&g, &nu, &mut rng).unwrap();
            // the nearest neighbor direction tells which sublattice sits at 0
            let up = cfg.find(&[quantize(0.5), quantize(3f64.sqrt() / 6.0)]).is_some();
            seen[up as usize] = true;
        }
        assert!(seen[0] && seen[1]);
    }
}
