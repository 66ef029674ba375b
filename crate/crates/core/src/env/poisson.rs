//! Poisson environments, thinning, mark randomization and the Palm version.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::{MarkedConfiguration, NuLaw};
use crate::error::{invalid_param, Result};
use crate::geometry::{BoxGeometry, PointSet, QUANTUM};

/// Uniform grid point in the box.
pub(crate) fn uniform_in_box<R: Rng + ?Sized>(geom: &BoxGeometry, rng: &mut R, out: &mut [f64]) {
    for (a, o) in out.iter_mut().enumerate() {
        let m = (geom.side(a) / QUANTUM) as u64;
        let k = rng.random_range(0..m);
        *o = geom.lower()[a] + k as f64 * QUANTUM;
    }
}

pub(crate) fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    if mean == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean)
        .map_err(|e| invalid_param(format!("Poisson mean {mean}: {e}")))?;
    Ok(dist.sample(rng) as u64)
}

/// Homogeneous Poisson process of intensity `rho` in the box.
pub fn sample_poisson<R: Rng + ?Sized>(rho: f64, geom: &BoxGeometry, rng: &mut R) -> Result<PointSet> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(invalid_param(format!("intensity must be positive, got {rho}")));
    }
    let mean = rho * geom.volume();
    if !mean.is_finite() || mean > 1e12 {
        return Err(invalid_param(format!("expected point count {mean} is too large")));
    }
    let n = poisson_count(mean, rng)? as usize;
    let mut pts = PointSet::with_capacity(geom.dim(), n);
    let mut x = vec![0.0; geom.dim()];
    for _ in 0..n {
        uniform_in_box(geom, rng, &mut x);
        pts.push(&x);
    }
    Ok(pts)
}

/// Independent retention flags, one uniform per point.
pub fn thinning_mask<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid_param(format!("retention probability {p} outside [0, 1]")));
    }
    Ok((0..n).map(|_| rng.random::<f64>() < p).collect())
}

/// `p`-thinning: keep each point independently with probability `p`.
pub fn thin<R: Rng + ?Sized>(points: &PointSet, p: f64, rng: &mut R) -> Result<PointSet> {
    let keep = thinning_mask(points.len(), p, rng)?;
    Ok(points.select(&keep))
}

/// Attach i.i.d. `nu` marks to the points.
pub fn randomize<R: Rng + ?Sized>(
    points: PointSet,
    nu: &NuLaw,
    geom: &BoxGeometry,
    rng: &mut R,
) -> MarkedConfiguration {
    let energies = (0..points.len()).map(|_| nu.sample(rng)).collect();
    MarkedConfiguration::from_parts(points, energies, geom.clone(), None)
}

/// Palm version of the marked Poisson process: a Poisson(`rho`) sample plus
/// a point at the origin, every point with its own `nu` mark. The origin is
/// stored at index 0.
pub fn palm_poisson<R: Rng + ?Sized>(
    rho: f64,
    geom: &BoxGeometry,
    nu: &NuLaw,
    rng: &mut R,
) -> Result<MarkedConfiguration> {
    let omega = sample_poisson(rho, geom, rng)?;
    let d = geom.dim();
    let mut pts = PointSet::with_capacity(d, omega.len() + 1);
    pts.push(&vec![0.0; d]);
    let mut x = vec![0.0; d];
    for p in omega.iter() {
        if p.iter().all(|&v| v == 0.0) {
            // grid collision with the origin; redraw
            uniform_in_box(geom, rng, &mut x);
            pts.push(&x);
        } else {
            pts.push(p);
        }
    }
    let energies = (0..pts.len()).map(|_| nu.sample(rng)).collect();
    Ok(MarkedConfiguration::from_parts(pts, energies, geom.clone(), Some(0)))
}
