//! Vanishing exponent of a profile at a boundary vertex or slit tip.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mesh, Point, PolygonDomain};
use crate::stats::{loglog_fit, logspace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub vertex: Point,
    /// Unit direction of the sampling ray.
    pub direction: Point,
    pub r_min: f64,
    pub r_max: f64,
    pub exponent: f64,
    pub r2: f64,
    pub samples: Vec<(f64, f64)>,
}

fn unit(p: Point) -> Point {
    p * (1.0 / p.norm())
}

/// Ray into the domain that bisects the interior angle at `vertex`; for a free
/// slit tip it continues the slit.
pub fn bisector(domain: &PolygonDomain, vertex: Point) -> Result<Point> {
    for s in &domain.slits {
        let n = s.len();
        for (tip, prev) in [(s[n - 1], s[n - 2]), (s[0], s[1])] {
            if tip == vertex && domain.slit_tips().contains(&tip) {
                return Ok(unit(tip - prev));
            }
        }
    }
    for (r, ring) in domain.rings().enumerate() {
        let n = ring.len();
        if let Some(i) = ring.iter().position(|&p| p == vertex) {
            let a = unit(ring[(i + n - 1) % n] - vertex);
            let b = unit(ring[(i + 1) % n] - vertex);
            let ang = crate::geometry::point::interior_angle(ring, i);
            let seen = if r == 0 { ang } else { 2.0 * std::f64::consts::PI - ang };
            let sum = a + b;
            let dir = if sum.norm() < 1e-12 {
                // straight angle: the inward normal
                let e = b;
                Point::new(-e.y, e.x) * if r == 0 { 1.0 } else { -1.0 }
            } else if seen > std::f64::consts::PI {
                unit(sum) * -1.0
            } else {
                unit(sum)
            };
            return Ok(dir);
        }
    }
    Err(Error::InvalidArgument(format!("({}, {}) is neither a ring vertex nor a slit tip", vertex.x, vertex.y)))
}

/// Log-log slope of `φ` along the bisector over `r ∈ [r_min, r_max]`.
pub fn corner_exponent(
    domain: &PolygonDomain,
    mesh: &Mesh,
    phi: &[f64],
    vertex: Point,
    r_min: f64,
    r_max: f64,
    n: usize,
) -> Result<ExponentFit> {
    if !(r_min > 0.0 && r_max > r_min) || n < 3 {
        return Err(Error::InvalidArgument(format!("bad sampling range [{r_min}, {r_max}] with {n} points")));
    }
    let dir = bisector(domain, vertex)?;
    let mut samples = Vec::with_capacity(n);
    for r in logspace(r_min, r_max, n) {
        let p = vertex + dir * r;
        if !domain.contains(p) {
            return Err(Error::InvalidArgument(format!("bisector leaves the domain at r = {r}")));
        }
        let v = mesh
            .interpolate(phi, &p.into())
            .ok_or_else(|| Error::SearchFailure(format!("sample ({}, {}) not covered by the mesh", p.x, p.y)))?;
        samples.push((r, v));
    }
    let (rs, vs): (Vec<f64>, Vec<f64>) = samples.iter().copied().unzip();
    let fit = loglog_fit(&rs, &vs)?;
    Ok(ExponentFit { vertex, direction: dir, r_min, r_max, exponent: fit.slope, r2: fit.r2, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery::{gallery, GalleryParams};
    use crate::geometry::{triangulate_with, Grading, MeshOptions};

    #[test]
    fn bisectors() {
        let (_, l) = gallery("l-shape", &GalleryParams::default()).unwrap();
        let d = bisector(&l, Point::new(0.5, 0.5)).unwrap();
        assert!((d - unit(Point::new(-1.0, -1.0))).norm() < 1e-12);
        let d = bisector(&l, Point::new(0.0, 0.0)).unwrap();
        assert!((d - unit(Point::new(1.0, 1.0))).norm() < 1e-12);
        let (_, s) = gallery("slit-square", &GalleryParams::default()).unwrap();
        let d = bisector(&s, Point::new(0.5, 0.5)).unwrap();
        assert!((d - Point::new(0.0, 1.0)).norm() < 1e-12);
        assert!(bisector(&s, Point::new(0.3, 0.3)).is_err());
    }

    // xy vanishes quadratically along the diagonal
    #[test]
    fn quadratic_profile() {
        let (_, sq) = gallery("square", &GalleryParams::default()).unwrap();
        let mut o = MeshOptions::new(0.05);
        o.grading = Grading::AllCorners;
        let m = triangulate_with(&sq, &o).unwrap();
        let phi: Vec<f64> = m.nodes.iter().map(|p| p.x * p.y).collect();
        let f = corner_exponent(&sq, &m, &phi, Point::new(0.0, 0.0), 4.0 * o.h_tip(), 0.1, 16).unwrap();
        assert!((f.exponent - 2.0).abs() < 0.1, "{}", f.exponent);
    }
}
