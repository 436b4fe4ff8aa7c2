use serde::Serialize;

use super::domain::{DomainPoint, PolygonDomain};
use super::mesh::Mesh;
use super::point::Point;
use crate::error::{Error, Result};

/// Uniformity constant assumed when a caller does not supply a certificate.
pub const DEFAULT_C_U: f64 = 0.1;

const CIRCLE_SAMPLES: usize = 720;

/// Deterministic rules for picking x_r among the admissible points.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepresentativeRule {
    /// The sampled point at inner distance r/4 farthest from the boundary.
    #[default]
    Deepest,
    /// The first sampled point (arc order) at least 3/4 as deep as the deepest.
    FirstDeep,
}

#[derive(Clone, Debug, Serialize)]
pub struct InnerBall {
    pub center: Point,
    pub radius: f64,
    pub node_set: Vec<usize>,
    /// Inner distance from the center to each node of `node_set`.
    pub node_dist: Vec<f64>,
    pub x_r: Point,
}

/// Representative point x_r: inner distance r/4 from `center` and depth at
/// least `c_u r / 8`.
pub fn representative_point(
    domain: &PolygonDomain,
    center: &DomainPoint,
    r: f64,
    c_u: f64,
    rule: RepresentativeRule,
) -> Result<Point> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {r}")));
    }
    let rho = r / 4.0;
    let cands = domain.geodesic_circle(center, rho, CIRCLE_SAMPLES)?;
    let depth: Vec<f64> = cands.iter().map(|z| domain.boundary_distance_unchecked(z.pos)).collect();
    let Some(best) = depth.iter().copied().reduce(f64::max) else {
        return Err(Error::SearchFailure(format!(
            "no point at inner distance {rho} from ({}, {})",
            center.pos.x, center.pos.y
        )));
    };
    let need = c_u * r / 8.0;
    if best < need - 1e-12 {
        return Err(Error::SearchFailure(format!(
            "deepest candidate has depth {best:.3e} < c_u r/8 = {need:.3e}"
        )));
    }
    let idx = match rule {
        RepresentativeRule::Deepest => depth.iter().position(|&d| d == best).unwrap(),
        RepresentativeRule::FirstDeep => depth
            .iter()
            .position(|&d| d >= 0.75 * best && d >= need)
            .unwrap(),
    };
    Ok(cands[idx].pos)
}

/// Mesh nodes within inner distance `r` of `center`, plus the representative point.
pub fn inner_ball(domain: &PolygonDomain, mesh: &Mesh, center: &DomainPoint, r: f64) -> Result<InnerBall> {
    inner_ball_with(domain, mesh, center, r, DEFAULT_C_U, RepresentativeRule::Deepest)
}

pub fn inner_ball_with(
    domain: &PolygonDomain,
    mesh: &Mesh,
    center: &DomainPoint,
    r: f64,
    c_u: f64,
    rule: RepresentativeRule,
) -> Result<InnerBall> {
    let (node_set, node_dist) = ball_nodes(domain, mesh, center, r)?;
    let r_eff = r.min(domain.diam_inner);
    let x_r = representative_point(domain, center, r_eff, c_u, rule)?;
    Ok(InnerBall { center: center.pos, radius: r, node_set, node_dist, x_r })
}

/// Node indices and inner distances for `d_U(center, node) < r`.
pub fn ball_nodes(
    domain: &PolygonDomain,
    mesh: &Mesh,
    center: &DomainPoint,
    r: f64,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let near: Vec<usize> = (0..mesh.nodes.len())
        .filter(|&i| mesh.nodes[i].dist(center.pos) < r)
        .collect();
    let pts: Vec<DomainPoint> = near.iter().map(|&i| mesh.node_point(i)).collect();
    let d = domain.distance_field(center, &pts)?;
    let (set, dist): (Vec<usize>, Vec<f64>) =
        near.into_iter().zip(d).filter(|(_, d)| *d < r).unzip();
    if set.is_empty() {
        return Err(Error::EmptyBall { center: [center.pos.x, center.pos.y], radius: r });
    }
    Ok((set, dist))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::domain::{load_domain, DomainSpec};
    use crate::geometry::mesh::triangulate;

    fn domain(slit: bool) -> PolygonDomain {
        load_domain(&DomainSpec {
            name: "sq".into(),
            outer: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            holes: vec![],
            slits: if slit { vec![vec![[0.5, 0.0], [0.5, 0.5]]] } else { vec![] },
        })
        .unwrap()
    }

    #[test]
    fn near_bottom_center_walks_straight_up() {
        let d = domain(false);
        let c = DomainPoint::from(Point::new(0.5, 0.001));
        let x = representative_point(&d, &c, 0.4, 0.5, RepresentativeRule::Deepest).unwrap();
        assert!((x.x - 0.5).abs() < 1e-2, "{x:?}");
        assert!((x.y - 0.101).abs() < 1e-3, "{x:?}");
        let depth = d.boundary_distance(x).unwrap();
        assert!(depth >= 0.5 * 0.4 / 8.0);
    }

    #[test]
    fn deep_center_any_direction() {
        let d = domain(false);
        let c = DomainPoint::from(Point::new(0.5, 0.5));
        let x = representative_point(&d, &c, 0.2, 0.5, RepresentativeRule::FirstDeep).unwrap();
        assert!((x.dist(c.pos) - 0.05).abs() < 1e-9);
        assert!(d.boundary_distance(x).unwrap() >= 0.45 - 0.05);
    }

    #[test]
    fn near_slit_stays_on_its_side() {
        let d = domain(true);
        let c = DomainPoint::from(Point::new(0.52, 0.45));
        let x = representative_point(&d, &c, 0.1, 0.5, RepresentativeRule::Deepest).unwrap();
        assert!(x.x > 0.5, "{x:?}");
    }

    #[test]
    fn convex_ball_is_euclidean_disc() {
        let d = domain(false);
        let m = triangulate(&d, 0.05).unwrap();
        let c = DomainPoint::from(Point::new(0.5, 0.5));
        let b = inner_ball(&d, &m, &c, 0.25).unwrap();
        let expect: Vec<usize> = (0..m.nodes.len()).filter(|&i| m.nodes[i].dist(c.pos) < 0.25).collect();
        assert_eq!(b.node_set, expect);
    }

    #[test]
    fn slit_ball_excludes_far_side() {
        let d = domain(true);
        let m = triangulate(&d, 0.05).unwrap();
        let c = DomainPoint::from(Point::new(0.6, 0.45));
        let b = inner_ball(&d, &m, &c, 0.3).unwrap();
        for (&i, &di) in b.node_set.iter().zip(&b.node_dist) {
            assert!(di < 0.3);
            assert!(di >= m.nodes[i].dist(c.pos) - 1e-12);
        }
        // (0.4, 0.3) is 0.25 away in the plane but around the tip it is farther
        let far = m.nearest_node(Point::new(0.4, 0.3));
        let around = c.pos.dist(Point::new(0.5, 0.5)) + Point::new(0.5, 0.5).dist(m.nodes[far]);
        assert!(around > 0.3);
        assert!(!b.node_set.contains(&far));
    }

    #[test]
    fn huge_radius_takes_everything() {
        let d = domain(false);
        let m = triangulate(&d, 0.2).unwrap();
        let b = inner_ball(&d, &m, &DomainPoint::from(Point::new(0.3, 0.3)), 2.0).unwrap();
        assert_eq!(b.node_set.len(), m.nodes.len());
    }
}
