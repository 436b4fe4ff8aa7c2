//! Built-in test domains.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{load_domain, DomainSpec, Point, PolygonDomain};

pub const NAMES: [&str; 6] =
    ["square", "slit-square", "l-shape", "convex-hexagon", "koch-prefractal-k", "exterior-convex-truncated"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GalleryParams {
    /// Length of the slit entering the square from the bottom edge.
    pub slit_length: f64,
    /// Koch prefractal order, at most 4.
    pub order: usize,
    /// Half side of the truncation box around the convex obstacle.
    pub box_half: f64,
}

impl Default for GalleryParams {
    fn default() -> Self {
        Self { slit_length: 0.5, order: 2, box_half: 1.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GallerySpec {
    pub name: String,
    pub params: GalleryParams,
}

fn unit_square() -> Vec<[f64; 2]> {
    vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
}

fn regular(n: usize, center: [f64; 2], radius: f64, phase: f64) -> Vec<[f64; 2]> {
    (0..n)
        .map(|k| {
            let a = phase + 2.0 * PI * k as f64 / n as f64;
            [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
        })
        .collect()
}

/// Counterclockwise Koch prefractal of the given order inscribed around (0.5, 0.5).
fn koch(order: usize) -> Vec<[f64; 2]> {
    let r = 1.0 / 3f64.sqrt();
    let mut pts: Vec<Point> = regular(3, [0.5, 0.5], r * 0.75, PI / 2.0)
        .into_iter()
        .map(|p| Point::new(p[0], p[1]))
        .collect();
    for _ in 0..order {
        let n = pts.len();
        let mut next = Vec::with_capacity(4 * n);
        for i in 0..n {
            let a = pts[i];
            let b = pts[(i + 1) % n];
            let d = (b - a) * (1.0 / 3.0);
            let p = a + d;
            let q = a + d * 2.0;
            // outward for a counterclockwise ring is to the right of a→b
            let (c, s) = ((-PI / 3.0).cos(), (-PI / 3.0).sin());
            let peak = p + Point::new(c * d.x - s * d.y, s * d.x + c * d.y);
            next.extend([a, p, peak, q]);
        }
        pts = next;
    }
    pts.into_iter().map(|p| [p.x, p.y]).collect()
}

fn parse_koch(name: &str) -> Option<Option<usize>> {
    let rest = name.strip_prefix("koch-prefractal-")?;
    if rest == "k" {
        return Some(None);
    }
    rest.parse().ok().map(Some)
}

/// Domain spec for a gallery name. `koch-prefractal-<k>` selects the order
/// directly; `koch-prefractal-k` takes it from `params.order`.
pub fn gallery_spec(name: &str, params: &GalleryParams) -> Result<DomainSpec> {
    let spec = |outer, holes, slits| DomainSpec { name: name.to_string(), outer, holes, slits };
    Ok(match name {
        "square" => spec(unit_square(), vec![], vec![]),
        "slit-square" => {
            let l = params.slit_length;
            if !(l > 0.0 && l < 1.0) {
                return Err(Error::InvalidArgument(format!("slit length must lie in (0, 1), got {l}")));
            }
            spec(unit_square(), vec![], vec![vec![[0.5, 0.0], [0.5, l]]])
        }
        "l-shape" => spec(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 0.5], [0.5, 0.5], [0.5, 1.0], [0.0, 1.0]],
            vec![],
            vec![],
        ),
        "convex-hexagon" => spec(regular(6, [0.5, 0.5], 0.5, 0.0), vec![], vec![]),
        "exterior-convex-truncated" => {
            let b = params.box_half;
            if !(b > 0.6) {
                return Err(Error::InvalidArgument(format!("truncation box half side must exceed 0.6, got {b}")));
            }
            let outer = vec![[-b, -b], [b, -b], [b, b], [-b, b]];
            let mut hole = regular(8, [0.0, 0.0], 0.5, PI / 8.0);
            hole.reverse();
            spec(outer, vec![hole], vec![])
        }
        _ => match parse_koch(name) {
            Some(k) => {
                let k = k.unwrap_or(params.order);
                if k > 4 {
                    return Err(Error::InvalidArgument(format!("Koch order must be at most 4, got {k}")));
                }
                spec(koch(k), vec![], vec![])
            }
            None => return Err(Error::UnknownGallery(name.to_string())),
        },
    })
}

pub fn gallery(name: &str, params: &GalleryParams) -> Result<(GallerySpec, PolygonDomain)> {
    let spec = gallery_spec(name, params)?;
    let domain = load_domain(&spec)?;
    Ok((GallerySpec { name: name.to_string(), params: params.clone() }, domain))
}

/// Loads a gallery name or, failing that, a domain-spec JSON file.
pub fn resolve_domain(name_or_path: &str, params: &GalleryParams) -> Result<PolygonDomain> {
    match gallery(name_or_path, params) {
        Ok((_, d)) => Ok(d),
        Err(Error::UnknownGallery(_)) if std::path::Path::new(name_or_path).exists() => {
            let text = std::fs::read_to_string(name_or_path)?;
            crate::geometry::load_domain_json(&text)
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::point::interior_angle;

    #[test]
    fn every_gallery_domain_loads() {
        for name in NAMES {
            let (_, d) = gallery(name, &GalleryParams::default()).unwrap();
            assert!(d.area() > 0.0, "{name}");
        }
        for k in 0..=4 {
            gallery(&format!("koch-prefractal-{k}"), &GalleryParams::default()).unwrap();
        }
    }

    #[test]
    fn koch_edge_counts() {
        for k in 0..=4 {
            let s = gallery_spec(&format!("koch-prefractal-{k}"), &GalleryParams::default()).unwrap();
            assert_eq!(s.outer.len(), 3 * 4usize.pow(k as u32));
        }
        assert_eq!(gallery_spec("koch-prefractal-2", &GalleryParams::default()).unwrap().outer.len(), 48);
        assert!(gallery_spec("koch-prefractal-5", &GalleryParams::default()).is_err());
    }

    #[test]
    fn l_shape_reflex_corner() {
        let (_, d) = gallery("l-shape", &GalleryParams::default()).unwrap();
        let r = d.reflex_vertices();
        assert_eq!(r, vec![Point::new(0.5, 0.5)]);
        let i = d.outer.iter().position(|p| *p == Point::new(0.5, 0.5)).unwrap();
        let a = interior_angle(&d.outer, i);
        assert!((a - 1.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(gallery("circle", &GalleryParams::default()), Err(Error::UnknownGallery(_))));
    }

    #[test]
    fn slit_square_has_one_free_tip() {
        let (_, d) = gallery("slit-square", &GalleryParams::default()).unwrap();
        assert_eq!(d.slit_tips(), vec![Point::new(0.5, 0.5)]);
    }
}
