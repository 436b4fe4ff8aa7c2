//! Conforming P1 meshes of polygonal domains.
//!
//! Triangulation is a constrained Delaunay refinement (spade) seeded with an
//! equilateral lattice and, around corners and slit tips, geometrically graded
//! rings of points. Nodes on slits are split afterwards so each side of a slit
//! owns its own copy.

use std::collections::HashMap;

use serde::Serialize;
use spade::{
    AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters,
    Triangulation,
};

use super::domain::{DomainPoint, PolygonDomain, SlitSide};
use super::point::*;
use crate::error::{Error, Result};

/// Where to grade the mesh toward a point size `h_tip`.
#[derive(Clone, Debug, PartialEq)]
pub enum Grading {
    None,
    /// Reflex ring vertices and free slit tips.
    Singular,
    /// Singular points plus every ring vertex.
    AllCorners,
    Points(Vec<Point>),
}

#[derive(Clone, Debug)]
pub struct MeshOptions {
    pub h_max: f64,
    pub grading: Grading,
    /// Smallest element size at graded points, as a fraction of `h_max`.
    pub h_tip_ratio: f64,
    /// Growth of the element size with distance from a graded point.
    pub grading_slope: f64,
    /// Points that must appear as mesh nodes.
    pub required_points: Vec<Point>,
    pub min_angle_deg: f64,
}

impl MeshOptions {
    pub fn new(h_max: f64) -> Self {
        MeshOptions {
            h_max,
            grading: Grading::Singular,
            h_tip_ratio: 1.0 / 64.0,
            grading_slope: 0.3,
            required_points: Vec::new(),
            min_angle_deg: 20.0,
        }
    }

    pub fn h_tip(&self) -> f64 {
        self.h_max * self.h_tip_ratio
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub nodes: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_mask: Vec<bool>,
    pub slit_side: Vec<Option<SlitSide>>,
    pub h_max: f64,
    locator: Locator,
}

#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct MeshStats {
    pub nodes: usize,
    pub triangles: usize,
    pub interior_nodes: usize,
    pub h_max: f64,
    pub longest_edge: f64,
    pub min_angle_deg: f64,
}

#[derive(Clone, Debug, Default)]
struct Locator {
    lo: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

struct SizeField {
    h_max: f64,
    h_tip: f64,
    slope: f64,
    centers: Vec<Point>,
}

impl SizeField {
    fn at(&self, p: Point) -> f64 {
        self.centers
            .iter()
            .map(|&c| (self.slope * p.dist(c)).max(self.h_tip))
            .fold(self.h_max, f64::min)
    }
}

/// Splits `[a, b]` so consecutive points are about one local size apart.
fn subdivide(a: Point, b: Point, size: &SizeField) -> Vec<Point> {
    let len = a.dist(b);
    let samples = ((len / size.h_tip) * 4.0).ceil().clamp(16.0, 200_000.0) as usize;
    let mut cum = vec![0.0; samples + 1];
    for i in 0..samples {
        let m = a.lerp(b, (i as f64 + 0.5) / samples as f64);
        cum[i + 1] = cum[i] + len / samples as f64 / size.at(m);
    }
    let total = cum[samples];
    let n = total.ceil().max(1.0) as usize;
    let mut out = Vec::with_capacity(n + 1);
    out.push(a);
    let mut j = 0;
    for k in 1..n {
        let target = total * k as f64 / n as f64;
        while cum[j + 1] < target {
            j += 1;
        }
        let frac = (target - cum[j]) / (cum[j + 1] - cum[j]);
        out.push(a.lerp(b, (j as f64 + frac) / samples as f64));
    }
    out.push(b);
    out
}

type Cdt = ConstrainedDelaunayTriangulation<Point2<f64>>;

fn p2(p: Point) -> Point2<f64> {
    Point2::new(p.x, p.y)
}

fn insert(cdt: &mut Cdt, p: Point) -> Result<spade::handles::FixedVertexHandle> {
    cdt.insert(p2(p)).map_err(|e| Error::Mesh(format!("cannot insert ({}, {}): {e:?}", p.x, p.y)))
}

fn add_chain(cdt: &mut Cdt, pts: &[Point]) -> Result<()> {
    let handles = pts.iter().map(|&p| insert(cdt, p)).collect::<Result<Vec<_>>>()?;
    for w in handles.windows(2) {
        if w[0] != w[1] && cdt.can_add_constraint(w[0], w[1]) {
            cdt.add_constraint(w[0], w[1]);
        }
    }
    Ok(())
}

/// Triangulates with default grading (reflex corners and slit tips).
pub fn triangulate(domain: &PolygonDomain, h_max: f64) -> Result<Mesh> {
    triangulate_with(domain, &MeshOptions::new(h_max))
}

pub fn triangulate_with(domain: &PolygonDomain, opts: &MeshOptions) -> Result<Mesh> {
    let h_max = opts.h_max;
    if !(h_max > 0.0 && h_max.is_finite()) {
        return Err(Error::InvalidArgument(format!("h_max must be positive, got {h_max}")));
    }
    let centers = match &opts.grading {
        Grading::None => Vec::new(),
        Grading::Singular => {
            let mut c = domain.reflex_vertices();
            c.extend(domain.slit_tips());
            c
        }
        Grading::AllCorners => {
            let mut c: Vec<Point> = domain.rings().flat_map(|r| r.iter().copied()).collect();
            c.extend(domain.slit_tips());
            c
        }
        Grading::Points(p) => p.clone(),
    };
    let size = SizeField {
        h_max,
        h_tip: opts.h_tip().min(h_max),
        slope: opts.grading_slope,
        centers: centers.clone(),
    };

    let mut cdt = Cdt::new();
    for ring in domain.rings() {
        let n = ring.len();
        let mut chain = Vec::new();
        for i in 0..n {
            let seg = subdivide(ring[i], ring[(i + 1) % n], &size);
            chain.extend_from_slice(&seg[..seg.len() - 1]);
        }
        chain.push(ring[0]);
        add_chain(&mut cdt, &chain)?;
    }
    for slit in &domain.slits {
        let mut chain = Vec::new();
        for w in slit.windows(2) {
            let seg = subdivide(w[0], w[1], &size);
            chain.extend_from_slice(&seg[..seg.len() - 1]);
        }
        chain.push(*slit.last().unwrap());
        add_chain(&mut cdt, &chain)?;
    }

    let mut seeds: Vec<Point> = Vec::new();
    let keep = |p: Point, s: f64| -> bool {
        domain.contains(p)
            && domain.boundary_distance_unchecked(p) >= 0.5 * s
            && opts.required_points.iter().all(|&q| q.dist(p) >= 0.5 * s)
    };
    // graded rings
    for &c in &centers {
        let rho_max = h_max / size.slope;
        let mut rho = rho_max;
        let mut k = 0usize;
        while rho > 0.5 * size.h_tip {
            let s = (size.slope * rho).max(size.h_tip);
            let n = ((2.0 * std::f64::consts::PI * rho / s).ceil() as usize).max(6);
            let offset = if k % 2 == 0 { 0.0 } else { 0.5 };
            for i in 0..n {
                let th = 2.0 * std::f64::consts::PI * (i as f64 + offset) / n as f64;
                let p = c + Point::new(th.cos(), th.sin()) * rho;
                if size.at(p) >= s * (1.0 - 1e-9) && keep(p, s) {
                    seeds.push(p);
                }
            }
            rho -= s;
            k += 1;
        }
    }
    // equilateral lattice away from graded points
    let (lo, hi) = domain.bbox();
    let dx = h_max;
    let dy = h_max * 3f64.sqrt() / 2.0;
    let ny = ((hi.y - lo.y) / dy).ceil() as usize + 1;
    let nx = ((hi.x - lo.x) / dx).ceil() as usize + 2;
    for j in 0..ny {
        let shift = if j % 2 == 0 { 0.0 } else { 0.5 * dx };
        for i in 0..nx {
            let p = Point::new(lo.x + shift + i as f64 * dx - 0.5 * dx, lo.y + j as f64 * dy);
            let far = centers.iter().all(|&c| c.dist(p) >= h_max / size.slope + 0.5 * h_max);
            if far && keep(p, h_max) {
                seeds.push(p);
            }
        }
    }
    for &p in &opts.required_points {
        if !domain.contains(p) {
            return Err(Error::Mesh(format!("required point ({}, {}) is outside", p.x, p.y)));
        }
        seeds.push(p);
    }
    for p in seeds {
        insert(&mut cdt, p)?;
    }

    let exclude = domain.slits.is_empty();
    let angle = opts.min_angle_deg + 2.0;
    let mut params = RefinementParameters::<f64>::new()
        .with_angle_limit(AngleLimit::from_deg(angle))
        .with_max_allowed_area(0.5 * h_max * h_max)
        .exclude_outer_faces(exclude);
    params = params.with_max_additional_vertices(20 * cdt.num_vertices() + 10_000);
    cdt.refine(params.clone());

    for _round in 0..10 {
        // each interior edge is seen from both faces; order endpoints so
        // both sides produce the bit-identical midpoint, then deduplicate
        let mut long: Vec<Point> = inside_faces(&cdt, domain)
            .iter()
            .flat_map(|f| {
                (0..3).filter_map(move |i| {
                    let (mut a, mut b) = (f[i], f[(i + 1) % 3]);
                    if (b.x, b.y) < (a.x, a.y) {
                        std::mem::swap(&mut a, &mut b);
                    }
                    (a.dist(b) > h_max).then(|| a.lerp(b, 0.5))
                })
            })
            .collect();
        long.sort_by(|p, q| p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y)));
        long.dedup();
        if long.is_empty() {
            break;
        }
        for p in long {
            insert(&mut cdt, p)?;
        }
        cdt.refine(params.clone());
    }

    // collect triangles inside the domain and renumber their vertices
    let mut index: HashMap<usize, usize> = HashMap::new();
    let mut nodes: Vec<Point> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    for face in cdt.inner_faces() {
        let vs = face.vertices();
        let pts = vs.map(|v| {
            let q = v.position();
            Point::new(q.x, q.y)
        });
        if !face_inside(domain, &pts) {
            continue;
        }
        let mut tri = [0usize; 3];
        for k in 0..3 {
            let key = vs[k].fix().index();
            tri[k] = *index.entry(key).or_insert_with(|| {
                nodes.push(pts[k]);
                nodes.len() - 1
            });
        }
        if orient(pts[0], pts[1], pts[2]) < 0.0 {
            tri.swap(1, 2);
        }
        triangles.push(tri);
    }
    if triangles.is_empty() {
        return Err(Error::Mesh("no triangles inside the domain".into()));
    }

    let mut mesh = Mesh::from_parts(domain, nodes, triangles, h_max);
    mesh.split_slits(domain);
    mesh.rebuild_locator();

    let min_angle = mesh.min_angle_deg();
    if min_angle < opts.min_angle_deg {
        return Err(Error::Mesh(format!(
            "minimum angle {min_angle:.2}° below the {:.1}° bound",
            opts.min_angle_deg
        )));
    }
    if mesh.triangles.iter().any(|t| mesh.signed_area(t) <= 0.0) {
        return Err(Error::Mesh("degenerate triangle".into()));
    }
    Ok(mesh)
}

fn inside_faces(cdt: &Cdt, domain: &PolygonDomain) -> Vec<[Point; 3]> {
    cdt.inner_faces()
        .map(|f| {
            f.vertices().map(|v| {
                let q = v.position();
                Point::new(q.x, q.y)
            })
        })
        .filter(|p| face_inside(domain, p))
        .collect()
}

/// Slivers along the boundary (from rounding of subdivision points) have
/// their centroid on the boundary itself and are dropped.
fn face_inside(domain: &PolygonDomain, p: &[Point; 3]) -> bool {
    let c = (p[0] + p[1] + p[2]) * (1.0 / 3.0);
    let scale = p[0].dist(p[1]).max(p[1].dist(p[2]));
    domain.contains(c) && domain.boundary_distance_unchecked(c) > 1e-9 * scale
}

impl Mesh {
    /// Builds a mesh from raw nodes and counterclockwise triangles; boundary
    /// flags come from the domain. Slit nodes are not split.
    pub fn from_parts(
        domain: &PolygonDomain,
        nodes: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        h_max: f64,
    ) -> Mesh {
        let boundary_mask = nodes.iter().map(|&p| domain.on_boundary(p)).collect();
        let n = nodes.len();
        let mut mesh = Mesh {
            nodes,
            triangles,
            boundary_mask,
            slit_side: vec![None; n],
            h_max,
            locator: Locator::default(),
        };
        mesh.rebuild_locator();
        mesh
    }

    fn split_slits(&mut self, domain: &PolygonDomain) {
        let tips = domain.slit_tips();
        let n0 = self.nodes.len();
        let mut twin: Vec<Option<usize>> = vec![None; n0];
        let mut slit_of: Vec<Option<(usize, usize)>> = vec![None; n0];
        for i in 0..n0 {
            if tips.iter().any(|&t| t.dist(self.nodes[i]) <= GEOM_EPS) {
                continue;
            }
            slit_of[i] = domain.slit_segment_at(self.nodes[i]);
        }
        for t in 0..self.triangles.len() {
            let tri = self.triangles[t];
            let c = (self.nodes[tri[0]] + self.nodes[tri[1]] + self.nodes[tri[2]]) * (1.0 / 3.0);
            for k in 0..3 {
                let v = tri[k];
                if v >= n0 {
                    continue;
                }
                let Some((slit, _)) = slit_of[v] else { continue };
                // side from the slit segment nearest to the centroid
                let s = &domain.slits[slit];
                let (segment, _) = s
                    .windows(2)
                    .enumerate()
                    .map(|(i, w)| (i, segment_distance(c, w[0], w[1]).0))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                let left = orient(s[segment], s[segment + 1], c) > 0.0;
                if left {
                    if self.slit_side[v].is_none() {
                        self.slit_side[v] = Some(SlitSide { slit, segment, left: true });
                    }
                } else {
                    let dup = *twin[v].get_or_insert_with(|| {
                        self.nodes.push(self.nodes[v]);
                        self.boundary_mask.push(true);
                        self.slit_side.push(Some(SlitSide { slit, segment, left: false }));
                        self.nodes.len() - 1
                    });
                    self.triangles[t][k] = dup;
                }
            }
        }
        for i in 0..n0 {
            if slit_of[i].is_some() && self.slit_side[i].is_none() {
                let (slit, segment) = slit_of[i].unwrap();
                self.slit_side[i] = Some(SlitSide { slit, segment, left: true });
            }
        }
    }

    pub fn stats(&self) -> MeshStats {
        MeshStats {
            nodes: self.nodes.len(),
            triangles: self.triangles.len(),
            interior_nodes: self.interior_nodes().len(),
            h_max: self.h_max,
            longest_edge: self.longest_edge(),
            min_angle_deg: self.min_angle_deg(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_point(&self, i: usize) -> DomainPoint {
        DomainPoint { pos: self.nodes[i], side: self.slit_side[i] }
    }

    pub fn domain_points(&self) -> Vec<DomainPoint> {
        (0..self.nodes.len()).map(|i| self.node_point(i)).collect()
    }

    /// Indices of nodes not on the Dirichlet boundary, in increasing order.
    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| !self.boundary_mask[i]).collect()
    }

    pub fn signed_area(&self, t: &[usize; 3]) -> f64 {
        0.5 * orient(self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]])
    }

    pub fn longest_edge(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| (t[k], t[(k + 1) % 3])))
            .map(|(a, b)| self.nodes[a].dist(self.nodes[b]))
            .fold(0.0, f64::max)
    }

    pub fn min_angle_deg(&self) -> f64 {
        let mut min = f64::INFINITY;
        for t in &self.triangles {
            for k in 0..3 {
                let p = self.nodes[t[k]];
                let a = self.nodes[t[(k + 1) % 3]] - p;
                let b = self.nodes[t[(k + 2) % 3]] - p;
                let ang = a.cross(b).abs().atan2(a.dot(b));
                min = min.min(ang.to_degrees());
            }
        }
        min
    }

    /// Nodes nearest to `p` (ties broken by index).
    pub fn nearest_node(&self, p: Point) -> usize {
        (0..self.nodes.len())
            .min_by(|&a, &b| self.nodes[a].dist(p).total_cmp(&self.nodes[b].dist(p)))
            .unwrap()
    }

    pub fn nearest_interior_node(&self, p: Point) -> usize {
        self.interior_nodes()
            .into_iter()
            .min_by(|&a, &b| self.nodes[a].dist(p).total_cmp(&self.nodes[b].dist(p)))
            .unwrap()
    }

    /// Lumped (row-sum) mass per node.
    pub fn lumped_mass(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.nodes.len()];
        for t in &self.triangles {
            let a = self.signed_area(t) / 3.0;
            for &v in t {
                m[v] += a;
            }
        }
        m
    }

    /// Undirected node adjacency with edge lengths.
    pub fn edge_graph(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.nodes.len()];
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let w = self.nodes[a].dist(self.nodes[b]);
                if !adj[a].iter().any(|&(j, _)| j == b) {
                    adj[a].push((b, w));
                    adj[b].push((a, w));
                }
            }
        }
        adj
    }

    fn rebuild_locator(&mut self) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.nodes {
            lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let ntri = self.triangles.len().max(1) as f64;
        let cell = (((hi.x - lo.x) * (hi.y - lo.y)) / ntri).sqrt().max(1e-12) * 2.0;
        let nx = (((hi.x - lo.x) / cell).ceil() as usize).max(1);
        let ny = (((hi.y - lo.y) / cell).ceil() as usize).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        for (ti, t) in self.triangles.iter().enumerate() {
            let ps = t.map(|v| self.nodes[v]);
            let bx0 = ps.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
            let bx1 = ps.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
            let by0 = ps.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
            let by1 = ps.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
            let cx = |x: f64| (((x - lo.x) / cell).floor().max(0.0) as usize).min(nx - 1);
            let cy = |y: f64| (((y - lo.y) / cell).floor().max(0.0) as usize).min(ny - 1);
            for j in cy(by0 - 1e-12)..=cy(by1 + 1e-12) {
                for i in cx(bx0 - 1e-12)..=cx(bx1 + 1e-12) {
                    buckets[j * nx + i].push(ti);
                }
            }
        }
        self.locator = Locator { lo, cell, nx, ny, buckets };
    }

    /// Triangle containing `p` with barycentric coordinates. On a slit, the
    /// triangle on the requested side wins.
    pub fn locate(&self, p: &DomainPoint) -> Option<(usize, [f64; 3])> {
        let l = &self.locator;
        let i = ((p.pos.x - l.lo.x) / l.cell).floor();
        let j = ((p.pos.y - l.lo.y) / l.cell).floor();
        if i < 0.0 || j < 0.0 || i as usize >= l.nx || j as usize >= l.ny {
            return None;
        }
        let mut found = None;
        for &ti in &l.buckets[j as usize * l.nx + i as usize] {
            let t = self.triangles[ti];
            let [a, b, c] = t.map(|v| self.nodes[v]);
            let area = orient(a, b, c);
            let w0 = orient(b, c, p.pos) / area;
            let w1 = orient(c, a, p.pos) / area;
            let w2 = 1.0 - w0 - w1;
            if w0 >= -1e-10 && w1 >= -1e-10 && w2 >= -1e-10 {
                let side_ok = match p.side {
                    None => true,
                    Some(s) => t.iter().any(|&v| self.slit_side[v] == Some(s))
                        || t.iter().all(|&v| self.slit_side[v].map_or(true, |o| o.left == s.left)),
                };
                if side_ok {
                    return Some((ti, [w0, w1, w2]));
                }
                found.get_or_insert((ti, [w0, w1, w2]));
            }
        }
        found
    }

    /// P1 interpolation of nodal values at `p`.
    pub fn interpolate(&self, values: &[f64], p: &DomainPoint) -> Option<f64> {
        let (t, w) = self.locate(p)?;
        let tri = self.triangles[t];
        Some(w[0] * values[tri[0]] + w[1] * values[tri[1]] + w[2] * values[tri[2]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::domain::{load_domain, DomainSpec};

    fn square(slit: bool) -> PolygonDomain {
        load_domain(&DomainSpec {
            name: "sq".into(),
            outer: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            holes: vec![],
            slits: if slit { vec![vec![[0.5, 0.0], [0.5, 0.5]]] } else { vec![] },
        })
        .unwrap()
    }

    #[test]
    fn coarse_square() {
        let m = triangulate(&square(false), 0.5).unwrap();
        assert!(m.triangles.len() >= 8, "{}", m.triangles.len());
        assert!(m.triangles.iter().all(|t| m.signed_area(t) > 0.0));
        let total: f64 = m.triangles.iter().map(|t| m.signed_area(t)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(m.longest_edge() <= 0.5 + 1e-12);
    }

    #[test]
    fn slit_nodes_are_duplicated() {
        let m = triangulate(&square(true), 0.05).unwrap();
        let on_slit: Vec<usize> = (0..m.nodes.len()).filter(|&i| m.slit_side[i].is_some()).collect();
        assert!(!on_slit.is_empty());
        let mut pairs = 0;
        for &i in &on_slit {
            for &j in &on_slit {
                if i < j && m.nodes[i] == m.nodes[j] {
                    assert_ne!(m.slit_side[i].unwrap().left, m.slit_side[j].unwrap().left);
                    pairs += 1;
                }
            }
        }
        assert_eq!(pairs * 2, on_slit.len());
        // no triangle uses nodes from both sides of the slit
        for t in &m.triangles {
            let sides: Vec<bool> = t.iter().filter_map(|&v| m.slit_side[v]).map(|s| s.left).collect();
            assert!(sides.windows(2).all(|w| w[0] == w[1]));
        }
        assert!(m.longest_edge() <= 0.05 + 1e-12);
    }

    #[test]
    fn interpolation_reproduces_linear_functions() {
        let m = triangulate(&square(false), 0.2).unwrap();
        let f: Vec<f64> = m.nodes.iter().map(|p| 2.0 * p.x - p.y + 0.5).collect();
        let p = Point::new(0.37, 0.61);
        let v = m.interpolate(&f, &DomainPoint::from(p)).unwrap();
        assert!((v - (2.0 * 0.37 - 0.61 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_h() {
        assert!(triangulate(&square(false), 0.0).is_err());
    }
}
