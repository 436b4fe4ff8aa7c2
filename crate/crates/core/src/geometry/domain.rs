//! Polygonal domains with holes and slits, and their inner (geodesic) metric.
//!
//! Shortest paths inside a polygonal region bend only at boundary vertices, so
//! the inner metric is computed exactly by Dijkstra over a visibility graph whose
//! nodes are the ring vertices and slit vertices. Slit vertices that can be
//! approached from two sides carry one graph node per side; a free slit tip has
//! a single node because both sides meet there.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::point::*;
use crate::error::{Error, Result};

/// Offset applied to slit-side points before visibility tests.
const SIDE_NUDGE: f64 = 1e-9;

/// JSON domain document: `{name, outer: [[x,y],..], holes: [[[x,y],..]], slits: [[[x,y],..]]}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DomainSpec {
    #[serde(default)]
    pub name: String,
    pub outer: Vec<[f64; 2]>,
    #[serde(default)]
    pub holes: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    pub slits: Vec<Vec<[f64; 2]>>,
}

/// Which side of a slit segment a point sits on. `left` is the side of the
/// counterclockwise normal of `slit[segment] -> slit[segment + 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlitSide {
    pub slit: usize,
    pub segment: usize,
    pub left: bool,
}

/// A point of the completed domain: slit points carry the side they belong to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DomainPoint {
    pub pos: Point,
    pub side: Option<SlitSide>,
}

impl From<Point> for DomainPoint {
    fn from(pos: Point) -> Self {
        DomainPoint { pos, side: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeKind {
    Ring(usize),
    Slit { slit: usize, segment: usize },
}

#[derive(Clone, Copy, Debug)]
pub struct BoundaryEdge {
    pub a: Point,
    pub b: Point,
    pub kind: EdgeKind,
}

#[derive(Clone, Debug, Serialize)]
pub struct GeodesicPath {
    pub waypoints: Vec<Point>,
    pub length: f64,
}

#[derive(Clone, Debug)]
struct SlitJoint {
    at: Point,
    prev: Point,
    next: Point,
}

#[derive(Clone, Debug, Default)]
struct VisibilityGraph {
    nodes: Vec<DomainPoint>,
    adj: Vec<Vec<(usize, f64)>>,
}

#[derive(Clone, Debug)]
pub struct PolygonDomain {
    pub name: String,
    /// Counterclockwise outer ring.
    pub outer: Vec<Point>,
    /// Clockwise hole rings.
    pub holes: Vec<Vec<Point>>,
    pub slits: Vec<Vec<Point>>,
    pub diam_inner: f64,
    edges: Vec<BoundaryEdge>,
    vertices: Vec<Point>,
    joints: Vec<SlitJoint>,
    graph: VisibilityGraph,
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Dijkstra over an adjacency list; returns distances and predecessors.
pub(crate) fn dijkstra(
    adj: &[Vec<(usize, f64)>],
    sources: &[(usize, f64)],
) -> (Vec<f64>, Vec<Option<usize>>) {
    let n = adj.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![None; n];
    let mut heap = BinaryHeap::new();
    for &(s, d0) in sources {
        if d0 < dist[s] {
            dist[s] = d0;
            heap.push(HeapItem(d0, s));
        }
    }
    while let Some(HeapItem(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                prev[v] = Some(u);
                heap.push(HeapItem(nd, v));
            }
        }
    }
    (dist, prev)
}

fn to_points(v: &[[f64; 2]]) -> Vec<Point> {
    v.iter().map(|&p| Point::from(p)).collect()
}

fn check_ring(ring: &[Point], what: &str) -> Result<()> {
    if ring.len() < 3 {
        return Err(Error::Geometry(format!("{what} has fewer than 3 vertices")));
    }
    if ring.iter().any(|p| !p.is_finite()) {
        return Err(Error::Geometry(format!("{what} has a non-finite coordinate")));
    }
    let n = ring.len();
    for i in 0..n {
        if ring[i].dist(ring[(i + 1) % n]) <= GEOM_EPS {
            return Err(Error::Geometry(format!("{what} has a repeated vertex at index {i}")));
        }
    }
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        for j in i + 1..n {
            let (c, d) = (ring[j], ring[(j + 1) % n]);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // neighbours share exactly one vertex; reject folding back onto each other
                let shared = if j == i + 1 { b } else { a };
                let (u, v) = if j == i + 1 { (a, d) } else { (b, c) };
                let collinear = sign(orient(u, shared, v)) == 0;
                if collinear && (u - shared).dot(v - shared) > 0.0 {
                    return Err(Error::Geometry(format!(
                        "{what} self-intersects: edges {i} and {j} overlap"
                    )));
                }
            } else if segments_touch(a, b, c, d) {
                return Err(Error::Geometry(format!(
                    "{what} self-intersects: edges {i} and {j}"
                )));
            }
        }
    }
    if ring_area(ring).abs() <= GEOM_EPS {
        return Err(Error::Geometry(format!("{what} has zero area")));
    }
    Ok(())
}

fn ring_edges(ring: &[Point]) -> impl Iterator<Item = (Point, Point)> + '_ {
    let n = ring.len();
    (0..n).map(move |i| (ring[i], ring[(i + 1) % n]))
}

/// Parses and validates a JSON domain document.
pub fn load_domain_json(text: &str) -> Result<PolygonDomain> {
    let spec: DomainSpec =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("domain spec: {e}")))?;
    load_domain(&spec)
}

/// Validates a domain document and builds the inner-metric machinery.
pub fn load_domain(spec: &DomainSpec) -> Result<PolygonDomain> {
    let mut outer = to_points(&spec.outer);
    check_ring(&outer, "outer ring")?;
    if ring_area(&outer) < 0.0 {
        outer.reverse();
    }
    let mut holes = Vec::with_capacity(spec.holes.len());
    for (k, h) in spec.holes.iter().enumerate() {
        let mut ring = to_points(h);
        check_ring(&ring, &format!("hole {k}"))?;
        if ring_area(&ring) > 0.0 {
            ring.reverse();
        }
        for &p in &ring {
            if !point_strictly_in_ring(p, &outer) {
                return Err(Error::Geometry(format!("hole {k} is not strictly inside the outer ring")));
            }
        }
        for (a, b) in ring_edges(&ring) {
            for (c, d) in ring_edges(&outer) {
                if segments_touch(a, b, c, d) {
                    return Err(Error::Geometry(format!("hole {k} touches the outer ring")));
                }
            }
        }
        holes.push(ring);
    }
    for i in 0..holes.len() {
        for j in i + 1..holes.len() {
            let touching = ring_edges(&holes[i])
                .any(|(a, b)| ring_edges(&holes[j]).any(|(c, d)| segments_touch(a, b, c, d)));
            if touching
                || point_in_ring(holes[i][0], &holes[j])
                || point_in_ring(holes[j][0], &holes[i])
            {
                return Err(Error::Geometry(format!("holes {i} and {j} overlap")));
            }
        }
    }

    let slits: Vec<Vec<Point>> = spec.slits.iter().map(|s| to_points(s)).collect();
    let rings: Vec<&Vec<Point>> = std::iter::once(&outer).chain(holes.iter()).collect();
    // for each slit endpoint, the ring it touches (if any)
    let mut touches: Vec<[Option<usize>; 2]> = Vec::new();
    for (k, s) in slits.iter().enumerate() {
        if s.len() < 2 || s.iter().any(|p| !p.is_finite()) {
            return Err(Error::Geometry(format!("slit {k} needs at least 2 finite points")));
        }
        for w in s.windows(2) {
            if w[0].dist(w[1]) <= GEOM_EPS {
                return Err(Error::Geometry(format!("slit {k} has a zero-length segment")));
            }
        }
        for i in 0..s.len() - 1 {
            for j in i + 2..s.len() - 1 {
                if segments_touch(s[i], s[i + 1], s[j], s[j + 1]) {
                    return Err(Error::Geometry(format!("slit {k} intersects itself")));
                }
            }
        }
        let mut t = [None, None];
        let last = s.len() - 1;
        for (end, &p) in [s[0], s[last]].iter().enumerate() {
            for (r, ring) in rings.iter().enumerate() {
                if ring_edges(ring).any(|(a, b)| on_segment(p, a, b)) {
                    t[end] = Some(r);
                }
            }
        }
        for (si, w) in s.windows(2).enumerate() {
            for (r, ring) in rings.iter().enumerate() {
                for (a, b) in ring_edges(ring) {
                    if segments_cross(w[0], w[1], a, b) {
                        return Err(Error::Geometry(format!("slit {k} crosses ring {r}")));
                    }
                    let allowed_touch = |p: Point| {
                        (si == 0 && p == w[0] && t[0].is_some())
                            || (si == last - 1 && p == w[1] && t[1].is_some())
                    };
                    if segments_touch(w[0], w[1], a, b) {
                        let ok = [w[0], w[1]]
                            .iter()
                            .any(|&p| allowed_touch(p) && on_segment(p, a, b));
                        if !ok {
                            return Err(Error::Geometry(format!(
                                "slit {k} touches ring {r} away from its endpoints"
                            )));
                        }
                    }
                }
            }
            let mid = w[0].lerp(w[1], 0.5);
            let inside = point_strictly_in_ring(mid, &outer)
                && !holes.iter().any(|h| point_in_ring(mid, h));
            if !inside {
                return Err(Error::Geometry(format!("slit {k} leaves the domain")));
            }
        }
        touches.push(t);
    }
    for i in 0..slits.len() {
        for j in i + 1..slits.len() {
            for a in slits[i].windows(2) {
                for b in slits[j].windows(2) {
                    if segments_touch(a[0], a[1], b[0], b[1]) {
                        return Err(Error::Geometry(format!("slits {i} and {j} intersect")));
                    }
                }
            }
        }
    }
    // Region components: boundary components are graph vertices, chords (slits
    // touching rings at both ends) are edges; components = 1 + cycle rank.
    let nb = rings.len();
    let mut parent: Vec<usize> = (0..nb).collect();
    fn find(p: &mut Vec<usize>, x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    let mut chords = 0usize;
    for t in &touches {
        if let [Some(a), Some(b)] = *t {
            chords += 1;
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra] = rb;
        }
    }
    let comps = (0..nb).filter(|&i| find(&mut parent, i) == i).count();
    let cycle_rank = chords + comps - nb;
    if cycle_rank > 0 {
        return Err(Error::Geometry(format!(
            "slits disconnect the region into {} components",
            1 + cycle_rank
        )));
    }

    let mut domain = PolygonDomain {
        name: spec.name.clone(),
        outer,
        holes,
        slits,
        diam_inner: 0.0,
        edges: Vec::new(),
        vertices: Vec::new(),
        joints: Vec::new(),
        graph: VisibilityGraph::default(),
    };
    domain.build(&touches);
    Ok(domain)
}

impl PolygonDomain {
    fn build(&mut self, touches: &[[Option<usize>; 2]]) {
        let mut edges = Vec::new();
        for (r, ring) in self.rings().enumerate() {
            for (a, b) in ring_edges(ring) {
                edges.push(BoundaryEdge { a, b, kind: EdgeKind::Ring(r) });
            }
        }
        for (k, s) in self.slits.iter().enumerate() {
            for (i, w) in s.windows(2).enumerate() {
                edges.push(BoundaryEdge {
                    a: w[0],
                    b: w[1],
                    kind: EdgeKind::Slit { slit: k, segment: i },
                });
            }
        }
        self.edges = edges;
        let mut vertices: Vec<Point> = self.rings().flat_map(|r| r.iter().copied()).collect();
        vertices.extend(self.slits.iter().flat_map(|s| s.iter().copied()));
        self.vertices = vertices;
        self.joints = self
            .slits
            .iter()
            .flat_map(|s| {
                (1..s.len() - 1).map(move |i| SlitJoint { at: s[i], prev: s[i - 1], next: s[i + 1] })
            })
            .collect();
        // an endpoint attached to a ring separates the two sides like a joint
        // whose second arm continues the slit out of the domain
        let mut attached = Vec::new();
        for (k, s) in self.slits.iter().enumerate() {
            let last = s.len() - 1;
            for (end, at, nb) in [(0, s[0], s[1]), (1, s[last], s[last - 1])] {
                if touches[k][end].is_some() {
                    attached.push(at);
                    self.joints.push(SlitJoint { at, prev: nb, next: at + (at - nb) });
                }
            }
        }

        let mut nodes: Vec<DomainPoint> = self
            .rings()
            .flat_map(|r| r.iter().copied())
            .filter(|p| !attached.contains(p))
            .map(DomainPoint::from)
            .collect();
        for (k, s) in self.slits.iter().enumerate() {
            let last = s.len() - 1;
            for (i, &p) in s.iter().enumerate() {
                let free_tip = (i == 0 && touches[k][0].is_none()) || (i == last && touches[k][1].is_none());
                if free_tip {
                    nodes.push(DomainPoint::from(p));
                } else {
                    let segment = i.min(last - 1);
                    for left in [true, false] {
                        nodes.push(DomainPoint { pos: p, side: Some(SlitSide { slit: k, segment, left }) });
                    }
                }
            }
        }
        let n = nodes.len();
        let pairs: Vec<Vec<(usize, f64)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                ((i + 1)..n)
                    .filter(|&j| self.visible(&nodes[i], &nodes[j]))
                    .map(|j| (j, nodes[i].pos.dist(nodes[j].pos)))
                    .collect()
            })
            .collect();
        let mut adj = vec![Vec::new(); n];
        for (i, list) in pairs.into_iter().enumerate() {
            for (j, w) in list {
                adj[i].push((j, w));
                adj[j].push((i, w));
            }
        }
        self.graph = VisibilityGraph { nodes, adj };
        let diam = (0..n)
            .into_par_iter()
            .map(|i| {
                let (d, _) = dijkstra(&self.graph.adj, &[(i, 0.0)]);
                d.into_iter().filter(|v| v.is_finite()).fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        self.diam_inner = diam;
    }

    pub fn rings(&self) -> impl Iterator<Item = &Vec<Point>> {
        std::iter::once(&self.outer).chain(self.holes.iter())
    }

    pub fn edges(&self) -> &[BoundaryEdge] {
        &self.edges
    }

    /// Back to the JSON document form.
    pub fn to_spec(&self) -> DomainSpec {
        let conv = |v: &Vec<Point>| v.iter().map(|&p| <[f64; 2]>::from(p)).collect::<Vec<_>>();
        DomainSpec {
            name: self.name.clone(),
            outer: conv(&self.outer),
            holes: self.holes.iter().map(conv).collect(),
            slits: self.slits.iter().map(conv).collect(),
        }
    }

    /// Free slit endpoints (not touching any ring).
    pub fn slit_tips(&self) -> Vec<Point> {
        self.graph
            .nodes
            .iter()
            .filter(|n| n.side.is_none() && self.slits.iter().any(|s| s.contains(&n.pos)))
            .map(|n| n.pos)
            .collect()
    }

    /// Ring vertices whose interior angle (seen from the domain) exceeds π.
    pub fn reflex_vertices(&self) -> Vec<Point> {
        let mut out = Vec::new();
        for (r, ring) in self.rings().enumerate() {
            for i in 0..ring.len() {
                let ang = interior_angle(ring, i);
                // hole rings are clockwise, so the angle seen from the domain is the complement
                let seen = if r == 0 { ang } else { 2.0 * std::f64::consts::PI - ang };
                if seen > std::f64::consts::PI + 1e-9 {
                    out.push(ring[i]);
                }
            }
        }
        out
    }

    /// Closed-domain membership (boundary and slit points included).
    pub fn contains(&self, p: Point) -> bool {
        p.is_finite()
            && point_in_ring(p, &self.outer)
            && !self.holes.iter().any(|h| point_strictly_in_ring(p, h))
    }

    /// True when `p` lies on the outer ring, a hole ring or a slit.
    pub fn on_boundary(&self, p: Point) -> bool {
        self.edges.iter().any(|e| on_segment(p, e.a, e.b))
    }

    /// Slit segment containing `p`, if any.
    pub fn slit_segment_at(&self, p: Point) -> Option<(usize, usize)> {
        self.edges.iter().find_map(|e| match e.kind {
            EdgeKind::Slit { slit, segment } if on_segment(p, e.a, e.b) => Some((slit, segment)),
            _ => None,
        })
    }

    /// Offset slit-side points off the slit for visibility tests.
    pub fn nudged(&self, p: &DomainPoint) -> Point {
        match p.side {
            Some(s) => {
                let seg = &self.slits[s.slit];
                let n = (seg[s.segment + 1] - seg[s.segment]).unit_normal();
                p.pos + n * if s.left { SIDE_NUDGE } else { -SIDE_NUDGE }
            }
            None => p.pos,
        }
    }

    /// Whether the straight segment between two points stays in the closed
    /// domain without crossing a slit.
    pub fn visible(&self, p: &DomainPoint, q: &DomainPoint) -> bool {
        let a = self.nudged(p);
        let b = self.nudged(q);
        if a.dist(b) <= GEOM_EPS {
            return true;
        }
        if self.edges.iter().any(|e| segments_cross(a, b, e.a, e.b)) {
            return false;
        }
        let ab = b - a;
        let len2 = ab.dot(ab);
        let mut params = vec![0.0, 1.0];
        for &v in &self.vertices {
            if on_segment(v, a, b) {
                params.push(((v - a).dot(ab) / len2).clamp(0.0, 1.0));
            }
        }
        params.sort_by(f64::total_cmp);
        for w in params.windows(2) {
            if w[1] - w[0] > 1e-12 {
                let m = a.lerp(b, 0.5 * (w[0] + w[1]));
                if !self.contains(m) {
                    return false;
                }
            }
        }
        let len = len2.sqrt();
        for j in &self.joints {
            if on_segment(j.at, a, b) {
                let t = (j.at - a).dot(ab) / len2;
                if t > 1e-9 && t < 1.0 - 1e-9 {
                    let d = (1e-6 / len).min(t * 0.5).min((1.0 - t) * 0.5);
                    let before = a.lerp(b, t - d);
                    let after = a.lerp(b, t + d);
                    if wedge_side(j, before) != wedge_side(j, after) {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn check_inside(&self, p: &DomainPoint) -> Result<()> {
        if self.contains(p.pos) {
            Ok(())
        } else {
            Err(Error::Geometry(format!("point ({}, {}) is outside the domain", p.pos.x, p.pos.y)))
        }
    }

    /// Shortest path inside the closed domain that does not cross a slit.
    pub fn inner_distance(&self, x: &DomainPoint, y: &DomainPoint) -> Result<GeodesicPath> {
        self.check_inside(x)?;
        self.check_inside(y)?;
        if x.pos == y.pos && x.side == y.side {
            return Ok(GeodesicPath { waypoints: vec![x.pos], length: 0.0 });
        }
        if self.visible(x, y) {
            return Ok(GeodesicPath { waypoints: vec![x.pos, y.pos], length: x.pos.dist(y.pos) });
        }
        let g = &self.graph;
        let n = g.nodes.len();
        let sources: Vec<(usize, f64)> = (0..n)
            .filter(|&i| self.visible(x, &g.nodes[i]))
            .map(|i| (i, x.pos.dist(g.nodes[i].pos)))
            .collect();
        let (dist, prev) = dijkstra(&g.adj, &sources);
        let mut best = f64::INFINITY;
        let mut last = None;
        for i in 0..n {
            if dist[i].is_finite() {
                let total = dist[i] + g.nodes[i].pos.dist(y.pos);
                if total < best && self.visible(&g.nodes[i], y) {
                    best = total;
                    last = Some(i);
                }
            }
        }
        let Some(mut cur) = last else {
            return Err(Error::Geometry("no path between the points".into()));
        };
        let mut rev = vec![y.pos];
        loop {
            rev.push(g.nodes[cur].pos);
            match prev[cur] {
                Some(p) => cur = p,
                None => break,
            }
        }
        rev.push(x.pos);
        rev.reverse();
        rev.dedup();
        Ok(GeodesicPath { waypoints: rev, length: best })
    }

    /// Inner distances from `center` to many targets.
    pub fn distance_field(&self, center: &DomainPoint, targets: &[DomainPoint]) -> Result<Vec<f64>> {
        self.check_inside(center)?;
        let g = &self.graph;
        let n = g.nodes.len();
        let sources: Vec<(usize, f64)> = (0..n)
            .filter(|&i| self.visible(center, &g.nodes[i]))
            .map(|i| (i, center.pos.dist(g.nodes[i].pos)))
            .collect();
        let (dist, _) = dijkstra(&g.adj, &sources);
        let mut order: Vec<usize> = (0..n).filter(|&i| dist[i].is_finite()).collect();
        order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]));
        Ok(targets
            .par_iter()
            .map(|t| {
                let mut best = if self.visible(center, t) {
                    center.pos.dist(t.pos)
                } else {
                    f64::INFINITY
                };
                for &i in &order {
                    if dist[i] >= best {
                        break;
                    }
                    let cand = dist[i] + g.nodes[i].pos.dist(t.pos);
                    if cand < best && self.visible(&g.nodes[i], t) {
                        best = cand;
                    }
                }
                best
            })
            .collect())
    }

    /// Points at inner distance exactly `rho` from `center`, sampled on arcs
    /// around the center and around every graph node closer than `rho`. The
    /// order is deterministic: center arc first, then nodes by index, each arc
    /// counterclockwise from angle zero.
    pub fn geodesic_circle(&self, center: &DomainPoint, rho: f64, samples: usize) -> Result<Vec<DomainPoint>> {
        self.check_inside(center)?;
        let g = &self.graph;
        let n = g.nodes.len();
        let sources: Vec<(usize, f64)> = (0..n)
            .filter(|&i| self.visible(center, &g.nodes[i]))
            .map(|i| (i, center.pos.dist(g.nodes[i].pos)))
            .collect();
        let (dist, _) = dijkstra(&g.adj, &sources);
        let mut arcs: Vec<(DomainPoint, f64)> = vec![(*center, rho)];
        for i in 0..n {
            if dist[i] < rho - 1e-12 {
                arcs.push((g.nodes[i], rho - dist[i]));
            }
        }
        let mut raw = Vec::new();
        for (c, rad) in arcs {
            for k in 0..samples {
                let th = 2.0 * std::f64::consts::PI * k as f64 / samples as f64;
                let z = DomainPoint::from(self.nudged(&c) + Point::new(th.cos(), th.sin()) * rad);
                if self.contains(z.pos) && self.visible(&c, &z) {
                    raw.push(z);
                }
            }
        }
        let d = self.distance_field(center, &raw)?;
        let tol = 1e-8 * rho.max(1.0);
        Ok(raw.into_iter().zip(d).filter(|(_, d)| (d - rho).abs() <= tol).map(|(z, _)| z).collect())
    }

    /// Euclidean distance to the nearest boundary piece (rings and slits).
    pub fn boundary_distance(&self, x: Point) -> Result<f64> {
        self.check_inside(&DomainPoint::from(x))?;
        Ok(self.boundary_distance_unchecked(x))
    }

    pub(crate) fn boundary_distance_unchecked(&self, x: Point) -> f64 {
        self.edges
            .iter()
            .map(|e| segment_distance(x, e.a, e.b).0)
            .fold(f64::INFINITY, f64::min)
    }

    /// Axis-aligned bounding box `(min, max)` of the outer ring.
    pub fn bbox(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.outer {
            lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        (lo, hi)
    }

    pub fn area(&self) -> f64 {
        ring_area(&self.outer) + self.holes.iter().map(|h| ring_area(h)).sum::<f64>()
    }
}

/// Which of the two arcs cut out by a slit joint contains `p`.
fn wedge_side(j: &SlitJoint, p: Point) -> bool {
    let ang = |v: Point| v.y.atan2(v.x);
    let tau = 2.0 * std::f64::consts::PI;
    let a = ang(j.prev - j.at);
    let b = ang(j.next - j.at);
    let x = ang(p - j.at);
    let sweep = (b - a).rem_euclid(tau);
    (x - a).rem_euclid(tau) < sweep
}

/// Area of the ambient disc of radius `r` (plane with Lebesgue measure).
pub fn ambient_volume(_x: Point, r: f64) -> f64 {
    std::f64::consts::PI * r * r
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    fn unit_square() -> DomainSpec {
        DomainSpec {
            name: "square".into(),
            outer: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            holes: vec![],
            slits: vec![],
        }
    }

    fn slit_square() -> DomainSpec {
        DomainSpec { slits: vec![vec![[0.5, 0.0], [0.5, 0.5]]], ..unit_square() }
    }

    #[test]
    fn square_diameter_is_diagonal() {
        let d = load_domain(&unit_square()).unwrap();
        assert!((d.diam_inner - SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn self_intersecting_outer_is_rejected() {
        let spec = DomainSpec {
            outer: vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]],
            ..unit_square()
        };
        let err = load_domain(&spec).unwrap_err();
        assert_eq!(err.kind(), "GeometryError");
        assert!(err.to_string().contains("self-intersects"));
    }

    #[test]
    fn chord_slit_disconnects() {
        let spec = DomainSpec { slits: vec![vec![[0.5, 0.0], [0.5, 1.0]]], ..unit_square() };
        let err = load_domain(&spec).unwrap_err();
        assert!(err.to_string().contains("disconnect"), "{err}");
    }

    #[test]
    fn malformed_document() {
        assert_eq!(load_domain_json("{\"outer\": 3}").unwrap_err().kind(), "ParseError");
    }

    #[test]
    fn path_around_slit_tip() {
        let d = load_domain(&slit_square()).unwrap();
        let x = DomainPoint::from(Point::new(0.25, 0.25));
        let y = DomainPoint::from(Point::new(0.75, 0.25));
        let path = d.inner_distance(&x, &y).unwrap();
        let tip = Point::new(0.5, 0.5);
        let expect = x.pos.dist(tip) + tip.dist(y.pos);
        assert!((path.length - expect).abs() < 1e-12);
        assert!((path.length - 0.70710678).abs() < 1e-6);
        assert_eq!(path.waypoints.len(), 3);
    }

    #[test]
    fn attached_slit_end_is_not_a_passage() {
        for outer in [unit_square().outer, vec![[0.0, 0.0], [0.5, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]] {
            let d = load_domain(&DomainSpec { outer, ..slit_square() }).unwrap();
            let x = DomainPoint::from(Point::new(0.3, 0.05));
            let y = DomainPoint::from(Point::new(0.7, 0.05));
            let expect = 2.0 * (0.2f64.powi(2) + 0.45f64.powi(2)).sqrt();
            assert!((d.inner_distance(&x, &y).unwrap().length - expect).abs() < 1e-9);
            let (a, b) = (DomainPoint::from(Point::new(0.3, 0.0)), DomainPoint::from(Point::new(0.7, 0.0)));
            assert!(!d.visible(&a, &b));
            assert!((d.inner_distance(&a, &b).unwrap().length - 2.0 * (0.2f64.powi(2) + 0.25).sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn opposite_slit_sides_are_far_apart() {
        let d = load_domain(&slit_square()).unwrap();
        let p = Point::new(0.5, 0.25);
        let l = DomainPoint { pos: p, side: Some(SlitSide { slit: 0, segment: 0, left: true }) };
        let r = DomainPoint { pos: p, side: Some(SlitSide { slit: 0, segment: 0, left: false }) };
        let path = d.inner_distance(&l, &r).unwrap();
        assert!((path.length - 0.5).abs() < 1e-8, "{}", path.length);
    }

    #[test]
    fn identical_points() {
        let d = load_domain(&unit_square()).unwrap();
        let x = DomainPoint::from(Point::new(0.3, 0.3));
        let p = d.inner_distance(&x, &x).unwrap();
        assert_eq!(p.length, 0.0);
        assert_eq!(p.waypoints.len(), 1);
    }

    #[test]
    fn boundary_distances() {
        let sq = load_domain(&unit_square()).unwrap();
        assert!((sq.boundary_distance(Point::new(0.5, 0.5)).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(sq.boundary_distance(Point::new(1.0, 0.3)).unwrap(), 0.0);
        let sl = load_domain(&slit_square()).unwrap();
        assert!((sl.boundary_distance(Point::new(0.6, 0.4)).unwrap() - 0.1).abs() < 1e-12);
        assert!(sq.boundary_distance(Point::new(2.0, 0.0)).is_err());
    }

    #[test]
    fn ambient_volume_doubles_by_four() {
        let o = Point::new(0.0, 0.0);
        assert!((ambient_volume(o, 1.0) - std::f64::consts::PI).abs() < 1e-15);
        assert!((ambient_volume(o, 2.0) / ambient_volume(o, 1.0) - 4.0).abs() < 1e-15);
        assert_eq!(ambient_volume(o, 0.0), 0.0);
    }

    #[test]
    fn hole_blocks_visibility() {
        let spec = DomainSpec {
            holes: vec![vec![[0.4, 0.4], [0.6, 0.4], [0.6, 0.6], [0.4, 0.6]]],
            ..unit_square()
        };
        let d = load_domain(&spec).unwrap();
        let x = DomainPoint::from(Point::new(0.2, 0.5));
        let y = DomainPoint::from(Point::new(0.8, 0.5));
        let path = d.inner_distance(&x, &y).unwrap();
        let expect = 2.0 * (0.2f64.hypot(0.1)) + 0.2;
        assert!((path.length - expect).abs() < 1e-12, "{}", path.length);
    }

    fn l_shape() -> DomainSpec {
        DomainSpec {
            name: "l".into(),
            outer: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 0.5], [0.5, 0.5], [0.5, 1.0], [0.0, 1.0]],
            holes: vec![],
            slits: vec![],
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn coords() -> impl Strategy<Value = [(f64, f64); 3]> {
            [(0.01f64..0.99, 0.01f64..0.99), (0.01f64..0.99, 0.01f64..0.99), (0.01f64..0.99, 0.01f64..0.99)]
        }

        fn check(d: &PolygonDomain, c: [(f64, f64); 3]) -> std::result::Result<(), TestCaseError> {
            let p: Vec<Point> = c.iter().map(|&(x, y)| Point::new(x, y)).collect();
            prop_assume!(p.iter().all(|&q| d.contains(q) && d.slit_segment_at(q).is_none()));
            let [x, y, z] = [p[0], p[1], p[2]].map(DomainPoint::from);
            let dist = |a: &DomainPoint, b: &DomainPoint| d.inner_distance(a, b).unwrap().length;
            let (xy, yz, xz) = (dist(&x, &y), dist(&y, &z), dist(&x, &z));
            prop_assert!(xz <= xy + yz + 1e-12);
            prop_assert!(xy >= x.pos.dist(y.pos) - 1e-12);
            prop_assert!((xy - dist(&y, &x)).abs() < 1e-12);
            prop_assert!(xy <= d.diam_inner + 1e-12);
            Ok(())
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn triangle_inequality_l(c in coords()) {
                check(&load_domain(&l_shape()).unwrap(), c)?;
            }

            #[test]
            fn triangle_inequality_slit(c in coords()) {
                check(&load_domain(&slit_square()).unwrap(), c)?;
            }
        }
    }
}
