use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::domain::{DomainPoint, PolygonDomain};
use super::mesh::{triangulate, Mesh};
use super::point::Point;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize)]
pub struct WitnessPair {
    pub x: Point,
    pub y: Point,
    pub c: f64,
    #[serde(rename = "C")]
    pub big_c: f64,
    pub d_inner: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct UniformityCertificate {
    pub c_u: f64,
    #[serde(rename = "C_u")]
    pub big_c_u: f64,
    pub witness_pairs: Vec<WitnessPair>,
    pub n_samples: usize,
}

#[derive(Clone, Debug)]
pub struct CertifyOptions {
    pub n_samples: usize,
    pub c_max: f64,
    pub seed: u64,
    /// Path-graph spacing relative to the inner diameter.
    pub resolution: f64,
    /// Path-graph edges join visible nodes up to this many spacings apart.
    pub reach: f64,
    /// Each witness is the shortest curve whose quality is at least this
    /// fraction of the best quality found for its pair.
    pub kappa: f64,
}

impl CertifyOptions {
    pub fn new(n_samples: usize, c_max: f64) -> Self {
        Self { n_samples, c_max, seed: 7, resolution: 1.0 / 30.0, reach: 3.5, kappa: 0.25 }
    }
}

/// Empirical inner-uniformity constants from sampled pairs.
pub fn certify_uniformity(domain: &PolygonDomain, n_samples: usize, c_max: f64) -> Result<UniformityCertificate> {
    certify_uniformity_with(domain, &CertifyOptions::new(n_samples, c_max))
}

struct PathGraph {
    pts: Vec<DomainPoint>,
    depth: Vec<f64>,
    adj: Vec<Vec<(usize, f64)>>,
    reach: f64,
    bucket: f64,
    lo: Point,
    dims: (usize, usize),
    cells: Vec<Vec<usize>>,
}

impl PathGraph {
    fn new(domain: &PolygonDomain, mesh: &Mesh, reach: f64) -> Self {
        let pts = mesh.domain_points();
        let depth: Vec<f64> = pts.iter().map(|p| domain.boundary_distance_unchecked(p.pos)).collect();
        let (lo, hi) = domain.bbox();
        let bucket = reach;
        let nx = (((hi.x - lo.x) / bucket).ceil() as usize).max(1);
        let ny = (((hi.y - lo.y) / bucket).ceil() as usize).max(1);
        let mut g = Self { pts, depth, adj: vec![], reach, bucket, lo, dims: (nx, ny), cells: vec![vec![]; nx * ny] };
        for i in 0..g.pts.len() {
            let c = g.cell(g.pts[i].pos);
            g.cells[c].push(i);
        }
        let adj: Vec<Vec<(usize, f64)>> = (0..g.pts.len())
            .into_par_iter()
            .map(|i| {
                g.near(&g.pts[i])
                    .into_iter()
                    .filter(|&j| j != i && domain.visible(&g.pts[i], &g.pts[j]))
                    .map(|j| (j, g.pts[i].pos.dist(g.pts[j].pos)))
                    .collect()
            })
            .collect();
        g.adj = adj;
        g
    }

    fn cell_xy(&self, p: Point) -> (usize, usize) {
        let ix = (((p.x - self.lo.x) / self.bucket) as isize).clamp(0, self.dims.0 as isize - 1) as usize;
        let iy = (((p.y - self.lo.y) / self.bucket) as isize).clamp(0, self.dims.1 as isize - 1) as usize;
        (ix, iy)
    }

    fn cell(&self, p: Point) -> usize {
        let (ix, iy) = self.cell_xy(p);
        iy * self.dims.0 + ix
    }

    fn near(&self, p: &DomainPoint) -> Vec<usize> {
        let (ix, iy) = self.cell_xy(p.pos);
        let mut out = Vec::new();
        for y in iy.saturating_sub(1)..(iy + 2).min(self.dims.1) {
            for x in ix.saturating_sub(1)..(ix + 2).min(self.dims.0) {
                for &j in &self.cells[y * self.dims.0 + x] {
                    if self.pts[j].pos.dist(p.pos) <= self.reach {
                        out.push(j);
                    }
                }
            }
        }
        out
    }

    fn attach(&self, domain: &PolygonDomain, p: &DomainPoint) -> Vec<(usize, f64)> {
        self.near(p)
            .into_iter()
            .filter(|&j| domain.visible(p, &self.pts[j]))
            .map(|j| (j, p.pos.dist(self.pts[j].pos)))
            .collect()
    }

    /// Shortest distances from an endpoint using only nodes z with
    /// depth(z) >= c * dist(z).
    fn restricted(&self, start: &[(usize, f64)], c: f64) -> Vec<f64> {
        let n = self.pts.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        for &(j, d) in start {
            if d < dist[j] {
                dist[j] = d;
                heap.push(Item(d, j));
            }
        }
        while let Some(Item(d, u)) = heap.pop() {
            if done[u] || d > dist[u] {
                continue;
            }
            done[u] = true;
            if self.depth[u] < c * d {
                dist[u] = f64::INFINITY;
                continue;
            }
            for &(v, w) in &self.adj[u] {
                let nd = d + w;
                if !done[v] && nd < dist[v] {
                    dist[v] = nd;
                    heap.push(Item(nd, v));
                }
            }
        }
        dist
    }
}

#[derive(PartialEq)]
struct Item(f64, usize);
impl Eq for Item {}
impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Sample `i` of the deterministic stream; independent of how many samples
/// are drawn, so a longer run always extends a shorter one.
fn sample_pair(domain: &PolygonDomain, seed: u64, i: usize) -> (Point, Point) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ i as u64);
    let (lo, hi) = domain.bbox();
    let scale = domain.diam_inner;
    let interior = |rng: &mut ChaCha8Rng| loop {
        let p = Point::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
        if domain.contains(p) && domain.boundary_distance_unchecked(p) > 1e-9 {
            return p;
        }
    };
    let near_boundary = |rng: &mut ChaCha8Rng| loop {
        let edges = domain.edges();
        let e = &edges[rng.gen_range(0..edges.len())];
        let base = e.a.lerp(e.b, rng.gen_range(0.05..0.95));
        let n = (e.b - e.a).unit_normal();
        let off = scale * 10f64.powf(rng.gen_range(-3.0..-1.3));
        let p = base + n * if rng.gen_bool(0.5) { off } else { -off };
        if domain.contains(p) && domain.boundary_distance_unchecked(p) > 1e-9 {
            return p;
        }
    };
    match i % 3 {
        0 => (interior(&mut rng), interior(&mut rng)),
        1 => (near_boundary(&mut rng), interior(&mut rng)),
        _ => (near_boundary(&mut rng), near_boundary(&mut rng)),
    }
}

const TENT_HEIGHTS: usize = 8;

/// Quality `min δ(γ(t)) / min(ℓ_before, ℓ_after)` and length of a visible
/// polyline, sampled 64 times per segment.
fn polyline_quality(domain: &PolygonDomain, pts: &[Point]) -> Option<(f64, f64)> {
    let visible = pts.windows(2).all(|w| domain.contains(w[1]) && domain.visible(&w[0].into(), &w[1].into()));
    if !visible {
        return None;
    }
    let len: f64 = pts.windows(2).map(|w| w[0].dist(w[1])).sum();
    let mut c = f64::INFINITY;
    let mut before = 0.0;
    for w in pts.windows(2) {
        let l = w[0].dist(w[1]);
        for k in 0..64 {
            let t = k as f64 / 64.0;
            let at = before + l * t;
            let arm = at.min(len - at);
            if arm > 0.0 {
                c = c.min(domain.boundary_distance_unchecked(w[0].lerp(w[1], t)) / arm);
            }
        }
        before += l;
    }
    Some((c, len))
}

fn certify_pair(
    domain: &PolygonDomain,
    g: &PathGraph,
    x: Point,
    y: Point,
    c_max: f64,
    kappa: f64,
) -> Result<WitnessPair> {
    let xp = DomainPoint::from(x);
    let yp = DomainPoint::from(y);
    let d = domain.inner_distance(&xp, &yp)?.length;
    let budget = c_max * d;
    let sx = g.attach(domain, &xp);
    let sy = g.attach(domain, &yp);

    // Straight segment and tents lifted off it, checked on a fine sample.
    let tents: Vec<(f64, f64)> = if x.dist(y) > 0.0 {
        let mid = x.lerp(y, 0.5);
        let n = (y - x).unit_normal();
        std::iter::once(0.0)
            .chain((1..=TENT_HEIGHTS).flat_map(|k| {
                let s = 0.5 * x.dist(y) * k as f64 / TENT_HEIGHTS as f64;
                [s, -s]
            }))
            .filter_map(|s| polyline_quality(domain, &[x, mid + n * s, y]))
            .collect()
    } else {
        vec![]
    };
    let direct = tents
        .iter()
        .copied()
        .filter(|&(_, len)| len <= budget * (1.0 + 1e-12))
        .max_by(|a, b| a.0.total_cmp(&b.0));

    // Shortest admissible curve through the graph for a given c.
    let through = |c: f64| -> Option<f64> {
        let fx = g.restricted(&sx, c);
        let fy = g.restricted(&sy, c);
        let len = (0..g.pts.len())
            .filter(|&m| fx[m].is_finite() && fy[m].is_finite())
            .map(|m| fx[m] + fy[m])
            .min_by(f64::total_cmp)?;
        (len <= budget).then_some(len)
    };

    let mut best: Option<(f64, f64)> = direct;
    let floor = 1e-6;
    if through(floor).is_some() {
        let (mut lo, mut hi) = (floor, 1.0);
        if through(hi).is_some() {
            lo = hi;
        } else {
            for _ in 0..30 {
                let mid = 0.5 * (lo + hi);
                if through(mid).is_some() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        let len = through(lo).expect("feasible at lower bracket");
        if best.map_or(true, |(c, _)| lo > c) {
            best = Some((lo, len));
        }
    }
    match best {
        Some((c_star, _)) => {
            // shortest curve that keeps a fixed fraction of the best quality
            let target = (kappa * c_star).min(1.0);
            let graph = through(target).map(|len| (target, len));
            let chord = tents
                .iter()
                .copied()
                .filter(|&(c, len)| c >= target && len <= budget * (1.0 + 1e-12))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            let (c, len) = match (chord, graph) {
                (Some(a), Some(b)) => if a.1 <= b.1 { a } else { b },
                (a, b) => a.or(b).expect("the best curve meets its own fraction"),
            };
            Ok(WitnessPair { x, y, c: c.min(1.0), big_c: if d > 0.0 { len / d } else { 1.0 }, d_inner: d })
        }
        None => Err(Error::CertificationFailure(format!(
            "no curve from ({:.4}, {:.4}) to ({:.4}, {:.4}) with c > 0 and length <= {c_max} d",
            x.x, x.y, y.x, y.y
        ))),
    }
}

pub fn certify_uniformity_with(domain: &PolygonDomain, opts: &CertifyOptions) -> Result<UniformityCertificate> {
    if opts.n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be positive".into()));
    }
    if !(opts.kappa > 0.0 && opts.kappa <= 1.0) {
        return Err(Error::InvalidArgument(format!("quality fraction must lie in (0, 1], got {}", opts.kappa)));
    }
    if !(opts.c_max >= 1.0) {
        return Err(Error::InvalidArgument(format!("length budget must be >= 1, got {}", opts.c_max)));
    }
    let h = domain.diam_inner * opts.resolution;
    let mesh = triangulate(domain, h)?;
    let g = PathGraph::new(domain, &mesh, opts.reach * h);
    let witness_pairs = (0..opts.n_samples)
        .into_par_iter()
        .map(|i| {
            let (x, y) = sample_pair(domain, opts.seed, i);
            certify_pair(domain, &g, x, y, opts.c_max, opts.kappa)
        })
        .collect::<Result<Vec<_>>>()?;
    let c_u = witness_pairs.iter().map(|w| w.c).fold(f64::INFINITY, f64::min);
    let big_c_u = witness_pairs.iter().map(|w| w.big_c).fold(1.0, f64::max);
    Ok(UniformityCertificate { c_u, big_c_u, witness_pairs, n_samples: opts.n_samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery::{gallery, GalleryParams};
    use proptest::prelude::*;

    fn domain(name: &str) -> PolygonDomain {
        gallery(name, &GalleryParams::default()).unwrap().1
    }

    #[test]
    fn convex_chords_are_admissible() {
        let c = certify_uniformity(&domain("convex-hexagon"), 30, 3.0).unwrap();
        assert!(c.big_c_u <= 1.05, "{}", c.big_c_u);
        assert!(c.c_u > 0.0);
        assert_eq!(c.witness_pairs.len(), 30);
    }

    #[test]
    fn slit_forces_detours() {
        let c = certify_uniformity(&domain("slit-square"), 30, 3.0).unwrap();
        assert!(c.c_u > 0.0 && c.c_u < 1.0, "{}", c.c_u);
        assert!(c.witness_pairs.iter().all(|w| w.big_c >= 1.0 - 1e-9 && w.big_c <= 3.0 + 1e-9));
    }

    #[test]
    fn rejects_bad_arguments() {
        let d = domain("square");
        assert_eq!(certify_uniformity(&d, 0, 2.0).unwrap_err().kind(), "InvalidArgument");
        assert_eq!(certify_uniformity(&d, 5, 0.5).unwrap_err().kind(), "InvalidArgument");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]

        #[test]
        fn more_samples_never_improve_constants(n in 2usize..10, extra in 1usize..10) {
            let d = domain("l-shape");
            let a = certify_uniformity(&d, n, 3.0).unwrap();
            let b = certify_uniformity(&d, n + extra, 3.0).unwrap();
            prop_assert!(b.c_u <= a.c_u);
            prop_assert!(b.big_c_u >= a.big_c_u);
        }
    }
}
