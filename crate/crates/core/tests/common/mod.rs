//! Grid shortest paths used as an independent inner-distance oracle.
#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use heatprof::geometry::{Point, PolygonDomain};

/// Coprime moves up to four cells in each direction; the worst angular gap
/// between neighbouring directions keeps the metric bias under 1%.
pub fn stencil() -> Vec<(i64, i64)> {
    fn gcd(a: i64, b: i64) -> i64 {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    (-4i64..=4)
        .flat_map(|a| (-4i64..=4).map(move |b| (a, b)))
        .filter(|&(a, b)| (a, b) != (0, 0) && gcd(a.abs(), b.abs()) == 1)
        .collect()
}

pub struct Grid {
    pub origin: Point,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub inside: Vec<bool>,
}

impl Grid {
    pub fn new(d: &PolygonDomain, cells: usize) -> Self {
        let (lo, hi) = d.bbox();
        let h = (hi.x - lo.x).max(hi.y - lo.y) / cells as f64;
        // offset so that no node sits on an axis-aligned edge or slit
        let origin = lo + Point::new(0.37 * h, 0.41 * h);
        let nx = ((hi.x - origin.x) / h) as usize + 1;
        let ny = ((hi.y - origin.y) / h) as usize + 1;
        let mut g = Grid { origin, h, nx, ny, inside: vec![] };
        g.inside = (0..nx * ny).map(|k| d.contains(g.at(k)) && d.boundary_distance(g.at(k)).unwrap_or(0.0) > 1e-9).collect();
        g
    }

    pub fn at(&self, k: usize) -> Point {
        self.origin + Point::new((k % self.nx) as f64 * self.h, (k / self.nx) as f64 * self.h)
    }

    pub fn dijkstra(&self, d: &PolygonDomain, src: usize) -> Vec<f64> {
        let moves = stencil();
        let mut dist = vec![f64::INFINITY; self.inside.len()];
        dist[src] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Reverse((0u64, src)));
        while let Some(Reverse((bits, k))) = heap.pop() {
            let dk = f64::from_bits(bits);
            if dk > dist[k] {
                continue;
            }
            let (i, j) = ((k % self.nx) as i64, (k / self.nx) as i64);
            for &(a, b) in &moves {
                let (ni, nj) = (i + a, j + b);
                if ni < 0 || nj < 0 || ni >= self.nx as i64 || nj >= self.ny as i64 {
                    continue;
                }
                let nk = nj as usize * self.nx + ni as usize;
                if !self.inside[nk] {
                    continue;
                }
                let nd = dk + self.h * ((a * a + b * b) as f64).sqrt();
                if nd < dist[nk] && d.visible(&self.at(k).into(), &self.at(nk).into()) {
                    dist[nk] = nd;
                    heap.push(Reverse((nd.to_bits(), nk)));
                }
            }
        }
        dist
    }

    /// Any-angle variant: a relaxation may reuse the parent of the settled
    /// node when the straight segment is visible, so paths are not confined
    /// to grid directions and hug corners.
    pub fn any_angle(&self, d: &PolygonDomain, src: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.inside.len()];
        let mut parent = vec![usize::MAX; self.inside.len()];
        let mut done = vec![false; self.inside.len()];
        dist[src] = 0.0;
        parent[src] = src;
        let mut heap = BinaryHeap::new();
        heap.push(Reverse((0u64, src)));
        while let Some(Reverse((_, k))) = heap.pop() {
            if done[k] {
                continue;
            }
            done[k] = true;
            let (i, j) = ((k % self.nx) as i64, (k / self.nx) as i64);
            for (a, b) in [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)] {
                let (ni, nj) = (i + a, j + b);
                if ni < 0 || nj < 0 || ni >= self.nx as i64 || nj >= self.ny as i64 {
                    continue;
                }
                let nk = nj as usize * self.nx + ni as usize;
                if !self.inside[nk] || done[nk] {
                    continue;
                }
                let pk = parent[k];
                let (from, base) = if d.visible(&self.at(pk).into(), &self.at(nk).into()) {
                    (pk, dist[pk])
                } else if d.visible(&self.at(k).into(), &self.at(nk).into()) {
                    (k, dist[k])
                } else {
                    continue;
                };
                let nd = base + self.at(from).dist(self.at(nk));
                if nd < dist[nk] {
                    dist[nk] = nd;
                    parent[nk] = from;
                    heap.push(Reverse((nd.to_bits(), nk)));
                }
            }
        }
        dist
    }
}
