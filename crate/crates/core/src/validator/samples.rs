//! Stratified sample pairs for envelope fits.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DomainPoint, Mesh, Point, PolygonDomain};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairClass {
    Interior,
    NearBoundary,
    Corner,
    /// Inner distance well above the Euclidean one (pairs separated by a slit or reflex corner).
    CrossSlit,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePair {
    pub x: usize,
    pub y: usize,
    pub d_inner: f64,
    pub euclid: f64,
    pub class: PairClass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleOptions {
    pub n_pairs: usize,
    /// Distinct first points; each costs one heat kernel column.
    pub n_sources: usize,
    pub seed: u64,
    /// Number of dyadic depth bands.
    pub bands: usize,
    /// Radius of the corner neighbourhoods, relative to the inner diameter.
    pub corner_radius: f64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self { n_pairs: 200, n_sources: 16, seed: 7, bands: 6, corner_radius: 0.1 }
    }
}

/// Ratio `d_U / |x − y|` above which a pair counts as separated.
const CROSS_RATIO: f64 = 1.5;

/// Ring vertices and slit endpoints.
pub fn feature_points(domain: &PolygonDomain) -> Vec<Point> {
    let mut out: Vec<Point> = domain.rings().flatten().copied().collect();
    for s in &domain.slits {
        out.extend(s.iter().copied());
    }
    out
}

struct Strata {
    groups: Vec<Vec<usize>>,
    corner: Vec<bool>,
    deep_band: Vec<usize>,
}

fn strata(domain: &PolygonDomain, mesh: &Mesh, opts: &SampleOptions) -> Result<Strata> {
    let free = mesh.interior_nodes();
    if free.is_empty() {
        return Err(Error::InsufficientSamples { got: 0, need: opts.n_pairs });
    }
    let n = mesh.nodes.len();
    let depth: Vec<f64> = free.iter().map(|&i| domain.boundary_distance_unchecked(mesh.nodes[i])).collect();
    let dmax = depth.iter().copied().fold(0.0, f64::max);
    let feats = feature_points(domain);
    let rc = opts.corner_radius * domain.diam_inner;
    let bands = opts.bands.max(1);
    let mut groups = vec![Vec::new(); bands + 1];
    let mut corner = vec![false; n];
    let mut deep_band = vec![0; n];
    for (&i, &d) in free.iter().zip(&depth) {
        let band = ((dmax / d.max(1e-300)).log2().floor().max(0.0) as usize).min(bands - 1);
        deep_band[i] = band;
        if feats.iter().any(|f| f.dist(mesh.nodes[i]) < rc) {
            corner[i] = true;
            groups[bands].push(i);
        } else {
            groups[band].push(i);
        }
    }
    groups.retain(|g| !g.is_empty());
    Ok(Strata { groups, corner, deep_band })
}

/// `n_pairs` pairs over `n_sources` first points, drawn round-robin from
/// dyadic depth bands, corner neighbourhoods and (when present) pairs whose
/// inner distance exceeds the Euclidean one. Deterministic in the seed.
pub fn stratified_pairs(domain: &PolygonDomain, mesh: &Mesh, opts: &SampleOptions) -> Result<Vec<SamplePair>> {
    let st = strata(domain, mesh, opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut shuffled = st.groups.clone();
    for g in &mut shuffled {
        g.shuffle(&mut rng);
    }
    let mut sources = Vec::new();
    let mut cursor = vec![0; shuffled.len()];
    let total: usize = shuffled.iter().map(|g| g.len()).sum();
    let want = opts.n_sources.max(1).min(total);
    let mut k = 0;
    while sources.len() < want {
        let g = k % shuffled.len();
        if cursor[g] < shuffled[g].len() {
            sources.push(shuffled[g][cursor[g]]);
            cursor[g] += 1;
        }
        k += 1;
    }
    let free = mesh.interior_nodes();
    let pts: Vec<DomainPoint> = free.iter().map(|&i| mesh.node_point(i)).collect();
    let mut slot = vec![usize::MAX; mesh.nodes.len()];
    for (k, &i) in free.iter().enumerate() {
        slot[i] = k;
    }
    let fields: Vec<Vec<f64>> = sources
        .par_iter()
        .map(|&s| domain.distance_field(&mesh.node_point(s), &pts))
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(opts.n_pairs);
    for (si, (&s, d)) in sources.iter().zip(&fields).enumerate() {
        let quota = opts.n_pairs / sources.len() + usize::from(si < opts.n_pairs % sources.len());
        let mut groups = st.groups.clone();
        let cross: Vec<usize> = free
            .iter()
            .enumerate()
            .filter(|&(k, &i)| i != s && d[k] > CROSS_RATIO * mesh.nodes[i].dist(mesh.nodes[s]) + 1e-12)
            .map(|(_, &i)| i)
            .collect();
        if !cross.is_empty() {
            groups.push(cross);
        }
        let mut prng = ChaCha8Rng::seed_from_u64(opts.seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(si as u64 + 1)));
        let mut taken: Vec<usize> = Vec::with_capacity(quota);
        let mut k = 0;
        let mut attempts = 0;
        while taken.len() < quota && attempts < 50 * quota + 100 {
            let g = &groups[k % groups.len()];
            k += 1;
            attempts += 1;
            let y = g[prng.gen_range(0..g.len())];
            if y == s || taken.contains(&y) {
                continue;
            }
            taken.push(y);
        }
        for y in taken {
            let d_inner = d[slot[y]];
            let euclid = mesh.nodes[s].dist(mesh.nodes[y]);
            let class = if d_inner > CROSS_RATIO * euclid + 1e-12 {
                PairClass::CrossSlit
            } else if st.corner[s] || st.corner[y] {
                PairClass::Corner
            } else if st.deep_band[s] >= 3 || st.deep_band[y] >= 3 {
                PairClass::NearBoundary
            } else {
                PairClass::Interior
            };
            out.push(SamplePair { x: s, y, d_inner, euclid, class });
        }
    }
    Ok(out)
}

/// Distinct first points of a pair list, in order of appearance.
pub fn sources_of(pairs: &[SamplePair]) -> Vec<usize> {
    let mut out = Vec::new();
    for p in pairs {
        if !out.contains(&p.x) {
            out.push(p.x);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{mesh, slit_square, square};

    #[test]
    fn square_pairs_are_stratified_and_deterministic() {
        let d = square();
        let m = mesh(&d, 0.05);
        let a = stratified_pairs(&d, &m, &SampleOptions::default()).unwrap();
        let b = stratified_pairs(&d, &m, &SampleOptions::default()).unwrap();
        assert_eq!(a.len(), 200);
        assert_eq!(a, b);
        assert_eq!(sources_of(&a).len(), 16);
        for c in [PairClass::Interior, PairClass::NearBoundary, PairClass::Corner] {
            assert!(a.iter().any(|p| p.class == c), "{c:?}");
        }
        assert!(a.iter().all(|p| (p.d_inner - p.euclid).abs() < 1e-9));
    }

    #[test]
    fn slit_square_has_cross_pairs() {
        let d = slit_square();
        let m = mesh(&d, 0.05);
        let a = stratified_pairs(&d, &m, &SampleOptions::default()).unwrap();
        let cross: Vec<_> = a.iter().filter(|p| p.class == PairClass::CrossSlit).collect();
        assert!(cross.len() >= 5, "{}", cross.len());
        assert!(cross.iter().all(|p| p.d_inner > 1.5 * p.euclid));
    }
}
