//! Two-sided Gaussian envelopes normalised by the profile at representative points.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::samples::SamplePair;
use crate::error::{Error, Result};
use crate::geometry::{ambient_volume, representative_point, Mesh, PolygonDomain, RepresentativeRule};
use crate::solver::HeatKernelColumn;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    Upper,
    Lower,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    pub gaussian_c: f64,
    pub bound_kind: BoundKind,
    pub lambda: f64,
}

/// Smallest number of pairs accepted by the envelope fit.
pub const MIN_PAIRS: usize = 50;

/// Profile values at representative points, cached per node and radius.
pub struct RepresentativeValues<'a> {
    pub domain: &'a PolygonDomain,
    pub mesh: &'a Mesh,
    pub phi: &'a [f64],
    pub c_u: f64,
    pub rule: RepresentativeRule,
    cache: HashMap<(usize, u64), f64>,
}

impl<'a> RepresentativeValues<'a> {
    pub fn new(domain: &'a PolygonDomain, mesh: &'a Mesh, phi: &'a [f64], c_u: f64, rule: RepresentativeRule) -> Self {
        Self { domain, mesh, phi, c_u, rule, cache: HashMap::new() }
    }

    fn compute(&self, node: usize, r: f64) -> Result<f64> {
        let x = self.mesh.node_point(node);
        let p = representative_point(self.domain, &x, r, self.c_u, self.rule)?;
        let v = self.mesh.interpolate(self.phi, &p.into()).ok_or_else(|| {
            Error::SearchFailure(format!("representative point ({}, {}) is not covered by the mesh", p.x, p.y))
        })?;
        if !(v > 0.0) {
            return Err(Error::SearchFailure(format!("profile vanishes at representative point ({}, {})", p.x, p.y)));
        }
        Ok(v)
    }

    /// Fills the cache for every node and radius in parallel.
    pub fn prefill(&mut self, nodes: &[usize], radii: &[f64]) -> Result<()> {
        let todo: Vec<(usize, f64)> = nodes
            .iter()
            .flat_map(|&n| radii.iter().map(move |&r| (n, r)))
            .filter(|(n, r)| !self.cache.contains_key(&(*n, r.to_bits())))
            .collect();
        let vals: Vec<Result<f64>> = todo.par_iter().map(|&(n, r)| self.compute(n, r)).collect();
        for ((n, r), v) in todo.into_iter().zip(vals) {
            self.cache.insert((n, r.to_bits()), v?);
        }
        Ok(())
    }

    /// `φ(x_r)` for the mesh node `node`.
    pub fn get(&mut self, node: usize, r: f64) -> Result<f64> {
        if let Some(v) = self.cache.get(&(node, r.to_bits())) {
            return Ok(*v);
        }
        let v = self.compute(node, r)?;
        self.cache.insert((node, r.to_bits()), v);
        Ok(v)
    }

    pub(crate) fn cached(&self, node: usize, r: f64) -> f64 {
        self.cache[&(node, r.to_bits())]
    }
}

/// `φ(x)φ(y) e^{−c d²/t} / (√(V(x,√t) V(y,√t)) φ(x_√t) φ(y_√t))` without the
/// constant prefactor.
pub fn envelope_value(c: f64, t: f64, d_inner: f64, phi_x: f64, phi_y: f64, phi_xr: f64, phi_yr: f64, v_x: f64, v_y: f64) -> f64 {
    phi_x * phi_y * (-c * d_inner * d_inner / t).exp() / ((v_x * v_y).sqrt() * phi_xr * phi_yr)
}

/// Envelope at mesh nodes `x`, `y`.
pub fn envelope(params: &EnvelopeParams, reps: &mut RepresentativeValues, t: f64, x: usize, y: usize, d_inner: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("time must be positive, got {t}")));
    }
    if !(params.gaussian_c > 0.0) {
        return Err(Error::InvalidArgument(format!("Gaussian constant must be positive, got {}", params.gaussian_c)));
    }
    let r = t.sqrt();
    let (px, py) = (reps.phi[x], reps.phi[y]);
    let (rx, ry) = (reps.get(x, r)?, reps.get(y, r)?);
    let (mx, my) = (reps.mesh.nodes[x], reps.mesh.nodes[y]);
    Ok(envelope_value(params.gaussian_c, t, d_inner, px, py, rx, ry, ambient_volume(mx, r), ambient_volume(my, r)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub t: f64,
    pub x: usize,
    pub y: usize,
    pub ratio: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeFit {
    pub t: f64,
    pub a1: f64,
    pub a2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub sample_count: usize,
    pub c_up: f64,
    pub c_low: f64,
    /// `sup p / envelope_upper`.
    pub a1_emp: f64,
    /// `inf p / envelope_lower`.
    pub a2_emp: f64,
    pub worst_upper: Witness,
    pub worst_lower: Witness,
    pub t_range: (f64, f64),
    pub spread: f64,
    pub per_time: Vec<TimeFit>,
}

/// Kernel value and both envelopes for one pair at one time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub t: f64,
    pub x: usize,
    pub y: usize,
    pub p: f64,
    pub env_upper: f64,
    pub env_lower: f64,
}

fn ratio_rows(
    by_source: &HashMap<usize, &HeatKernelColumn>,
    reps: &RepresentativeValues,
    pairs: &[SamplePair],
    c_up: f64,
    c_low: f64,
    times: &[(usize, f64)],
) -> Result<Vec<RatioRow>> {
    let mut out = Vec::with_capacity(times.len() * pairs.len());
    for &(k, t) in times {
        let r = t.sqrt();
        let v = std::f64::consts::PI * t;
        for p in pairs {
            let col = by_source
                .get(&p.x)
                .ok_or_else(|| Error::InvalidArgument(format!("no kernel column from node {}", p.x)))?;
            let (px, py) = (reps.phi[p.x], reps.phi[p.y]);
            let (rx, ry) = (reps.cached(p.x, r), reps.cached(p.y, r));
            out.push(RatioRow {
                t,
                x: p.x,
                y: p.y,
                p: col.values[k][p.y],
                env_upper: envelope_value(c_up, t, p.d_inner, px, py, rx, ry, v, v),
                env_lower: envelope_value(c_low, t, p.d_inner, px, py, rx, ry, v, v),
            });
        }
    }
    Ok(out)
}

fn fit_times(columns: &[HeatKernelColumn], t_range: (f64, f64)) -> Result<Vec<(usize, f64)>> {
    let times: Vec<(usize, f64)> = columns
        .first()
        .ok_or_else(|| Error::InvalidArgument("no kernel columns".into()))?
        .times
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, t)| t >= t_range.0 * (1.0 - 1e-12) && t <= t_range.1 * (1.0 + 1e-12))
        .collect();
    if times.is_empty() {
        return Err(Error::InvalidArgument(format!("no column time inside [{}, {}]", t_range.0, t_range.1)));
    }
    Ok(times)
}

fn prefill_pairs(reps: &mut RepresentativeValues, pairs: &[SamplePair], times: &[(usize, f64)]) -> Result<()> {
    let mut nodes: Vec<usize> = pairs.iter().flat_map(|p| [p.x, p.y]).collect();
    nodes.sort_unstable();
    nodes.dedup();
    let radii: Vec<f64> = times.iter().map(|&(_, t)| t.sqrt()).collect();
    reps.prefill(&nodes, &radii)
}

/// Time-major table of kernel values and envelopes over `pairs`.
pub fn ratio_table(
    columns: &[HeatKernelColumn],
    reps: &mut RepresentativeValues,
    pairs: &[SamplePair],
    c_up: f64,
    c_low: f64,
    t_range: (f64, f64),
) -> Result<Vec<RatioRow>> {
    let times = fit_times(columns, t_range)?;
    prefill_pairs(reps, pairs, &times)?;
    let by_source: HashMap<usize, &HeatKernelColumn> = columns.iter().map(|c| (c.source_node, c)).collect();
    ratio_rows(&by_source, reps, pairs, c_up, c_low, &times)
}

/// Sup and inf of the kernel over the two envelopes across pairs and the
/// column times inside `t_range`.
pub fn fit_envelope_constants(
    columns: &[HeatKernelColumn],
    reps: &mut RepresentativeValues,
    pairs: &[SamplePair],
    c_up: f64,
    c_low: f64,
    t_range: (f64, f64),
) -> Result<FitReport> {
    if pairs.len() < MIN_PAIRS {
        return Err(Error::InsufficientSamples { got: pairs.len(), need: MIN_PAIRS });
    }
    if !(c_up > 0.0 && c_up < 0.25 && c_low > 0.25) {
        return Err(Error::InvalidArgument(format!("need 0 < c_up < 1/4 < c_low, got {c_up}, {c_low}")));
    }
    let times = fit_times(columns, t_range)?;
    prefill_pairs(reps, pairs, &times)?;
    let by_source: HashMap<usize, &HeatKernelColumn> = columns.iter().map(|c| (c.source_node, c)).collect();
    let table = ratio_rows(&by_source, reps, pairs, c_up, c_low, &times)?;
    let mut per_time = Vec::with_capacity(times.len());
    let nan = Witness { t: f64::NAN, x: 0, y: 0, ratio: f64::NAN };
    let (mut up, mut low) = (Witness { ratio: f64::NEG_INFINITY, ..nan }, Witness { ratio: f64::INFINITY, ..nan });
    for rows in table.chunks(pairs.len()) {
        let t = rows[0].t;
        let (mut a1, mut a2) = (f64::NEG_INFINITY, f64::INFINITY);
        for row in rows {
            let (ru, rl) = (row.p / row.env_upper, row.p / row.env_lower);
            a1 = a1.max(ru);
            a2 = a2.min(rl);
            if ru > up.ratio {
                up = Witness { t, x: row.x, y: row.y, ratio: ru };
            }
            if rl < low.ratio {
                low = Witness { t, x: row.x, y: row.y, ratio: rl };
            }
        }
        per_time.push(TimeFit { t, a1, a2 });
    }
    Ok(FitReport {
        sample_count: pairs.len(),
        c_up,
        c_low,
        a1_emp: up.ratio,
        a2_emp: low.ratio,
        worst_upper: up,
        worst_lower: low,
        t_range: (times[0].1, times[times.len() - 1].1),
        spread: up.ratio / low.ratio,
        per_time,
    })
}
