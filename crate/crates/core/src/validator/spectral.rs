//! Long-time kernel behaviour: ultracontractivity ratios, convergence to the
//! ground state and domination of higher eigenfunctions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::envelope::RepresentativeValues;
use crate::error::{Error, Result};
use crate::forms::DiscreteForm;
use crate::solver::{EigenPair, HeatKernelColumn};
use crate::stats::{loglog_fit, linear_fit, LinearFit};

/// `φ*` scaled so that `∫ φ φ* dμ = 1` (lumped mass).
pub fn normalized_star(phi: &EigenPair, phi_star: &EigenPair, form: &DiscreteForm) -> Result<Vec<f64>> {
    let s: f64 = phi.phi.iter().zip(&phi_star.phi).zip(&form.m_lumped).map(|((a, b), m)| a * b * m).sum();
    if !(s > 0.0) {
        return Err(Error::NonPositiveProfile(format!("∫ φ φ* dμ = {s:e}")));
    }
    Ok(phi_star.phi.iter().map(|v| v / s).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UltraTime {
    pub t: f64,
    /// Extremes of `e^{λt} p / (φ(x) φ(y))`.
    pub a3: f64,
    pub big_a3: f64,
    /// Extremes of `e^{λt} p / (φ(x) φ*(y))` with `∫ φ φ* dμ = 1`.
    pub a3_star: f64,
    pub big_a3_star: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UltraReport {
    pub lambda: f64,
    pub r: f64,
    pub per_t: Vec<UltraTime>,
    /// Extremes over `t ≥ R²`.
    pub a3_emp: f64,
    pub big_a3_emp: f64,
    pub a3_star_emp: f64,
    pub big_a3_star_emp: f64,
}

fn ratio_extremes(col: &HeatKernelColumn, k: usize, lambda: f64, phi: &[f64], other: &[f64], free: &[usize]) -> (f64, f64) {
    let x = col.source_node;
    let g = (lambda * col.times[k]).exp() / phi[x];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &y in free {
        let v = g * col.values[k][y] / other[y];
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Per-time extremes of the normalised kernel over sources × free nodes.
pub fn check_ultracontractivity(
    columns: &[HeatKernelColumn],
    phi: &EigenPair,
    phi_star: &EigenPair,
    form: &DiscreteForm,
    r: f64,
) -> Result<UltraReport> {
    let first = columns.first().ok_or_else(|| Error::InvalidArgument("no kernel columns".into()))?;
    let star = normalized_star(phi, phi_star, form)?;
    let lambda = phi.lambda;
    let per_t: Vec<UltraTime> = (0..first.times.len())
        .map(|k| {
            let mut u = UltraTime {
                t: first.times[k],
                a3: f64::INFINITY,
                big_a3: f64::NEG_INFINITY,
                a3_star: f64::INFINITY,
                big_a3_star: f64::NEG_INFINITY,
            };
            for c in columns {
                let (lo, hi) = ratio_extremes(c, k, lambda, &phi.phi, &phi.phi, &form.interior);
                let (slo, shi) = ratio_extremes(c, k, lambda, &phi.phi, &star, &form.interior);
                u.a3 = u.a3.min(lo);
                u.big_a3 = u.big_a3.max(hi);
                u.a3_star = u.a3_star.min(slo);
                u.big_a3_star = u.big_a3_star.max(shi);
            }
            u
        })
        .collect();
    let late: Vec<&UltraTime> = per_t.iter().filter(|u| u.t >= r * r * (1.0 - 1e-12)).collect();
    if late.is_empty() {
        return Err(Error::InsufficientSamples { got: 0, need: 1 });
    }
    let fold = |f: fn(&UltraTime) -> f64, init: f64, op: fn(f64, f64) -> f64| late.iter().map(|u| f(u)).fold(init, op);
    Ok(UltraReport {
        lambda,
        r,
        a3_emp: fold(|u| u.a3, f64::INFINITY, f64::min),
        big_a3_emp: fold(|u| u.big_a3, f64::NEG_INFINITY, f64::max),
        a3_star_emp: fold(|u| u.a3_star, f64::INFINITY, f64::min),
        big_a3_star_emp: fold(|u| u.big_a3_star, f64::NEG_INFINITY, f64::max),
        per_t,
    })
}

/// `(1/R²) log(1 / (1 − a₃/A₃))`.
pub fn omega_predicted(a3: f64, big_a3: f64, r: f64) -> f64 {
    (1.0 / (1.0 - a3 / big_a3)).ln() / (r * r)
}

/// Deviations used in the convergence regression.
pub const DECAY_WINDOW: (f64, f64) = (1e-9, 1e-3);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub a3_emp: f64,
    pub big_a3_emp: f64,
    /// `w = φ*/φ` at every node (zero on the boundary), `∫ w φ² dμ = 1`.
    pub w: Vec<f64>,
    pub w_min: f64,
    pub w_max: f64,
    pub w_normalization: f64,
    pub omega_measured: f64,
    pub omega_predicted: f64,
    pub omega_spec: f64,
    pub a4_emp: f64,
    /// `(t, D(t))` with `D(t) = max |e^{λt} p / (φ(x) φ(y) w(y)) − 1|`.
    pub decay: Vec<(f64, f64)>,
    /// Same deviation with `w` omitted.
    pub decay_phiphi: Vec<(f64, f64)>,
    pub fit_window: (f64, f64),
    pub fit: LinearFit,
    pub r: f64,
}

/// Fits `D(t) ≈ A₄ e^{−ωt}` on the decade window where `D` is resolved.
pub fn measure_convergence(
    columns: &[HeatKernelColumn],
    phi: &EigenPair,
    phi_star: &EigenPair,
    lambda2: f64,
    form: &DiscreteForm,
    ultra: &UltraReport,
) -> Result<ConvergenceReport> {
    let first = columns.first().ok_or_else(|| Error::InvalidArgument("no kernel columns".into()))?;
    let star = normalized_star(phi, phi_star, form)?;
    let lambda = phi.lambda;
    let mut w = vec![0.0; phi.phi.len()];
    for &i in &form.interior {
        w[i] = star[i] / phi.phi[i];
    }
    let w_normalization: f64 = form.interior.iter().map(|&i| w[i] * phi.phi[i] * phi.phi[i] * form.m_lumped[i]).sum();
    let (w_min, w_max) = form
        .interior
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &i| (a.min(w[i]), b.max(w[i])));
    let dev = |k: usize, other: &[f64]| -> f64 {
        columns
            .iter()
            .map(|c| {
                let (lo, hi) = ratio_extremes(c, k, lambda, &phi.phi, other, &form.interior);
                (lo - 1.0).abs().max((hi - 1.0).abs())
            })
            .fold(0.0, f64::max)
    };
    let decay: Vec<(f64, f64)> = (0..first.times.len()).map(|k| (first.times[k], dev(k, &star))).collect();
    let decay_phiphi: Vec<(f64, f64)> = (0..first.times.len()).map(|k| (first.times[k], dev(k, &phi.phi))).collect();

    let window: Vec<(f64, f64)> =
        decay.iter().copied().filter(|&(_, d)| d >= DECAY_WINDOW.0 && d <= DECAY_WINDOW.1).collect();
    if window.len() < 3 {
        return Err(Error::Fit(format!(
            "{} deviations inside [{:e}, {:e}]; extend the time range",
            window.len(),
            DECAY_WINDOW.0,
            DECAY_WINDOW.1
        )));
    }
    if window.windows(2).any(|p| p[1].1 > p[0].1) {
        return Err(Error::Fit("deviation is not monotone on the fit window".into()));
    }
    let ts: Vec<f64> = window.iter().map(|p| p.0).collect();
    let ld: Vec<f64> = window.iter().map(|p| p.1.ln()).collect();
    let fit = linear_fit(&ts, &ld)?;
    let omega_measured = -fit.slope;
    let a4_emp = window.iter().map(|&(t, d)| d * (omega_measured * t).exp()).fold(0.0, f64::max);
    Ok(ConvergenceReport {
        a3_emp: ultra.a3_emp,
        big_a3_emp: ultra.big_a3_emp,
        w,
        w_min,
        w_max,
        w_normalization,
        omega_measured,
        omega_predicted: omega_predicted(ultra.a3_emp, ultra.big_a3_emp, ultra.r),
        omega_spec: lambda2 - lambda,
        a4_emp,
        decay,
        decay_phiphi,
        fit_window: (ts[0], ts[ts.len() - 1]),
        fit,
        r: ultra.r,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenBound {
    pub index: usize,
    pub lambda: f64,
    pub eta: f64,
    pub radius: f64,
    /// Set when `1/√η` exceeded the inner diameter and was clamped.
    pub clamped: bool,
    pub a5_emp: f64,
    /// `max |ψ|/φ` over free nodes.
    pub max_ratio: f64,
    /// `max |ψ|/φ` over free nodes at depth at least `interior_depth`.
    pub max_interior_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenBoundReport {
    pub entries: Vec<EigenBound>,
    /// Fit of `max |ψ|/φ ≈ C |λ_ψ|^α`.
    pub c_fit: f64,
    pub alpha_fit: f64,
    pub spectral_gap: f64,
    pub interior_depth: f64,
}

/// Domination of higher eigenfunctions by the ground state. `pairs` are the
/// computed eigenpairs in order, the first being `φ`.
pub fn check_eigenfunction_bound(pairs: &[EigenPair], reps: &mut RepresentativeValues, form: &DiscreteForm) -> Result<EigenBoundReport> {
    let phi = pairs.first().ok_or_else(|| Error::InvalidArgument("no eigenpairs".into()))?;
    if pairs.len() < 2 {
        return Err(Error::InvalidArgument("need at least one eigenpair beyond the ground state".into()));
    }
    let domain = reps.domain;
    let mesh = reps.mesh;
    let depth: Vec<f64> = form.interior.iter().map(|&i| domain.boundary_distance_unchecked(mesh.nodes[i])).collect();
    let interior_depth = depth.iter().copied().fold(0.0, f64::max) / 4.0;
    let mut entries = Vec::new();
    for (index, psi) in pairs.iter().enumerate().skip(1) {
        let eta = psi.lambda - phi.lambda;
        if !(eta > 0.0) {
            return Err(Error::InvalidArgument(format!("eigenpair {index} has η = {eta:e} ≤ 0")));
        }
        let raw = 1.0 / eta.sqrt();
        let clamped = raw > domain.diam_inner;
        if clamped {
            log::warn!("eigenpair {index}: radius 1/√η = {raw} clamped to the inner diameter");
        }
        let radius = raw.min(domain.diam_inner);
        reps.prefill(&form.interior, &[radius])?;
        let v = std::f64::consts::PI * radius * radius;
        let rows: Vec<(f64, f64, bool)> = form
            .interior
            .par_iter()
            .zip(&depth)
            .map(|(&i, &d)| {
                let ratio = psi.phi[i].abs() / phi.phi[i];
                (ratio, ratio * v.sqrt() * reps.cached(i, radius), d >= interior_depth)
            })
            .collect();
        let max_ratio = rows.iter().map(|r| r.0).fold(0.0, f64::max);
        let max_interior_ratio = rows.iter().filter(|r| r.2).map(|r| r.0).fold(0.0, f64::max);
        let a5_emp = rows.iter().map(|r| r.1).fold(0.0, f64::max);
        entries.push(EigenBound { index, lambda: psi.lambda, eta, radius, clamped, a5_emp, max_ratio, max_interior_ratio });
    }
    let (c_fit, alpha_fit) = if entries.len() >= 2 {
        let lam: Vec<f64> = entries.iter().map(|e| e.lambda.abs()).collect();
        let m: Vec<f64> = entries.iter().map(|e| e.max_ratio).collect();
        match loglog_fit(&lam, &m) {
            Ok(f) => (f.intercept.exp(), f.slope),
            Err(_) => (f64::NAN, f64::NAN),
        }
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(EigenBoundReport { spectral_gap: entries[0].eta, entries, c_fit, alpha_fit, interior_depth })
}
