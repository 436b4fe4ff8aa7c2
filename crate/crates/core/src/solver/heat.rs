//! Time stepping of the semi-discrete heat equation with lumped mass.
//!
//! Forward evolution solves `M u' = -K u` (so `u(t) = P_t u(0)`); adjoint
//! evolution solves `M v' = -Kᵀ v`. Started from the lumped delta `e_s / m_s`,
//! the adjoint evolution yields `y ↦ p(t, s, y)`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::DiscreteForm;
use crate::sparse::{CsrMatrix, SparseLu};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    BackwardEuler,
    CrankNicolson,
    /// Exact semi-discrete semigroup through a dense matrix exponential.
    Exponential,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::BackwardEuler => "backward-euler",
            Scheme::CrankNicolson => "crank-nicolson",
            Scheme::Exponential => "exponential",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Adjoint,
}

/// Largest free-node count accepted by the dense exponential scheme.
pub const EXPONENTIAL_MAX_DIM: usize = 2500;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HeatOptions {
    pub scheme: Scheme,
    /// First step length.
    pub dt0: f64,
    /// Step lengths double every `steps_per_level` steps up to `dt_max`.
    pub dt_max: f64,
    pub steps_per_level: usize,
}

impl HeatOptions {
    pub fn new(scheme: Scheme, dt0: f64) -> Self {
        Self { scheme, dt0, dt_max: 1e-3, steps_per_level: 10 }
    }
}

impl Default for HeatOptions {
    fn default() -> Self {
        Self::new(Scheme::BackwardEuler, 1e-6)
    }
}

/// Step end times of the graded grid, landing exactly on every requested time.
pub fn time_grid(times: &[f64], opts: &HeatOptions) -> Result<Vec<f64>> {
    check_times(times)?;
    if !(opts.dt0 > 0.0) || !(opts.dt_max >= opts.dt0) || opts.steps_per_level == 0 {
        return Err(Error::InvalidArgument(format!(
            "need 0 < dt0 <= dt_max, got dt0 = {}, dt_max = {}",
            opts.dt0, opts.dt_max
        )));
    }
    let mut out = Vec::new();
    let mut t = 0.0;
    let mut dt = opts.dt0;
    let mut count = 0;
    for &target in times {
        while t < target {
            let next = t + dt;
            t = if next >= target * (1.0 - 1e-12) { target } else { next };
            out.push(t);
            count += 1;
            if count % opts.steps_per_level == 0 {
                dt = (2.0 * dt).min(opts.dt_max);
            }
        }
    }
    Ok(out)
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidArgument("no output times requested".into()));
    }
    if times[0] <= 0.0 || times.windows(2).any(|w| w[1] <= w[0]) || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("times must be positive, finite and increasing".into()));
    }
    Ok(())
}

/// Reusable stepping state: factorizations cached per step length.
pub struct Propagator<'a> {
    form: &'a DiscreteForm,
    dir: Direction,
    opts: HeatOptions,
    lus: HashMap<u64, SparseLu>,
    generator: Option<DMatrix<f64>>,
    exps: HashMap<u64, DMatrix<f64>>,
}

impl<'a> Propagator<'a> {
    pub fn new(form: &'a DiscreteForm, dir: Direction, opts: HeatOptions) -> Result<Self> {
        if opts.scheme == Scheme::Exponential && form.n_free() > EXPONENTIAL_MAX_DIM {
            return Err(Error::InvalidArgument(format!(
                "exponential scheme limited to {EXPONENTIAL_MAX_DIM} free nodes, mesh has {}",
                form.n_free()
            )));
        }
        Ok(Self { form, dir, opts, lus: HashMap::new(), generator: None, exps: HashMap::new() })
    }

    pub fn options(&self) -> &HeatOptions {
        &self.opts
    }

    fn factor(&mut self, theta_dt: f64) -> Result<&SparseLu> {
        let key = theta_dt.to_bits();
        if !self.lus.contains_key(&key) {
            let a = self.form.k_int.add(theta_dt, &CsrMatrix::from_diagonal(&self.form.ml_int), 1.0);
            self.lus.insert(key, a.lu()?);
        }
        Ok(&self.lus[&key])
    }

    fn solve(&mut self, theta_dt: f64, rhs: &[f64]) -> Result<Vec<f64>> {
        let transpose = self.dir == Direction::Adjoint;
        let lu = self.factor(theta_dt)?;
        if transpose {
            lu.solve_transpose(rhs)
        } else {
            lu.solve(rhs)
        }
    }

    fn apply_k(&self, v: &[f64]) -> Vec<f64> {
        match self.dir {
            Direction::Forward => self.form.k_int.mul_vec(v),
            Direction::Adjoint => self.form.k_int.tmul_vec(v),
        }
    }

    fn exponential(&mut self, dt: f64) -> &DMatrix<f64> {
        let key = dt.to_bits();
        if !self.exps.contains_key(&key) {
            let g = self.generator.get_or_insert_with(|| {
                let k = self.form.k_int.to_dense();
                let k = match self.dir {
                    Direction::Forward => k,
                    Direction::Adjoint => k.transpose(),
                };
                let mut g = k;
                for (i, m) in self.form.ml_int.iter().enumerate() {
                    g.row_mut(i).scale_mut(1.0 / m);
                }
                g
            });
            let e = (&*g * (-dt)).exp();
            self.exps.insert(key, e);
        }
        &self.exps[&key]
    }

    /// Advances interior values by one step of length `dt`.
    pub fn step(&mut self, v: &[f64], dt: f64) -> Result<Vec<f64>> {
        let m = &self.form.ml_int;
        match self.opts.scheme {
            Scheme::BackwardEuler => {
                let rhs: Vec<f64> = v.iter().zip(m).map(|(a, w)| a * w).collect();
                self.solve(dt, &rhs)
            }
            Scheme::CrankNicolson => {
                let kv = self.apply_k(v);
                let rhs: Vec<f64> = v.iter().zip(m).zip(&kv).map(|((a, w), k)| a * w - 0.5 * dt * k).collect();
                self.solve(0.5 * dt, &rhs)
            }
            Scheme::Exponential => {
                let e = self.exponential(dt);
                Ok((e * DVector::from_column_slice(v)).as_slice().to_vec())
            }
        }
    }

    /// Interior values at each requested time.
    pub fn evolve(&mut self, v0: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_times(times)?;
        let mut out = Vec::with_capacity(times.len());
        let mut v = v0.to_vec();
        if self.opts.scheme == Scheme::Exponential {
            let mut t = 0.0;
            for &target in times {
                v = self.step(&v, target - t)?;
                t = target;
                out.push(v.clone());
            }
            return Ok(out);
        }
        let grid = time_grid(times, &self.opts)?;
        let mut t = 0.0;
        let mut next = 0;
        for &tn in &grid {
            v = self.step(&v, tn - t)?;
            t = tn;
            if next < times.len() && tn == times[next] {
                out.push(v.clone());
                next += 1;
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HeatKernelColumn {
    pub source_node: usize,
    pub times: Vec<f64>,
    /// `values[k][y] = p(times[k], source, y)` over all nodes.
    pub values: Vec<Vec<f64>>,
    pub scheme: Scheme,
    /// Most negative value seen (0 if none).
    pub min_value: f64,
    pub negativity_warning: bool,
}

impl HeatKernelColumn {
    /// `∫ p(t, source, y) dμ(y)` at each stored time, with lumped mass.
    pub fn masses(&self, m_lumped: &[f64]) -> Vec<f64> {
        self.values.iter().map(|v| v.iter().zip(m_lumped).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-12 * t.max(1.0))
    }
}

/// Lumped delta at a free node, in interior coordinates.
pub fn lumped_delta(form: &DiscreteForm, node: usize) -> Result<Vec<f64>> {
    let k = *form
        .interior_index
        .get(node)
        .ok_or_else(|| Error::InvalidArgument(format!("node {node} out of range")))?;
    if k == usize::MAX {
        return Err(Error::InvalidArgument(format!("node {node} is a Dirichlet node")));
    }
    let mut v = vec![0.0; form.n_free()];
    v[k] = 1.0 / form.ml_int[k];
    Ok(v)
}

/// `y ↦ p(t, source, y)` at each requested time.
pub fn heat_column(form: &DiscreteForm, source: usize, times: &[f64], scheme: Scheme, dt0: f64) -> Result<HeatKernelColumn> {
    let mut opts = HeatOptions::new(scheme, dt0);
    opts.dt_max = opts.dt_max.max(dt0);
    heat_column_with(form, source, times, &opts)
}

pub fn heat_column_with(form: &DiscreteForm, source: usize, times: &[f64], opts: &HeatOptions) -> Result<HeatKernelColumn> {
    let mut prop = Propagator::new(form, Direction::Adjoint, opts.clone())?;
    column_from(&mut prop, form, source, times)
}

fn column_from(prop: &mut Propagator, form: &DiscreteForm, source: usize, times: &[f64]) -> Result<HeatKernelColumn> {
    let v0 = lumped_delta(form, source)?;
    let vals = prop.evolve(&v0, times)?;
    let min_value = vals.iter().flatten().copied().fold(0.0, f64::min);
    let negativity_warning = prop.opts.scheme == Scheme::CrankNicolson && min_value < -1e-10;
    if negativity_warning {
        log::warn!("crank-nicolson column from node {source} reached {min_value:e}");
    }
    Ok(HeatKernelColumn {
        source_node: source,
        times: times.to_vec(),
        values: vals.iter().map(|v| form.extend(v)).collect(),
        scheme: prop.opts.scheme,
        min_value,
        negativity_warning,
    })
}

/// Columns for several sources. Each worker owns its factorizations.
pub fn heat_columns(form: &DiscreteForm, sources: &[usize], times: &[f64], opts: &HeatOptions) -> Result<Vec<HeatKernelColumn>> {
    if opts.scheme == Scheme::Exponential {
        // one dense exponential serves every source
        let mut prop = Propagator::new(form, Direction::Adjoint, opts.clone())?;
        return sources.iter().map(|&s| column_from(&mut prop, form, s, times)).collect();
    }
    sources
        .par_iter()
        .map_init(
            || None::<Propagator>,
            |slot, &s| {
                if slot.is_none() {
                    *slot = Some(Propagator::new(form, Direction::Adjoint, opts.clone())?);
                }
                column_from(slot.as_mut().unwrap(), form, s, times)
            },
        )
        .collect()
}

/// `u(t) = P_t f` for nodal data `f` (Dirichlet entries ignored).
pub fn evolve_function(form: &DiscreteForm, f: &[f64], times: &[f64], opts: &HeatOptions) -> Result<Vec<Vec<f64>>> {
    let mut prop = Propagator::new(form, Direction::Forward, opts.clone())?;
    let out = prop.evolve(&form.restrict_vec(f), times)?;
    Ok(out.iter().map(|v| form.extend(v)).collect())
}
