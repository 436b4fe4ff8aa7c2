//! Doob transforms built from positive profiles.
//!
//! With `D = diag(h)` on the free nodes, the transformed pencil is
//! `K_h = D (K + γ M) D`, `M_h = D M D` (lumped `M`). Its kernel with respect to
//! `h² dμ` satisfies `p(t, x, y) = e^{γt} h(x) h(y) p_h(t, x, y)`, and for an
//! eigenfunction profile `K_h 𝟙 = 0`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forms::{p1_gradients, CoefficientField, DiscreteForm};
use crate::geometry::{representative_point, DomainPoint, Mesh, Point, PolygonDomain, RepresentativeRule};
use crate::solver::{heat_columns, time_grid, Direction, EigenPair, GreenColumn, HeatOptions, Propagator, Scheme};
use crate::sparse::CsrMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    Eigenfunction,
    Green,
}

#[derive(Clone, Debug, Serialize)]
pub struct Profile {
    pub kind: ProfileKind,
    /// Nodal values: positive on free nodes, zero on Dirichlet nodes.
    pub h: Vec<f64>,
    /// Shift with `(L + γ) h = 0` away from the pole.
    pub gamma: f64,
    pub pole_node: Option<usize>,
    /// Pole position and the radius of the neighbourhood that balls must avoid.
    pub excluded: Option<(Point, f64)>,
}

pub enum ProfileSource<'a> {
    Eigen(&'a EigenPair),
    Green(&'a GreenColumn),
}

/// Pole exclusion radius in units of the mesh size.
pub const POLE_EXCLUSION_FACTOR: f64 = 4.0;

fn check_positive(h: &[f64], form: &DiscreteForm) -> Result<()> {
    if h.len() != form.n_nodes() {
        return Err(Error::InvalidArgument(format!("profile has {} values for {} nodes", h.len(), form.n_nodes())));
    }
    let negative = form.interior.iter().filter(|&&i| !(h[i] > 0.0)).count();
    if negative > 0 {
        return Err(Error::NonPositiveProfile(format!("{negative} free nodes with h <= 0")));
    }
    Ok(())
}

pub fn make_profile(source: ProfileSource, form: &DiscreteForm, mesh: &Mesh) -> Result<Profile> {
    match source {
        ProfileSource::Eigen(pair) => {
            if pair.lambda_im != 0.0 {
                return Err(Error::NonPositiveProfile("eigenvalue is not real".into()));
            }
            check_positive(&pair.phi, form)?;
            Ok(Profile { kind: ProfileKind::Eigenfunction, h: pair.phi.clone(), gamma: -pair.lambda, pole_node: None, excluded: None })
        }
        ProfileSource::Green(g) => {
            check_positive(&g.values, form)?;
            let eps = POLE_EXCLUSION_FACTOR * mesh.h_max;
            Ok(Profile {
                kind: ProfileKind::Green,
                h: g.values.clone(),
                gamma: 0.0,
                pole_node: Some(g.pole_node),
                excluded: Some((mesh.nodes[g.pole_node], eps)),
            })
        }
    }
}

#[derive(Clone, Debug)]
pub struct WeightedForm {
    /// The transformed pencil packaged as a form, so the heat solvers apply.
    pub form: DiscreteForm,
    /// Profile on the free nodes.
    pub h_int: Vec<f64>,
    pub gamma: f64,
    pub kind: ProfileKind,
    /// `max |K_h 𝟙| / max diag(K_h)` over free nodes.
    pub generator_defect: f64,
}

impl WeightedForm {
    pub fn k_h(&self) -> &CsrMatrix {
        &self.form.k_int
    }

    pub fn m_h(&self) -> &[f64] {
        &self.form.ml_int
    }
}

/// Diagonal conjugation of the form by the profile.
pub fn transform(form: &DiscreteForm, profile: &Profile) -> Result<WeightedForm> {
    let h = &profile.h;
    if h.len() != form.n_nodes() {
        return Err(Error::IdentityViolation { max_rel_err: f64::INFINITY });
    }
    // the zero set of h must be exactly the Dirichlet set
    for i in 0..h.len() {
        let bad = if form.dirichlet_mask[i] { h[i] != 0.0 } else { !(h[i] > 0.0) };
        if bad {
            return Err(Error::IdentityViolation { max_rel_err: f64::INFINITY });
        }
    }
    let gamma = profile.gamma;
    let ml_full = CsrMatrix::from_diagonal(&form.m_lumped);
    let conj = |a: &CsrMatrix| a.scale_rows_cols(h, h);
    let k = conj(&form.k.add(1.0, &ml_full, gamma));
    let h_int = form.restrict_vec(h);
    let k_int = form.k_int.add(1.0, &CsrMatrix::from_diagonal(&form.ml_int), gamma).scale_rows_cols(&h_int, &h_int);
    let m_lumped: Vec<f64> = form.m_lumped.iter().zip(h).map(|(m, v)| m * v * v).collect();
    let ml_int = form.restrict_vec(&m_lumped);
    let out = DiscreteForm {
        k_s: conj(&form.k_s),
        k_b: conj(&form.k_b),
        k_d: conj(&form.k_d),
        k_c: conj(&form.k_c.add(1.0, &ml_full, gamma)),
        m: conj(&form.m),
        m_lumped,
        k,
        dirichlet_mask: form.dirichlet_mask.clone(),
        interior: form.interior.clone(),
        interior_index: form.interior_index.clone(),
        m_int: form.m_int.scale_rows_cols(&h_int, &h_int),
        k_int,
        ml_int,
        symmetric: form.symmetric,
    };

    // generator check: M_h⁻¹ K_h v = D⁻¹ M⁻¹ (K + γM) D v on a fixed probe
    let probe: Vec<f64> = (0..h_int.len()).map(|i| 1.0 + 0.5 * ((i as f64) * 0.618_033_988_75).fract()).collect();
    let lhs: Vec<f64> = out.k_int.mul_vec(&probe).iter().zip(&out.ml_int).map(|(a, m)| a / m).collect();
    let dv: Vec<f64> = probe.iter().zip(&h_int).map(|(a, b)| a * b).collect();
    let kdv = form.k_int.mul_vec(&dv);
    let rhs: Vec<f64> = (0..h_int.len())
        .map(|i| (kdv[i] / form.ml_int[i] + gamma * dv[i]) / h_int[i])
        .collect();
    let scale = rhs.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let err = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
    if !(err <= 1e-10) {
        return Err(Error::IdentityViolation { max_rel_err: err });
    }

    let ones = vec![1.0; h_int.len()];
    let k1 = out.k_int.mul_vec(&ones);
    let dmax = out.k_int.diagonal().iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let generator_defect = k1.iter().map(|v| v.abs()).fold(0.0, f64::max) / dmax;
    Ok(WeightedForm { form: out, h_int, gamma, kind: profile.kind, generator_defect })
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityReport {
    pub scheme: Scheme,
    pub sources: Vec<usize>,
    pub times: Vec<f64>,
    /// Largest of `max_y |p − e^{γt} h(x) h(y) p_h| / max_y |p|` over sources and times.
    pub max_rel_err: f64,
    /// Largest `‖u_n − 𝟙‖_∞` along the time grid for `u_0 = 𝟙` under the
    /// transformed semigroup; eigenfunction profiles only.
    pub markov_defect: Option<f64>,
    pub steps: usize,
}

/// Time-stepped check of the kernel identity and the Markov property.
pub fn check_identity(
    form: &DiscreteForm,
    weighted: &WeightedForm,
    sources: &[usize],
    times: &[f64],
    opts: &HeatOptions,
) -> Result<IdentityReport> {
    let p = heat_columns(form, sources, times, opts)?;
    let ph = heat_columns(&weighted.form, sources, times, opts)?;
    let h = weighted.form.extend(&weighted.h_int);
    let mut max_rel_err: f64 = 0.0;
    for (a, b) in p.iter().zip(&ph) {
        let hs = h[a.source_node];
        for (k, &t) in times.iter().enumerate() {
            let g = (weighted.gamma * t).exp();
            let scale = a.values[k].iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            let err = a.values[k]
                .iter()
                .zip(&b.values[k])
                .zip(&h)
                .map(|((pv, qv), hy)| (pv - g * hs * hy * qv).abs())
                .fold(0.0, f64::max);
            max_rel_err = max_rel_err.max(err / scale);
        }
    }

    let grid = if opts.scheme == Scheme::Exponential { times.to_vec() } else { time_grid(times, opts)? };
    let markov_defect = if weighted.kind == ProfileKind::Eigenfunction {
        let mut prop = Propagator::new(&weighted.form, Direction::Forward, opts.clone())?;
        let mut u = vec![1.0; weighted.h_int.len()];
        let mut t = 0.0;
        let mut worst: f64 = 0.0;
        for &tn in &grid {
            u = prop.step(&u, tn - t)?;
            t = tn;
            worst = worst.max(u.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max));
        }
        Some(worst)
    } else {
        None
    };
    Ok(IdentityReport {
        scheme: opts.scheme,
        sources: sources.to_vec(),
        times: times.to_vec(),
        max_rel_err,
        markov_defect,
        steps: grid.len(),
    })
}

/// `∫ f² dA` over a triangle on which `f` is affine with vertex values `v`.
fn tri_square_integral(area: f64, v: [f64; 3]) -> f64 {
    area / 6.0 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[0] * v[1] + v[0] * v[2] + v[1] * v[2])
}

/// `∫ h² dA` over the part of a triangle where the affine interpolant of `d`
/// stays below `r`; `h` is affine as well, so the result is exact.
fn clipped_square_integral(p: [Point; 3], d: [f64; 3], h: [f64; 3], r: f64) -> f64 {
    let mut poly: Vec<(Point, f64)> = Vec::with_capacity(4);
    for k in 0..3 {
        let (a, b) = (k, (k + 1) % 3);
        let (ina, inb) = (d[a] < r, d[b] < r);
        if ina {
            poly.push((p[a], h[a]));
        }
        if ina != inb {
            let s = (r - d[a]) / (d[b] - d[a]);
            poly.push((p[a].lerp(p[b], s), h[a] + s * (h[b] - h[a])));
        }
    }
    let mut total = 0.0;
    for k in 1..poly.len().saturating_sub(1) {
        let (q0, q1, q2) = (poly[0], poly[k], poly[k + 1]);
        let area = 0.5 * (q1.0 - q0.0).cross(q2.0 - q0.0).abs();
        total += tri_square_integral(area, [q0.1, q1.1, q2.1]);
    }
    total
}

#[derive(Clone, Debug, Serialize)]
pub struct WeightedVolumeTable {
    pub center: Point,
    pub radii: Vec<f64>,
    /// `V_{h²}(center, r)` for each radius.
    pub volumes: Vec<f64>,
    /// `V_{h²}(center, 2r)` for each radius.
    pub doubled: Vec<f64>,
    pub ratios: Vec<f64>,
}

/// Weighted volumes of inner balls, integrating `h²` over triangles clipped
/// to the ball.
pub fn weighted_volume(
    profile: &Profile,
    domain: &PolygonDomain,
    mesh: &Mesh,
    center: &DomainPoint,
    radii: &[f64],
) -> Result<WeightedVolumeTable> {
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidArgument("radii must be positive".into()));
    }
    let rmax = 2.0 * radii.iter().copied().fold(0.0, f64::max);
    if let Some((pole, eps)) = profile.excluded {
        if center.pos.dist(pole) < rmax + eps {
            return Err(Error::InvalidArgument(format!(
                "ball of radius {rmax} around ({}, {}) meets the pole neighbourhood",
                center.pos.x, center.pos.y
            )));
        }
    }
    let reach = rmax + 2.0 * mesh.longest_edge();
    let near: Vec<usize> = (0..mesh.nodes.len()).filter(|&i| mesh.nodes[i].dist(center.pos) < reach).collect();
    let pts: Vec<DomainPoint> = near.iter().map(|&i| mesh.node_point(i)).collect();
    let dn = domain.distance_field(center, &pts)?;
    // nodes outside the prefilter sit beyond every radius; the Euclidean
    // distance is a valid lower bound there
    let mut d: Vec<f64> = mesh.nodes.iter().map(|p| p.dist(center.pos)).collect();
    for (&i, v) in near.iter().zip(dn) {
        d[i] = v;
    }
    let volume = |r: f64| -> Result<f64> {
        let mut v = 0.0;
        let mut touched = false;
        for t in &mesh.triangles {
            let dt = t.map(|i| d[i]);
            if dt.iter().all(|&x| x >= r) {
                continue;
            }
            touched = true;
            v += clipped_square_integral(t.map(|i| mesh.nodes[i]), dt, t.map(|i| profile.h[i]), r);
        }
        if !touched {
            return Err(Error::EmptyBall { center: [center.pos.x, center.pos.y], radius: r });
        }
        Ok(v)
    };
    let volumes = radii.iter().map(|&r| volume(r)).collect::<Result<Vec<_>>>()?;
    let doubled = radii.iter().map(|&r| volume(2.0 * r)).collect::<Result<Vec<_>>>()?;
    let ratios = volumes.iter().zip(&doubled).map(|(a, b)| b / a).collect();
    Ok(WeightedVolumeTable { center: center.pos, radii: radii.to_vec(), volumes, doubled, ratios })
}

/// Element-wise `h²`-weighted symmetric stiffness and exact weighted lumped
/// mass, assembled independently of the matrix conjugation.
#[derive(Clone, Debug)]
pub struct WeightedAssembly {
    pub triangles: Vec<[usize; 3]>,
    pub local_stiffness: Vec<[[f64; 3]; 3]>,
    /// `∫_T h² λ_i dA` per triangle vertex.
    pub local_mass: Vec<[f64; 3]>,
}

impl WeightedAssembly {
    pub fn new(mesh: &Mesh, coeffs: &CoefficientField, h: &[f64]) -> Result<Self> {
        let locals: Vec<Result<([[f64; 3]; 3], [f64; 3])>> = mesh
            .triangles
            .par_iter()
            .map(|t| {
                let (area, g) = p1_gradients(mesh, t);
                let [p, q, r] = t.map(|v| mesh.nodes[v]);
                let c = Point::new((p.x + q.x + r.x) / 3.0, (p.y + q.y + r.y) / 3.0);
                let s = coeffs.eval(c)?;
                let [a11, a12, a22] = s.a;
                let hv = t.map(|v| h[v]);
                let w = tri_square_integral(area, hv);
                let mut k = [[0.0; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        let (gi, gj) = (g[i], g[j]);
                        k[i][j] = w * (a11 * gi[0] * gj[0] + a12 * (gi[0] * gj[1] + gi[1] * gj[0]) + a22 * gi[1] * gj[1]);
                    }
                }
                // ∫ λ_a λ_b λ_c = 2A a! b! c! / (a + b + c + 2)!
                let mut m = [0.0; 3];
                for (i, mi) in m.iter_mut().enumerate() {
                    for j in 0..3 {
                        for l in 0..3 {
                            let mut e = [0usize; 3];
                            e[i] += 1;
                            e[j] += 1;
                            e[l] += 1;
                            let fact = |n: usize| (1..=n).product::<usize>() as f64;
                            let coef = 2.0 * area * e.iter().map(|&n| fact(n)).product::<f64>() / fact(5);
                            *mi += hv[j] * hv[l] * coef;
                        }
                    }
                }
                Ok((k, m))
            })
            .collect();
        let mut local_stiffness = Vec::with_capacity(locals.len());
        let mut local_mass = Vec::with_capacity(locals.len());
        for l in locals {
            let (k, m) = l?;
            local_stiffness.push(k);
            local_mass.push(m);
        }
        Ok(Self { triangles: mesh.triangles.clone(), local_stiffness, local_mass })
    }

    /// Global weighted stiffness over all nodes.
    pub fn stiffness(&self, n: usize) -> CsrMatrix {
        let mut trip = Vec::with_capacity(9 * self.triangles.len());
        for (t, k) in self.triangles.iter().zip(&self.local_stiffness) {
            for i in 0..3 {
                for j in 0..3 {
                    trip.push((t[i], t[j], k[i][j]));
                }
            }
        }
        CsrMatrix::from_triplets(n, n, &trip)
    }
}

/// `‖sym(K_h) − W‖_F / ‖W‖_F` on the free nodes, where `W` is the
/// re-assembled weighted stiffness.
pub fn conjugation_discrepancy(weighted: &WeightedForm, assembly: &WeightedAssembly) -> f64 {
    let n = weighted.form.n_nodes();
    let w = assembly.stiffness(n).restrict(&weighted.form.interior);
    let k = &weighted.form.k_int;
    let sym = k.add(0.5, &k.transpose(), 0.5);
    let diff = sym.add(1.0, &w, -1.0);
    let fro = |a: &CsrMatrix| a.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    fro(&diff) / fro(&w).max(f64::MIN_POSITIVE)
}

#[derive(Clone, Debug, Serialize)]
pub struct PoincareReport {
    pub radius: f64,
    pub n_nodes: usize,
    /// Smallest nonzero weighted Neumann eigenvalue of the ball.
    pub nu1: f64,
    /// `1 / (ν₁ r²)`.
    pub p: f64,
}

/// Largest node count handled by the dense Neumann eigen-solve.
pub const POINCARE_MAX_NODES: usize = 4000;

/// Best weighted Poincaré constant on the submesh of triangles whose three
/// vertices lie in `nodes`.
pub fn weighted_poincare(assembly: &WeightedAssembly, nodes: &[usize], r: f64) -> Result<PoincareReport> {
    let n_all = assembly.triangles.iter().flatten().copied().max().map_or(0, |m| m + 1);
    let mut local = vec![usize::MAX; n_all.max(nodes.iter().copied().max().map_or(0, |m| m + 1))];
    for (k, &i) in nodes.iter().enumerate() {
        local[i] = k;
    }
    let mut used = vec![false; nodes.len()];
    let mut trip = Vec::new();
    let mut mass = vec![0.0; nodes.len()];
    for ((t, k), m) in assembly.triangles.iter().zip(&assembly.local_stiffness).zip(&assembly.local_mass) {
        if t.iter().any(|&v| local[v] == usize::MAX) {
            continue;
        }
        let l = t.map(|v| local[v]);
        for i in 0..3 {
            used[l[i]] = true;
            mass[l[i]] += m[i];
            for j in 0..3 {
                trip.push((l[i], l[j], k[i][j]));
            }
        }
    }
    let keep: Vec<usize> = (0..nodes.len()).filter(|&i| used[i] && mass[i] > 0.0).collect();
    if keep.len() < 10 {
        return Err(Error::InvalidArgument(format!("ball submesh has {} nodes, need at least 10", keep.len())));
    }
    if keep.len() > POINCARE_MAX_NODES {
        return Err(Error::InvalidArgument(format!(
            "ball submesh has {} nodes, limit is {POINCARE_MAX_NODES}",
            keep.len()
        )));
    }
    let s = CsrMatrix::from_triplets(nodes.len(), nodes.len(), &trip).restrict(&keep);
    let m: Vec<f64> = keep.iter().map(|&i| mass[i]).collect();
    let n = keep.len();
    let mut a = s.to_dense();
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] /= (m[i] * m[j]).sqrt();
        }
    }
    let a: DMatrix<f64> = (&a + a.transpose()) * 0.5;
    let mut ev: Vec<f64> = a.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    let top = ev.last().copied().unwrap_or(0.0).abs().max(1.0);
    if !(ev[0].abs() <= 1e-8 * top) {
        return Err(Error::ConvergenceFailure { iterations: 0, residual: ev[0].abs() / top });
    }
    let nu1 = ev[1];
    if !(nu1 > 1e-10 * top) {
        return Err(Error::ConvergenceFailure { iterations: 0, residual: nu1 });
    }
    Ok(PoincareReport { radius: r, n_nodes: n, nu1, p: 1.0 / (nu1 * r * r) })
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundaryControl {
    pub xi: Point,
    pub radius: f64,
    pub x_r: Point,
    pub h_x_r: f64,
    /// `max_{y ∈ B(ξ, r)} h(y) / h(x_r)`.
    pub k1: f64,
    pub argmax: usize,
}

pub fn profile_boundary_control(
    profile: &Profile,
    domain: &PolygonDomain,
    mesh: &Mesh,
    xi: &DomainPoint,
    r: f64,
    c_u: f64,
    rule: RepresentativeRule,
) -> Result<BoundaryControl> {
    let (nodes, _) = crate::geometry::ball::ball_nodes(domain, mesh, xi, r)?;
    let x_r = representative_point(domain, xi, r, c_u, rule)?;
    let h_x_r = mesh
        .interpolate(&profile.h, &x_r.into())
        .ok_or_else(|| Error::SearchFailure(format!("x_r = ({}, {}) is not covered by the mesh", x_r.x, x_r.y)))?;
    if !(h_x_r > 0.0) {
        return Err(Error::NonPositiveProfile(format!("h(x_r) = {h_x_r:e}")));
    }
    let argmax = nodes.iter().copied().max_by(|&a, &b| profile.h[a].total_cmp(&profile.h[b])).unwrap();
    Ok(BoundaryControl { xi: xi.pos, radius: r, x_r, h_x_r, k1: profile.h[argmax] / h_x_r, argmax })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::assemble;
    use crate::geometry::{load_domain, triangulate_with, DomainSpec, Grading, MeshOptions};
    use crate::solver::{green_column, principal_eigenpair, eigenpairs, Side};
    use crate::testutil::{mesh, slit_square, square};
    use std::f64::consts::PI;

    fn square_setup(h: f64) -> (PolygonDomain, Mesh, DiscreteForm, Profile) {
        let d = square();
        let m = mesh(&d, h);
        let f = assemble(&m, &CoefficientField::laplacian()).unwrap();
        let pair = principal_eigenpair(&f, Side::Primal).unwrap();
        let p = make_profile(ProfileSource::Eigen(&pair), &f, &m).unwrap();
        (d, m, f, p)
    }

    #[test]
    fn eigen_profile_shift() {
        let (_, _, _, p) = square_setup(0.05);
        assert_eq!(p.kind, ProfileKind::Eigenfunction);
        assert!((p.gamma + 2.0 * PI * PI).abs() / (2.0 * PI * PI) < 0.01, "{}", p.gamma);
    }

    #[test]
    fn green_profile_records_pole() {
        let d = square();
        let m = mesh(&d, 0.1);
        let f = assemble(&m, &CoefficientField::laplacian()).unwrap();
        let pole = m.nearest_interior_node(Point::new(0.5, 0.5));
        let g = green_column(&f, pole).unwrap();
        let p = make_profile(ProfileSource::Green(&g), &f, &m).unwrap();
        assert_eq!(p.gamma, 0.0);
        assert_eq!(p.pole_node, Some(pole));
        assert!((p.excluded.unwrap().1 - 4.0 * m.h_max).abs() < 1e-15);
    }

    #[test]
    fn sign_changing_profile_is_rejected() {
        let d = square();
        let m = mesh(&d, 0.1);
        let f = assemble(&m, &CoefficientField::laplacian()).unwrap();
        let pairs = eigenpairs(&f, 2, Side::Primal).unwrap();
        assert!(matches!(
            make_profile(ProfileSource::Eigen(&pairs[1]), &f, &m),
            Err(Error::NonPositiveProfile(_))
        ));
    }

    #[test]
    fn constant_profile_is_rejected() {
        let (_, _, f, mut p) = square_setup(0.1);
        p.h = vec![1.0; f.n_nodes()];
        assert!(matches!(transform(&f, &p), Err(Error::IdentityViolation { .. })));
    }

    #[test]
    fn ground_state_transform_is_conservative() {
        let (_, _, f, p) = square_setup(0.05);
        let w = transform(&f, &p).unwrap();
        assert!(w.generator_defect < 1e-9, "{}", w.generator_defect);
        let src = w.form.interior[w.h_int.len() / 2];
        let rep = check_identity(&f, &w, &[src], &[0.01, 0.05], &HeatOptions::new(Scheme::BackwardEuler, 1e-4)).unwrap();
        assert!(rep.markov_defect.unwrap() < 1e-8, "{:?}", rep.markov_defect);
    }

    #[test]
    fn identity_is_exact_with_the_exponential_scheme() {
        let d = slit_square();
        let m = mesh(&d, 0.12);
        let f = assemble(&m, &CoefficientField::constant([1.0, 0.0], [0.0, 0.0], 0.0)).unwrap();
        let pair = principal_eigenpair(&f, Side::Primal).unwrap();
        let p = make_profile(ProfileSource::Eigen(&pair), &f, &m).unwrap();
        let w = transform(&f, &p).unwrap();
        let srcs = [f.interior[0], f.interior[f.n_free() / 2]];
        let rep = check_identity(&f, &w, &srcs, &[0.01, 0.1], &HeatOptions::new(Scheme::Exponential, 1e-4)).unwrap();
        assert!(rep.max_rel_err < 1e-10, "{}", rep.max_rel_err);
        assert!(rep.markov_defect.unwrap() < 1e-8, "{:?}", rep.markov_defect);
    }

    // V of a half disc with h = y, by polar integration: ∫_0^r ∫_0^π (ρ sin θ)² ρ dθ dρ = π r⁴ / 8
    #[test]
    fn clipped_volume_matches_polar_integral() {
        let d = square();
        let m = mesh(&d, 0.02);
        let h: Vec<f64> = m.nodes.iter().map(|p| p.y).collect();
        let prof = Profile { kind: ProfileKind::Eigenfunction, h, gamma: 0.0, pole_node: None, excluded: None };
        let c: DomainPoint = Point::new(0.5, 0.0).into();
        let t = weighted_volume(&prof, &d, &m, &c, &[0.1, 0.2]).unwrap();
        for (r, v) in [(0.1f64, t.volumes[0]), (0.2, t.volumes[1]), (0.4, t.doubled[1])] {
            let exact = PI * r.powi(4) / 8.0;
            assert!((v - exact).abs() / exact < 0.01, "r = {r}: {v} vs {exact}");
        }
        assert!((t.ratios[0] - 16.0).abs() < 0.3);
    }

    #[test]
    fn doubling_ratios() {
        let (d, m, _, p) = square_setup(0.02);
        let c: DomainPoint = Point::new(0.5, 0.5).into();
        let t = weighted_volume(&p, &d, &m, &c, &[0.05, 0.1]).unwrap();
        // polar quadrature of (2 sin πx sin πy)² over discs around the centre
        let disc = |r: f64| {
            let (nr, nt) = (200, 400);
            let mut s = 0.0;
            for i in 0..nr {
                let rho = (i as f64 + 0.5) * r / nr as f64;
                for j in 0..nt {
                    let th = 2.0 * PI * (j as f64 + 0.5) / nt as f64;
                    let (x, y) = (0.5 + rho * th.cos(), 0.5 + rho * th.sin());
                    s += (2.0 * (PI * x).sin() * (PI * y).sin()).powi(2) * rho;
                }
            }
            s * (r / nr as f64) * (2.0 * PI / nt as f64)
        };
        for (k, r) in [0.05, 0.1].into_iter().enumerate() {
            let expected = disc(2.0 * r) / disc(r);
            assert!((t.ratios[k] - expected).abs() / expected < 0.03, "{} vs {expected}", t.ratios[k]);
        }
        assert!(t.ratios[0] > 3.8 && t.ratios[0] < 4.0);
        let b: DomainPoint = Point::new(0.5, 0.0).into();
        let t = weighted_volume(&p, &d, &m, &b, &[0.025, 0.05, 0.1]).unwrap();
        assert!(t.ratios.iter().all(|r| (13.0..=17.0).contains(r)), "{:?}", t.ratios);
        assert!(t.volumes.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn green_balls_must_avoid_the_pole() {
        let d = square();
        let m = mesh(&d, 0.1);
        let f = assemble(&m, &CoefficientField::laplacian()).unwrap();
        let pole = m.nearest_interior_node(Point::new(0.5, 0.5));
        let g = green_column(&f, pole).unwrap();
        let p = make_profile(ProfileSource::Green(&g), &f, &m).unwrap();
        let c: DomainPoint = Point::new(0.5, 0.3).into();
        assert!(weighted_volume(&p, &d, &m, &c, &[0.1]).is_err());
        let far: DomainPoint = Point::new(0.5, 0.0).into();
        assert!(weighted_volume(&p, &d, &m, &far, &[0.05]).is_ok());
    }

    // first nonzero Neumann eigenvalue of the unit disc is j'_{1,1}² with j'_{1,1} = 1.841184
    #[test]
    fn disc_neumann_poincare_constant() {
        let ring: Vec<[f64; 2]> = (0..128)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / 128.0;
                [a.cos(), a.sin()]
            })
            .collect();
        let disc = load_domain(&DomainSpec { name: "disc".into(), outer: ring, holes: vec![], slits: vec![] }).unwrap();
        let mut opts = MeshOptions::new(0.08);
        opts.grading = Grading::None;
        let m = triangulate_with(&disc, &opts).unwrap();
        let a = WeightedAssembly::new(&m, &CoefficientField::laplacian(), &vec![1.0; m.nodes.len()]).unwrap();
        let all: Vec<usize> = (0..m.nodes.len()).collect();
        let rep = weighted_poincare(&a, &all, 1.0).unwrap();
        let expected = 1.0 / 1.841184f64.powi(2);
        assert!((rep.p - expected).abs() / expected < 0.02, "{} vs {expected}", rep.p);
        // scale invariance
        let scaled: Vec<[f64; 2]> = disc.outer.iter().map(|p| [2.0 * p.x, 2.0 * p.y]).collect();
        let disc2 = load_domain(&DomainSpec { name: "disc2".into(), outer: scaled, holes: vec![], slits: vec![] }).unwrap();
        let mut opts2 = MeshOptions::new(0.16);
        opts2.grading = Grading::None;
        let m2 = triangulate_with(&disc2, &opts2).unwrap();
        let a2 = WeightedAssembly::new(&m2, &CoefficientField::laplacian(), &vec![1.0; m2.nodes.len()]).unwrap();
        let all2: Vec<usize> = (0..m2.nodes.len()).collect();
        let rep2 = weighted_poincare(&a2, &all2, 2.0).unwrap();
        assert!((rep2.p - rep.p).abs() / rep.p < 0.02, "{} vs {}", rep2.p, rep.p);
    }

    #[test]
    fn reassembled_form_is_close_to_conjugation() {
        let (_, m, f, p) = square_setup(0.05);
        let w = transform(&f, &p).unwrap();
        let a = WeightedAssembly::new(&m, &CoefficientField::laplacian(), &p.h).unwrap();
        let e = conjugation_discrepancy(&w, &a);
        assert!(e < 0.2, "{e}");
    }

    #[test]
    fn boundary_control_on_flat_boundary() {
        let (d, m, _, p) = square_setup(0.02);
        let xi: DomainPoint = Point::new(0.5, 0.0).into();
        let b = profile_boundary_control(&p, &d, &m, &xi, 0.2, 0.1, RepresentativeRule::Deepest).unwrap();
        // h is close to linear in the depth; the deepest point at distance r/4 has depth r/4
        assert!(b.k1 > 1.0 && b.k1 < 80.0, "{}", b.k1);
        let deep: DomainPoint = Point::new(0.5, 0.3).into();
        let b = profile_boundary_control(&p, &d, &m, &deep, 0.1, 0.1, RepresentativeRule::Deepest).unwrap();
        assert!(b.k1 < 1.5, "{}", b.k1);
    }
}
