//! Empirical Harnack constants: parabolic, elliptic and boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ball::ball_nodes;
use crate::geometry::{DomainPoint, Mesh, Point, PolygonDomain};
use crate::solver::HeatKernelColumn;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub x: Point,
    pub r: f64,
    pub s: f64,
    pub tau: f64,
    pub delta: f64,
}

impl Cylinder {
    /// Time window of the lower cylinder `Q₋`.
    pub fn minus_window(&self) -> (f64, f64) {
        let q = self.tau * self.r * self.r / 4.0;
        (self.s - (3.0 + self.delta) * q, self.s - (3.0 - self.delta) * q)
    }

    /// Time window of the upper cylinder `Q₊`.
    pub fn plus_window(&self) -> (f64, f64) {
        let q = self.tau * self.r * self.r / 4.0;
        (self.s - (1.0 + self.delta) * q, self.s)
    }

    /// `per_window` evenly spaced times inside each window, endpoints excluded.
    pub fn sample_times(&self, per_window: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for (a, b) in [self.minus_window(), self.plus_window()] {
            for k in 1..=per_window {
                out.push(a + (b - a) * k as f64 / (per_window + 1) as f64);
            }
        }
        out.push(self.s);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

/// Nodal solution snapshots at increasing times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionSeries {
    pub id: String,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl SolutionSeries {
    pub fn from_column(col: &HeatKernelColumn) -> Self {
        Self { id: format!("heat-column-{}", col.source_node), times: col.times.clone(), values: col.values.clone() }
    }

    /// Pointwise `u / h` on nodes with `h > 0`, zero elsewhere.
    pub fn divided_by(&self, h: &[f64], suffix: &str) -> Self {
        let values = self
            .values
            .iter()
            .map(|v| v.iter().zip(h).map(|(a, b)| if *b > 0.0 { a / b } else { 0.0 }).collect())
            .collect();
        Self { id: format!("{}/{suffix}", self.id), times: self.times.clone(), values }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HarnackMode {
    /// Euclidean ball with `B(x, 2r)` inside the domain.
    Interior,
    /// Inner ball, possibly centred on the boundary; intended for `u/φ`.
    UpToBoundary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnackReport {
    pub cylinder: Cylinder,
    pub mode: HarnackMode,
    pub solution_id: String,
    pub sup_minus: f64,
    pub inf_plus: f64,
    pub h_emp: f64,
    pub n_nodes: usize,
    pub n_minus_times: usize,
    pub n_plus_times: usize,
}

fn ball_node_set(domain: &PolygonDomain, mesh: &Mesh, x: Point, rho: f64, mode: HarnackMode) -> Result<Vec<usize>> {
    let nodes: Vec<usize> = match mode {
        HarnackMode::Interior => (0..mesh.nodes.len()).filter(|&i| mesh.nodes[i].dist(x) < rho).collect(),
        HarnackMode::UpToBoundary => ball_nodes(domain, mesh, &DomainPoint::from(x), rho)?.0,
    };
    let free: Vec<usize> = nodes.into_iter().filter(|&i| !mesh.boundary_mask[i]).collect();
    if free.is_empty() {
        return Err(Error::EmptyBall { center: [x.x, x.y], radius: rho });
    }
    Ok(free)
}

/// `H = sup_{Q₋} u / inf_{Q₊} u` over mesh nodes of `δB` and stored times.
pub fn check_phi(sol: &SolutionSeries, domain: &PolygonDomain, mesh: &Mesh, cyl: &Cylinder, mode: HarnackMode) -> Result<HarnackReport> {
    if !(cyl.r > 0.0 && cyl.tau > 0.0 && cyl.delta > 0.0 && cyl.delta < 1.0) {
        return Err(Error::CylinderOutOfRange(format!("need r, τ > 0 and δ ∈ (0, 1), got {cyl:?}")));
    }
    if cyl.s - cyl.tau * cyl.r * cyl.r < 0.0 {
        return Err(Error::CylinderOutOfRange(format!("cylinder starts before t = 0 (s = {}, τr² = {})", cyl.s, cyl.tau * cyl.r * cyl.r)));
    }
    if mode == HarnackMode::Interior {
        let depth = domain.boundary_distance(cyl.x)?;
        if depth < 2.0 * cyl.r {
            return Err(Error::CylinderOutOfRange(format!("B(x, 2r) leaves the domain: depth {depth} < 2r = {}", 2.0 * cyl.r)));
        }
    }
    let nodes = ball_node_set(domain, mesh, cyl.x, cyl.delta * cyl.r, mode)?;
    let tol = 1e-12 * cyl.s.max(1.0);
    let within = |t: f64, (a, b): (f64, f64)| t > a + tol && t <= b + tol;
    let minus: Vec<usize> = (0..sol.times.len()).filter(|&k| within(sol.times[k], cyl.minus_window())).collect();
    let plus: Vec<usize> = (0..sol.times.len()).filter(|&k| within(sol.times[k], cyl.plus_window())).collect();
    if minus.is_empty() || plus.is_empty() {
        return Err(Error::CylinderOutOfRange(format!(
            "stored times miss a sub-cylinder ({} in Q₋, {} in Q₊)",
            minus.len(),
            plus.len()
        )));
    }
    let sup_minus = minus.iter().flat_map(|&k| nodes.iter().map(move |&i| sol.values[k][i])).fold(f64::NEG_INFINITY, f64::max);
    let inf_plus = plus.iter().flat_map(|&k| nodes.iter().map(move |&i| sol.values[k][i])).fold(f64::INFINITY, f64::min);
    if !(inf_plus > 0.0) {
        return Err(Error::CylinderOutOfRange(format!("solution is not positive on Q₊ (inf {inf_plus:e})")));
    }
    Ok(HarnackReport {
        cylinder: *cyl,
        mode,
        solution_id: sol.id.clone(),
        sup_minus,
        inf_plus,
        h_emp: sup_minus / inf_plus,
        n_nodes: nodes.len(),
        n_minus_times: minus.len(),
        n_plus_times: plus.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticReport {
    pub x: Point,
    pub r: f64,
    pub h_emp: f64,
    pub n_nodes: usize,
}

/// `sup_B u / inf_B u` over the free nodes of `B(x, r)` for a time-independent solution.
pub fn check_ehi(u: &[f64], domain: &PolygonDomain, mesh: &Mesh, x: Point, r: f64, mode: HarnackMode) -> Result<EllipticReport> {
    let nodes = ball_node_set(domain, mesh, x, r, mode)?;
    let hi = nodes.iter().map(|&i| u[i]).fold(f64::NEG_INFINITY, f64::max);
    let lo = nodes.iter().map(|&i| u[i]).fold(f64::INFINITY, f64::min);
    if !(lo > 0.0) {
        return Err(Error::NonPositiveProfile(format!("solution reaches {lo:e} in the ball")));
    }
    Ok(EllipticReport { x, r, h_emp: hi / lo, n_nodes: nodes.len() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BhpReport {
    pub xi: Point,
    pub r: f64,
    /// `max (u(x) v(x′)) / (u(x′) v(x))` over node pairs of the ball.
    pub a1_emp: f64,
    pub n_nodes: usize,
}

/// Boundary Harnack ratio of two solutions vanishing near `xi`.
pub fn check_bhp(u: &[f64], v: &[f64], domain: &PolygonDomain, mesh: &Mesh, xi: &DomainPoint, r: f64) -> Result<BhpReport> {
    let (nodes, _) = ball_nodes(domain, mesh, xi, r)?;
    let vmax = nodes.iter().map(|&i| v[i]).fold(0.0, f64::max);
    let keep: Vec<usize> = nodes
        .into_iter()
        .filter(|&i| !mesh.boundary_mask[i] && v[i] > 1e-14 * vmax && u[i] > 0.0)
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyBall { center: [xi.pos.x, xi.pos.y], radius: r });
    }
    let q: Vec<f64> = keep.iter().map(|&i| u[i] / v[i]).collect();
    let hi = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = q.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(BhpReport { xi: xi.pos, r, a1_emp: hi / lo, n_nodes: keep.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{mesh, square};

    #[test]
    fn windows() {
        let c = Cylinder { x: Point::new(0.5, 0.5), r: 0.2, s: 1.0, tau: 1.0, delta: 0.5 };
        let (a, b) = c.minus_window();
        assert!((a - (1.0 - 3.5 * 0.01)).abs() < 1e-15 && (b - (1.0 - 2.5 * 0.01)).abs() < 1e-15);
        let (a, b) = c.plus_window();
        assert!((a - (1.0 - 1.5 * 0.01)).abs() < 1e-15 && b == 1.0);
        assert_eq!(c.sample_times(3).len(), 7);
    }

    // u = e^{−λt} c is spatially constant, so H = e^{λ (t₊ − t₋)} over the extreme stored times
    #[test]
    fn separable_solution_ratio() {
        let d = square();
        let m = mesh(&d, 0.05);
        let lambda = 20.0;
        let c = Cylinder { x: Point::new(0.5, 0.5), r: 0.1, s: 0.1, tau: 1.0, delta: 0.5 };
        let times = c.sample_times(4);
        let values = times.iter().map(|t| vec![(-lambda * t).exp(); m.nodes.len()]).collect();
        let sol = SolutionSeries { id: "const".into(), times: times.clone(), values };
        let rep = check_phi(&sol, &d, &m, &c, HarnackMode::Interior).unwrap();
        let t_minus = times.iter().copied().find(|&t| t > c.minus_window().0).unwrap();
        let expected = (lambda * (c.s - t_minus)).exp();
        assert!((rep.h_emp - expected).abs() < 1e-12 * expected);
        assert!(rep.h_emp >= 1.0);
    }

    #[test]
    fn out_of_range_cylinders() {
        let d = square();
        let m = mesh(&d, 0.1);
        let sol = SolutionSeries { id: "u".into(), times: vec![0.5, 1.0], values: vec![vec![1.0; m.nodes.len()]; 2] };
        let near = Cylinder { x: Point::new(0.5, 0.1), r: 0.1, s: 1.0, tau: 1.0, delta: 0.5 };
        assert!(matches!(check_phi(&sol, &d, &m, &near, HarnackMode::Interior), Err(Error::CylinderOutOfRange(_))));
        let early = Cylinder { x: Point::new(0.5, 0.5), r: 0.2, s: 0.01, tau: 1.0, delta: 0.5 };
        assert!(matches!(check_phi(&sol, &d, &m, &early, HarnackMode::Interior), Err(Error::CylinderOutOfRange(_))));
    }

    #[test]
    fn identical_solutions_have_unit_bhp_ratio() {
        let d = square();
        let m = mesh(&d, 0.05);
        let u: Vec<f64> = m.nodes.iter().map(|p| p.x * (1.0 - p.x) * p.y * (1.0 - p.y)).collect();
        let r = check_bhp(&u, &u, &d, &m, &Point::new(0.5, 0.0).into(), 0.2).unwrap();
        assert!((r.a1_emp - 1.0).abs() < 1e-14);
        let v: Vec<f64> = u.iter().zip(&m.nodes).map(|(a, p)| a * (1.0 + p.x)).collect();
        let r = check_bhp(&u, &v, &d, &m, &Point::new(0.5, 0.0).into(), 0.2).unwrap();
        // u/v = 1/(1 + x) with x ∈ (0.3, 0.7) on the ball
        assert!(r.a1_emp > 1.2 && r.a1_emp < 1.7 / 1.3 + 1e-12);
    }
}
