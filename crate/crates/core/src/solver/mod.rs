//! Eigenpairs, heat kernel columns and Green functions of the discrete generator.

pub mod eigen;
pub mod green;
pub mod heat;

use serde::{Deserialize, Serialize};

pub use eigen::{eigenpairs, eigenpairs_with, principal_eigenpair, principal_eigenpair_with, EigenOptions, EigenPair};
pub use green::{green_column, GreenColumn};
pub use heat::{
    evolve_function, heat_column, heat_column_with, heat_columns, lumped_delta, time_grid, Direction,
    HeatKernelColumn, HeatOptions, Propagator, Scheme,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    #[default]
    Primal,
    Adjoint,
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::forms::{assemble, CoefficientField};
    use crate::geometry::{load_domain, triangulate, DomainSpec, Point};
    use crate::testutil::{mesh, square};

    fn series_1d(t: f64, a: f64, b: f64) -> f64 {
        (1..=99).map(|n| {
            let k = n as f64 * PI;
            2.0 * (k * a).sin() * (k * b).sin() * (-k * k * t).exp()
        }).sum()
    }

    #[test]
    fn square_principal_pair() {
        let m = mesh(&square(), 0.04);
        let f = assemble(&m, &CoefficientField::laplacian()).unwrap();
        let e = principal_eigenpair(&f, Side::Primal).unwrap();
        assert!((e.lambda / (2.0 * PI * PI) - 1.0).abs() < 0.01, "{}", e.lambda);
        assert!(e.residual <= 1e-8);
        let c = m.nearest_node(Point::new(0.5, 0.5));
        assert!((e.phi[c] - 2.0).abs() < 0.03, "{}", e.phi[c]);
        let norm: f64 = e.phi.iter().zip(&f.m_lumped).map(|(p, w)| p * p * w).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        let a = principal_eigenpair(&f, Side::Adjoint).unwrap();
        assert!((a.lambda - e.lambda).abs() < 1e-9);
        let diff = a.phi.iter().zip(&e.phi).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-7, "{diff}");
    }

    #[test]
    fn constant_drift_shifts_by_a_quarter() {
        let m = mesh(&square(), 0.04);
        let lap = principal_eigenpair(&assemble(&m, &CoefficientField::laplacian()).unwrap(), Side::Primal).unwrap();
        let f = assemble(&m, &CoefficientField::constant([1.0, 0.0], [0.0, 0.0], 0.0)).unwrap();
        let e = principal_eigenpair(&f, Side::Primal).unwrap();
        let a = principal_eigenpair(&f, Side::Adjoint).unwrap();
        assert!((e.lambda - lap.lambda - 0.25).abs() < 0.02, "{} {}", e.lambda, lap.lambda);
        assert!((e.lambda - a.lambda).abs() < 1e-8 * e.lambda);
        assert!(e.residual <= 1e-8 && a.residual <= 1e-8);
    }

    #[test]
    fn low_spectrum_of_square() {
        let m = mesh(&square(), 0.04);
        let f = assemble(&m, &CoefficientField::laplacian()).unwrap();
        let ps = eigenpairs(&f, 4, Side::Primal).unwrap();
        for (p, k) in ps.iter().zip([2.0, 5.0, 5.0, 8.0]) {
            assert!((p.lambda / (k * PI * PI) - 1.0).abs() < 0.02, "{} vs {}", p.lambda, k * PI * PI);
            assert!(p.residual <= 1e-6);
        }
        assert!(ps[1].lambda - ps[0].lambda > 0.0);
        let one = eigenpairs(&f, 1, Side::Primal).unwrap();
        let pr = principal_eigenpair(&f, Side::Primal).unwrap();
        assert!((one[0].lambda - pr.lambda).abs() < 1e-8);
    }

    #[test]
    fn drift_spectrum_is_real_and_matches_principal() {
        let m = mesh(&square(), 0.08);
        let f = assemble(&m, &CoefficientField::constant([1.0, 0.0], [0.0, 0.0], 0.0)).unwrap();
        let ps = eigenpairs(&f, 3, Side::Primal).unwrap();
        let pr = principal_eigenpair(&f, Side::Primal).unwrap();
        assert!((ps[0].lambda - pr.lambda).abs() < 1e-7);
        assert!(ps.iter().all(|p| p.lambda_im.abs() < 1e-8));
    }

    #[test]
    fn sign_changing_data_is_not_principal() {
        let m = mesh(&square(), 0.1);
        let f = assemble(&m, &CoefficientField::laplacian()).unwrap();
        let ps = eigenpairs(&f, 2, Side::Primal).unwrap();
        assert!(ps[1].phi.iter().any(|&v| v < -1e-3) && ps[1].phi.iter().any(|&v| v > 1e-3));
    }

    #[test]
    fn heat_kernel_matches_series() {
        let m = mesh(&square(), 0.03);
        let f = assemble(&m, &CoefficientField::laplacian()).unwrap();
        let s = m.nearest_interior_node(Point::new(0.5, 0.5));
        let c = heat_column(&f, s, &[0.1], Scheme::BackwardEuler, 1e-6).unwrap();
        let ps = m.nodes[s];
        let exact = series_1d(0.1, ps.x, ps.x) * series_1d(0.1, ps.y, ps.y);
        assert!((exact - 0.556).abs() < 1e-3);
        let got = c.values[0][s];
        assert!((got / exact - 1.0).abs() < 0.03, "{got} vs {exact}");
        assert!(c.min_value >= 0.0);
    }

    #[test]
    fn mass_decreases_and_stays_below_one() {
        let m = mesh(&square(), 0.1);
        let f = assemble(&m, &CoefficientField::laplacian()).unwrap();
        let s = m.nearest_interior_node(Point::new(0.3, 0.6));
        let times = [0.001, 0.01, 0.05, 0.1, 0.5];
        let c = heat_column(&f, s, &times, Scheme::BackwardEuler, 1e-5).unwrap();
        let mass = c.masses(&f.m_lumped);
        assert!(mass[0] <= 1.0 + 1e-12);
        assert!(mass.windows(2).all(|w| w[1] <= w[0]));
        assert!(c.values.iter().flatten().all(|&v| v >= 0.0));
    }

    #[test]
    fn duality_between_form_and_adjoint() {
        let m = mesh(&square(), 0.1);
        let f = assemble(&m, &CoefficientField::constant([1.0, -0.5], [0.0, 0.0], 0.3)).unwrap();
        let g = f.adjoint();
        let x = m.nearest_interior_node(Point::new(0.3, 0.4));
        let y = m.nearest_interior_node(Point::new(0.7, 0.6));
        let opts = HeatOptions::new(Scheme::BackwardEuler, 1e-4);
        let px = heat_column_with(&f, x, &[0.05, 0.2], &opts).unwrap();
        let py = heat_column_with(&g, y, &[0.05, 0.2], &opts).unwrap();
        for k in 0..2 {
            let (a, b) = (px.values[k][y], py.values[k][x]);
            assert!((a - b).abs() <= 1e-6 * a.abs(), "{a} {b}");
        }
    }

    #[test]
    fn exponential_scheme_has_the_semigroup_property() {
        let m = mesh(&square(), 0.15);
        let f = assemble(&m, &CoefficientField::constant([1.0, 0.0], [0.0, 0.0], 0.0)).unwrap();
        let s = m.nearest_interior_node(Point::new(0.4, 0.5));
        let opts = HeatOptions::new(Scheme::Exponential, 1e-3);
        let mut prop = Propagator::new(&f, Direction::Adjoint, opts).unwrap();
        let v0 = lumped_delta(&f, s).unwrap();
        let at = prop.evolve(&v0, &[0.05, 0.08]).unwrap();
        let direct = prop.evolve(&at[0], &[0.03]).unwrap();
        let err = at[1].iter().zip(&direct[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = at[1].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err <= 1e-12 * scale, "{err}");
    }

    #[test]
    fn backward_euler_semigroup_within_truncation() {
        let m = mesh(&square(), 0.1);
        let f = assemble(&m, &CoefficientField::laplacian()).unwrap();
        let s = m.nearest_interior_node(Point::new(0.5, 0.5));
        let exact = heat_column_with(&f, s, &[0.05, 0.1], &HeatOptions::new(Scheme::Exponential, 1e-3)).unwrap();
        let opts = HeatOptions::new(Scheme::BackwardEuler, 1e-5);
        let be = heat_column_with(&f, s, &[0.05, 0.1], &opts).unwrap();
        let mut prop = Propagator::new(&f, Direction::Adjoint, opts).unwrap();
        let restarted = prop.evolve(&f.restrict_vec(&be.values[0]), &[0.05]).unwrap();
        let restarted = f.extend(&restarted[0]);
        let trunc = be.values[1].iter().zip(&exact.values[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let semi = be.values[1].iter().zip(&restarted).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(semi <= 2.0 * trunc, "{semi} vs {trunc}");
    }

    #[test]
    fn long_time_limit_is_ground_state_product() {
        let m = mesh(&square(), 0.1);
        let f = assemble(&m, &CoefficientField::laplacian()).unwrap();
        let e = principal_eigenpair(&f, Side::Primal).unwrap();
        let s = m.nearest_interior_node(Point::new(0.35, 0.55));
        let c = heat_column_with(&f, s, &[1.0], &HeatOptions::new(Scheme::Exponential, 1e-3)).unwrap();
        for &y in &f.interior {
            let r = (e.lambda * 1.0).exp() * c.values[0][y] / (e.phi[s] * e.phi[y]);
            assert!((r - 1.0).abs() < 1e-6, "{r}");
        }
    }

    #[test]
    fn crank_nicolson_is_accurate() {
        let m = mesh(&square(), 0.1);
        let f = assemble(&m, &CoefficientField::laplacian()).unwrap();
        let s = m.nearest_interior_node(Point::new(0.5, 0.5));
        let exact = heat_column_with(&f, s, &[0.1], &HeatOptions::new(Scheme::Exponential, 1e-3)).unwrap();
        let cn = heat_column(&f, s, &[0.1], Scheme::CrankNicolson, 1e-5).unwrap();
        let be = heat_column(&f, s, &[0.1], Scheme::BackwardEuler, 1e-5).unwrap();
        let err = |c: &HeatKernelColumn| (c.values[0][s] - exact.values[0][s]).abs();
        assert!(err(&cn) < err(&be));
    }

    #[test]
    fn time_grid_lands_on_requests() {
        let g = time_grid(&[0.001, 0.0105, 1.0], &HeatOptions::new(Scheme::BackwardEuler, 1e-4)).unwrap();
        assert!(g.contains(&0.001) && g.contains(&0.0105) && g.contains(&1.0));
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(time_grid(&[0.2, 0.1], &HeatOptions::default()).is_err());
    }

    #[test]
    fn green_function_of_disc() {
        let n = 96;
        let outer: Vec<[f64; 2]> = (0..n)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / n as f64;
                [a.cos(), a.sin()]
            })
            .collect();
        let d = load_domain(&DomainSpec { name: "disc".into(), outer, holes: vec![], slits: vec![] }).unwrap();
        let mut opts = crate::geometry::MeshOptions::new(0.05);
        opts.grading = crate::geometry::Grading::None;
        opts.required_points = vec![Point::new(0.0, 0.0)];
        let m = crate::geometry::triangulate_with(&d, &opts).unwrap();
        let f = assemble(&m, &CoefficientField::laplacian()).unwrap();
        let pole = m.nearest_node(Point::new(0.0, 0.0));
        assert!(m.nodes[pole].norm() < 1e-12);
        let g = green_column(&f, pole).unwrap();
        for (i, p) in m.nodes.iter().enumerate() {
            let r = p.norm();
            if (0.2..=0.8).contains(&r) {
                let exact = (1.0 / r).ln() / (2.0 * PI);
                assert!((g.values[i] / exact - 1.0).abs() < 0.05, "r = {r}: {} vs {exact}", g.values[i]);
            }
            if m.boundary_mask[i] {
                assert_eq!(g.values[i], 0.0);
            }
        }
    }

    #[test]
    fn green_function_is_symmetric() {
        let m = mesh(&square(), 0.1);
        let f = assemble(&m, &CoefficientField::laplacian()).unwrap();
        let x = m.nearest_interior_node(Point::new(0.3, 0.3));
        let y = m.nearest_interior_node(Point::new(0.6, 0.7));
        let gx = green_column(&f, x).unwrap();
        let gy = green_column(&f, y).unwrap();
        assert!((gx.values[y] - gy.values[x]).abs() < 1e-8 * gx.values[y]);
        let _ = triangulate;
    }
}
