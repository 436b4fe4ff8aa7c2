//! Numerical laboratory for Dirichlet heat kernels on polygonal planar domains.
//!
//! The crate assembles P1 finite-element discretizations of non-symmetric
//! second-order forms, computes heat kernel columns, Green functions and
//! principal eigenpairs, builds Doob transforms from positive profiles, and
//! checks two-sided kernel envelopes, Harnack inequalities and spectral
//! convergence empirically.

pub mod config;
pub mod doob;
pub mod error;
pub mod forms;
pub mod gallery;
pub mod geometry;
pub mod report;
pub mod run;
pub mod solver;
pub mod sparse;
pub mod stats;
pub mod validator;
pub mod verify;

pub use error::{Error, Result};

#[cfg(test)]
pub(crate) mod testutil {
    use crate::geometry::{load_domain, triangulate_with, DomainSpec, Mesh, MeshOptions, PolygonDomain};

    pub fn square() -> PolygonDomain {
        load_domain(&DomainSpec {
            name: "square".into(),
            outer: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            holes: vec![],
            slits: vec![],
        })
        .unwrap()
    }

    pub fn slit_square() -> PolygonDomain {
        load_domain(&DomainSpec {
            name: "slit-square".into(),
            outer: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            holes: vec![],
            slits: vec![vec![[0.5, 0.0], [0.5, 0.5]]],
        })
        .unwrap()
    }

    pub fn mesh(d: &PolygonDomain, h: f64) -> Mesh {
        triangulate_with(d, &MeshOptions::new(h)).unwrap()
    }
}
