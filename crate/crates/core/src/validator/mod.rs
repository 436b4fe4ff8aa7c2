//! Empirical constants for kernel envelopes, ultracontractivity, convergence,
//! eigenfunction domination, Harnack inequalities and corner exponents.

pub mod corner;
pub mod envelope;
pub mod harnack;
pub mod samples;
pub mod spectral;

pub use corner::{bisector, corner_exponent, ExponentFit};
pub use envelope::{envelope, fit_envelope_constants, ratio_table, RatioRow, BoundKind, EnvelopeParams, FitReport, RepresentativeValues};
pub use harnack::{check_bhp, check_ehi, check_phi, BhpReport, Cylinder, HarnackMode, HarnackReport, SolutionSeries};
pub use samples::{stratified_pairs, PairClass, SampleOptions, SamplePair};
pub use spectral::{
    check_eigenfunction_bound, check_ultracontractivity, measure_convergence, omega_predicted, ConvergenceReport,
    EigenBoundReport, UltraReport,
};
