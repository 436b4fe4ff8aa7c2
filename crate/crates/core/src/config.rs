//! Run configuration: one JSON document plus environment overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::forms::CoefficientField;
use crate::gallery::{self, GalleryParams};
use crate::geometry::{DomainSpec, Grading, MeshOptions, Point, PolygonDomain, RepresentativeRule};
use crate::solver::{HeatOptions, Scheme};

pub const ENV_OUT: &str = "HEATPROF_OUT";
pub const ENV_THREADS: &str = "HEATPROF_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Eigen,
    Heat,
    Green,
    Doob,
    Envelope,
    Harnack,
    Bhp,
    Convergence,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Eigen,
        Experiment::Heat,
        Experiment::Green,
        Experiment::Doob,
        Experiment::Envelope,
        Experiment::Harnack,
        Experiment::Bhp,
        Experiment::Convergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Eigen => "eigen",
            Experiment::Heat => "heat",
            Experiment::Green => "green",
            Experiment::Doob => "doob",
            Experiment::Envelope => "envelope",
            Experiment::Harnack => "harnack",
            Experiment::Bhp => "bhp",
            Experiment::Convergence => "convergence",
        }
    }

    /// Experiments whose results this one reads.
    pub fn requires(self) -> &'static [Experiment] {
        match self {
            Experiment::Eigen | Experiment::Green => &[],
            Experiment::Heat => &[],
            Experiment::Doob => &[Experiment::Eigen, Experiment::Green],
            Experiment::Envelope => &[Experiment::Eigen, Experiment::Heat],
            Experiment::Harnack => &[Experiment::Eigen, Experiment::Green],
            Experiment::Bhp => &[Experiment::Eigen, Experiment::Green],
            Experiment::Convergence => &[Experiment::Eigen],
        }
    }
}

/// A gallery name, a path to a domain document, or an inline document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DomainRef {
    Named(String),
    Inline(DomainSpec),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradingKind {
    None,
    #[default]
    Singular,
    AllCorners,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub h_max: f64,
    pub grading: GradingKind,
    pub h_tip_ratio: f64,
    pub grading_slope: f64,
    pub min_angle_deg: f64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        let o = MeshOptions::new(0.05);
        Self {
            h_max: o.h_max,
            grading: GradingKind::Singular,
            h_tip_ratio: o.h_tip_ratio,
            grading_slope: o.grading_slope,
            min_angle_deg: o.min_angle_deg,
        }
    }
}

impl MeshConfig {
    pub fn options(&self) -> MeshOptions {
        let mut o = MeshOptions::new(self.h_max);
        o.grading = match self.grading {
            GradingKind::None => Grading::None,
            GradingKind::Singular => Grading::Singular,
            GradingKind::AllCorners => Grading::AllCorners,
        };
        o.h_tip_ratio = self.h_tip_ratio;
        o.grading_slope = self.grading_slope;
        o.min_angle_deg = self.min_angle_deg;
        o
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub scheme: Scheme,
    pub dt0: f64,
    pub dt_max: f64,
    pub steps_per_level: usize,
    /// Eigenpairs to compute.
    pub n_eigen: usize,
    pub eigen_tol: f64,
    pub eigen_accept: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let h = HeatOptions::default();
        Self {
            scheme: h.scheme,
            dt0: h.dt0,
            dt_max: h.dt_max,
            steps_per_level: h.steps_per_level,
            n_eigen: 6,
            eigen_tol: 1e-11,
            eigen_accept: 1e-8,
        }
    }
}

impl SolverConfig {
    pub fn heat_options(&self) -> HeatOptions {
        self.heat_options_for(self.scheme)
    }

    pub fn heat_options_for(&self, scheme: Scheme) -> HeatOptions {
        HeatOptions { scheme, dt0: self.dt0, dt_max: self.dt_max, steps_per_level: self.steps_per_level }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvelopeConfig {
    pub c_up: f64,
    pub c_low: f64,
    pub n_pairs: usize,
    pub n_sources: usize,
    pub t_min: f64,
    /// Defaults to the squared inner diameter.
    pub t_max: Option<f64>,
    pub n_times: usize,
    pub rule: RepresentativeRule,
    /// Also fit with the other representative-point rule and report the spread change.
    pub alternate_rule: bool,
    /// Inner-uniformity samples used to certify `c_u` for representative points.
    pub uniformity_samples: usize,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        Self {
            c_up: 0.2,
            c_low: 0.3,
            n_pairs: 200,
            n_sources: 16,
            t_min: 1e-3,
            t_max: None,
            n_times: 24,
            rule: RepresentativeRule::Deepest,
            alternate_rule: true,
            uniformity_samples: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    /// Kernel columns use the exact semigroup; the regression needs it.
    pub scheme: Scheme,
    pub n_sources: usize,
    /// Uniform time step of the stored columns.
    pub dt: f64,
    /// Defaults to six squared inner diameters.
    pub t_max: Option<f64>,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self { scheme: Scheme::Exponential, n_sources: 16, dt: 0.02, t_max: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnackConfig {
    /// Interior ball centre; defaults to the deepest free node.
    pub center: Option<[f64; 2]>,
    /// Largest of three dyadic radii; defaults to a third of the centre's depth.
    pub r: Option<f64>,
    pub tau: f64,
    pub delta: f64,
    /// Cylinder top time as a multiple of `τr²`.
    pub s_factor: f64,
    pub times_per_window: usize,
    /// Boundary point for the up-to-boundary check; defaults to the first singular point.
    pub boundary_point: Option<[f64; 2]>,
}

impl Default for HarnackConfig {
    fn default() -> Self {
        Self { center: None, r: None, tau: 1.0, delta: 0.5, s_factor: 1.0, times_per_window: 6, boundary_point: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BhpConfig {
    /// Boundary points; defaults to singular points then edge midpoints, three in all.
    pub points: Vec<[f64; 2]>,
    /// Largest of three dyadic radii.
    pub r: f64,
    /// Drift of the comparison operator when the configured one is symmetric.
    pub comparison_drift: [f64; 2],
}

impl Default for BhpConfig {
    fn default() -> Self {
        Self { points: vec![], r: 0.2, comparison_drift: [1.0, 0.0] }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileChoice {
    #[default]
    Eigen,
    Green,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoobConfig {
    pub profile: ProfileChoice,
    /// Scheme of the identity check; only the exact semigroup makes it exact.
    pub scheme: Scheme,
    pub n_sources: usize,
    pub times: Vec<f64>,
    /// Largest of three dyadic radii for weighted doubling and Poincaré.
    pub r: f64,
}

impl Default for DoobConfig {
    fn default() -> Self {
        Self { profile: ProfileChoice::Eigen, scheme: Scheme::Exponential, n_sources: 4, times: vec![0.01, 0.05, 0.1], r: 0.2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreenConfig {
    /// Poles; defaults to the deepest free node.
    pub poles: Vec<[f64; 2]>,
}

impl Default for GreenConfig {
    fn default() -> Self {
        Self { poles: vec![] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainRef,
    #[serde(default)]
    pub gallery: GalleryParams,
    #[serde(default = "CoefficientField::laplacian")]
    pub coefficients: CoefficientField,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    pub experiments: Vec<Experiment>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub envelope: EnvelopeConfig,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    #[serde(default)]
    pub harnack: HarnackConfig,
    #[serde(default)]
    pub bhp: BhpConfig,
    #[serde(default)]
    pub doob: DoobConfig,
    #[serde(default)]
    pub green: GreenConfig,
}

fn default_seed() -> u64 {
    7
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    /// A config running `experiments` on a named domain with every default.
    pub fn new(domain: &str, experiments: &[Experiment]) -> Self {
        Self {
            domain: DomainRef::Named(domain.into()),
            gallery: GalleryParams::default(),
            coefficients: CoefficientField::laplacian(),
            mesh: MeshConfig::default(),
            solver: SolverConfig::default(),
            experiments: experiments.to_vec(),
            seed: default_seed(),
            out: default_out(),
            threads: None,
            envelope: EnvelopeConfig::default(),
            convergence: ConvergenceConfig::default(),
            harnack: HarnackConfig::default(),
            bhp: BhpConfig::default(),
            doob: DoobConfig::default(),
            green: GreenConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Parse(format!("run config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative domain paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let DomainRef::Named(name) = &cfg.domain {
            let p = Path::new(name);
            if gallery::gallery_spec(name, &cfg.gallery).is_err() && p.is_relative() {
                if let Some(dir) = path.parent() {
                    let joined = dir.join(p);
                    if joined.exists() {
                        cfg.domain = DomainRef::Named(joined.to_string_lossy().into_owned());
                    }
                }
            }
        }
        Ok(cfg)
    }

    /// Applies `HEATPROF_OUT` and `HEATPROF_THREADS`.
    pub fn apply_env(&mut self) -> Result<()> {
        self.apply_overrides(std::env::var(ENV_OUT).ok(), std::env::var(ENV_THREADS).ok())
    }

    pub fn apply_overrides(&mut self, out: Option<String>, threads: Option<String>) -> Result<()> {
        if let Some(o) = out.filter(|s| !s.is_empty()) {
            self.out = PathBuf::from(o);
        }
        if let Some(t) = threads.filter(|s| !s.is_empty()) {
            let n: usize = t.trim().parse().map_err(|_| Error::Parse(format!("{ENV_THREADS} = `{t}` is not a count")))?;
            if n == 0 {
                return Err(Error::InvalidArgument(format!("{ENV_THREADS} must be positive")));
            }
            self.threads = Some(n);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if let DomainRef::Named(name) = &self.domain {
            let known = gallery::gallery_spec(name, &self.gallery).is_ok();
            if !known && !Path::new(name).exists() {
                return Err(Error::UnknownGallery(name.clone()));
            }
        }
        if self.experiments.is_empty() {
            return Err(Error::InvalidArgument("no experiments requested".into()));
        }
        if !(self.mesh.h_max > 0.0 && self.mesh.h_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("mesh.h_max must be positive, got {}", self.mesh.h_max)));
        }
        if !(self.solver.dt0 > 0.0 && self.solver.dt_max >= self.solver.dt0) {
            return Err(Error::InvalidArgument("need 0 < solver.dt0 <= solver.dt_max".into()));
        }
        if self.solver.n_eigen == 0 {
            return Err(Error::InvalidArgument("solver.n_eigen must be positive".into()));
        }
        let e = &self.envelope;
        if !(e.c_up > 0.0 && e.c_up < 0.25 && e.c_low > 0.25) {
            return Err(Error::InvalidArgument(format!("need 0 < c_up < 1/4 < c_low, got {} and {}", e.c_up, e.c_low)));
        }
        if !(e.t_min > 0.0) || e.n_times < 2 {
            return Err(Error::InvalidArgument("envelope needs t_min > 0 and at least two times".into()));
        }
        if !(self.harnack.delta > 0.0 && self.harnack.delta < 1.0 && self.harnack.tau > 0.0) {
            return Err(Error::InvalidArgument("harnack needs τ > 0 and δ ∈ (0, 1)".into()));
        }
        if !(self.convergence.dt > 0.0) {
            return Err(Error::InvalidArgument("convergence.dt must be positive".into()));
        }
        Ok(())
    }

    /// Requested experiments plus their prerequisites, in execution order.
    pub fn plan(&self) -> Vec<Experiment> {
        let mut want = std::collections::BTreeSet::new();
        let mut stack: Vec<Experiment> = self.experiments.clone();
        while let Some(e) = stack.pop() {
            if want.insert(e) {
                stack.extend_from_slice(e.requires());
            }
        }
        Experiment::ALL.iter().copied().filter(|e| want.contains(e)).collect()
    }

    pub fn domain(&self) -> Result<PolygonDomain> {
        match &self.domain {
            DomainRef::Named(name) => gallery::resolve_domain(name, &self.gallery),
            DomainRef::Inline(spec) => crate::geometry::load_domain(spec),
        }
    }

    pub fn domain_name(&self) -> String {
        match &self.domain {
            DomainRef::Named(n) => n.clone(),
            DomainRef::Inline(s) => s.name.clone(),
        }
    }

    /// Canonical JSON of the effective configuration (output location and
    /// thread count excluded, as they do not affect results).
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.threads = None;
        serde_json::to_string(&c).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

pub(crate) fn point(p: [f64; 2]) -> Point {
    Point::new(p[0], p[1])
}
