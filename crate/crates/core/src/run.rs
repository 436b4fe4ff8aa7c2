//! Experiment pipeline: mesh, assembly, solves, transforms and validation,
//! each writing a report into the output directory.

use std::path::PathBuf;

use serde::Serialize;
use serde_json::json;

use crate::config::{point, Experiment, ProfileChoice, RunConfig};
use crate::doob::{
    check_identity, conjugation_discrepancy, make_profile, transform, weighted_poincare, weighted_volume, ProfileSource,
    WeightedAssembly,
};
use crate::error::{Error, Result};
use crate::forms::{assemble, estimate_assumption_constants, CoefficientField, DiscreteForm, Scalar};
use crate::geometry::ball::ball_nodes;
use crate::geometry::point::interior_angle;
use crate::geometry::{
    certify_uniformity, triangulate_with, DomainPoint, Grading, Mesh, MeshStats, Point, PolygonDomain, RepresentativeRule,
};
use crate::report::{
    fmt, log_heatmap, log_line_plot, Check, Failure, FailureManifest, Manifest, OutDir, Report, Series, CONFIG_COPY, FAILURES,
    MANIFEST, SCHEMA, SCHEMA_FILE, SCHEMA_VERSION,
};
use crate::solver::{
    eigenpairs_with, green_column, heat_columns, principal_eigenpair_with, EigenOptions, EigenPair, GreenColumn,
    HeatKernelColumn, Scheme, Side,
};
use crate::stats::logspace;
use crate::validator::corner::{bisector, corner_exponent, ExponentFit};
use crate::validator::envelope::{fit_envelope_constants, ratio_table, RepresentativeValues};
use crate::validator::harnack::{check_bhp, check_ehi, check_phi, Cylinder, HarnackMode, SolutionSeries};
use crate::validator::samples::{sources_of, stratified_pairs, SampleOptions, SamplePair};
use crate::validator::spectral::{check_eigenfunction_bound, check_ultracontractivity, measure_convergence};

/// Length budget used when certifying inner uniformity for representative points.
const UNIFORMITY_LENGTH_BUDGET: f64 = 3.0;
/// Largest radius of the corner-exponent fits.
const CORNER_R_MAX: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub out: PathBuf,
    pub reports: Vec<Report>,
    pub failures: Vec<Failure>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs every planned experiment, on a dedicated pool when a thread count is set.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(|| run_inner(cfg)),
        None => run_inner(cfg),
    }
}

struct EigenData {
    pairs: Vec<EigenPair>,
    star: EigenPair,
}

struct HeatData {
    pairs: Vec<SamplePair>,
    times: Vec<f64>,
    columns: Vec<HeatKernelColumn>,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    hash: String,
    domain_name: String,
    domain: PolygonDomain,
    mesh: Mesh,
    form: DiscreteForm,
    stats: MeshStats,
    out: OutDir,
    eigen: Option<EigenData>,
    green: Option<Vec<GreenColumn>>,
    heat: Option<HeatData>,
    c_u: Option<f64>,
    pairs: Option<Vec<SamplePair>>,
}

fn run_inner(cfg: &RunConfig) -> Result<RunOutcome> {
    let domain = cfg.domain().map_err(|e| e.context("loading domain"))?;
    let mesh = triangulate_with(&domain, &cfg.mesh.options()).map_err(|e| e.context("meshing"))?;
    let form = assemble(&mesh, &cfg.coefficients).map_err(|e| e.context("assembling"))?;
    let out = OutDir::create(&cfg.out)?;
    let mut ctx = Ctx {
        cfg,
        hash: cfg.hash(),
        domain_name: cfg.domain_name(),
        stats: mesh.stats(),
        domain,
        mesh,
        form,
        out,
        eigen: None,
        green: None,
        heat: None,
        c_u: None,
        pairs: None,
    };
    ctx.write_common()?;

    let plan = cfg.plan();
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    let mut failed: Vec<Experiment> = Vec::new();
    for &e in &plan {
        if let Some(dep) = e.requires().iter().find(|d| failed.contains(d)) {
            failed.push(e);
            failures.push(Failure {
                experiment: e.name().into(),
                invariant: "dependency".into(),
                detail: format!("skipped because `{}` failed", dep.name()),
            });
            continue;
        }
        log::info!("running {}", e.name());
        match ctx.experiment(e) {
            Ok(report) => {
                ctx.out.write_report(&report)?;
                for c in report.checks.iter().filter(|c| !c.passed) {
                    failures.push(Failure { experiment: e.name().into(), invariant: c.name.clone(), detail: c.detail.clone() });
                }
                reports.push(report);
            }
            Err(err) => {
                log::error!("{} failed: {err}", e.name());
                failed.push(e);
                failures.push(Failure { experiment: e.name().into(), invariant: err.kind().into(), detail: err.to_string() });
            }
        }
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        config_sha256: ctx.hash.clone(),
        domain: ctx.domain_name.clone(),
        experiments: plan.iter().map(|e| e.name().to_string()).collect(),
        reports: reports.iter().map(|r| Report::file_name(&r.experiment)).collect(),
        passed: failures.is_empty(),
    };
    ctx.out.write_json(MANIFEST, &manifest)?;
    ctx.out.write_json(FAILURES, &FailureManifest { schema_version: SCHEMA_VERSION, config_sha256: ctx.hash.clone(), failures: failures.clone() })?;
    Ok(RunOutcome { out: cfg.out.clone(), reports, failures })
}

fn value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("report data serializes")
}

fn p2(p: Point) -> [f64; 2] {
    [p.x, p.y]
}

/// `max / min` of positive values, the dyadic stability measure.
fn stability(values: &[f64]) -> f64 {
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    hi / lo
}

fn dyadic(r: f64) -> [f64; 3] {
    [r, r / 2.0, r / 4.0]
}

impl<'a> Ctx<'a> {
    fn write_common(&self) -> Result<()> {
        let mut cfg = self.cfg.clone();
        cfg.out = PathBuf::new();
        cfg.threads = None;
        self.out.write_json(CONFIG_COPY, &cfg)?;
        self.out.write_text(SCHEMA_FILE, SCHEMA)?;
        let rows = (0..self.mesh.nodes.len()).map(|i| {
            let p = self.mesh.nodes[i];
            vec![i.to_string(), fmt(p.x), fmt(p.y), u8::from(self.mesh.boundary_mask[i]).to_string(), fmt(self.form.m_lumped[i])]
        });
        self.out.write_csv("nodes.csv", &["node", "x", "y", "boundary", "mass"], rows)?;
        let tris = self.mesh.triangles.iter().map(|t| t.iter().map(|v| v.to_string()).collect());
        self.out.write_csv("triangles.csv", &["a", "b", "c"], tris)
    }

    fn report(&self, e: Experiment, checks: Vec<Check>, files: Vec<String>, data: serde_json::Value) -> Report {
        Report::new(e.name(), &self.hash, &self.domain_name, self.stats.clone(), checks, files, data)
    }

    fn experiment(&mut self, e: Experiment) -> Result<Report> {
        let r = match e {
            Experiment::Eigen => self.eigen(),
            Experiment::Heat => self.heat(),
            Experiment::Green => self.green(),
            Experiment::Doob => self.doob(),
            Experiment::Envelope => self.envelope(),
            Experiment::Harnack => self.harnack(),
            Experiment::Bhp => self.bhp(),
            Experiment::Convergence => self.convergence(),
        };
        r.map_err(|err| err.context(format!("experiment `{}`", e.name())))
    }

    fn eigen_data(&self) -> Result<&EigenData> {
        self.eigen.as_ref().ok_or_else(|| Error::InvalidArgument("eigenpairs not computed".into()))
    }

    fn c_u(&mut self) -> Result<f64> {
        if let Some(c) = self.c_u {
            return Ok(c);
        }
        let cert = certify_uniformity(&self.domain, self.cfg.envelope.uniformity_samples, UNIFORMITY_LENGTH_BUDGET)?;
        self.c_u = Some(cert.c_u);
        Ok(cert.c_u)
    }

    fn pairs(&mut self) -> Result<Vec<SamplePair>> {
        if let Some(p) = &self.pairs {
            return Ok(p.clone());
        }
        let e = &self.cfg.envelope;
        let opts = SampleOptions { n_pairs: e.n_pairs, n_sources: e.n_sources, seed: self.cfg.seed, ..Default::default() };
        let p = stratified_pairs(&self.domain, &self.mesh, &opts)?;
        self.pairs = Some(p.clone());
        Ok(p)
    }

    /// Deepest free node, ties broken by index.
    fn deepest_node(&self) -> usize {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for &i in &self.form.interior {
            let d = self.domain.boundary_distance_unchecked(self.mesh.nodes[i]);
            if d > best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    fn graded(&self, p: Point) -> bool {
        match self.cfg.mesh.options().grading {
            Grading::None => false,
            Grading::Singular => self.domain.slit_tips().contains(&p) || self.domain.reflex_vertices().contains(&p),
            Grading::AllCorners => true,
            Grading::Points(ref v) => v.contains(&p),
        }
    }

    /// Slit tips and reflex vertices, then the remaining ring vertices.
    fn corner_points(&self) -> Vec<(Point, f64)> {
        let mut out: Vec<(Point, f64)> = self.domain.slit_tips().into_iter().map(|p| (p, 2.0 * std::f64::consts::PI)).collect();
        let mut rest = Vec::new();
        for (r, ring) in self.domain.rings().enumerate() {
            for i in 0..ring.len() {
                let a = interior_angle(ring, i);
                let seen = if r == 0 { a } else { 2.0 * std::f64::consts::PI - a };
                if seen > std::f64::consts::PI + 1e-9 {
                    out.push((ring[i], seen));
                } else {
                    rest.push((ring[i], seen));
                }
            }
        }
        out.extend(rest);
        out
    }

    fn eigen(&mut self) -> Result<Report> {
        let s = &self.cfg.solver;
        let opts = EigenOptions { tol: s.eigen_tol, accept: s.eigen_accept, ..Default::default() };
        let pairs = eigenpairs_with(&self.form, s.n_eigen, Side::Primal, &opts)?;
        let star = if self.form.symmetric { pairs[0].clone() } else { principal_eigenpair_with(&self.form, Side::Adjoint, &opts)? };
        let phi = &pairs[0];
        let interior = &self.form.interior;
        let min_phi = interior.iter().map(|&i| phi.phi[i]).fold(f64::INFINITY, f64::min);
        let norm: f64 = interior.iter().map(|&i| phi.phi[i] * phi.phi[i] * self.form.m_lumped[i]).sum();
        let max_res = pairs.iter().chain([&star]).map(|p| p.residual).fold(0.0, f64::max);
        let mut checks = vec![
            Check::at_most("eigen-residual", max_res, s.eigen_accept),
            Check::at_least("principal-positive", min_phi, f64::MIN_POSITIVE),
            Check::at_most("principal-normalized", (norm - 1.0).abs(), 1e-9),
            Check::new("principal-real", phi.lambda_im == 0.0, format!("imaginary part {:e}", phi.lambda_im)),
        ];

        let mut corners: Vec<serde_json::Value> = Vec::new();
        let h_tip = self.cfg.mesh.h_max * self.cfg.mesh.h_tip_ratio;
        for (p, angle) in self.corner_points() {
            let r_min = 4.0 * if self.graded(p) { h_tip } else { self.cfg.mesh.h_max };
            let theory = std::f64::consts::PI / angle;
            let fit: std::result::Result<ExponentFit, String> = if r_min < CORNER_R_MAX / 2.0 {
                corner_exponent(&self.domain, &self.mesh, &phi.phi, p, r_min, CORNER_R_MAX, 16).map_err(|e| e.to_string())
            } else {
                Err(format!("mesh too coarse: 4h = {r_min} is not below {}", CORNER_R_MAX / 2.0))
            };
            corners.push(match fit {
                Ok(f) => json!({"vertex": p2(p), "angle": angle, "theory": theory, "fit": f}),
                Err(msg) => json!({"vertex": p2(p), "angle": angle, "theory": theory, "skipped": msg}),
            });
        }

        let domination = if pairs.len() >= 2 {
            let c_u = self.c_u()?;
            let mut reps = RepresentativeValues::new(&self.domain, &self.mesh, &phi.phi, c_u, self.cfg.envelope.rule);
            let r = check_eigenfunction_bound(&pairs, &mut reps, &self.form)?;
            let finite = r.entries.iter().all(|e| e.a5_emp.is_finite() && e.max_ratio.is_finite());
            checks.push(Check::new("domination-finite", finite, "A5 and |ψ|/φ finite for every computed ψ"));
            checks.push(Check::at_least("spectral-gap-positive", r.spectral_gap, f64::MIN_POSITIVE));
            let worst = r.entries.iter().map(|e| e.max_ratio / (10.0 * e.max_interior_ratio)).fold(0.0, f64::max);
            checks.push(Check::at_most("no-boundary-blowup", worst, 1.0));
            Some(r)
        } else {
            None
        };

        let mut header: Vec<String> = vec!["node".into(), "x".into(), "y".into()];
        header.extend((1..=pairs.len()).map(|k| format!("phi_{k}")));
        header.push("phi_star".into());
        let rows = (0..self.mesh.nodes.len()).map(|i| {
            let p = self.mesh.nodes[i];
            let mut r = vec![i.to_string(), fmt(p.x), fmt(p.y)];
            r.extend(pairs.iter().map(|e| fmt(e.phi[i])));
            r.push(fmt(star.phi[i]));
            r
        });
        let h: Vec<&str> = header.iter().map(String::as_str).collect();
        self.out.write_csv("eigen.csv", &h, rows)?;

        let data = json!({
            "lambda": pairs.iter().map(|p| p.lambda).collect::<Vec<_>>(),
            "lambda_im": pairs.iter().map(|p| p.lambda_im).collect::<Vec<_>>(),
            "residual": pairs.iter().map(|p| p.residual).collect::<Vec<_>>(),
            "degenerate": pairs.iter().map(|p| p.degenerate).collect::<Vec<_>>(),
            "lambda_star": star.lambda,
            "symmetric": self.form.symmetric,
            "c_u": self.c_u,
            "corners": corners,
            "domination": domination.as_ref().map(value),
        });
        let report = self.report(Experiment::Eigen, checks, vec!["eigen.csv".into()], data);
        self.eigen = Some(EigenData { pairs, star });
        Ok(report)
    }

    fn heat(&mut self) -> Result<Report> {
        let pairs = self.pairs()?;
        let e = &self.cfg.envelope;
        let t_max = e.t_max.unwrap_or(self.domain.diam_inner * self.domain.diam_inner);
        if !(t_max > e.t_min) {
            return Err(Error::InvalidArgument(format!("envelope time range [{}, {t_max}] is empty", e.t_min)));
        }
        let times = logspace(e.t_min, t_max, e.n_times);
        let opts = self.cfg.solver.heat_options();
        let columns = heat_columns(&self.form, &sources_of(&pairs), &times, &opts)?;

        let bounds = self.cfg.coefficients.bounds_on_mesh(&self.mesh)?;
        let alpha = estimate_assumption_constants(&bounds).garding_alpha();
        let no_drift = self.cfg.coefficients.b.iter().chain(&self.cfg.coefficients.d).all(Scalar::is_zero);
        let c_nonneg = self.mesh.nodes.iter().all(|&p| self.cfg.coefficients.c.eval(p).map_or(false, |c| c >= 0.0));
        let mut checks = Vec::new();
        let mut rows = Vec::new();
        let (mut worst_neg, mut worst_mass, mut worst_incr) = (0.0f64, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for c in &columns {
            let masses = c.masses(&self.form.m_lumped);
            let scale = c.values.iter().flatten().copied().fold(0.0, f64::max);
            worst_neg = worst_neg.min(c.min_value / scale.max(f64::MIN_POSITIVE));
            for (k, &m) in masses.iter().enumerate() {
                worst_mass = worst_mass.max(m / (alpha * c.times[k]).exp() - 1.0);
                if k > 0 {
                    worst_incr = worst_incr.max(m - masses[k - 1]);
                }
                rows.push(vec![c.source_node.to_string(), fmt(c.times[k]), fmt(m), fmt(c.values[k].iter().copied().fold(f64::INFINITY, f64::min))]);
            }
        }
        if opts.scheme != Scheme::CrankNicolson {
            checks.push(Check::at_least("kernel-nonnegative", worst_neg, -1e-12));
        }
        checks.push(Check::at_most("mass-bound", worst_mass, 1e-9));
        if no_drift && c_nonneg {
            checks.push(Check::at_most("mass-nonincreasing", worst_incr, 1e-12));
        }
        self.out.write_csv("heat.csv", &["source", "t", "mass", "min_value"], rows)?;
        let data = json!({
            "scheme": opts.scheme,
            "times": times,
            "sources": sources_of(&pairs),
            "garding_alpha": alpha,
            "diam_inner": self.domain.diam_inner,
        });
        let report = self.report(Experiment::Heat, checks, vec!["heat.csv".into()], data);
        self.heat = Some(HeatData { pairs, times, columns });
        Ok(report)
    }

    fn green(&mut self) -> Result<Report> {
        let poles: Vec<usize> = if self.cfg.green.poles.is_empty() {
            vec![self.deepest_node()]
        } else {
            self.cfg.green.poles.iter().map(|&p| self.mesh.nearest_interior_node(point(p))).collect()
        };
        let cols: Vec<GreenColumn> = poles.iter().map(|&p| green_column(&self.form, p)).collect::<Result<_>>()?;
        let min_int = cols
            .iter()
            .flat_map(|c| self.form.interior.iter().map(move |&i| c.values[i]))
            .fold(f64::INFINITY, f64::min);
        let max_bd = cols
            .iter()
            .flat_map(|c| (0..c.values.len()).filter(|&i| self.form.dirichlet_mask[i]).map(move |i| c.values[i].abs()))
            .fold(0.0, f64::max);
        let mut checks = vec![
            Check::at_least("green-positive", min_int, f64::MIN_POSITIVE),
            Check::at_most("green-boundary-zero", max_bd, 0.0),
        ];
        if self.form.symmetric && cols.len() >= 2 {
            let (a, b) = (&cols[0], &cols[1]);
            let g_ab = a.values[b.pole_node];
            let g_ba = b.values[a.pole_node];
            checks.push(Check::at_most("green-symmetric", (g_ab - g_ba).abs() / g_ab.abs().max(g_ba.abs()), 1e-9));
        }
        let mut header = vec!["node".to_string()];
        header.extend((1..=cols.len()).map(|k| format!("g_{k}")));
        let h: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = (0..self.mesh.nodes.len()).map(|i| {
            let mut r = vec![i.to_string()];
            r.extend(cols.iter().map(|c| fmt(c.values[i])));
            r
        });
        self.out.write_csv("green.csv", &h, rows)?;
        let data = json!({
            "poles": poles.iter().map(|&p| p2(self.mesh.nodes[p])).collect::<Vec<_>>(),
            "pole_nodes": poles,
        });
        let report = self.report(Experiment::Green, checks, vec!["green.csv".into()], data);
        self.green = Some(cols);
        Ok(report)
    }

    /// Boundary points for weighted-volume and BHP checks: configured ones,
    /// else singular points then outer-edge midpoints, `n` in all.
    fn boundary_points(&self, configured: &[[f64; 2]], n: usize) -> Vec<Point> {
        if !configured.is_empty() {
            return configured.iter().map(|&p| point(p)).collect();
        }
        let mut out: Vec<Point> = self.corner_points().into_iter().filter(|(_, a)| *a > std::f64::consts::PI + 1e-9).map(|(p, _)| p).collect();
        let outer = &self.domain.outer;
        for i in 0..outer.len() {
            out.push(outer[i].lerp(outer[(i + 1) % outer.len()], 0.5));
        }
        out.truncate(n);
        out
    }

    fn doob(&mut self) -> Result<Report> {
        let cfg = &self.cfg.doob;
        let eig = self.eigen_data()?;
        let green = self.green.as_ref().ok_or_else(|| Error::InvalidArgument("Green columns not computed".into()))?;
        let source = match cfg.profile {
            ProfileChoice::Eigen => ProfileSource::Eigen(&eig.pairs[0]),
            ProfileChoice::Green => ProfileSource::Green(&green[0]),
        };
        let profile = make_profile(source, &self.form, &self.mesh)?;
        let weighted = transform(&self.form, &profile)?;
        let pairs = self.pairs()?;
        let sources: Vec<usize> =
            sources_of(&pairs).into_iter().filter(|&s| Some(s) != profile.pole_node).take(cfg.n_sources.max(1)).collect();
        let opts = self.cfg.solver.heat_options_for(cfg.scheme);
        let ident = check_identity(&self.form, &weighted, &sources, &cfg.times, &opts)?;
        let mut checks = vec![Check::at_most("generator-identity", weighted.generator_defect, 1e-10)];
        if cfg.scheme == Scheme::Exponential {
            checks.push(Check::at_most("doob-identity", ident.max_rel_err, 1e-10));
        }
        if let Some(m) = ident.markov_defect {
            checks.push(Check::at_most("markov-defect", m, 1e-8));
        }

        let centres = self.boundary_points(&[], 3);
        let radii = {
            let mut r = dyadic(cfg.r).to_vec();
            r.reverse();
            r
        };
        let mut vol_rows = Vec::new();
        let mut volumes = Vec::new();
        let mut monotone = true;
        let mut ratios_ok = true;
        for c in &centres {
            match weighted_volume(&profile, &self.domain, &self.mesh, &DomainPoint::from(*c), &radii) {
                Ok(t) => {
                    monotone &= t.volumes.windows(2).all(|w| w[1] >= w[0]);
                    ratios_ok &= t.ratios.iter().all(|r| r.is_finite() && *r > 0.0);
                    for k in 0..t.radii.len() {
                        vol_rows.push(vec![fmt(c.x), fmt(c.y), fmt(t.radii[k]), fmt(t.volumes[k]), fmt(t.doubled[k]), fmt(t.ratios[k])]);
                    }
                    volumes.push(json!({"center": p2(*c), "table": t}));
                }
                Err(e) => volumes.push(json!({"center": p2(*c), "skipped": e.to_string()})),
            }
        }
        checks.push(Check::new("weighted-volume-monotone", monotone, "V_{h²}(ξ, r) nondecreasing in r"));
        checks.push(Check::new("weighted-doubling-finite", ratios_ok, "V_{h²}(ξ, 2r)/V_{h²}(ξ, r) finite and positive"));
        self.out.write_csv("doob_volumes.csv", &["cx", "cy", "r", "volume", "volume_2r", "ratio"], vol_rows)?;

        let assembly = WeightedAssembly::new(&self.mesh, &self.cfg.coefficients, &profile.h)?;
        let discrepancy = conjugation_discrepancy(&weighted, &assembly);
        let mut poincare = Vec::new();
        let mut p_rows = Vec::new();
        for c in &centres {
            for &r in &radii {
                let res = ball_nodes(&self.domain, &self.mesh, &DomainPoint::from(*c), r).and_then(|(nodes, _)| weighted_poincare(&assembly, &nodes, r));
                match res {
                    Ok(p) => {
                        p_rows.push(vec![fmt(c.x), fmt(c.y), fmt(r), p.n_nodes.to_string(), fmt(p.nu1), fmt(p.p)]);
                        poincare.push(json!({"center": p2(*c), "report": p}));
                    }
                    Err(e) => poincare.push(json!({"center": p2(*c), "r": r, "skipped": e.to_string()})),
                }
            }
        }
        self.out.write_csv("doob_poincare.csv", &["cx", "cy", "r", "nodes", "nu1", "P"], p_rows)?;
        let data = json!({
            "profile": {"kind": profile.kind, "gamma": profile.gamma, "pole_node": profile.pole_node, "excluded": profile.excluded},
            "identity": ident,
            "verification": {"max_rel_err": ident.max_rel_err, "markov_defect": ident.markov_defect},
            "conjugation_discrepancy": discrepancy,
            "volumes": volumes,
            "poincare": poincare,
        });
        Ok(self.report(Experiment::Doob, checks, vec!["doob_volumes.csv".into(), "doob_poincare.csv".into()], data))
    }

    fn envelope(&mut self) -> Result<Report> {
        let c_u = self.c_u()?;
        let e = self.cfg.envelope.clone();
        let eig = self.eigen_data()?;
        let heat = self.heat.as_ref().ok_or_else(|| Error::InvalidArgument("kernel columns not computed".into()))?;
        let phi = &eig.pairs[0].phi;
        let t_range = (heat.times[0], heat.times[heat.times.len() - 1]);
        let mut reps = RepresentativeValues::new(&self.domain, &self.mesh, phi, c_u, e.rule);
        let fit = fit_envelope_constants(&heat.columns, &mut reps, &heat.pairs, e.c_up, e.c_low, t_range)?;
        let table = ratio_table(&heat.columns, &mut reps, &heat.pairs, e.c_up, e.c_low, t_range)?;
        let alternate = if e.alternate_rule {
            let rule = match e.rule {
                RepresentativeRule::Deepest => RepresentativeRule::FirstDeep,
                RepresentativeRule::FirstDeep => RepresentativeRule::Deepest,
            };
            let mut alt = RepresentativeValues::new(&self.domain, &self.mesh, phi, c_u, rule);
            Some((rule, fit_envelope_constants(&heat.columns, &mut alt, &heat.pairs, e.c_up, e.c_low, t_range)?))
        } else {
            None
        };
        let checks = vec![
            Check::finite_positive("a2-positive", fit.a2_emp),
            Check::finite_positive("a1-finite", fit.a1_emp),
            Check::at_most("a2-below-a1", fit.a2_emp, fit.a1_emp),
        ];
        let rows = table.iter().map(|r| vec![fmt(r.t), r.x.to_string(), r.y.to_string(), fmt(r.p), fmt(r.env_upper), fmt(r.env_lower)]);
        self.out.write_csv("envelope_ratios.csv", &["t", "x", "y", "p", "env_upper", "env_lower"], rows)?;
        let pair_rows = heat.pairs.iter().map(|p| {
            vec![p.x.to_string(), p.y.to_string(), fmt(p.d_inner), fmt(p.euclid), serde_json::to_value(p.class).unwrap().as_str().unwrap_or("").to_string()]
        });
        self.out.write_csv("pairs.csv", &["x", "y", "d_inner", "euclid", "class"], pair_rows)?;
        let n = heat.pairs.len();
        let grid: Vec<Vec<f64>> = table.chunks(n).map(|rows| rows.iter().map(|r| r.p / r.env_upper).collect()).collect();
        log_heatmap(&self.out.path("envelope_upper.svg"), "p / upper envelope", "pair", "time index", &grid)?;
        let per_t = Series { label: "sup p/upper", points: fit.per_time.iter().map(|f| (f.t.log10(), f.a1)).collect() };
        let per_t_low = Series { label: "inf p/lower", points: fit.per_time.iter().map(|f| (f.t.log10(), f.a2)).collect() };
        log_line_plot(&self.out.path("envelope_constants.svg"), "envelope constants per time", "log10 t", "ratio", &[per_t, per_t_low])?;
        let data = json!({
            "c_u": c_u,
            "rule": e.rule,
            "fit": fit,
            "alternate": alternate.as_ref().map(|(rule, f)| json!({"rule": rule, "fit": f, "spread_change": stability(&[f.spread, fit.spread])})),
        });
        let files = ["envelope_ratios.csv", "pairs.csv", "envelope_upper.svg", "envelope_constants.svg"].map(String::from).to_vec();
        Ok(self.report(Experiment::Envelope, checks, files, data))
    }

    fn convergence(&mut self) -> Result<Report> {
        let cfg = self.cfg.convergence.clone();
        let pairs = self.pairs()?;
        let eig = self.eigen_data()?;
        if eig.pairs.len() < 2 {
            return Err(Error::InvalidArgument("convergence needs at least two eigenpairs".into()));
        }
        let r = self.domain.diam_inner;
        let t_max = cfg.t_max.unwrap_or(6.0 * r * r);
        let n = (t_max / cfg.dt).ceil() as usize;
        let times: Vec<f64> = (1..=n).map(|k| k as f64 * cfg.dt).collect();
        let sources: Vec<usize> = sources_of(&pairs).into_iter().take(cfg.n_sources.max(1)).collect();
        let mut opts = self.cfg.solver.heat_options_for(cfg.scheme);
        opts.dt_max = opts.dt_max.max(cfg.dt);
        let columns = heat_columns(&self.form, &sources, &times, &opts)?;
        let ultra = check_ultracontractivity(&columns, &eig.pairs[0], &eig.star, &self.form, r)?;
        let conv = measure_convergence(&columns, &eig.pairs[0], &eig.star, eig.pairs[1].lambda, &self.form, &ultra)?;
        let slack = 1e-9;
        let checks = vec![
            Check::finite_positive("a3-positive", conv.a3_emp),
            Check::at_most("a3-below-big-a3", conv.a3_emp, conv.big_a3_emp),
            Check::at_least("w-above-a3", conv.w_min, ultra.a3_emp * (1.0 - slack)),
            Check::at_most("w-below-big-a3", conv.w_max, ultra.big_a3_emp * (1.0 + slack)),
            Check::at_most("w-normalized", (conv.w_normalization - 1.0).abs(), 1e-6),
            Check::at_least("omega-ordering", conv.omega_measured, conv.omega_predicted),
        ];
        let rows = conv.decay.iter().zip(&conv.decay_phiphi).map(|(a, b)| vec![fmt(a.0), fmt(a.1), fmt(b.1)]);
        self.out.write_csv("decay.csv", &["t", "deviation", "deviation_phiphi"], rows)?;
        let w_rows = self.form.interior.iter().map(|&i| vec![i.to_string(), fmt(conv.w[i])]);
        self.out.write_csv("w.csv", &["node", "w"], w_rows)?;
        let ultra_rows = ultra.per_t.iter().map(|u| vec![fmt(u.t), fmt(u.a3), fmt(u.big_a3), fmt(u.a3_star), fmt(u.big_a3_star)]);
        self.out.write_csv("ultracontractivity.csv", &["t", "a3", "A3", "a3_star", "A3_star"], ultra_rows)?;
        let s1 = Series { label: "D(t), φφ*", points: conv.decay.clone() };
        let s2 = Series { label: "D(t), φφ", points: conv.decay_phiphi.clone() };
        let fit_line = Series {
            label: "fit",
            points: conv.decay.iter().map(|&(t, _)| (t, conv.a4_emp * (-conv.omega_measured * t).exp())).filter(|p| p.1 > 1e-300).collect(),
        };
        log_line_plot(&self.out.path("decay.svg"), "convergence to the ground state", "t", "D(t)", &[s1, s2, fit_line])?;
        let mut summary = value(&conv);
        if let Some(o) = summary.as_object_mut() {
            o.remove("w");
            o.remove("decay");
            o.remove("decay_phiphi");
        }
        let data = json!({
            "scheme": cfg.scheme,
            "sources": sources,
            "lambda": eig.pairs[0].lambda,
            "lambda2": eig.pairs[1].lambda,
            "convergence": summary,
            "ultracontractivity": {"a3_emp": ultra.a3_emp, "A3_emp": ultra.big_a3_emp, "a3_star_emp": ultra.a3_star_emp, "A3_star_emp": ultra.big_a3_star_emp, "r": ultra.r},
        });
        let files = ["decay.csv", "w.csv", "ultracontractivity.csv", "decay.svg"].map(String::from).to_vec();
        Ok(self.report(Experiment::Convergence, checks, files, data))
    }

    fn harnack(&mut self) -> Result<Report> {
        let cfg = self.cfg.harnack.clone();
        let eig = self.eigen_data()?;
        let phi = eig.pairs[0].phi.clone();
        let x_node = match cfg.center {
            Some(c) => self.mesh.nearest_interior_node(point(c)),
            None => self.deepest_node(),
        };
        let x = self.mesh.nodes[x_node];
        let depth = self.domain.boundary_distance(x)?;
        let r_top = cfg.r.unwrap_or(depth / 3.0);
        let radii = dyadic(r_top);
        let cyls: Vec<Cylinder> =
            radii.iter().map(|&r| Cylinder { x, r, s: cfg.s_factor * cfg.tau * r * r, tau: cfg.tau, delta: cfg.delta }).collect();
        let mut times: Vec<f64> = cyls.iter().flat_map(|c| c.sample_times(cfg.times_per_window)).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let opts = self.cfg.solver.heat_options();
        let col = heat_columns(&self.form, &[x_node], &times, &opts)?.remove(0);
        let sol = SolutionSeries::from_column(&col);
        let interior: Vec<_> = cyls.iter().map(|c| check_phi(&sol, &self.domain, &self.mesh, c, HarnackMode::Interior)).collect::<Result<_>>()?;
        let h_int: Vec<f64> = interior.iter().map(|r| r.h_emp).collect();

        // elliptic check on the same balls with a Green function whose pole is outside them
        let pole = self
            .form
            .interior
            .iter()
            .copied()
            .filter(|&i| self.mesh.nodes[i].dist(x) > 2.0 * r_top)
            .max_by(|&a, &b| {
                let da = self.domain.boundary_distance_unchecked(self.mesh.nodes[a]);
                let db = self.domain.boundary_distance_unchecked(self.mesh.nodes[b]);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .ok_or_else(|| Error::InvalidArgument("no Green pole outside the Harnack balls".into()))?;
        let g = green_column(&self.form, pole)?;
        let elliptic: Vec<_> = radii
            .iter()
            .map(|&r| check_ehi(&g.values, &self.domain, &self.mesh, x, cfg.delta * r, HarnackMode::Interior))
            .collect::<Result<_>>()?;

        // up to the boundary: u/φ with u started near the boundary point
        let xi = match cfg.boundary_point {
            Some(p) => point(p),
            None => self.boundary_points(&[], 1).first().copied().ok_or_else(|| Error::InvalidArgument("domain has no boundary point".into()))?,
        };
        let dir = bisector(&self.domain, xi).unwrap_or_else(|_| {
            let q = self.mesh.nodes[self.mesh.nearest_interior_node(xi)];
            (q - xi) * (1.0 / q.dist(xi))
        });
        let mut boundary = Vec::new();
        let mut unresolved = Vec::new();
        let mut b_times: Vec<f64> = Vec::new();
        let b_top = cfg.r.unwrap_or(self.domain.diam_inner / 8.0);
        let b_cyls: Vec<Cylinder> =
            dyadic(b_top).iter().map(|&r| Cylinder { x: xi, r, s: cfg.s_factor * cfg.tau * r * r, tau: cfg.tau, delta: cfg.delta }).collect();
        for c in &b_cyls {
            b_times.extend(c.sample_times(cfg.times_per_window));
        }
        b_times.sort_by(f64::total_cmp);
        b_times.dedup();
        for c in &b_cyls {
            let src = self.mesh.nearest_interior_node(xi + dir * (0.5 * c.r));
            let col = heat_columns(&self.form, &[src], &b_times, &opts)?.remove(0);
            let sol = SolutionSeries::from_column(&col).divided_by(&phi, "/phi");
            match check_phi(&sol, &self.domain, &self.mesh, c, HarnackMode::UpToBoundary) {
                Ok(r) => boundary.push(r),
                Err(e @ Error::EmptyBall { .. }) => unresolved.push(json!({"r": c.r, "skipped": e.to_string()})),
                Err(e) => return Err(e),
            }
        }
        let h_bd: Vec<f64> = boundary.iter().map(|r| r.h_emp).collect();
        let h_ell: Vec<f64> = elliptic.iter().map(|r| r.h_emp).collect();

        let mut checks = vec![
            Check::new("boundary-phi-resolved", !boundary.is_empty(), format!("{} of 3 boundary cylinders hold mesh nodes", boundary.len())),
            Check::new("phi-at-least-one", h_int.iter().chain(&h_bd).all(|h| *h >= 1.0), "H ≥ 1 for positive solutions"),
            Check::new("phi-finite", h_int.iter().chain(&h_bd).all(|h| h.is_finite()), "H finite"),
            Check::at_most("phi-dyadic-stability", stability(&h_int), 2.0),
        ];
        let implied = h_ell.iter().zip(&h_int).all(|(e, p)| e <= p);
        checks.push(Check::new("phi-implies-ehi", implied, format!("elliptic {h_ell:?} vs parabolic {h_int:?}")));
        let rows = interior
            .iter()
            .map(|r| ("interior", r))
            .chain(boundary.iter().map(|r| ("boundary", r)))
            .map(|(kind, r)| vec![kind.to_string(), fmt(r.cylinder.x.x), fmt(r.cylinder.x.y), fmt(r.cylinder.r), fmt(r.sup_minus), fmt(r.inf_plus), fmt(r.h_emp)]);
        self.out.write_csv("harnack.csv", &["kind", "x", "y", "r", "sup_minus", "inf_plus", "H"], rows)?;
        let data = json!({
            "interior": interior,
            "elliptic": elliptic,
            "boundary": boundary,
            "boundary_unresolved": unresolved,
            "boundary_point": p2(xi),
            "green_pole": p2(self.mesh.nodes[pole]),
            "interior_stability": stability(&h_int),
            "boundary_stability": stability(&h_bd),
        });
        Ok(self.report(Experiment::Harnack, checks, vec!["harnack.csv".into()], data))
    }

    fn bhp(&mut self) -> Result<Report> {
        let cfg = self.cfg.bhp.clone();
        let eig = self.eigen_data()?;
        let u = eig.pairs[0].phi.clone();
        let comparison = if self.form.symmetric {
            let mut c = self.cfg.coefficients.clone();
            c.b = [cfg.comparison_drift[0].into(), cfg.comparison_drift[1].into()];
            c
        } else {
            CoefficientField::laplacian()
        };
        let form2 = assemble(&self.mesh, &comparison)?;
        let opts = EigenOptions { tol: self.cfg.solver.eigen_tol, accept: self.cfg.solver.eigen_accept, ..Default::default() };
        let v = principal_eigenpair_with(&form2, Side::Primal, &opts)?.phi;
        let points = self.boundary_points(&cfg.points, 3);
        let mut reports = Vec::new();
        let mut stab = Vec::new();
        let mut rows = Vec::new();
        for &xi in &points {
            let per: Vec<_> = dyadic(cfg.r)
                .iter()
                .map(|&r| check_bhp(&u, &v, &self.domain, &self.mesh, &DomainPoint::from(xi), r))
                .collect::<Result<_>>()?;
            let a: Vec<f64> = per.iter().map(|r| r.a1_emp).collect();
            stab.push(stability(&a));
            for r in &per {
                rows.push(vec![fmt(xi.x), fmt(xi.y), fmt(r.r), r.n_nodes.to_string(), fmt(r.a1_emp)]);
            }
            reports.push(per);
        }
        let all: Vec<f64> = reports.iter().flatten().map(|r| r.a1_emp).collect();
        let checks = vec![
            Check::new("bhp-finite", all.iter().all(|a| a.is_finite() && *a >= 1.0), "A1 finite and ≥ 1"),
            Check::at_most("bhp-dyadic-stability", stab.iter().copied().fold(0.0, f64::max), 2.0),
        ];
        self.out.write_csv("bhp.csv", &["xi_x", "xi_y", "r", "nodes", "A1"], rows)?;
        let data = json!({
            "comparison": comparison,
            "points": points.iter().map(|&p| p2(p)).collect::<Vec<_>>(),
            "reports": reports,
            "stability": stab,
        });
        Ok(self.report(Experiment::Bhp, checks, vec!["bhp.csv".into()], data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stability_and_radii() {
        assert_eq!(stability(&[2.0, 1.0, 1.5]), 2.0);
        assert_eq!(dyadic(0.4), [0.4, 0.2, 0.1]);
    }

    #[test]
    fn corner_points_put_singular_vertices_first() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::new("l-shape", &[Experiment::Green]);
        cfg.mesh.h_max = 0.2;
        cfg.out = dir.path().to_path_buf();
        let outcome = run(&cfg).unwrap();
        assert!(outcome.passed());
        let domain = cfg.domain().unwrap();
        let mesh = triangulate_with(&domain, &cfg.mesh.options()).unwrap();
        let form = assemble(&mesh, &cfg.coefficients).unwrap();
        let ctx = Ctx {
            cfg: &cfg,
            hash: cfg.hash(),
            domain_name: cfg.domain_name(),
            stats: mesh.stats(),
            out: OutDir::create(dir.path()).unwrap(),
            domain,
            mesh,
            form,
            eigen: None,
            green: None,
            heat: None,
            c_u: None,
            pairs: None,
        };
        let corners = ctx.corner_points();
        assert_eq!(corners[0].0, Point::new(0.5, 0.5));
        assert!((corners[0].1 - 1.5 * std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(corners.len(), 6);
    }

    #[test]
    fn plan_failure_skips_dependents() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::new("square", &[Experiment::Bhp]);
        cfg.mesh.h_max = 0.2;
        cfg.solver.eigen_tol = 0.0;
        cfg.solver.eigen_accept = 0.0;
        cfg.out = dir.path().to_path_buf();
        let outcome = run(&cfg).unwrap();
        let failed: Vec<(&str, &str)> = outcome.failures.iter().map(|f| (f.experiment.as_str(), f.invariant.as_str())).collect();
        assert_eq!(failed, [("eigen", "ConvergenceFailure"), ("bhp", "dependency")]);
        assert!(dir.path().join(FAILURES).is_file());
    }
}
