//! C interface: opaque domain and problem handles, status codes, and a
//! thread-local message for the last error.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use heatprof::config::RunConfig;
use heatprof::forms::{assemble, CoefficientField, DiscreteForm};
use heatprof::gallery::{gallery, GalleryParams};
use heatprof::geometry::{load_domain_json, triangulate_with, DomainPoint, Mesh, MeshOptions, Point, PolygonDomain};
use heatprof::run::run;
use heatprof::solver::{green_column, heat_columns, principal_eigenpair, HeatOptions, Scheme, Side};
use heatprof::Error;

/// Result of every fallible call. Nonzero values leave a message readable
/// through `hp_last_error`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    BufferTooSmall = 3,
    Panic = 4,
    /// A run finished but at least one invariant check failed.
    ChecksFailed = 5,
    ParseError = 10,
    GeometryError = 11,
    MeshError = 12,
    AssemblyError = 13,
    SolverError = 14,
    ConvergenceFailure = 15,
    InvalidArgument = 16,
    UnknownGallery = 17,
    IoError = 18,
    ValidationError = 19,
}

/// Time discretization of the heat semigroup.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HpScheme {
    BackwardEuler = 0,
    CrankNicolson = 1,
    /// Dense matrix exponential; limited to moderate meshes.
    Exponential = 2,
}

/// A validated polygonal domain.
pub struct HpDomain(PolygonDomain);

/// A mesh with the assembled form of one operator.
pub struct HpProblem {
    mesh: Mesh,
    form: DiscreteForm,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(HpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.kind() {
            "ParseError" => HpStatus::ParseError,
            "GeometryError" => HpStatus::GeometryError,
            "MeshError" => HpStatus::MeshError,
            "AssemblyError" => HpStatus::AssemblyError,
            "SolverError" | "SingularSystem" => HpStatus::SolverError,
            "ConvergenceFailure" | "NonPositiveEigenvector" => HpStatus::ConvergenceFailure,
            "UnknownGallery" => HpStatus::UnknownGallery,
            "IoError" => HpStatus::IoError,
            "InvalidArgument" => HpStatus::InvalidArgument,
            _ => HpStatus::ValidationError,
        };
        Failure(status, format!("{}: {e}", e.kind()))
    }
}

type Outcome = Result<(), Failure>;

fn guard(f: impl FnOnce() -> Outcome) -> HpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            HpStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            HpStatus::Panic
        }
    }
}

fn null() -> Failure {
    Failure(HpStatus::NullPointer, "null pointer argument".into())
}

unsafe fn text<'a>(s: *const c_char) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null());
    }
    CStr::from_ptr(s).to_str().map_err(|_| Failure(HpStatus::InvalidUtf8, "string is not UTF-8".into()))
}

unsafe fn out_ref<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(null)
}

unsafe fn buffer<'a>(p: *mut f64, len: usize, need: usize) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(null());
    }
    if len < need {
        return Err(Failure(HpStatus::BufferTooSmall, format!("buffer holds {len} values, need {need}")));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn hp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a gallery domain with default parameters.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hp_domain_gallery(name: *const c_char, out: *mut *mut HpDomain) -> HpStatus {
    guard(|| {
        let out = out_ref(out)?;
        *out = ptr::null_mut();
        let (_, d) = gallery(text(name)?, &GalleryParams::default())?;
        *out = Box::into_raw(Box::new(HpDomain(d)));
        Ok(())
    })
}

/// Parses and validates a domain document (`outer`, `holes`, `slits`).
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hp_domain_from_json(json: *const c_char, out: *mut *mut HpDomain) -> HpStatus {
    guard(|| {
        let out = out_ref(out)?;
        *out = ptr::null_mut();
        let d = load_domain_json(text(json)?)?;
        *out = Box::into_raw(Box::new(HpDomain(d)));
        Ok(())
    })
}

/// # Safety
/// `domain` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn hp_domain_free(domain: *mut HpDomain) {
    if !domain.is_null() {
        drop(Box::from_raw(domain));
    }
}

/// Length of the shortest path inside the domain.
///
/// # Safety
/// `domain` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hp_domain_inner_distance(domain: *const HpDomain, x0: f64, y0: f64, x1: f64, y1: f64, out: *mut f64) -> HpStatus {
    guard(|| {
        let d = &domain.as_ref().ok_or_else(null)?.0;
        let out = out_ref(out)?;
        let x = DomainPoint::from(Point::new(x0, y0));
        let y = DomainPoint::from(Point::new(x1, y1));
        *out = d.inner_distance(&x, &y)?.length;
        Ok(())
    })
}

/// # Safety
/// `domain` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hp_domain_inner_diameter(domain: *const HpDomain, out: *mut f64) -> HpStatus {
    guard(|| {
        let d = &domain.as_ref().ok_or_else(null)?.0;
        *out_ref(out)? = d.diam_inner;
        Ok(())
    })
}

/// Meshes the domain at `h_max` and assembles the operator described by
/// `coefficients_json`, or the Laplacian when it is null.
///
/// # Safety
/// `domain` must be a live handle, `coefficients_json` null or a
/// NUL-terminated string, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hp_problem_new(
    domain: *const HpDomain,
    h_max: f64,
    coefficients_json: *const c_char,
    out: *mut *mut HpProblem,
) -> HpStatus {
    guard(|| {
        let out = out_ref(out)?;
        *out = ptr::null_mut();
        let d = &domain.as_ref().ok_or_else(null)?.0;
        let coeffs = if coefficients_json.is_null() {
            CoefficientField::laplacian()
        } else {
            serde_json::from_str(text(coefficients_json)?).map_err(|e| Failure(HpStatus::ParseError, format!("ParseError: {e}")))?
        };
        if !(h_max > 0.0 && h_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("h_max must be positive, got {h_max}")).into());
        }
        let mesh = triangulate_with(d, &MeshOptions::new(h_max))?;
        let form = assemble(&mesh, &coeffs)?;
        *out = Box::into_raw(Box::new(HpProblem { mesh, form }));
        Ok(())
    })
}

/// # Safety
/// `problem` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn hp_problem_free(problem: *mut HpProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// # Safety
/// `problem` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hp_problem_node_count(problem: *const HpProblem, out: *mut usize) -> HpStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(null)?;
        *out_ref(out)? = p.mesh.nodes.len();
        Ok(())
    })
}

/// Writes interleaved node coordinates `x0, y0, x1, y1, ...`; `len` counts doubles.
///
/// # Safety
/// `problem` must be a live handle and `xy` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hp_problem_nodes(problem: *const HpProblem, xy: *mut f64, len: usize) -> HpStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(null)?;
        let buf = buffer(xy, len, 2 * p.mesh.nodes.len())?;
        for (i, q) in p.mesh.nodes.iter().enumerate() {
            buf[2 * i] = q.x;
            buf[2 * i + 1] = q.y;
        }
        Ok(())
    })
}

/// Principal Dirichlet eigenvalue and, when `phi` is not null, the positive
/// eigenvector normalized in the lumped mass, one value per node.
///
/// # Safety
/// `problem` must be a live handle, `lambda` valid, and `phi` null or
/// pointing to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hp_problem_principal_eigenpair(problem: *const HpProblem, lambda: *mut f64, phi: *mut f64, len: usize) -> HpStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(null)?;
        let lambda = out_ref(lambda)?;
        let pair = principal_eigenpair(&p.form, Side::Primal)?;
        if !phi.is_null() {
            buffer(phi, len, pair.phi.len())?.copy_from_slice(&pair.phi);
        }
        *lambda = pair.lambda;
        Ok(())
    })
}

/// Dirichlet heat kernel `p(t, x, y)` between the free nodes nearest to the two points.
///
/// # Safety
/// `problem` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hp_problem_heat_kernel(
    problem: *const HpProblem,
    scheme: HpScheme,
    t: f64,
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    out: *mut f64,
) -> HpStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(null)?;
        let out = out_ref(out)?;
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!("time must be positive, got {t}")).into());
        }
        let scheme = match scheme {
            HpScheme::BackwardEuler => Scheme::BackwardEuler,
            HpScheme::CrankNicolson => Scheme::CrankNicolson,
            HpScheme::Exponential => Scheme::Exponential,
        };
        let x = p.mesh.nearest_interior_node(Point::new(x0, y0));
        let y = p.mesh.nearest_interior_node(Point::new(x1, y1));
        let col = heat_columns(&p.form, &[y], &[t], &HeatOptions::new(scheme, (t / 100.0).min(1e-4)))?;
        *out = col[0].values[0][x];
        Ok(())
    })
}

/// Green function with pole at the free node nearest to `(px, py)`, one value per node.
///
/// # Safety
/// `problem` must be a live handle and `values` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hp_problem_green(problem: *const HpProblem, px: f64, py: f64, values: *mut f64, len: usize) -> HpStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(null)?;
        let buf = buffer(values, len, p.mesh.nodes.len())?;
        let g = green_column(&p.form, p.mesh.nearest_interior_node(Point::new(px, py)))?;
        buf.copy_from_slice(&g.values);
        Ok(())
    })
}

/// Runs the experiments of a JSON config, writing reports to `out_dir`
/// (or the config's own directory when null). Returns `CHECKS_FAILED` when
/// the run completed with violated invariants.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out_dir` null or one.
#[no_mangle]
pub unsafe extern "C" fn hp_run(config_json: *const c_char, out_dir: *const c_char) -> HpStatus {
    guard(|| {
        let mut cfg = RunConfig::from_json(text(config_json)?)?;
        if !out_dir.is_null() {
            cfg.out = PathBuf::from(text(out_dir)?);
        }
        let outcome = run(&cfg)?;
        if outcome.passed() {
            Ok(())
        } else {
            let names: Vec<String> = outcome.failures.iter().map(|f| format!("{}/{}", f.experiment, f.invariant)).collect();
            Err(Failure(HpStatus::ChecksFailed, format!("failed checks: {}", names.join(", "))))
        }
    })
}
