use thiserror::Error;

/// Every failure the library reports. Variants name the operation-level
/// condition; the payload carries the offending feature or diagnostic.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("mesh error: {0}")]
    Mesh(String),
    #[error("no mesh node inside the inner ball (center {center:?}, radius {radius})")]
    EmptyBall { center: [f64; 2], radius: f64 },
    #[error("representative point search failed: {0}")]
    SearchFailure(String),
    #[error("uniformity certification failed: {0}")]
    CertificationFailure(String),
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    ConvergenceFailure { iterations: usize, residual: f64 },
    #[error("principal eigenvector changes sign ({negative} negative interior entries)")]
    NonPositiveEigenvector { negative: usize },
    #[error("linear solve failed: {0}")]
    Solver(String),
    #[error("system is singular: {0}")]
    SingularSystem(String),
    #[error("profile is not positive on the interior: {0}")]
    NonPositiveProfile(String),
    #[error("Doob kernel identity violated: max relative error {max_rel_err:e}")]
    IdentityViolation { max_rel_err: f64 },
    #[error("insufficient samples: {got} pairs, need at least {need}")]
    InsufficientSamples { got: usize, need: usize },
    #[error("fit error: {0}")]
    Fit(String),
    #[error("cylinder out of range: {0}")]
    CylinderOutOfRange(String),
    #[error("unknown gallery domain `{0}`")]
    UnknownGallery(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Short stable identifier used in failure manifests and FFI error codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse(_) => "ParseError",
            Error::Geometry(_) => "GeometryError",
            Error::Mesh(_) => "MeshError",
            Error::EmptyBall { .. } => "EmptyBall",
            Error::SearchFailure(_) => "SearchFailure",
            Error::CertificationFailure(_) => "CertificationFailure",
            Error::Assembly(_) => "AssemblyError",
            Error::ConvergenceFailure { .. } => "ConvergenceFailure",
            Error::NonPositiveEigenvector { .. } => "NonPositiveEigenvector",
            Error::Solver(_) => "SolverError",
            Error::SingularSystem(_) => "SingularSystem",
            Error::NonPositiveProfile(_) => "NonPositiveProfile",
            Error::IdentityViolation { .. } => "IdentityViolation",
            Error::InsufficientSamples { .. } => "InsufficientSamples",
            Error::Fit(_) => "FitError",
            Error::CylinderOutOfRange(_) => "CylinderOutOfRange",
            Error::UnknownGallery(_) => "UnknownGallery",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Context { source, .. } => source.kind(),
            Error::Io(_) => "IoError",
            Error::Json(_) => "ParseError",
            Error::Csv(_) => "IoError",
        }
    }
}
