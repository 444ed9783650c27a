use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Library error. `category()` gives the stable tag used in CLI reports.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("validity window violated: {0}")]
    Validity(String),

    #[error("wall singularity: {0}")]
    WallSingularity(String),

    #[error("degenerate contour: |Z'(r)| = {derivative:.3e} at r = {r}")]
    DegenerateContour { r: f64, derivative: f64 },

    #[error("accuracy target not met ({what}): last two values {previous} and {last}")]
    Accuracy {
        what: String,
        previous: Complex64,
        last: Complex64,
    },

    #[error("shift {shift}: {reason}")]
    Shift { shift: Complex64, reason: String },

    #[error("lambda = {lambda} is within {distance:.3e} of the eigenvalue {nearest}")]
    PoleProximity {
        lambda: Complex64,
        nearest: Complex64,
        distance: f64,
    },

    #[error(
        "continuation blocked: lambda = {lambda} is on or past the rotated essential spectrum for theta = {theta}; \
         |Im theta| >= {min_abs_im_theta:.4} (with sign {sign:+}) would unblock it"
    )]
    ContinuationBlocked {
        lambda: Complex64,
        theta: Complex64,
        min_abs_im_theta: f64,
        sign: f64,
    },

    #[error("no convergence: {0}")]
    Convergence(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::Domain(_) => "domain",
            Error::Validity(_) => "validity",
            Error::WallSingularity(_) => "wall-singularity",
            Error::DegenerateContour { .. } => "degenerate-contour",
            Error::Accuracy { .. } => "accuracy",
            Error::Shift { .. } => "shift",
            Error::PoleProximity { .. } => "pole-proximity",
            Error::ContinuationBlocked { .. } => "continuation-blocked",
            Error::Convergence(_) => "convergence",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
