use thiserror::Error;

use crate::exprlang::ExprError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The Hessian at a stationary point is not positive definite, so the
    /// Gaussian approximation does not exist. Reparametrising usually helps.
    #[error("hessian is not positive definite at the optimum ({context})")]
    NotPositiveDefinite { context: String },

    #[error("optimizer did not converge after {iterations} iterations (|grad|inf = {grad_norm:e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error("line search found no finite point along the Newton direction")]
    LineSearchFailed,

    #[error("non-finite function value at {location:?}")]
    NonFinite { location: Vec<f64> },

    #[error("g(theta) = {value} is not positive at the posterior mode; use the mgf or shift method")]
    PositivityViolation { value: f64 },

    #[error("shift constant {shift} leaves g + c <= 0 at an evaluated point")]
    ShiftInsufficient { shift: f64 },

    #[error("gradient of g vanishes near the posterior mode (|grad| = {norm:e})")]
    GradientDegenerate { norm: f64 },

    #[error("model `{model}` does not declare a proper prior")]
    ImproperPrior { model: String },

    #[error("point {value:?} lies on or outside the domain of parameter `{parameter}`")]
    OutsideDomain { parameter: String, value: f64 },

    #[error("unknown model family `{0}`")]
    UnknownFamily(String),

    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("constrained minimisation failed at k = {k}: residual {residual:e}")]
    ConstraintFailed { k: f64, residual: f64 },

    #[error("degenerate mixture fit with {k} components: {detail}")]
    DegenerateFit { k: usize, detail: String },

    #[error("probability mass is zero; cannot normalise")]
    ZeroMass,

    #[error("effective sample size {ess:.2} is below 10; the proposal does not match the posterior")]
    LowEffectiveSampleSize { ess: f64 },

    #[error(transparent)]
    Expr(#[from] ExprError),
}

impl Error {
    /// Stable machine-readable tag used by the command-line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::LineSearchFailed => "LineSearchFailed",
            Error::NonFinite { .. } => "NonFinite",
            Error::PositivityViolation { .. } => "PositivityViolation",
            Error::ShiftInsufficient { .. } => "ShiftInsufficient",
            Error::GradientDegenerate { .. } => "GradientDegenerate",
            Error::ImproperPrior { .. } => "ImproperPrior",
            Error::OutsideDomain { .. } => "OutsideDomain",
            Error::UnknownFamily(_) => "UnknownFamily",
            Error::InvalidHyper(_) => "InvalidHyper",
            Error::InvalidInput(_) => "InvalidInput",
            Error::ConstraintFailed { .. } => "ConstraintFailed",
            Error::DegenerateFit { .. } => "DegenerateFit",
            Error::ZeroMass => "ZeroMass",
            Error::LowEffectiveSampleSize { .. } => "LowEffectiveSampleSize",
            Error::Expr(e) => e.code(),
        }
    }

    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::NonConvergence { .. }
                | Error::LineSearchFailed
                | Error::NonFinite { .. }
                | Error::PositivityViolation { .. }
                | Error::ShiftInsufficient { .. }
                | Error::GradientDegenerate { .. }
                | Error::ConstraintFailed { .. }
                | Error::DegenerateFit { .. }
                | Error::ZeroMass
                | Error::LowEffectiveSampleSize { .. }
        )
    }
}
