use thiserror::Error;

/// Errors raised by assembly, solves, integration and the experiment drivers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RonsError {
    #[error("parameter layout mismatch: expected {expected}, got {got}")]
    Layout { expected: String, got: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("operation not supported for ansatz family `{0}`")]
    UnsupportedFamily(&'static str),

    #[error("singular parameter in mode {mode}: {reason}")]
    SingularParameter { mode: usize, reason: &'static str },

    #[error("constraint gradients are linearly dependent (constraint matrix eigenvalue ratio {ratio:.3e})")]
    DependentConstraints { ratio: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("matrix is identically zero")]
    ZeroMatrix,

    #[error("empty sample set")]
    EmptySamples,

    #[error("mixture has zero total mass")]
    ZeroMass,

    #[error("unsupported quadrature scheme for this domain: {0}")]
    UnsupportedScheme(&'static str),

    #[error("step size underflow at t = {t:.6e} (h = {h:.3e}); the system is likely stiff")]
    StepUnderflow { t: f64, h: f64 },

    #[error("maximum number of steps ({max_steps}) exceeded at t = {t:.6e}")]
    MaxSteps { max_steps: usize, t: f64 },

    #[error("spectral solution blew up at t = {t:.4} (norm {norm:.3e})")]
    BlowUp { t: f64, norm: f64 },

    #[error("initial-condition fit failed: best residual {residual:.3e} after {restarts} restarts")]
    FitFailure { residual: f64, restarts: usize },

    #[error("invalid value for `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },
}

pub type Result<T> = std::result::Result<T, RonsError>;

impl RonsError {
    pub(crate) fn layout(expected: impl ToString, got: impl ToString) -> Self {
        RonsError::Layout {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        RonsError::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag, used in error JSON emitted by the CLI.
    pub fn kind(&self) -> &'static str {
        match self {
            RonsError::Layout { .. } => "layout",
            RonsError::Dimension { .. } => "dimension",
            RonsError::UnsupportedFamily(_) => "unsupported_family",
            RonsError::SingularParameter { .. } => "singular_parameter",
            RonsError::DependentConstraints { .. } => "dependent_constraints",
            RonsError::NonFinite(_) => "non_finite",
            RonsError::ZeroMatrix => "zero_matrix",
            RonsError::EmptySamples => "empty_samples",
            RonsError::ZeroMass => "zero_mass",
            RonsError::UnsupportedScheme(_) => "unsupported_scheme",
            RonsError::StepUnderflow { .. } => "step_underflow",
            RonsError::MaxSteps { .. } => "max_steps",
            RonsError::BlowUp { .. } => "blow_up",
            RonsError::FitFailure { .. } => "fit_failure",
            RonsError::InvalidConfig { .. } => "invalid_config",
        }
    }
}
