use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LyapError {
    #[error("degenerate sigma: {0} must be strictly positive")]
    DegenerateSigma(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid model document: {0}")]
    InvalidModel(String),

    #[error("model has no density (degenerate constant law)")]
    NoDensity,

    #[error("moment diverges at u = {u} (finite band is |u| < {band})")]
    MomentDiverges { u: f64, band: f64 },

    #[error("no nonzero root in moment band")]
    NoRootInBand,

    #[error("epsilon out of range: {0} (need |epsilon| < 1)")]
    EpsilonOutOfRange(f64),

    #[error("nonpositive Z draw (z = {0})")]
    NonpositiveZ(f64),

    #[error("u outside image (-k,k): u = {u}, k = {k}")]
    OutsideImage { u: f64, k: f64 },

    #[error("no exit within cap of {cap} steps (k = {k})")]
    NoExitWithinCap { k: f64, cap: u64 },

    #[error("grid does not cover support: need [{need_lo}, {need_hi}], have [{have_lo}, {have_hi}]")]
    GridTooNarrow { need_lo: f64, need_hi: f64, have_lo: f64, have_hi: f64 },

    #[error("grid mismatch between tail and operator")]
    GridMismatch,

    #[error("nonzero limits: T0 acts on differences of probability tails (left {left}, right {right})")]
    NonzeroLimits { left: f64, right: f64 },

    #[error("not a probability tail: {0}")]
    NotProbabilityTail(String),

    #[error("no convergence in maxIter ({iterations} iterations, residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("form mismatch exceeds tolerance: {first} vs {second}")]
    FormMismatch { first: f64, second: f64 },

    #[error("negative residual fit: asymptotic residual does not decay (fitted slope {slope})")]
    NegativeResidualFit { slope: f64 },

    #[error("singular linear system at pivot {0}")]
    SingularSystem(usize),

    #[error("edge grid too short for k = {k} (need k <= {max_k})")]
    EdgeGridTooShort { k: f64, max_k: f64 },

    #[error("k + kappa2 <= 0 (k = {k}, kappa2 = {kappa2})")]
    AsymptoteUndefined { k: f64, kappa2: f64 },

    #[error("denominator nonpositive: log(1/eps) - log 2 - gamma = {0}")]
    DenominatorNonpositive(f64),

    #[error("nonpositive estimate in sweep (index {index}, value {value})")]
    NonpositiveEstimate { index: usize, value: f64 },

    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
}

impl LyapError {
    /// Errors caused by bad input rather than by a numerical procedure failing.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            LyapError::NoConvergence { .. }
                | LyapError::FormMismatch { .. }
                | LyapError::NegativeResidualFit { .. }
                | LyapError::SingularSystem(_)
                | LyapError::NoExitWithinCap { .. }
                | LyapError::NonpositiveZ(_)
                | LyapError::NonpositiveEstimate { .. }
                | LyapError::AsymptoteUndefined { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, LyapError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> LyapError {
    LyapError::InvalidParameter { name, reason: reason.into() }
}
