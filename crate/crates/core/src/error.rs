use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("anchor {anchor} out of range for length {len}")]
    AnchorOutOfRange { anchor: usize, len: usize },

    #[error("filter has no taps")]
    EmptyFilter,

    #[error("sequence has no samples")]
    EmptySequence,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value {0} must be positive")]
    NonPositive(f64),

    #[error("transfer function is improper (numerator degree {num_degree} > denominator degree {den_degree})")]
    Improper {
        num_degree: usize,
        den_degree: usize,
    },

    #[error("denominator has zero leading coefficient")]
    ZeroDenominator,

    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(f64, f64),

    #[error("pole on the unit circle at omega = {omega} rad/sample")]
    PoleOnUnitCircle { omega: f64 },

    #[error("root finding did not converge after {iterations} iterations (max residual {max_residual:e})")]
    RootsNotConverged {
        iterations: usize,
        max_residual: f64,
    },

    #[error("plant produced an all-zero response")]
    ZeroResponse,

    #[error("oracle returned {got} samples for a {expected}-sample trial")]
    OracleLengthMismatch { expected: usize, got: usize },

    #[error("non-finite values in iterate {iteration}")]
    NonFinite { iteration: usize },

    #[error("learning diverged at iteration {iteration}: error {error:e} exceeds 10x the minimum {minimum:e}")]
    Diverged {
        iteration: usize,
        error: f64,
        minimum: f64,
    },

    #[error("need at least two usable error-history entries")]
    TooFewEntries,

    #[error("desired loop gain has relative order {target_order}, below the plant's {plant_order}; the controller would be non-causal")]
    RelativeOrder {
        plant_order: usize,
        target_order: usize,
    },

    #[error("reference has a pole of magnitude {magnitude} on or outside the unit circle; move it into the frequency weight")]
    UnsettledReference { magnitude: f64 },

    #[error("anticausal taps carry {fraction:e} of the filter energy")]
    AnticausalEnergy { fraction: f64 },

    #[error("filter has no causal taps")]
    EmptyCausalPart,

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("reduced model is unstable (pole magnitudes {magnitudes:?})")]
    UnstableReduction { magnitudes: Vec<f64> },

    #[error("system is unstable (largest pole magnitude {magnitude})")]
    Unstable { magnitude: f64 },

    #[error("closed-loop pole of magnitude {magnitude} sits {distance:e} from a zero: the controller almost cancels a plant pole on or near the unit circle")]
    NearCancellation { magnitude: f64, distance: f64 },

    #[error("step response has not settled within the horizon")]
    NotSettled,

    #[error("loop gain magnitude never crosses unity on the grid")]
    NoCrossover,

    #[error("closed loop is degenerate (1 + L is identically zero)")]
    DegenerateLoop,

    #[error("malformed data: {0}")]
    Parse(String),

    #[error("plant process: {0}")]
    Process(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics themselves (divergence, solver
    /// breakdown, instability) as opposed to bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RootsNotConverged { .. }
                | Error::NonFinite { .. }
                | Error::Diverged { .. }
                | Error::Eigensolver(_)
                | Error::UnstableReduction { .. }
                | Error::Unstable { .. }
                | Error::NearCancellation { .. }
                | Error::NotSettled
                | Error::NoCrossover
                | Error::AnticausalEnergy { .. }
                | Error::ZeroResponse
                | Error::Process(_)
        )
    }
}
