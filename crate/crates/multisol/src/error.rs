use thiserror::Error;

/// Errors surfaced by the solver library.
///
/// Solve *statuses* (did a well converge, did the initializer fail) are data,
/// not errors; see [`crate::minimizer::SolveStatus`]. An `Error` means the
/// request itself cannot be carried out.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// The nonlinearity is nonnegative on the whole scan range, so (A1)
    /// fails and no multiplicity theory applies.
    #[error("no wells: the nonlinearity is nonnegative on (0, {s_max}] at {scan_points} samples")]
    NoWells { s_max: f64, scan_points: usize },

    /// Two refined well endpoints collided within the root tolerance.
    #[error("well detection too coarse: endpoints near s = {at} collide within {root_tol}")]
    ResolutionTooCoarse { at: f64, root_tol: f64 },

    /// Truncation was requested for the last well when it is unbounded.
    #[error("well {index} is unbounded (eta = infinity) and is exempt from truncation")]
    LastWellUnbounded { index: usize },

    /// The nonlinearity slope at the well's upper endpoint is negative,
    /// which contradicts an upward zero crossing.
    #[error("R'({eta}) = {slope} < 0 at a well endpoint; the well decomposition looks wrong")]
    NegativeSlopeAtEndpoint { eta: f64, slope: f64 },

    /// `max_principle_bound` found the derivative still negative at the top
    /// of the scan range, so no bound certificate exists there.
    #[error("no maximum-principle bound: G' < -tol arbitrarily close to s = {s_max}")]
    NoBound { s_max: f64 },

    #[error("dimension {dim} unsupported: radial reduction needs N >= 3")]
    BadDimension { dim: usize },

    #[error("bump plateau r_n = {r_n} needs r_n + 1 <= r_max = {r_max}")]
    PlateauTooLarge { r_n: f64, r_max: f64 },

    /// A profile with zero L2 norm was passed where the functional is singular.
    #[error("zero profile: {context}")]
    ZeroProfile { context: &'static str },

    #[error("constraint gradient is degenerate (norm {norm}); multiplier undefined")]
    DegenerateConstraintGradient { norm: f64 },

    /// The electrostatic system is SPD for e > 0 and finite u, so this
    /// only fires on non-finite input or a collapsed pivot.
    #[error("singular electrostatic system: {context}")]
    SingularSystem { context: &'static str },

    #[error("bad multiplier lambda = {lambda}: rescaling needs lambda < 1")]
    BadMultiplier { lambda: f64 },

    #[error("shooting bracket ({lo}, {hi}) does not straddle the decay/blowup dichotomy")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("cannot certify a result with status {status}")]
    NotConverged { status: &'static str },

    #[error("charge is zero; the hylomorphy ratio is undefined")]
    ZeroCharge,

    #[error("well index {j} out of range 1..={ell}")]
    BadWellIndex { j: usize, ell: usize },

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
