use thiserror::Error;

/// Errors raised by the toolkit. Check failures are not errors; they are
/// reported through [`crate::report::CheckReport`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("projection did not converge (residual {residual:.3e})")]
    NonConvergence { residual: f64 },
    #[error("finite-difference step below machine granularity")]
    StepUnderflow,
    #[error("constraint Jacobian rank deficient (sigma {sigma:.3e})")]
    RankDeficient { sigma: f64 },
    #[error("vector is not tangent (normal component {0:.3e})")]
    NotTangent(f64),
    #[error("vector is zero")]
    ZeroVector,
    #[error("form is degenerate (sigma {0:.3e})")]
    Degenerate(f64),
    #[error("action is not a one-parameter group")]
    NotOneParameter,
    #[error("no closed form for the complexified action")]
    NoComplexification,
    #[error("complexified action overflows")]
    Overflow,
    #[error("generator {0} is identically zero")]
    NonFaithful(usize),
    #[error("form is not invariant (deviation {0:.3e})")]
    NotInvariant(f64),
    #[error("base point is not a fixed point")]
    BaseNotFixed,
    #[error("quadrature failed to converge")]
    QuadratureFailure,
    #[error("loop audit failed (holonomy {0:.3e})")]
    LoopHolonomy(f64),
    #[error("ode step size collapsed at t = {0}")]
    StepCollapse(f64),
    #[error("flow did not reach a critical point before t_max")]
    MaxTimeExceeded,
    #[error("energy increased along a gradient flow (by {0:.3e})")]
    MonotonicityViolation(f64),
    #[error("point is not critical (gradient norm {0:.3e})")]
    NotCritical(f64),
    #[error("eigenvalue gap too small ({0:.3e})")]
    SpectralGapTooSmall(f64),
    #[error("flow did not converge")]
    Unconverged,
    #[error("critical-value clusters are too close")]
    ClusterAmbiguity,
    #[error("flow-based and analytic fixed-point sets disagree")]
    IncompleteEnumeration,
    #[error("sampled moment value escapes the polytope by {0:.3e}")]
    ContainmentViolation(f64),
    #[error("point is not a fixed point (field norm {0:.3e})")]
    NotFixed(f64),
    #[error("rank is borderline (gap {0:.3e})")]
    BorderlineRank(f64),
    #[error("orbit limit did not converge")]
    LimitUnresolved,
    #[error("slope did not plateau")]
    NoPlateau,
    #[error("slope minimum is not unique")]
    AmbiguousMinimum,
    #[error("point lies on the stability boundary")]
    Borderline,
    #[error("level set sampling exhausted its seeds")]
    SeedExhausted,
    #[error("level is not a regular value")]
    NotRegular,
    #[error("isotropy is not finite at level point")]
    InfiniteIsotropy,
    #[error("reduced form depends on the orbit representative ({0:.3e})")]
    NotWellDefined(f64),
    #[error("horizontal space is not J-invariant ({0:.3e})")]
    NotComplexInvariant(f64),
    #[error("minimal coupling degenerates inside the slab ({0:.3e})")]
    SlabTooLarge(f64),
    #[error("linear fit residual {0:.3e} too large")]
    FitResidualTooLarge(f64),
    #[error("interpolated form degenerates ({0:.3e})")]
    DegenerateInterpolation(f64),
    #[error("the moment image of W is not a point")]
    WNotPoint,
    #[error("duplicate scenario name {0}")]
    DuplicateName(String),
    #[error("unknown scenario {0}")]
    UnknownScenario(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
