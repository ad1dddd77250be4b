use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("undefined direction: zero-length position vector")]
    UndefinedDirection,
    #[error("coincident points: distance is zero")]
    CoincidentPoints,
    #[error("below horizon (elevation {elevation} rad)")]
    BelowHorizon { elevation: f64 },
    #[error("frequency must be positive, got {0} Hz")]
    NonPositiveFrequency(f64),
    #[error("degenerate geometry")]
    DegenerateGeometry,
    #[error("no solution: spheres do not intersect (range violations {violations:?} m)")]
    NoSolution { violations: [f64; 3] },
    #[error("ambiguous candidates ({separation} m apart in radius): fourth measurement required")]
    AmbiguousCandidates { separation: f64 },
    #[error("insufficient satellites: need {needed}, got {got}")]
    InsufficientSatellites { needed: usize, got: usize },
    #[error("cannot separate station clock: need 4 satellites, got {0}")]
    CannotSeparateStationClock(usize),
    #[error("no satellites matched between observations and corrections")]
    NoMatchedSatellites,
    #[error("stale corrections: age {age} s exceeds window {window} s")]
    StaleCorrections { age: f64, window: f64 },
    #[error("unknown satellite SVN {0}")]
    UnknownSatellite(u32),
    #[error("code solution did not converge")]
    NotConverged,
    #[error("ambiguity not resolved: residual ratio {ratio} below threshold {threshold}")]
    AmbiguityNotResolved { ratio: f64, threshold: f64 },
    #[error("search radius too large: {candidates} candidates exceeds cap {cap}")]
    RadiusTooLarge { candidates: f64, cap: f64 },
    #[error("ambiguity for SVN {0} is not resolved")]
    UnresolvedAmbiguity(u32),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("line {line}: {key}: {message}")]
    Parse { line: usize, key: String, message: String },
    #[error("every epoch failed: {0}")]
    AllEpochsFailed(String),
}

impl Error {
    pub(crate) fn parse(line: usize, key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            key: key.into(),
            message: message.into(),
        }
    }

    /// Whether the error stems from bad input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_) | Error::Parse { .. } | Error::NonPositiveFrequency(_)
        )
    }
}
