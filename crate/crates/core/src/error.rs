use thiserror::Error;

/// Errors raised by the geometry toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} is not in the unobserved face")]
    NotInUnobservedFace { index: usize },

    #[error("step leaves the simplex; feasible step range is [{t_min}, {t_max}]")]
    OutOfSimplex { t_min: f64, t_max: f64 },

    #[error("invalid base point: {0}")]
    InvalidBasePoint(String),

    #[error("preferred-point norm undefined: direction is nonzero at bin {index} where the anchor has zero mass")]
    UndefinedNorm { index: usize },

    #[error("Fisher information vanishes identically (all mass on bin 0)")]
    TrivialSpectrum,

    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    #[error("orthogonality violated: {0}")]
    NotOrthogonal(String),

    #[error("parameters lie outside the offset polytope: bin {index} has shifted base value {value}")]
    OutsidePolytope { index: usize, value: f64 },

    #[error("target is not in the interior of the mean domain; it lies on the face {face:?}")]
    NoInteriorSolution { face: Vec<usize> },

    #[error("probability vector is not in the family: {0}")]
    NotInFamily(String),

    #[error("{what} = {value} exceeds the cap {cap}")]
    CapExceeded {
        what: &'static str,
        value: usize,
        cap: usize,
    },

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("data point {value} lies outside the domain [{lo}, {hi}]")]
    OutsideDomain { value: f64, lo: f64, hi: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("linear program failed: {0}")]
    LinearProgram(String),

    #[error("iteration did not converge: {0}")]
    NonConvergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
