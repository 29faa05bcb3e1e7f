use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel parameters: {0}")]
    InvalidKernel(String),

    #[error("invalid domain box: {0}")]
    InvalidDomain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dataset has {points} points but {values} values")]
    DatasetLength { points: usize, values: usize },

    #[error("point {point:?} lies outside the domain box")]
    OutOfDomain { point: Vec<f64> },

    #[error("cholesky factorization failed for {what} ({size}x{size})")]
    Factorization { what: &'static str, size: usize },

    #[error("posterior variance {value:e} is below the numerical floor {floor:e}")]
    NegativeVariance { value: f64, floor: f64 },

    #[error("log-barrier undefined: points {i} and {j} are {distance} apart (r_div = {r_div})")]
    BarrierDomain {
        i: usize,
        j: usize,
        distance: f64,
        r_div: f64,
    },

    #[error("post-query variance {value:e} at the anchor is below the floor {floor:e}")]
    DegenerateVariance { value: f64, floor: f64 },

    #[error("could not place {m} points with separation {r_div} in {attempts} attempts")]
    InitFailure { m: usize, r_div: f64, attempts: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("safety violation at t = {time:.3} s: robots {i} and {j} are {distance:.4} m apart")]
    SafetyViolation {
        time: f64,
        i: usize,
        j: usize,
        distance: f64,
    },

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Error {
        Error::Iteration {
            iteration,
            source: Box::new(self),
        }
    }
}
