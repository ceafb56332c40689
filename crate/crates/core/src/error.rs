use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("singular matrix (smallest pivot {min_pivot:e})")]
    Singular { min_pivot: f64 },

    #[error("matrix is rank deficient (singular value ratio {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported subproblem: {0}")]
    Unsupported(String),

    #[error("{part} not SPD (min_eig={min_eig:e})")]
    NotSpd { part: &'static str, min_eig: f64 },

    #[error("plan is not certified: {0}")]
    Uncertified(String),

    #[error("oracle did not reach tolerance (achieved residual {achieved:e})")]
    OracleTolerance { achieved: f64 },

    #[error("problem file: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
