use thiserror::Error;

/// Errors raised across model construction, simulation and solving.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("time {t} outside horizon [0, {horizon}]")]
    OutsideHorizon { t: f64, horizon: f64 },

    #[error("degenerate reference measure: all quadrature weights are zero")]
    DegenerateMeasure,

    #[error("non-diagonal instantaneous bracket (max off-diagonal {max_off:.3e}); run check_diagonal_bracket and use proportional modulation")]
    NonDiagonalBracket { max_off: f64 },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("root bracketing failed after {0} expansions (driver not monotone?)")]
    BracketExpansion(u32),

    #[error("jump leaves the domain: x = {x:?}, atom size {atom}")]
    JumpLeavesDomain { x: Vec<f64>, atom: f64 },

    #[error("reflection step failed: {0}")]
    ReflectionStep(String),

    #[error("regression design matrix is rank deficient (rank {rank} of {cols})")]
    RankDeficient { rank: usize, cols: usize },

    #[error("implicit step not contractive: local Lipschitz budget {budget:.3} >= 1; refine the grid")]
    StepNotContractive { budget: f64 },

    #[error("weight exponent theta = {theta} inadmissible; require theta > {bound}")]
    ThetaOutOfRange { theta: f64, bound: f64 },

    #[error("picard iteration did not converge after {iters} iterations (last residual {residual:.3e})")]
    PicardDiverged { iters: usize, residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
