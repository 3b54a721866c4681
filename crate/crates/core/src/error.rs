use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time grid needs at least one step and a positive finite horizon (steps={steps}, horizon={horizon})")]
    InvalidGrid { steps: usize, horizon: f64 },

    #[error("paths live on different time grids")]
    GridMismatch,

    #[error("exp_path overflow guard: |alpha|*max|W| = {0} exceeds 700")]
    ExpOverflow(f64),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid gas data: {0}")]
    InvalidData(String),

    #[error("infeasible energy: target {target} must exceed the threshold E0 = {threshold}")]
    InfeasibleEnergy { target: f64, threshold: f64 },

    #[error("dimension {0} is not supported here")]
    UnsupportedDimension(usize),

    #[error("stage {stage} stalled: best defect ratio {ratio:.4} > {limit} over all phase draws; increase lambda or subdivide cutoffs")]
    Stalled { stage: usize, ratio: f64, limit: f64 },

    #[error("clock overrun: tau(T) = {tau} exceeds the field window {window}")]
    ClockOverrun { tau: f64, window: f64 },

    #[error("test function violates its declared class: {0}")]
    TestClass(String),

    #[error("degenerate certificate: {0}")]
    Degenerate(String),

    #[error("inputs do not match: {0}")]
    Mismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
