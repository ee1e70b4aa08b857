use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("power demand {demand_w:.1} W exceeds the battery limit {max_w:.1} W")]
    InfeasiblePower { demand_w: f64, max_w: f64 },

    #[error("tractive force {force_n:.1} N outside [{min_n:.1}, {max_n:.1}] N")]
    ForceBound { force_n: f64, min_n: f64, max_n: f64 },

    #[error("invalid traffic jam: implied speed {speed_mps:.3} m/s must be in (0, c2]")]
    InvalidJam { speed_mps: f64 },

    #[error("position {x_m:.2} m outside the lead trajectory span [{start_m:.2}, {end_m:.2}] m")]
    Extrapolation { x_m: f64, start_m: f64, end_m: f64 },

    #[error("unknown scenario id `{0}`")]
    UnknownScenario(String),

    #[error("no feasible solution: {0}")]
    NoSolution(String),

    #[error("brute force budget exceeded: {sequences} sequences > {limit}")]
    Budget { sequences: u128, limit: u128 },

    #[error("query outside the grid hull at step {step}: {detail}")]
    OutOfHull { step: usize, detail: String },

    #[error("every interpolation neighbour is infeasible at step {step}")]
    AllInfeasible { step: usize },

    #[error("constraint violated at step {step}: {detail}")]
    ConstraintViolation { step: usize, detail: String },

    #[error("feature schema mismatch: expected {expected}, found {found}")]
    Schema { expected: String, found: String },

    #[error("training diverged at epoch {epoch}")]
    Training { epoch: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("corrupted container {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
