use std::path::PathBuf;

use thiserror::Error;

use crate::solver::FieldState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Some exponent is `<= 1`, so `P - I` is singular or the system is degenerate.
    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("system is not subcritical (max gamma = {gamma_max}, n/(2 sigma) = {threshold})")]
    NotSubcritical { gamma_max: f64, threshold: f64 },

    #[error("global-existence conditions unmet: {}", .0.join(", "))]
    ConditionsUnmet(Vec<String>),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("power-law fit unstable: R^2 = {r_squared:.4} < {required}")]
    FitUnstable { r_squared: f64, required: f64 },

    #[error("fit window [{t_min}, {t_max}] holds {found} points, need at least {required}")]
    EmptyWindow {
        t_min: f64,
        t_max: f64,
        found: usize,
        required: usize,
    },

    #[error("non-positive value {value} at t = {t} in a log-log fit")]
    NonPositiveValues { t: f64, value: f64 },

    #[error(
        "data leaks through the periodic box: edge value {edge:e} exceeds {limit:e} of the peak"
    )]
    DataLeakage { edge: f64, limit: f64 },

    #[error("blow-up detected at t = {time} (sup = {sup:e})")]
    BlowUpDetected {
        time: f64,
        sup: f64,
        state: Box<FieldState>,
    },

    #[error("blow-up during decay experiment at t = {0}")]
    BlowUpDuringDecayExperiment(f64),

    #[error("no blow-up before the cap t = {cap} for epsilon = {epsilon}")]
    NoBlowUpAtCap { epsilon: f64, cap: f64 },

    #[error("eta condition violated: quantity reached {value:e} near t = 1 (exponent mu - 2 lambda' = {exponent})")]
    ConditionViolated { value: f64, exponent: f64 },

    #[error("only {found} snapshot nodes inside [0, R^(2 sigma)], need at least {required}")]
    InsufficientSnapshots { found: usize, required: usize },

    #[error("internal consistency check failed: {0}")]
    Internal(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
