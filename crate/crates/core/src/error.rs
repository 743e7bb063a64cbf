use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid method: {0}")]
    InvalidMethod(String),

    #[error("invalid knots: {0}")]
    InvalidKnots(String),

    #[error("value {value} outside range [{lower}, {upper}]")]
    OutOfRange { value: f64, lower: f64, upper: f64 },

    #[error("insufficient dummy points: {dummies} dummies for {data} data points (need more dummies than data)")]
    InsufficientDummies { data: usize, dummies: usize },

    #[error("non-finite value {value} at point ({x}, {y})")]
    NonFinite { x: f64, y: f64, value: f64 },

    #[error("singular design: columns {columns:?} are collinear with the others")]
    SingularDesign { columns: Vec<String> },

    #[error("fit did not converge after {iterations} iterations (deviance trace: {trace:?})")]
    NonConvergence { iterations: usize, trace: Vec<f64> },

    #[error("all {count} candidate fits failed; first error: {first}")]
    AllFitsFailed { count: usize, first: String },

    #[error("covariate '{covariate}' missing at {} point(s): {points:?}", points.len())]
    DataCoverage {
        covariate: String,
        points: Vec<(f64, f64)>,
    },

    #[error("missing days: {0:?}")]
    MissingDays(Vec<i64>),

    #[error("degenerate component: {0}")]
    DegenerateComponent(String),

    #[error("intensity {value} exceeds the dominating bound {bound} at ({x}, {y}, {t})")]
    BoundViolation {
        x: f64,
        y: f64,
        t: f64,
        value: f64,
        bound: f64,
    },

    #[error("({x}, {y}, {t}) is outside the model domain")]
    OutOfDomain { x: f64, y: f64, t: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
