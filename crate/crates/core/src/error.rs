use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("value {value} outside the admissible domain {domain}")]
    Domain { value: f64, domain: String },

    #[error("derivative is discontinuous at u = {at}: left {left}, right {right}")]
    OneSidedDerivative { at: f64, left: f64, right: f64 },

    #[error("invalid nonlinearity: {0}")]
    InvalidSpec(String),

    #[error("integration failed at u = {u}, q = {q}: {reason}")]
    Integration { u: f64, q: f64, reason: String },

    #[error("no speed bracket found in [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("trajectory is not connected (mismatch {mismatch:e})")]
    NotConnected { mismatch: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("time step {dt} violates the stability bound; maximal admissible dt is {max_dt}")]
    Cfl { dt: f64, max_dt: f64 },

    #[error("level {lambda} not crossed at time {time}")]
    LevelAbsent { lambda: f64, time: f64 },

    #[error("front at x = {position} is within {cells} cells of the boundary at time {time}")]
    FrontNearBoundary {
        position: f64,
        cells: f64,
        time: f64,
    },

    #[error("level {lambda} is crossed non-monotonically at {} base points{}", .points.len(), first_point(.points))]
    MultipleCrossings { lambda: f64, points: Vec<Vec<f64>> },

    #[error("need at least {needed} valid samples, found {found}")]
    TooFewSamples { needed: usize, found: usize },

    #[error("point is outside the region required by this representation: {0}")]
    Region(String),

    #[error("boundary admits no backward representation here")]
    EmptyAdmissibleSet,

    #[error("sampled data does not cover the ball of radius {required} around {center:?}")]
    BallNotCovered { center: Vec<f64>, required: f64 },

    #[error("source window does not cover the target; required half-extent {required}")]
    WindowNotCovered { required: f64 },

    #[error("sequences do not overlap on any finite sample")]
    EmptyOverlap,

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn domain(value: f64, domain: &str) -> Error {
    Error::Domain {
        value,
        domain: domain.to_string(),
    }
}

fn first_point(points: &[Vec<f64>]) -> String {
    match points.first() {
        Some(p) if !p.is_empty() => format!(" (first: {p:?})"),
        _ => String::new(),
    }
}
