use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("measure has total mass {mass}, expected a probability measure")]
    NotProbability { mass: f64 },
    #[error("integral of nu/(q(1-q)) is infinite")]
    InfiniteB,
    #[error("right speed is infinite")]
    InfiniteSpeed,
    #[error("eps = {eps} is too large: a family weight leaves [0,1]")]
    EpsTooLarge { eps: f64 },
    #[error("split is degenerate: p_right = {p_right}")]
    DegenerateSplit { p_right: f64 },
    #[error("no small-eps family for this measure: {0}")]
    UnsupportedFamily(String),
    #[error("invalid theta table: {0}")]
    InvalidTheta(String),
    #[error("theta table has kmax = {kmax}, need {needed}")]
    ThetaTooSmall { needed: usize, kmax: usize },
    #[error("site ({x}, {t}) lies outside the window")]
    OutOfWindow { x: i64, t: i64 },
    #[error("site ({x}, {t}) is not on the even lattice")]
    OddSite { x: i64, t: i64 },
    #[error("invalid index set: {0}")]
    InvalidIndexSet(String),
    #[error("speeds must satisfy -1 <= b_minus <= b_plus <= 1, got ({b_minus}, {b_plus})")]
    BadSpeeds { b_minus: f64, b_plus: f64 },
    #[error("separation site ({x}, {t}) has no mark")]
    MissingMark { x: i64, t: i64 },
    #[error("window too small: need {needed} sites, got {got}")]
    WindowTooSmall { needed: i64, got: i64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error at `{key}`: {msg}")]
    Parse { key: String, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
