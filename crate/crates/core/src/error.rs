use thiserror::Error;

use crate::expr::ParseError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid has {got} points, operation needs at least {need}")]
    GridTooSmall { got: usize, need: usize },
    #[error("field length {got} does not match grid size {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("field contains a non-finite value at node {0}")]
    NonFinite(usize),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("amplitude {value} exceeds overflow cap {cap}")]
    Overflow { value: f64, cap: f64 },
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("projection undefined for the zero field")]
    ZeroField,
    #[error("no sign change of the constraint below the overflow cap (scale reached {scale})")]
    NoSignChange { scale: f64 },
    #[error("solver did not converge after {iterations} iterations (gradient norm {gradient})")]
    NotConverged { iterations: usize, gradient: f64 },
    #[error("field does not decay at r_max: |u(r_max)| = {tail}, max|u| = {peak}")]
    NonDecaying { tail: f64, peak: f64 },
    #[error("support radius {support} times dilation {scale} escapes r_max = {r_max}")]
    SupportEscapes { support: f64, scale: f64, r_max: f64 },
    #[error("concentration radius {radius} is resolved by only {nodes} nodes")]
    UnderResolved { radius: f64, nodes: usize },
    #[error("witness inapplicable: {0}")]
    WitnessInapplicable(String),
    #[error("function not evaluable: {0}")]
    NotEvaluable(String),
    #[error("no feasible candidate within budget {0}")]
    BudgetExhausted(usize),
    #[error(transparent)]
    Parse(#[from] ParseError),
}
