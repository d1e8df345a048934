use thiserror::Error;

use crate::expr::ExprError;
use crate::logic::FormulaError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{what} {point:?} lies outside its box")]
    OutOfBox { what: String, point: Vec<f64> },
    #[error("transport left the base box at t = {t}: {point:?}")]
    BaseEscape { t: f64, point: Vec<f64> },
    #[error("transport left the fiber box at t = {t}: {point:?}")]
    FiberEscape { t: f64, point: Vec<f64> },
    #[error("nesting budget of {limit} neighborhood clause(s) exhausted")]
    DepthExhausted { limit: usize },
    #[error("formula is not built from atoms without `=` using only &, | and exists")]
    NotPositive,
    #[error("path family is empty")]
    EmptyFamily,
    #[error("invalid policy: {0}")]
    Policy(String),
    #[error("line {line}: {message}")]
    Model { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
