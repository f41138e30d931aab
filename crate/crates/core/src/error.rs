use crate::model::Violation;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid specification: {}", join_violations(.0))]
    InvalidSpec(Vec<Violation>),
    #[error("statically unsupportable spec/topology: {0}")]
    Unsupportable(String),
    #[error("bar {0} has coincident endpoints")]
    ZeroLengthBar(usize),
    #[error("load case {case} out of range ({count} cases)")]
    CaseOutOfRange { case: usize, count: usize },
    #[error("spec joints would merge: {0} and {1}")]
    SpecJointsWouldMerge(u32, u32),
    #[error("no admissible stabilizing bar remains ({0} still missing)")]
    NoStabilizingCandidate(usize),
    #[error("initial grid is empty: every grid point lies outside the region or inside an obstacle")]
    GridSwallowed,
    #[error("operation requires dimension {expected}, truss has {found}")]
    Dimension { expected: usize, found: usize },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("internal solver failure: {0}")]
    Internal(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
