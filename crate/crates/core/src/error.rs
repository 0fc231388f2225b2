use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("cycle detected: branch {branch} closes a loop")]
    Cycle { branch: String },
    #[error("disconnected node {0}")]
    Disconnected(String),
    #[error("mixed-sign reactances: network is neither inductive, capacitive nor resistive")]
    MixedReactance,
    #[error("limit inversion at node {node}: {detail}")]
    LimitInversion { node: String, detail: String },
    #[error("unknown {kind} id {id}")]
    UnknownId { kind: &'static str, id: String },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-numeric cell at row {row}, column {col}: {value:?}")]
    NonNumeric { row: usize, col: usize, value: String },
    #[error("(I - A) is singular: node ordering is not topological")]
    Singular,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("load flow did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("voltage collapse at node {node} during iteration {iteration}")]
    VoltageCollapse { node: String, iteration: usize },
    #[error("non-positive base squared voltage {value} at node {node}")]
    NonPositiveVoltage { node: usize, value: f64 },
    #[error("H non-negativity certificate failed (min entry {min_entry:e})")]
    CertificateFailed { min_entry: f64 },
    #[error("invalid device data: {0}")]
    Device(String),
    #[error("invalid model: {0}")]
    Model(String),
    #[error("MIP infeasible at iteration {iteration}")]
    MipInfeasible { iteration: usize },
    #[error("MIP solve stopped without an incumbent at iteration {iteration}: {status}")]
    MipNoIncumbent { iteration: usize, status: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
