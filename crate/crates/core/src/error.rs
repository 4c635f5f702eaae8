use thiserror::Error;

/// Errors surfaced by lattice construction, spectral operators, the PDE
/// solver and the simulation harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("lattice mismatch between operands")]
    LatticeMismatch,

    #[error("component mismatch: expected {expected}, got {got}")]
    ComponentMismatch { expected: usize, got: usize },

    #[error("block index {j} out of range 0..={top}")]
    BlockOutOfRange { j: usize, top: usize },

    #[error("frequency range supports only {blocks} dyadic blocks, need at least {need}")]
    TooCoarse { blocks: usize, need: usize },

    #[error("inverse transform left imaginary residue {residue:.3e} above tolerance {tol:.3e}")]
    NonRealOutput { residue: f64, tol: f64 },

    #[error("non-positive time t={0} for kernel evaluation")]
    NonPositiveTime(f64),

    #[error("time {0} not on the grid")]
    OffGrid(f64),

    #[error("mollifier level {n} under-resolves the lattice: {detail}")]
    UnderResolvedBump { n: u32, detail: String },

    #[error("Picard iteration did not converge after {iters} steps; residual history {history:?}")]
    NonConvergence { iters: usize, history: Vec<f64> },

    #[error("exponent window violated: {0}")]
    ExponentWindow(String),

    #[error("invalid spectral measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate report request: {0}")]
    DegenerateReport(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
