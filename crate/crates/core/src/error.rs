use thiserror::Error;

/// Errors raised by any stage of the simulation/reconstruction pipeline.
#[derive(Debug, Error)]
pub enum WaveError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("mesh too coarse: {0}")]
    MeshTooCoarse(String),
    #[error("point ({x}, {y}) lies outside the mesh")]
    PointOutsideMesh { x: f64, y: f64 },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("linear solver diverged: residual {residual:.3e} after {iterations} iterations")]
    SolverDiverged { residual: f64, iterations: usize },
    #[error("unstable configuration: {0}")]
    UnstableConfig(String),
    #[error("numerical blow-up detected at step {step}")]
    NumericalBlowup { step: usize },
    #[error("nonpositive transform value {value:.3e} at node {node}, s = {s}")]
    NonpositiveTransform { node: usize, s: f64, value: f64 },
    #[error("corrupt iteration state: {0}")]
    StateCorrupt(String),
    #[error("transform overflow: s^2 * v = {exponent:.3e} at node {node}")]
    TransformOverflow { node: usize, exponent: f64 },
    #[error("nonpositive lumped mass entry {value:.3e} at node {node}")]
    SingularLumping { node: usize, value: f64 },
    #[error("invalid phantom: {0}")]
    InvalidPhantom(String),
    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, WaveError>;
