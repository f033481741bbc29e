//! Quantitative reconstruction of the acoustic coefficient a(x) from
//! time-domain wave measurements.
//!
//! The pipeline simulates the scalar wave equation a(x) u_tt = Δu on a
//! hybrid structured/unstructured 2D domain, transforms the recorded
//! traces into pseudo-frequency data via a truncated Laplace transform,
//! runs a layer-stripping sweep over descending pseudo frequencies with
//! Carleman-weight averaged elliptic solves, and recovers a(x) by an
//! explicit lumped-mass finite element formula.

pub mod error;
pub mod fem;
pub mod forward;
pub mod geometry;
pub mod io;
pub mod laplace;
pub mod mesh;
pub mod metrics;
pub mod phantom;
pub mod quad;
pub mod recovery;
pub mod sparse;
pub mod stripping;

pub use error::{Result, WaveError};
pub use geometry::{Circle, Point2, Rect};
pub use mesh::{HybridDomain, StructuredGrid, SubMesh, TriMesh};
pub use sparse::SparseMatrix;
