//! Semismooth Newton method for an optimal control problem governed by the
//! classical obstacle problem, discretized with P1 finite elements on
//! Friedrichs–Keller triangulations of the unit square.
//!
//! The pipeline is layered bottom-up:
//!
//! * [`mesh`] builds the triangulation,
//! * [`assembly`] assembles stiffness, mass and H¹ matrices,
//! * [`linalg`] factors and solves the sparse systems,
//! * [`obstacle`] solves the discrete obstacle problem by a primal–dual active set method,
//! * [`operators`] provides the Riesz map `P_h` and the active-set derivative `G_N`,
//! * [`newton`] runs the outer semismooth Newton iteration,
//! * [`diagnostics`] turns structural properties of the discrete operators into checks,
//! * [`cli`] drives experiments and writes CSV, JSON and VTK output.

pub mod assembly;
pub mod cli;
pub mod diagnostics;
mod error;
pub mod linalg;
pub mod mesh;
pub mod newton;
pub mod obstacle;
pub mod operators;

pub use assembly::{FeMatrices, NodalFunction, NormKind, Space, SparseSymOperator};
pub use error::{Error, Result};
pub use mesh::Mesh;
pub use newton::{NewtonConfig, NewtonReport, NewtonStatus, SelectorPolicy};
pub use obstacle::ObstacleSolution;
pub use operators::DerivativeSelector;
