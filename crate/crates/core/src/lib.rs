//! Stability analysis of conic constraint systems and generalized equations
//! over products of orthants, second-order cones and semidefinite cones.

pub mod cone_core;
pub mod cone_geometry;
pub mod constraint_system;
pub mod error;
pub mod linalg;
pub mod oracle;
pub mod problem;
pub mod proj_deriv;
pub mod stability;

pub use cone_core::{AmbientVec, ConeDesc, PrimitiveCone, Sign, Tol};
pub use cone_geometry::{Certificate, ConeSetOracle, Verdict};
pub use error::{ConeError, Result};
