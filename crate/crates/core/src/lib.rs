//! Certification of separable quantum operations against the finite-round
//! LOCC extreme-ray bound `Σ_α e_α ≤ 2(N−1)`.
//!
//! The crate is organised bottom-up:
//!
//! - [`operator`]: Hermitian operator algebra on `nalgebra` complex matrices.
//! - [`sep`]: product operators and separable operations.
//! - [`cone`]: extremality of generators in finitely generated cones.
//! - [`tree`]: LOCC protocol trees, accumulation, extraction and canonical forms.
//! - [`prune`]: keeper-based pruning of canonical trees.
//! - [`certify`]: the top-level verdict.
//! - [`constructions`]: maximal violators, saturating protocols and fixtures.
//! - [`json`]: file schemas shared with the command-line tool.

pub mod certify;
pub mod cone;
pub mod constructions;
mod error;
pub mod json;
pub mod operator;
pub mod prune;
pub mod sep;
mod tol;
pub mod tree;

pub use error::{Error, Result};
pub use operator::{CMatrix, HermitianOperator};
pub use sep::{ProductOperator, SeparableOperation};
pub use tol::Tolerances;
pub use tree::{LoccTree, NodeId};
