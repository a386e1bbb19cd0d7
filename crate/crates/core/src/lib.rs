//! Optimal mass transportation with Lagrangian action costs on flat tori.
//!
//! The crate computes action costs `c_s^t(x, y)` by discrete action
//! minimization, solves discrete Kantorovich problems exactly, builds forward
//! and backward Lax-Oleinik value functions on grids, constructs transport
//! interpolations from minimizing extremals and computes Mather's `α` together
//! with a Mather measure for time-periodic Lagrangians.

pub mod action;
pub mod cache;
pub mod dynamics;
pub mod error;
pub mod hamilton_jacobi;
pub mod instances;
pub mod interpolation;
pub mod kantorovich;
pub mod linalg;
pub mod lp;
pub mod manifold;
pub mod mather;
pub mod measure;
pub mod wasserstein;

pub use error::{Error, Result};
