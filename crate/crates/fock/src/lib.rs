//! Numerical laboratory for weighted Fock spaces F^2_phi whose weight has
//! a doubling Laplacian: the scale function rho, the induced metric, the
//! Bergman kernel of the space, and a constructive solver for the
//! inhomogeneous Cauchy-Riemann equation, together with quantitative
//! checks of the estimates relating them.

pub mod bergman;
pub mod dbar;
pub mod error;
pub mod gadgets;
pub mod grid;
pub mod harness;
pub mod quad;
pub mod metric;
pub mod weights;

pub use error::{FockError, Result};
