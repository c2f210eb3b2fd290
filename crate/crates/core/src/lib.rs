//! Composite Bernstein trajectory prediction.
//!
//! Trajectories of parameterized optimal control and calculus-of-variations
//! problems are represented by the control points of composite Bernstein
//! polynomials. A small encoder-decoder network maps problem parameters to
//! control-point sequences, and the endpoint, convex hull and degree
//! elevation properties of the Bernstein form are used to certify the
//! predictions before a receding-horizon planner executes them.

pub mod cbp;
pub mod cli;
pub mod error;
pub mod eval;
pub mod oracles;
pub mod planner;
pub mod problems;
pub mod quadrature;
pub mod seq2seq;
pub mod verify;

pub use error::{Error, Result};
