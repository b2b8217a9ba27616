//! Rényi entanglement asymmetry of translation-invariant matrix product states.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`]: dense complex kernel (products, powers, eigensystems, SVD).
//! * [`mps`]: uniform MPS tensors, plain and charged transfer operators.
//! * [`symmetry`]: finite groups, U(1)/SU(2) representations and Haar integration.
//! * [`moments`]: charged moments, Rényi entropies and the asymmetry itself.
//! * [`states`]: catalog of analytic states and an imaginary-time TEBD solver
//!   for the XXZ chain.
//! * [`oracle`]: brute-force reference computations on finite chains.

// `!(x > 0.0)` style checks also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod moments;
pub mod mps;
pub mod oracle;
pub mod states;
pub mod symmetry;

pub use error::{Error, Result};
