//! Numerical laboratory for weakly coupled semilinear sigma-evolution systems
//! with frictional and visco-elastic damping,
//!
//! ```text
//! u_l'' + (-Delta)^sigma u_l + u_l' + (-Delta)^sigma u_l' = |u_{l-1}|^{p_l},   l = 1..k,
//! ```
//!
//! with `u_0 = u_k`. The crate covers the exponent calculus of the system, the
//! linear Fourier multipliers, a pseudo-spectral exponential integrator, the
//! test-function machinery of the blow-up argument, and experiment drivers
//! that compare measured slopes against predicted exponents.

// Negated float comparisons are deliberate: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli_io;
pub mod error;
pub mod exponents;
pub mod harness;
pub mod kernels;
pub mod solver;
pub mod stats;
pub mod testfunc;

pub use error::{Error, Result};
