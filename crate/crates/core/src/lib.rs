//! Retraction-free second-order landing methods on the Stiefel manifold.
//!
//! Iterates live in the ambient space of `n x p` matrices. Each step adds a
//! normal Newton–Schulz correction that restores orthonormality and a tangent
//! Newton-type correction obtained from a matrix-free Krylov solve, so no
//! retraction or projection onto `St(p, n)` is ever computed.
//!
//! ```no_run
//! use sol_landing::{problems, driver, AmbientPoint};
//!
//! let (data, _) = problems::synth_procrustes(200, 20, 0.02, 1).unwrap();
//! let prob = problems::Procrustes::new(data).unwrap();
//! let x0 = AmbientPoint::new(sol_landing::linalg::identity(20)).unwrap();
//! let cfg = driver::SolverConfig::default();
//! let res = driver::solve(&prob, &x0, &cfg).unwrap();
//! println!("{:?} after {} iterations", res.status, res.iterations());
//! ```

// `!(x > 0.0)` is how parameter checks reject NaN along with the range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convergence;
pub mod driver;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod krylov;
pub mod linalg;
pub mod newton_schulz;
pub mod parallel;
pub mod problems;

/// Library version, recorded in benchmark summaries.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use driver::{solve, SolveResult, SolverConfig, Status, Variant};
pub use error::{Error, Result};
pub use fields::{FieldContext, LandingParams, Problem};
pub use geometry::{AmbientPoint, NormalVector, SafeRegion, TangentVector};
pub use newton_schulz::NsOrder;
pub use parallel::Execution;
