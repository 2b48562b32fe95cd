//! Inexact infinite GMRES for parameterized linear systems `A(μ) x(μ) = b`.
//!
//! One Krylov basis is built for a companion linearization of the family;
//! the resulting [`ParameterizedSolution`] is then evaluated cheaply at any
//! parameter value. The preconditioner `A0^{-1}` may be applied inexactly,
//! with tolerances that relax as the outer residual decreases.
//!
//! ```
//! use infgmres::{gallery, engine::{self, SolverConfig}};
//!
//! let (family, b) = gallery::time_delay(50, 3, 1);
//! let config = SolverConfig { j_max: 20, mu_ref: 0.2, ..Default::default() };
//! let run = engine::run(&family, &b, &config).unwrap();
//! let res = run.solution.true_relative_residual(0.1, &family, &b).unwrap();
//! assert!(res < 1e-8);
//! ```

pub mod companion;
pub mod engine;
pub mod error;
pub mod gallery;
pub mod inner;
pub mod lstsq;
pub mod manifest;
pub mod mtx;
pub mod oracle;
pub mod solution;
pub mod sparse;
pub mod taylor;

pub use companion::BlockVector;
pub use engine::{run, KrylovFactorization, Run, RunTrace, SolverConfig};
pub use error::{Error, InnerSolveError, Result};
pub use solution::ParameterizedSolution;
pub use sparse::CsrMatrix;
pub use taylor::{ScalarFunction, TaylorMatrixFunction, Term};
