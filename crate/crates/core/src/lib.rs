//! Fixed-mesh shape optimization for elliptic problems with random diffusion.
//!
//! Shapes are the nonnegative set of a nodal level-set field `g` on a fixed
//! triangulation of `D = (-1, 1)^2`. The state equation is extended to all of
//! `D` with a penalty term `(1/eps)(1 - H_eps(g)) u`, so every shape shares one
//! mesh. Expected tracking costs are approximated by Monte Carlo over samples
//! of an elementwise-constant coefficient `alpha = 1 + rho * eta`, and the
//! level set is updated by an adjoint-based descent loop.
//!
//! ```no_run
//! use penshape::{preset, run_optimization};
//!
//! let mut config = preset(1).unwrap();
//! config.grid_n = 33;
//! config.n_samples = 4;
//! let outcome = run_optimization(&config).unwrap();
//! println!("{:?}", outcome.history.termination);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assembly;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod mesh;
pub mod optimizer;
pub mod pde;
pub mod penalty;
pub mod problems;
pub mod solver;
pub mod sparse;

pub use assembly::{interpolate_nodal, Assembler, MassWeight, NodalVector};
pub use error::{Error, Result};
pub use mesh::{build_structured_mesh, Mesh, Point, Subdomain};
pub use optimizer::{
    run_optimization, run_optimization_with, DirectionMode, IterationRecord, OptimizerParams, RunHistory, RunOutcome,
    Termination,
};
pub use pde::{mc_expect, mc_expect_nodal, ObjectiveKind, ObjectiveSpec, SampleSolution, StateSolver};
pub use penalty::{h_eps, h_eps_prime, sample_coefficient, CoefficientSample, PenaltyParams};
pub use problems::{preset, FieldTag, RunConfig};
pub use solver::{cg_solve, CgOptions, SolveReport};
pub use sparse::{SparseMatrix, SparsityPattern};
