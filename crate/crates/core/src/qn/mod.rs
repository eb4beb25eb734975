//! Quasi-Newton inner solvers that return their final inverse estimate.

mod adjoint_broyden;
mod broyden;
mod config;
mod lbfgs;
mod line_search;

pub use adjoint_broyden::{adjoint_broyden_solve, adjoint_broyden_solve_observed};
pub use broyden::{broyden_solve, broyden_solve_from};
pub use config::{
    LineSearch, OpaEvent, QNConfig, SolveResult, SolverKind, Termination, UpdateEvent, UpdateKind, WolfeParams,
};
pub use lbfgs::{lbfgs_opa_solve, lbfgs_opa_solve_observed};
pub use line_search::wolfe_line_search;
