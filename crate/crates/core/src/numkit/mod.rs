//! Dense kernels, the low-rank inverse operator, conjugate gradient and test oracles.

mod cg;
mod dense;
mod finite_diff;
mod lowrank;
mod vector;

pub use cg::{cg_solve, CgOutcome};
pub use dense::{dense_solve, DenseMatrix, Lu};
pub use finite_diff::{default_step, finite_diff_grad, finite_diff_jvp};
pub use lowrank::{LowRankInverse, RankOne, Update, EPS_SING};
pub use vector::*;
