//! Bi-level optimization with quasi-Newton inner solvers whose inverse estimates are
//! reused for the hypergradient.
//!
//! The forward solvers in [`qn`] return a [`numkit::LowRankInverse`] alongside the
//! root. [`hypergrad`] turns it into an approximate hypergradient, or computes the
//! exact one by iterative inversion. [`outer`] drives hyperparameter descent and
//! [`deqtoy`] applies the same machinery to a small deep-equilibrium layer.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the common double-precision instantiations.

pub mod dataio;
pub mod deqtoy;
pub mod error;
pub mod hypergrad;
pub mod numkit;
pub mod outer;
pub mod problems;
pub mod qn;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type LowRankInverseF64 = numkit::LowRankInverse<f64>;
pub type LowRankInverseF32 = numkit::LowRankInverse<f32>;
pub type DenseMatrixF64 = numkit::DenseMatrix<f64>;
pub type QNConfigF64 = qn::QNConfig<f64>;
pub type SolveResultF64 = qn::SolveResult<f64>;
pub type HypergradMethodF64 = hypergrad::HypergradMethod<f64>;
pub type HypergradResultF64 = hypergrad::HypergradResult<f64>;
pub type OuterConfigF64 = outer::OuterConfig<f64>;
pub type ToyDeqModelF64 = deqtoy::ToyDeqModel<f64>;
