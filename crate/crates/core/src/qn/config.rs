use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::LowRankInverse;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LineSearch {
    /// Unit steps.
    #[default]
    None,
    /// Strong Wolfe search on the inner objective (BFGS). Root-finding solvers without
    /// an objective backtrack on the merit `½‖g‖²` instead.
    Wolfe,
}

/// Quasi-Newton solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNConfig<T> {
    /// Stop once `‖g(z)‖ ≤ tol`.
    pub tol: T,
    pub max_iter: usize,
    /// Memory limit in updates; `None` is unbounded.
    pub memory: Option<usize>,
    /// Run an outer-problem-aware extra update every `M` iterations.
    pub opa_frequency: Option<usize>,
    /// First element of the OPA step-length sequence; later ones are `‖s_{n−1}‖`.
    pub opa_t0: T,
    pub line_search: LineSearch,
}

impl<T: Scalar> Default for QNConfig<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-6),
            max_iter: 500,
            memory: Some(30),
            opa_frequency: None,
            opa_t0: T::one(),
            line_search: LineSearch::None,
        }
    }
}

impl<T: Scalar> QNConfig<T> {
    pub fn with_tol(mut self, tol: T) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_memory(mut self, memory: Option<usize>) -> Self {
        self.memory = memory;
        self
    }

    pub fn with_opa(mut self, frequency: Option<usize>) -> Self {
        self.opa_frequency = frequency;
        self
    }

    pub fn with_line_search(mut self, ls: LineSearch) -> Self {
        self.line_search = ls;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > T::zero()) {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        if self.memory == Some(0) {
            return Err(Error::InvalidConfig("memory must be at least 1".into()));
        }
        if self.opa_frequency == Some(0) {
            return Err(Error::InvalidConfig("OPA frequency must be at least 1".into()));
        }
        if !(self.opa_t0 > T::zero()) {
            return Err(Error::InvalidConfig("opa_t0 must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WolfeParams<T> {
    pub c1: T,
    pub c2: T,
    /// Cap on function evaluations per search.
    pub max_backtracks: usize,
}

impl<T: Scalar> Default for WolfeParams<T> {
    fn default() -> Self {
        Self {
            c1: T::lit(1e-4),
            c2: T::lit(0.9),
            max_backtracks: 30,
        }
    }
}

impl<T: Scalar> WolfeParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(T::zero() < self.c1 && self.c1 < self.c2 && self.c2 < T::one()) {
            return Err(Error::InvalidConfig("Wolfe constants need 0 < c1 < c2 < 1".into()));
        }
        if self.max_backtracks == 0 {
            return Err(Error::InvalidConfig("max_backtracks must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverKind {
    Broyden,
    Lbfgs,
    AdjointBroyden,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    MaxIter,
    LineSearchFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpaEvent {
    pub iteration: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpdateKind {
    Regular,
    Opa,
}

/// Passed to solver observers after every attempted update.
///
/// For Broyden and BFGS, `(direction, image)` is the secant pair `(s, y)`; for
/// Adjoint Broyden it is `(v, Jᵀ v)` at the new iterate.
#[derive(Debug)]
pub struct UpdateEvent<'a, T> {
    pub iteration: usize,
    pub kind: UpdateKind,
    pub accepted: bool,
    pub direction: &'a [T],
    pub image: &'a [T],
    pub operator: &'a LowRankInverse<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult<T> {
    pub z_star: Vec<T>,
    pub inverse_op: LowRankInverse<T>,
    pub iterations: usize,
    /// `‖g(z_n)‖` for every iterate, starting with `z_0`.
    pub residual_norms: Vec<T>,
    /// `(‖s_n‖, ‖y_n‖)` per step.
    pub step_history: Vec<(T, T)>,
    pub opa_events: Vec<OpaEvent>,
    pub converged: bool,
    pub termination: Termination,
    pub skipped_updates: usize,
    pub solver: SolverKind,
    /// `z_N − z_{N−1}`, when at least one step was taken.
    pub last_step: Option<Vec<T>>,
    pub function_evals: usize,
}

impl<T: Scalar> SolveResult<T> {
    pub fn final_residual(&self) -> T {
        *self.residual_norms.last().expect("residual trace is never empty")
    }
}
