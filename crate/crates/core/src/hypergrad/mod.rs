//! Hypergradients `dL/dθ = −∇_z L(z*)ᵀ J⁻¹ ∂g/∂θ` with interchangeable choices for `J⁻¹`.
//!
//! Every backend forms a left vector `w ≈ J⁻ᵀ ∇_z L` and returns
//! `grad = −wᵀ ∂g/∂θ`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{cg_solve, norm, sub, LowRankInverse};
use crate::problems::BilevelProblem;
use crate::qn::{broyden_solve_from, QNConfig, SolveResult, SolverKind};
use crate::Scalar;

/// Ratio above which the SHINE left vector is replaced by the Jacobian-Free one.
pub const DEFAULT_FALLBACK_RATIO: f64 = 1.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HypergradKind {
    Exact,
    Shine,
    JacobianFree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypergradMethod<T> {
    pub kind: HypergradKind,
    pub refine_steps: usize,
    pub fallback_ratio: Option<T>,
    pub exact_max_iter: usize,
    /// Absolute tolerance on `‖Jᵀw − ∇_z L‖` for the exact backend.
    pub exact_tol: T,
    /// Seed the refine solver with the forward inverse estimate.
    pub warm_start_operator: bool,
}

impl<T: Scalar> HypergradMethod<T> {
    fn with_kind(kind: HypergradKind) -> Self {
        Self {
            kind,
            refine_steps: 0,
            fallback_ratio: None,
            exact_max_iter: 100,
            exact_tol: T::lit(1e-6),
            warm_start_operator: true,
        }
    }

    pub fn exact() -> Self {
        Self::with_kind(HypergradKind::Exact)
    }

    pub fn shine() -> Self {
        Self::with_kind(HypergradKind::Shine)
    }

    pub fn jacobian_free() -> Self {
        Self::with_kind(HypergradKind::JacobianFree)
    }

    pub fn with_refine(mut self, steps: usize) -> Self {
        self.refine_steps = steps;
        self
    }

    pub fn with_fallback(mut self, ratio: Option<T>) -> Self {
        self.fallback_ratio = ratio;
        self
    }

    pub fn with_exact_limits(mut self, max_iter: usize, tol: T) -> Self {
        self.exact_max_iter = max_iter;
        self.exact_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.fallback_ratio {
            if !(r > T::one()) {
                return Err(Error::InvalidConfig(format!("fallback ratio must exceed 1, got {r}")));
            }
        }
        if !(self.exact_tol >= T::zero()) {
            return Err(Error::InvalidConfig("exact_tol must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypergradResult<T> {
    pub grad: Vec<T>,
    /// `w` with `wᵀ ≈ ∇_z Lᵀ J⁻¹`.
    pub left_vector: Vec<T>,
    pub method_used: String,
    pub fallback_triggered: bool,
    pub inversion_iterations: usize,
    /// Seconds.
    pub wall_time: f64,
    /// `‖Jᵀw − ∇_z L‖` at the returned left vector.
    pub adjoint_residual: T,
    /// False when an iterative inversion stopped at its iteration cap.
    pub converged: bool,
}

struct AdjointSolve<T> {
    w: Vec<T>,
    iterations: usize,
    converged: bool,
}

/// Solves `Jᵀ w = rhs` at `z`: CG when `J` is symmetric, Broyden on `w ↦ Jᵀw − rhs`
/// otherwise. `init_op` approximates `J⁻ᵀ`.
fn solve_adjoint<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    theta: &[T],
    z: &[T],
    rhs: &[T],
    w0: Option<&[T]>,
    init_op: Option<LowRankInverse<T>>,
    tol: T,
    max_iter: usize,
) -> Result<AdjointSolve<T>> {
    let dim = rhs.len();
    if let Some(w) = w0 {
        if w.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: w.len() });
        }
    }
    if problem.symmetric_inner() {
        let rhs_norm = norm(rhs);
        let rel = if rhs_norm > T::zero() { tol / rhs_norm } else { T::zero() };
        let out = cg_solve(|u| problem.inner_hvp(theta, z, u), rhs, w0, rel, max_iter);
        if !crate::numkit::is_finite(&out.solution) {
            return Err(Error::NonFiniteIterate {
                iteration: out.iterations,
                residual_norms: vec![out.residual_norm.as_f64()],
            });
        }
        return Ok(AdjointSolve {
            converged: out.converged || out.residual_norm <= tol,
            w: out.solution,
            iterations: out.iterations,
        });
    }
    let cfg = QNConfig::default().with_tol(tol).with_max_iter(max_iter).with_memory(None);
    let op = match init_op {
        Some(op) => op,
        None => LowRankInverse::new(dim, None)?,
    };
    let start = w0.map_or_else(|| vec![T::zero(); dim], <[T]>::to_vec);
    let res = broyden_solve_from(
        |w| sub(&problem.inner_vjp(theta, z, w), rhs),
        &start,
        &cfg,
        op,
        &mut |_| {},
    )?;
    Ok(AdjointSolve {
        converged: res.converged,
        iterations: res.iterations,
        w: res.z_star,
    })
}

fn adjoint_residual<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    theta: &[T],
    z: &[T],
    w: &[T],
    rhs: &[T],
) -> T {
    norm(&sub(&problem.inner_vjp(theta, z, w), rhs))
}

fn finish<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    theta: &[T],
    z: &[T],
    rhs: &[T],
    left: Vec<T>,
    method_used: String,
    fallback_triggered: bool,
    inversion_iterations: usize,
    converged: bool,
    started: Instant,
) -> Result<HypergradResult<T>> {
    let grad: Vec<T> = problem.dg_dtheta_adjoint(theta, z, &left).into_iter().map(|v| -v).collect();
    if !crate::numkit::is_finite(&grad) {
        return Err(Error::NonFiniteIterate {
            iteration: inversion_iterations,
            residual_norms: vec![],
        });
    }
    Ok(HypergradResult {
        adjoint_residual: adjoint_residual(problem, theta, z, &left, rhs),
        grad,
        left_vector: left,
        method_used,
        fallback_triggered,
        inversion_iterations,
        wall_time: started.elapsed().as_secs_f64(),
        converged,
    })
}

fn check_z<T>(dim: usize, z: &[T]) -> Result<()> {
    if z.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: z.len() });
    }
    Ok(())
}

/// Exact backend: iterative solution of the adjoint system, truncated at
/// `method.exact_max_iter`. Non-convergence is reported in `converged`.
pub fn exact_hypergradient<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    theta: &[T],
    z_star: &[T],
    method: &HypergradMethod<T>,
) -> Result<HypergradResult<T>> {
    exact_hypergradient_from(problem, theta, z_star, method, None)
}

/// As [`exact_hypergradient`], warm-starting the adjoint solve at `w0`.
pub fn exact_hypergradient_from<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    theta: &[T],
    z_star: &[T],
    method: &HypergradMethod<T>,
    w0: Option<&[T]>,
) -> Result<HypergradResult<T>> {
    method.validate()?;
    check_z(problem.dim(), z_star)?;
    let started = Instant::now();
    let rhs = problem.outer_grad(z_star);
    let sol = solve_adjoint(problem, theta, z_star, &rhs, w0, None, method.exact_tol, method.exact_max_iter)?;
    finish(
        problem,
        theta,
        z_star,
        &rhs,
        sol.w,
        "exact".into(),
        false,
        sol.iterations,
        sol.converged,
        started,
    )
}

/// Jacobian-Free backend: `J⁻¹ ≈ I`.
pub fn jacobian_free_hypergradient<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    theta: &[T],
    z_star: &[T],
) -> Result<HypergradResult<T>> {
    check_z(problem.dim(), z_star)?;
    let started = Instant::now();
    let rhs = problem.outer_grad(z_star);
    let left = rhs.clone();
    finish(problem, theta, z_star, &rhs, left, "jacobian-free".into(), false, 0, true, started)
}

/// Returns `(jf_left, true)` when `‖shine_left‖ > ratio·‖jf_left‖`, else `(shine_left, false)`.
pub fn fallback_select<T: Scalar>(shine_left: &[T], jf_left: &[T], ratio: T) -> (Vec<T>, bool) {
    if norm(shine_left) > ratio * norm(jf_left) {
        (jf_left.to_vec(), true)
    } else {
        (shine_left.to_vec(), false)
    }
}

/// The inverse estimate applied from the left: `Hᵀ x`, or `H x` when `H` is symmetric.
pub fn apply_left<T: Scalar>(op: &LowRankInverse<T>, solver: SolverKind, x: &[T]) -> Result<Vec<T>> {
    match solver {
        SolverKind::Lbfgs => op.apply(x),
        SolverKind::Broyden | SolverKind::AdjointBroyden => op.apply_adjoint(x),
    }
}

/// SHINE backend: reuses the forward solver's inverse estimate, then applies the
/// configured fallback and refine strategies in that order.
pub fn shine_hypergradient<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    theta: &[T],
    result: &SolveResult<T>,
    method: &HypergradMethod<T>,
) -> Result<HypergradResult<T>> {
    method.validate()?;
    let z = &result.z_star;
    check_z(problem.dim(), z)?;
    let started = Instant::now();
    let rhs = problem.outer_grad(z);
    let mut left = apply_left(&result.inverse_op, result.solver, &rhs)?;
    let mut name = String::from("shine");
    let mut triggered = false;
    if let Some(ratio) = method.fallback_ratio {
        let (chosen, t) = fallback_select(&left, &rhs, ratio);
        left = chosen;
        triggered = t;
        name.push_str("+fallback");
    }
    if method.refine_steps > 0 {
        let init_op = method
            .warm_start_operator
            .then(|| left_operator(&result.inverse_op, result.solver));
        let mut refined = refine_hypergradient(problem, theta, z, &left, init_op, method.refine_steps)?;
        refined.method_used = format!("{name}+refine:{}", method.refine_steps);
        refined.fallback_triggered = triggered;
        refined.wall_time = started.elapsed().as_secs_f64();
        return Ok(refined);
    }
    finish(problem, theta, z, &rhs, left, name, triggered, 0, true, started)
}

/// The forward estimate as an approximation of `J⁻ᵀ`, the inverse Jacobian of the adjoint system.
pub fn left_operator<T: Scalar>(op: &LowRankInverse<T>, solver: SolverKind) -> LowRankInverse<T> {
    match solver {
        SolverKind::Lbfgs => op.clone(),
        SolverKind::Broyden | SolverKind::AdjointBroyden => op.transposed(),
    }
}

/// Runs `steps` iterations of the adjoint solver from `init_left`; `steps = 0`
/// returns `init_left` unchanged. `init_op` approximates `J⁻ᵀ` and seeds the
/// quasi-Newton adjoint solver (unused by the CG path).
pub fn refine_hypergradient<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    theta: &[T],
    z_star: &[T],
    init_left: &[T],
    init_op: Option<LowRankInverse<T>>,
    steps: usize,
) -> Result<HypergradResult<T>> {
    check_z(problem.dim(), z_star)?;
    check_z(problem.dim(), init_left)?;
    let started = Instant::now();
    let rhs = problem.outer_grad(z_star);
    if steps == 0 {
        return finish(problem, theta, z_star, &rhs, init_left.to_vec(), "refine:0".into(), false, 0, true, started);
    }
    let tol = T::epsilon() * norm(&rhs);
    let sol = solve_adjoint(problem, theta, z_star, &rhs, Some(init_left), init_op, tol, steps)?;
    finish(
        problem,
        theta,
        z_star,
        &rhs,
        sol.w,
        format!("refine:{steps}"),
        false,
        sol.iterations,
        sol.converged,
        started,
    )
}

/// Dispatches on `method.kind`. SHINE requires the forward [`SolveResult`].
pub fn hypergradient<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    theta: &[T],
    forward: &SolveResult<T>,
    method: &HypergradMethod<T>,
    adjoint_warm_start: Option<&[T]>,
) -> Result<HypergradResult<T>> {
    match method.kind {
        HypergradKind::Exact => exact_hypergradient_from(problem, theta, &forward.z_star, method, adjoint_warm_start),
        HypergradKind::Shine => shine_hypergradient(problem, theta, forward, method),
        HypergradKind::JacobianFree => {
            if method.refine_steps == 0 {
                return jacobian_free_hypergradient(problem, theta, &forward.z_star);
            }
            let z = &forward.z_star;
            let started = Instant::now();
            let lg = problem.outer_grad(z);
            let mut r = refine_hypergradient(problem, theta, z, &lg, None, method.refine_steps)?;
            r.method_used = format!("jacobian-free+refine:{}", method.refine_steps);
            r.wall_time = started.elapsed().as_secs_f64();
            Ok(r)
        }
    }
}
