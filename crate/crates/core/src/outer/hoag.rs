use std::time::Instant;

use super::{OuterConfig, RowStatus, RunTrace, StepRule, TraceRow};
use crate::error::{Error, Result};
use crate::hypergrad::{hypergradient, HypergradResult};
use crate::numkit::{axpy, is_finite};
use crate::problems::BilevelProblem;
use crate::qn::{adjoint_broyden_solve, broyden_solve, lbfgs_opa_solve, QNConfig, SolveResult, SolverKind, WolfeParams};
use crate::Scalar;

const MAX_HALVINGS: usize = 20;
const STEP_GROWTH: f64 = 1.05;

/// Solves `g_θ(z) = 0` from `z0` with the requested solver.
pub fn solve_inner<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    theta: &[T],
    z0: &[T],
    solver: SolverKind,
    cfg: &QNConfig<T>,
    wolfe: &WolfeParams<T>,
) -> Result<SolveResult<T>> {
    match solver {
        SolverKind::Lbfgs => lbfgs_opa_solve(problem, theta, z0, cfg, wolfe),
        SolverKind::Broyden => broyden_solve(|z| problem.inner_residual(theta, z), z0, cfg),
        SolverKind::AdjointBroyden => {
            let lg = |z: &[T]| problem.outer_grad(z);
            adjoint_broyden_solve(
                |z| problem.inner_residual(theta, z),
                |v, z| problem.inner_vjp(theta, z, v),
                Some(&lg),
                z0,
                cfg,
            )
        }
    }
}

struct Evaluated<T> {
    theta: Vec<T>,
    forward: SolveResult<T>,
    val: T,
}

fn to_f64<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn opt_f64<T: Scalar>(v: Option<T>) -> f64 {
    v.map_or(f64::NAN, |x| x.as_f64())
}

/// Hypergradient descent on the validation loss with a decreasing tolerance schedule.
///
/// Iteration `k` solves the inner problem, and the adjoint system of the exact
/// backend, to `ε_k = tol0·ρᵏ`, both warm-started from the previous solution when
/// `warm_restart`, then takes `θ ← θ − γ·grad`. Under [`StepRule::Backtracking`] a
/// candidate whose validation loss exceeds the current one is retried with `γ/2`, up
/// to 20 times; if all fail, θ stays put, the row is marked stalled and the next
/// attempt starts from `γ/2`. Inner failures halve `γ` and are recorded, never raised.
pub fn hoag_run<T: Scalar, P: BilevelProblem<T> + ?Sized>(problem: &P, cfg: &OuterConfig<T>) -> Result<RunTrace> {
    cfg.validate()?;
    if cfg.initial_theta.len() != problem.theta_dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.theta_dim(),
            got: cfg.initial_theta.len(),
        });
    }
    let start = Instant::now();
    let dim = problem.dim();
    let zeros = vec![T::zero(); dim];
    let mut trace = RunTrace::default();
    trace.metadata.insert("solver".into(), format!("{:?}", cfg.solver));
    trace.metadata.insert("method".into(), format!("{:?}", cfg.method.kind));
    trace.metadata.insert("tol0".into(), cfg.tol0.to_string());
    trace.metadata.insert("tol_decrease".into(), cfg.tol_decrease.to_string());
    trace.metadata.insert(
        "step_rule".into(),
        match cfg.step_rule {
            StepRule::Fixed => "fixed".into(),
            StepRule::Backtracking => "backtracking on validation loss, halve x20, grow x1.05".into(),
        },
    );

    let mut step = cfg.initial_step;
    let mut current: Option<Evaluated<T>> = None;
    let mut grad: Option<HypergradResult<T>> = None;
    let mut fallback_count = 0;

    for k in 0..cfg.max_outer_iters {
        let eps = cfg.tolerance_at(k);
        let inner_cfg = cfg.inner.clone().with_tol(eps);
        let mut row = TraceRow::blank(k);
        row.tol = eps.as_f64();
        let mut inner_iters = 0;

        let mut solve_at = |theta: Vec<T>, warm: Option<&[T]>| -> Result<Evaluated<T>> {
            let z0 = match (cfg.warm_restart, warm) {
                (true, Some(z)) => z,
                _ => &zeros,
            };
            let forward = solve_inner(problem, &theta, z0, cfg.solver, &inner_cfg, &cfg.wolfe)?;
            inner_iters += forward.iterations;
            let val = problem.outer_loss(&forward.z_star);
            if !val.is_finite() {
                return Err(Error::NonFiniteIterate {
                    iteration: forward.iterations,
                    residual_norms: vec![],
                });
            }
            Ok(Evaluated { theta, forward, val })
        };

        let status;
        match (current.take(), grad.as_ref()) {
            (Some(cur), None) => {
                let re = solve_at(cur.theta.clone(), Some(&cur.forward.z_star));
                current = Some(match re {
                    Ok(ev) => ev,
                    Err(_) => cur,
                });
                row.step_size = 0.0;
                status = RowStatus::Stalled;
            }
            (None, _) => {
                match solve_at(cfg.initial_theta.clone(), None) {
                    Ok(ev) => {
                        current = Some(ev);
                        status = RowStatus::Initial;
                    }
                    Err(_) => {
                        status = RowStatus::InnerFailed;
                    }
                }
            }
            (Some(cur), Some(g)) => {
                let mut gamma = step;
                let mut halvings = 0;
                let mut accepted = None;
                let mut failed = false;
                loop {
                    let mut cand = cur.theta.clone();
                    axpy(-gamma, &g.grad, &mut cand);
                    match solve_at(cand, Some(&cur.forward.z_star)) {
                        Ok(ev) if cfg.step_rule == StepRule::Fixed || ev.val <= cur.val => {
                            accepted = Some(ev);
                            break;
                        }
                        Ok(_) => {}
                        Err(_) => failed = true,
                    }
                    if cfg.step_rule == StepRule::Fixed || halvings == MAX_HALVINGS {
                        break;
                    }
                    gamma = gamma / T::lit(2.0);
                    halvings += 1;
                }
                match accepted {
                    Some(ev) => {
                        step = if halvings == 0 && cfg.step_rule == StepRule::Backtracking {
                            gamma * T::lit(STEP_GROWTH)
                        } else {
                            gamma
                        };
                        row.step_size = gamma.as_f64();
                        current = Some(ev);
                        status = RowStatus::Accepted;
                    }
                    None => {
                        step = step / T::lit(2.0);
                        row.step_size = 0.0;
                        // re-solve in place at the tighter tolerance so the next gradient improves
                        let re = solve_at(cur.theta.clone(), Some(&cur.forward.z_star));
                        current = Some(match re {
                            Ok(ev) => ev,
                            Err(_) => cur,
                        });
                        status = if failed { RowStatus::InnerFailed } else { RowStatus::Stalled };
                    }
                }
            }
        }

        if let Some(cur) = current.as_ref() {
            let warm = grad.as_ref().filter(|_| cfg.warm_restart).map(|g| g.left_vector.clone());
            let mut method = cfg.method.clone();
            method.exact_tol = eps;
            match hypergradient(problem, &cur.theta, &cur.forward, &method, warm.as_deref()) {
                Ok(g) if is_finite(&g.grad) => {
                    if g.fallback_triggered {
                        fallback_count += 1;
                    }
                    row.backward_iters = g.inversion_iterations;
                    row.adjoint_residual = g.adjoint_residual.as_f64();
                    grad = Some(g);
                }
                _ => {
                    grad = None;
                    step = step / T::lit(2.0);
                }
            }
            row.theta = to_f64(&cur.theta);
            row.val_loss = cur.val.as_f64();
            row.train_loss = opt_f64(problem.train_loss(&cur.forward.z_star));
            row.test_loss = opt_f64(problem.test_loss(&cur.forward.z_star));
        } else {
            row.theta = to_f64(&cfg.initial_theta);
            step = step / T::lit(2.0);
        }
        row.inner_iters = inner_iters;
        row.fallback_count = fallback_count;
        row.status = status;
        row.cumulative_seconds = start.elapsed().as_secs_f64();
        trace.rows.push(row);
    }
    Ok(trace)
}
