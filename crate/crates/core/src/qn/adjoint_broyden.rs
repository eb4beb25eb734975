use super::broyden::{merit_backtrack, non_finite};
use super::{LineSearch, OpaEvent, QNConfig, SolveResult, SolverKind, Termination, UpdateEvent, UpdateKind};
use crate::error::{Error, Result};
use crate::numkit::{add, is_finite, neg, norm, sub, LowRankInverse};
use crate::Scalar;

/// Adjoint Broyden's method with optional outer-problem-aware extra updates.
///
/// Each step applies `B_{n+1} = B_n + σ σᵀ (J(z_{n+1}) − B_n) / ‖σ‖²` with `σ = g(z_{n+1})`.
/// When `outer_grad` is given and OPA is enabled, iterations with `n mod M = 0`
/// additionally update in direction `v_n = B_nᵀ⁻¹ ∇L(z_n)` (the row vector
/// `∇L(z_n)ᵀ B_n^{-1}`), applied last so that `v_nᵀ B_{n+1} = v_nᵀ J(z_{n+1})` holds
/// exactly. Both updates are kept on the inverse side.
///
/// `vjp(v, z)` must return `J(z)ᵀ v`.
pub fn adjoint_broyden_solve<T, G, V>(
    g: G,
    vjp: V,
    outer_grad: Option<&dyn Fn(&[T]) -> Vec<T>>,
    z0: &[T],
    cfg: &QNConfig<T>,
) -> Result<SolveResult<T>>
where
    T: Scalar,
    G: FnMut(&[T]) -> Vec<T>,
    V: FnMut(&[T], &[T]) -> Vec<T>,
{
    adjoint_broyden_solve_observed(g, vjp, outer_grad, z0, cfg, &mut |_| {})
}

pub fn adjoint_broyden_solve_observed<T, G, V>(
    mut g: G,
    mut vjp: V,
    outer_grad: Option<&dyn Fn(&[T]) -> Vec<T>>,
    z0: &[T],
    cfg: &QNConfig<T>,
    observer: &mut dyn FnMut(&UpdateEvent<'_, T>),
) -> Result<SolveResult<T>>
where
    T: Scalar,
    G: FnMut(&[T]) -> Vec<T>,
    V: FnMut(&[T], &[T]) -> Vec<T>,
{
    cfg.validate()?;
    let dim = z0.len();
    let mut h = LowRankInverse::new(dim, cfg.memory)?;
    let mut z = z0.to_vec();
    let mut gz = g(&z);
    let mut evals = 1;
    let mut residual_norms = vec![norm(&gz)];
    if !is_finite(&gz) || !is_finite(&z) {
        return Err(non_finite(0, &residual_norms));
    }
    let opa = match (cfg.opa_frequency, outer_grad) {
        (Some(m), Some(lg)) => Some((m, lg)),
        _ => None,
    };
    let mut step_history = Vec::new();
    let mut opa_events = Vec::new();
    let mut skipped = 0;
    let mut last_step = None;
    let mut iterations = 0;

    let push = |h: &mut LowRankInverse<T>, v: &[T], q: &[T]| -> Result<bool> {
        match h.push_adjoint_broyden(v, q) {
            Ok(()) => Ok(true),
            Err(Error::NearSingularUpdate { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    };

    let termination = loop {
        if *residual_norms.last().unwrap() <= cfg.tol {
            break Termination::Converged;
        }
        if iterations == cfg.max_iter {
            break Termination::MaxIter;
        }
        let n = iterations;
        let v_opa = match opa {
            Some((m, lg)) if n % m == 0 => Some(h.apply_adjoint(&lg(&z))?),
            _ => None,
        };

        let p = neg(&h.apply(&gz)?);
        let (s, z_new, g_new, used) = match cfg.line_search {
            LineSearch::None => {
                let z_new = add(&z, &p);
                let g_new = g(&z_new);
                (p, z_new, g_new, 1)
            }
            LineSearch::Wolfe => match merit_backtrack(&mut g, &z, &p, *residual_norms.last().unwrap()) {
                Some(found) => found,
                None => break Termination::LineSearchFailed,
            },
        };
        evals += used;
        iterations += 1;
        let r = norm(&g_new);
        residual_norms.push(r);
        if !is_finite(&z_new) || !r.is_finite() {
            return Err(non_finite(iterations, &residual_norms));
        }
        step_history.push((norm(&s), norm(&sub(&g_new, &gz))));

        if r > T::zero() {
            let q = vjp(&g_new, &z_new);
            let accepted = push(&mut h, &g_new, &q)?;
            if !accepted {
                skipped += 1;
            }
            observer(&UpdateEvent {
                iteration: n,
                kind: UpdateKind::Regular,
                accepted,
                direction: &g_new,
                image: &q,
                operator: &h,
            });
        }
        if let Some(v) = v_opa {
            let accepted = if norm(&v) > T::zero() {
                let q = vjp(&v, &z_new);
                let ok = push(&mut h, &v, &q)?;
                observer(&UpdateEvent {
                    iteration: n,
                    kind: UpdateKind::Opa,
                    accepted: ok,
                    direction: &v,
                    image: &q,
                    operator: &h,
                });
                ok
            } else {
                false
            };
            if !accepted {
                skipped += 1;
            }
            opa_events.push(OpaEvent { iteration: n, accepted });
        }
        last_step = Some(s);
        z = z_new;
        gz = g_new;
    };

    Ok(SolveResult {
        z_star: z,
        inverse_op: h,
        iterations,
        converged: termination == Termination::Converged,
        residual_norms,
        step_history,
        opa_events,
        termination,
        skipped_updates: skipped,
        solver: SolverKind::AdjointBroyden,
        last_step,
        function_evals: evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{dense_solve, relative_error, DenseMatrix};

    #[test]
    fn linear_diagonal_system() {
        let g = |z: &[f64]| vec![z[0] - 1.0, 3.0 * z[1] - 3.0];
        let vjp = |v: &[f64], _: &[f64]| vec![v[0], 3.0 * v[1]];
        let cfg = QNConfig::default().with_tol(1e-10).with_memory(None);
        let res = adjoint_broyden_solve(g, vjp, None, &[0.0, 0.0], &cfg).unwrap();
        assert!(res.converged);
        assert!(res.final_residual() <= 1e-10);
        assert!(relative_error(&res.z_star, &[1.0, 1.0]) < 1e-9);
    }

    #[test]
    fn adjoint_secant_holds_for_every_update() {
        let a = DenseMatrix::from_row_major(3, 3, vec![2.0, 0.3, -0.1, 0.2, 1.5, 0.4, -0.3, 0.1, 1.2]).unwrap();
        let b = vec![1.0, -1.0, 0.5];
        let g = |z: &[f64]| {
            let az = a.matvec(z);
            vec![az[0] - b[0] + 0.1 * z[0].sin(), az[1] - b[1], az[2] - b[2] + 0.05 * z[2].powi(3)]
        };
        let jt = |z: &[f64]| {
            let mut j = a.clone();
            j[(0, 0)] += 0.1 * z[0].cos();
            j[(2, 2)] += 0.15 * z[2] * z[2];
            j
        };
        let vjp = |v: &[f64], z: &[f64]| jt(z).vecmat(v);
        let lg = |z: &[f64]| z.iter().map(|x| x - 0.2).collect::<Vec<_>>();
        let mut count = 0;
        let mut obs = |ev: &UpdateEvent<'_, f64>| {
            if ev.accepted {
                // vᵀ J H' = vᵀ  ⇔  vᵀ B' = vᵀ J
                let lhs = ev.operator.apply_adjoint(ev.image).unwrap();
                assert!(relative_error(&lhs, ev.direction) < 1e-10);
                // and directly through the dense forward matrix
                let hd = ev.operator.to_dense();
                let vb = dense_solve(&hd.transpose(), ev.direction).unwrap();
                assert!(norm(&sub(&vb, ev.image)) <= 1e-10 * norm(ev.direction) * a.max_abs() * 3.0);
                count += 1;
            }
        };
        let cfg = QNConfig::default().with_tol(1e-12).with_memory(None).with_opa(Some(1));
        let res = adjoint_broyden_solve_observed(g, vjp, Some(&lg), &[0.0; 3], &cfg, &mut obs).unwrap();
        assert!(res.converged);
        assert!(count >= 2);
        assert!(res.opa_events.iter().any(|e| e.accepted));
    }
}
