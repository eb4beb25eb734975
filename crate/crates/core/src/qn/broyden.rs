use super::{LineSearch, QNConfig, SolveResult, SolverKind, Termination, UpdateEvent, UpdateKind, WolfeParams};
use crate::error::{Error, Result};
use crate::numkit::{add, is_finite, neg, norm, scale, sub, LowRankInverse};
use crate::Scalar;

/// Good Broyden's method for `g(z) = 0`, starting from `H_0 = I`.
pub fn broyden_solve<T, G>(g: G, z0: &[T], cfg: &QNConfig<T>) -> Result<SolveResult<T>>
where
    T: Scalar,
    G: FnMut(&[T]) -> Vec<T>,
{
    broyden_solve_from(g, z0, cfg, LowRankInverse::identity(z0.len()), &mut |_| {})
}

/// Good Broyden's method from a given inverse estimate, reporting every update to `observer`.
pub fn broyden_solve_from<T, G>(
    mut g: G,
    z0: &[T],
    cfg: &QNConfig<T>,
    init_op: LowRankInverse<T>,
    observer: &mut dyn FnMut(&UpdateEvent<'_, T>),
) -> Result<SolveResult<T>>
where
    T: Scalar,
    G: FnMut(&[T]) -> Vec<T>,
{
    cfg.validate()?;
    if init_op.dim() != z0.len() {
        return Err(Error::DimensionMismatch {
            expected: z0.len(),
            got: init_op.dim(),
        });
    }
    let mut h = init_op.with_capacity(cfg.memory)?;
    let mut z = z0.to_vec();
    let mut gz = g(&z);
    let mut evals = 1;
    let mut residual_norms = vec![norm(&gz)];
    if !is_finite(&gz) || !is_finite(&z) {
        return Err(non_finite(0, &residual_norms));
    }
    let mut step_history = Vec::new();
    let mut skipped = 0;
    let mut last_step = None;
    let mut iterations = 0;
    let termination = loop {
        if *residual_norms.last().unwrap() <= cfg.tol {
            break Termination::Converged;
        }
        if iterations == cfg.max_iter {
            break Termination::MaxIter;
        }
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
        let y = sub(&g_new, &gz);
        step_history.push((norm(&s), norm(&y)));
        let accepted = match h.push_sherman_morrison(&s, &y) {
            Ok(()) => true,
            Err(Error::NearSingularUpdate { .. }) => {
                skipped += 1;
                false
            }
            Err(e) => return Err(e),
        };
        observer(&UpdateEvent {
            iteration: iterations - 1,
            kind: UpdateKind::Regular,
            accepted,
            direction: &s,
            image: &y,
            operator: &h,
        });
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
        opa_events: Vec::new(),
        termination,
        skipped_updates: skipped,
        solver: SolverKind::Broyden,
        last_step,
        function_evals: evals,
    })
}

pub(crate) fn non_finite<T: Scalar>(iteration: usize, residuals: &[T]) -> Error {
    Error::NonFiniteIterate {
        iteration,
        residual_norms: residuals.iter().map(|r| r.as_f64()).collect(),
    }
}

/// Backtracking on `‖g‖` with the derivative-free sufficient decrease
/// `‖g(z + α p)‖ ≤ (1 − c1·α)‖g(z)‖`. Returns `(s, z_new, g_new, evals)`.
pub(crate) fn merit_backtrack<T, G>(g: &mut G, z: &[T], p: &[T], g_norm: T) -> Option<(Vec<T>, Vec<T>, Vec<T>, usize)>
where
    T: Scalar,
    G: FnMut(&[T]) -> Vec<T>,
{
    let params = WolfeParams::<T>::default();
    let mut alpha = T::one();
    for k in 1..=params.max_backtracks {
        let s = scale(alpha, p);
        let z_new = add(z, &s);
        let g_new = g(&z_new);
        let r = norm(&g_new);
        if r.is_finite() && r <= (T::one() - params.c1 * alpha) * g_norm {
            return Some((s, z_new, g_new, k));
        }
        alpha = alpha * T::lit(0.5);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::relative_error;

    fn cfg() -> QNConfig<f64> {
        QNConfig::default().with_tol(1e-10).with_memory(None)
    }

    #[test]
    fn identity_jacobian_converges_in_one_step() {
        let c = [1.5, -2.0, 0.25];
        let res = broyden_solve(|z: &[f64]| sub(z, &c), &[0.0; 3], &cfg()).unwrap();
        assert_eq!(res.z_star, c.to_vec());
        assert_eq!(res.iterations, 1);
        assert!(res.converged);
    }

    #[test]
    fn scalar_linear_two_steps() {
        let res = broyden_solve(|z: &[f64]| vec![2.0 * z[0] - 4.0], &[0.0], &cfg()).unwrap();
        assert_eq!(res.iterations, 2);
        assert_eq!(res.z_star, vec![2.0]);
        assert_eq!(res.inverse_op.apply(&[1.0]).unwrap(), vec![0.5]);
        assert_eq!(res.residual_norms, vec![4.0, 4.0, 0.0]);
    }

    #[test]
    fn two_dimensional_nonlinear_root() {
        let g = |z: &[f64]| vec![z[0] + z[1] * z[1] - 1.0, z[1]];
        let res = broyden_solve(g, &[0.0, 0.5], &cfg()).unwrap();
        assert!(res.converged);
        assert!(res.final_residual() <= 1e-10);
        assert!(relative_error(&res.z_star, &[1.0, 0.0]) < 1e-9);
    }

    #[test]
    fn inverse_secant_after_every_accepted_update() {
        let g = |z: &[f64]| vec![z[0].sin() + 2.0 * z[0] - z[1], z[1].powi(3) + z[1] + 0.5 * z[0] - 1.0];
        let mut checked = 0;
        let mut obs = |ev: &UpdateEvent<'_, f64>| {
            if ev.accepted {
                let hy = ev.operator.apply(ev.image).unwrap();
                assert!(relative_error(&hy, ev.direction) < 1e-10);
                checked += 1;
            }
        };
        let res = broyden_solve_from(g, &[0.3, 0.3], &cfg(), LowRankInverse::identity(2), &mut obs).unwrap();
        assert!(res.converged);
        assert!(checked > 0);
    }

    #[test]
    fn diverging_map_reports_non_finite() {
        let g = |z: &[f64]| vec![z[0].exp().exp().exp()];
        let err = broyden_solve(g, &[5.0], &cfg()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteIterate { .. }));
    }

    #[test]
    fn max_iter_stops_without_convergence() {
        let g = |z: &[f64]| vec![z[0].powi(3) - 2.0];
        let res = broyden_solve(g, &[3.0], &cfg().with_max_iter(2)).unwrap();
        assert_eq!(res.iterations, 2);
        assert_eq!(res.termination, Termination::MaxIter);
        assert!(!res.converged);
    }

    #[test]
    fn merit_search_globalizes() {
        let g = |z: &[f64]| vec![z[0].atan()];
        let plain = broyden_solve(g, &[3.0], &cfg().with_max_iter(50));
        let searched = broyden_solve(g, &[3.0], &cfg().with_line_search(LineSearch::Wolfe)).unwrap();
        assert!(searched.converged);
        assert!(plain.map_or(true, |r| !r.converged || r.z_star[0].abs() < 1e-9));
    }
}
