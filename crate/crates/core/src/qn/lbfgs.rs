use std::collections::VecDeque;

use super::broyden::non_finite;
use super::{
    wolfe_line_search, OpaEvent, QNConfig, SolveResult, SolverKind, Termination, UpdateEvent, UpdateKind, WolfeParams,
};
use crate::error::{Error, Result};
use crate::numkit::{add, dot, is_finite, neg, norm, scale, sub, LowRankInverse};
use crate::problems::BilevelProblem;
use crate::Scalar;

/// Limited-memory inverse BFGS estimate backed by its secant pairs.
///
/// Regular and OPA pairs share one memory. When full, the oldest pair is dropped
/// and the operator is rebuilt from `H_0 = I` over the remaining pairs, which keeps
/// it symmetric positive definite and the newest secant condition exact.
struct PairMemory<T> {
    pairs: VecDeque<(Vec<T>, Vec<T>)>,
    limit: Option<usize>,
    op: LowRankInverse<T>,
}

impl<T: Scalar> PairMemory<T> {
    fn new(dim: usize, limit: Option<usize>) -> Self {
        Self {
            pairs: VecDeque::new(),
            limit,
            op: LowRankInverse::identity(dim),
        }
    }

    /// Accepts `(s, y)` when `sᵀy` is safely positive; otherwise leaves everything untouched.
    fn push(&mut self, s: Vec<T>, y: Vec<T>) -> Result<bool> {
        let full = matches!(self.limit, Some(l) if self.pairs.len() >= l);
        if !full {
            return match self.op.push_bfgs(&s, &y) {
                Ok(()) => {
                    self.pairs.push_back((s, y));
                    Ok(true)
                }
                Err(Error::NearSingularUpdate { .. }) => Ok(false),
                Err(e) => Err(e),
            };
        }
        // curvature test does not depend on the operator
        let mut probe = LowRankInverse::identity(self.op.dim());
        if probe.push_bfgs(&s, &y).is_err() {
            return Ok(false);
        }
        self.pairs.pop_front();
        self.pairs.push_back((s, y));
        self.op.clear();
        for (s, y) in &self.pairs {
            self.op.push_bfgs(s, y)?;
        }
        Ok(true)
    }

    fn reset(&mut self) {
        self.pairs.clear();
        self.op.clear();
    }
}

/// Limited-memory BFGS on `r_θ` (with `g_θ = ∇r_θ`) plus outer-problem-aware extra updates.
///
/// Every `M`-th iteration, before the regular step, the pair
/// `e_n = t_n H_n ∂g/∂θ|_{z_n}`, `ŷ_n = g(z_n + e_n) − g(z_n)` is added when `e_nᵀŷ_n > 0`.
/// `t_0 = cfg.opa_t0` and `t_n = ‖s_{n−1}‖` afterwards. Regular steps use a strong Wolfe
/// line search and skip pairs with non-positive curvature.
pub fn lbfgs_opa_solve<T, P>(
    problem: &P,
    theta: &[T],
    z0: &[T],
    cfg: &QNConfig<T>,
    wolfe: &WolfeParams<T>,
) -> Result<SolveResult<T>>
where
    T: Scalar,
    P: BilevelProblem<T> + ?Sized,
{
    lbfgs_opa_solve_observed(problem, theta, z0, cfg, wolfe, &mut |_| {})
}

pub fn lbfgs_opa_solve_observed<T, P>(
    problem: &P,
    theta: &[T],
    z0: &[T],
    cfg: &QNConfig<T>,
    wolfe: &WolfeParams<T>,
    observer: &mut dyn FnMut(&UpdateEvent<'_, T>),
) -> Result<SolveResult<T>>
where
    T: Scalar,
    P: BilevelProblem<T> + ?Sized,
{
    cfg.validate()?;
    wolfe.validate()?;
    let dim = problem.dim();
    if z0.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: z0.len() });
    }
    if theta.len() != problem.theta_dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.theta_dim(),
            got: theta.len(),
        });
    }
    if cfg.opa_frequency.is_some() && problem.theta_dim() != 1 {
        return Err(Error::InvalidConfig("OPA needs a single hyperparameter".into()));
    }
    let objective = |z: &[T]| {
        problem
            .inner_objective(theta, z)
            .ok_or_else(|| Error::InvalidConfig("BFGS needs a scalar inner objective".into()))
    };

    let mut mem = PairMemory::new(dim, cfg.memory);
    let mut z = z0.to_vec();
    let mut f = objective(&z)?;
    let mut gz = problem.inner_residual(theta, &z);
    let mut evals = 1;
    let mut residual_norms = vec![norm(&gz)];
    if !is_finite(&gz) || !f.is_finite() {
        return Err(non_finite(0, &residual_norms));
    }
    let mut step_history = Vec::new();
    let mut opa_events = Vec::new();
    let mut skipped = 0;
    let mut last_step: Option<Vec<T>> = None;
    let mut iterations = 0;

    let termination = loop {
        if *residual_norms.last().unwrap() <= cfg.tol {
            break Termination::Converged;
        }
        if iterations == cfg.max_iter {
            break Termination::MaxIter;
        }
        let n = iterations;

        if let Some(m) = cfg.opa_frequency {
            if n % m == 0 {
                let t = match &last_step {
                    Some(s) if n > 0 => norm(s),
                    _ => cfg.opa_t0,
                };
                let direction = problem.dg_dtheta(theta, &z, &[T::one()]);
                let e = scale(t, &mem.op.apply(&direction)?);
                let y_hat = sub(&problem.inner_residual(theta, &add(&z, &e)), &gz);
                evals += 1;
                let accepted = is_finite(&y_hat) && dot(&e, &y_hat) > T::zero() && mem.push(e.clone(), y_hat.clone())?;
                if !accepted {
                    skipped += 1;
                }
                opa_events.push(OpaEvent { iteration: n, accepted });
                observer(&UpdateEvent {
                    iteration: n,
                    kind: UpdateKind::Opa,
                    accepted,
                    direction: &e,
                    image: &y_hat,
                    operator: &mem.op,
                });
            }
        }

        let mut p = neg(&mem.op.apply(&gz)?);
        let mut slope = dot(&gz, &p);
        if !(slope < T::zero()) {
            // rounding broke positive definiteness; restart from steepest descent
            mem.reset();
            p = neg(&gz);
            slope = dot(&gz, &p);
        }

        let mut cache: Option<(T, T, Vec<T>, Vec<T>)> = None;
        let search = wolfe_line_search(
            |alpha| {
                let zt = add(&z, &scale(alpha, &p));
                let ft = problem.inner_objective(theta, &zt).unwrap_or_else(T::nan);
                let gt = problem.inner_residual(theta, &zt);
                let dt = dot(&gt, &p);
                cache = Some((alpha, ft, zt, gt));
                (ft, dt)
            },
            f,
            slope,
            wolfe,
        );
        let alpha = match search {
            Ok((alpha, used)) => {
                evals += used;
                alpha
            }
            Err(Error::LineSearchFailed { evals: used }) => {
                evals += used;
                break Termination::LineSearchFailed;
            }
            Err(e) => return Err(e),
        };
        let (ca, f_new, z_new, g_new) = cache.take().expect("line search evaluated at least once");
        debug_assert!(ca == alpha);
        iterations += 1;
        let r = norm(&g_new);
        residual_norms.push(r);
        if !is_finite(&z_new) || !r.is_finite() || !f_new.is_finite() {
            return Err(non_finite(iterations, &residual_norms));
        }
        let s = sub(&z_new, &z);
        let y = sub(&g_new, &gz);
        step_history.push((norm(&s), norm(&y)));
        let accepted = mem.push(s.clone(), y.clone())?;
        if !accepted {
            skipped += 1;
        }
        observer(&UpdateEvent {
            iteration: n,
            kind: UpdateKind::Regular,
            accepted,
            direction: &s,
            image: &y,
            operator: &mem.op,
        });
        last_step = Some(s);
        z = z_new;
        gz = g_new;
        f = f_new;
    };

    Ok(SolveResult {
        z_star: z,
        inverse_op: mem.op,
        iterations,
        converged: termination == Termination::Converged,
        residual_norms,
        step_history,
        opa_events,
        termination,
        skipped_updates: skipped,
        solver: SolverKind::Lbfgs,
        last_step,
        function_evals: evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::relative_error;
    use crate::problems::make_quadratic_oracle;

    struct Diag2;

    impl BilevelProblem<f64> for Diag2 {
        fn dim(&self) -> usize {
            2
        }
        fn theta_dim(&self) -> usize {
            1
        }
        fn inner_residual(&self, _: &[f64], z: &[f64]) -> Vec<f64> {
            vec![z[0], 2.0 * z[1]]
        }
        fn inner_objective(&self, _: &[f64], z: &[f64]) -> Option<f64> {
            Some(0.5 * (z[0] * z[0] + 2.0 * z[1] * z[1]))
        }
        fn symmetric_inner(&self) -> bool {
            true
        }
        fn inner_jvp(&self, _: &[f64], _: &[f64], u: &[f64]) -> Vec<f64> {
            vec![u[0], 2.0 * u[1]]
        }
        fn inner_vjp(&self, t: &[f64], z: &[f64], v: &[f64]) -> Vec<f64> {
            self.inner_jvp(t, z, v)
        }
        fn dg_dtheta(&self, _: &[f64], z: &[f64], d: &[f64]) -> Vec<f64> {
            scale(d[0], z)
        }
        fn dg_dtheta_adjoint(&self, _: &[f64], z: &[f64], w: &[f64]) -> Vec<f64> {
            vec![dot(z, w)]
        }
        fn outer_loss(&self, z: &[f64]) -> f64 {
            0.5 * dot(z, z)
        }
        fn outer_grad(&self, z: &[f64]) -> Vec<f64> {
            z.to_vec()
        }
    }

    fn cfg() -> QNConfig<f64> {
        QNConfig::default().with_tol(1e-10).with_memory(Some(10))
    }

    #[test]
    fn diagonal_quadratic_converges_quickly() {
        let res = lbfgs_opa_solve(&Diag2, &[0.0], &[1.0, 1.0], &cfg(), &WolfeParams::default()).unwrap();
        assert!(res.converged);
        assert!(res.final_residual() <= 1e-10);
        assert!(res.iterations <= 20);
        assert!(norm(&res.z_star) < 1e-10);
    }

    #[test]
    fn secant_pairs_hold_and_opa_keeps_iterates() {
        let mut z_seen = Vec::new();
        let mut obs = |ev: &UpdateEvent<'_, f64>| {
            if ev.accepted {
                let hy = ev.operator.apply(ev.image).unwrap();
                assert!(relative_error(&hy, ev.direction) < 1e-10);
            }
            z_seen.push(ev.kind);
        };
        let res = lbfgs_opa_solve_observed(
            &Diag2,
            &[0.0],
            &[1.0, -3.0],
            &cfg().with_opa(Some(1)),
            &WolfeParams::default(),
            &mut obs,
        )
        .unwrap();
        assert!(res.converged);
        assert!(z_seen.contains(&UpdateKind::Opa));
        assert_eq!(res.opa_events.len(), res.iterations);
        // OPA does not move z: the trace has exactly one residual per regular step
        assert_eq!(res.residual_norms.len(), res.iterations + 1);
    }

    #[test]
    fn opa_requires_single_hyperparameter_and_objective() {
        struct NoObjective;
        impl BilevelProblem<f64> for NoObjective {
            fn dim(&self) -> usize {
                1
            }
            fn theta_dim(&self) -> usize {
                1
            }
            fn inner_residual(&self, _: &[f64], z: &[f64]) -> Vec<f64> {
                z.to_vec()
            }
            fn inner_jvp(&self, _: &[f64], _: &[f64], u: &[f64]) -> Vec<f64> {
                u.to_vec()
            }
            fn inner_vjp(&self, _: &[f64], _: &[f64], v: &[f64]) -> Vec<f64> {
                v.to_vec()
            }
            fn dg_dtheta(&self, _: &[f64], z: &[f64], _: &[f64]) -> Vec<f64> {
                z.to_vec()
            }
            fn dg_dtheta_adjoint(&self, _: &[f64], _: &[f64], _: &[f64]) -> Vec<f64> {
                vec![0.0]
            }
            fn outer_loss(&self, _: &[f64]) -> f64 {
                0.0
            }
            fn outer_grad(&self, z: &[f64]) -> Vec<f64> {
                vec![0.0; z.len()]
            }
        }
        let err = lbfgs_opa_solve(&NoObjective, &[0.0], &[1.0], &cfg(), &WolfeParams::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn memory_limit_is_respected() {
        let q = make_quadratic_oracle(vec![1.0, -2.0, 3.0, 0.5], 0.0);
        let mut max_len = 0;
        let mut obs = |ev: &UpdateEvent<'_, f64>| max_len = max_len.max(ev.operator.len());
        let c = cfg().with_memory(Some(2)).with_opa(Some(1));
        lbfgs_opa_solve_observed(&q, &[0.5], &[0.0; 4], &c, &WolfeParams::default(), &mut obs).unwrap();
        assert!(max_len <= 2);
    }
}
