use serde::{Deserialize, Serialize};

use super::ToyDeqModel;
use crate::error::{Error, Result};
use crate::problems::BilevelProblem;
use crate::qn::{adjoint_broyden_solve, broyden_solve, QNConfig, SolveResult};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DeqSolver {
    #[default]
    Broyden,
    AdjointBroyden,
}

/// One sample seen as a bi-level problem: `g(z) = z − tanh(W z + U x + b)`,
/// `L(z) = ½‖R z + c − y‖²`, with θ = `(W, U, b)` flattened.
///
/// The `theta` arguments of the trait are not read: parameters come from `model`.
#[derive(Debug, Clone, Copy)]
pub struct DeqSample<'a, T> {
    pub model: &'a ToyDeqModel<T>,
    pub x: &'a [T],
    pub y: &'a [T],
}

impl<T: Scalar> BilevelProblem<T> for DeqSample<'_, T> {
    fn dim(&self) -> usize {
        self.model.state_dim()
    }

    fn theta_dim(&self) -> usize {
        self.model.core_param_count()
    }

    fn inner_residual(&self, _theta: &[T], z: &[T]) -> Vec<T> {
        self.model.residual(z, self.x)
    }

    fn inner_jvp(&self, _theta: &[T], z: &[T], u: &[T]) -> Vec<T> {
        self.model.jvp(z, self.x, u)
    }

    fn inner_vjp(&self, _theta: &[T], z: &[T], v: &[T]) -> Vec<T> {
        self.model.vjp(z, self.x, v)
    }

    /// `−D (δW z + δU x + δb)`
    fn dg_dtheta(&self, _theta: &[T], z: &[T], dtheta: &[T]) -> Vec<T> {
        let m = self.model;
        let (d, k) = (m.state_dim(), m.input_dim());
        let slope = m.activation_slope(z, self.x);
        (0..d)
            .map(|i| {
                let dw = &dtheta[i * d..(i + 1) * d];
                let du = &dtheta[d * d + i * k..d * d + (i + 1) * k];
                let db = dtheta[d * d + d * k + i];
                let v = crate::numkit::dot(dw, z) + crate::numkit::dot(du, self.x) + db;
                -slope[i] * v
            })
            .collect()
    }

    /// `−[(D w) zᵀ, (D w) xᵀ, D w]`
    fn dg_dtheta_adjoint(&self, _theta: &[T], z: &[T], w: &[T]) -> Vec<T> {
        let m = self.model;
        let slope = m.activation_slope(z, self.x);
        let dw: Vec<T> = w.iter().zip(&slope).map(|(a, s)| -*a * *s).collect();
        let mut out = Vec::with_capacity(m.core_param_count());
        for &r in &dw {
            out.extend(z.iter().map(|&zj| r * zj));
        }
        for &r in &dw {
            out.extend(self.x.iter().map(|&xj| r * xj));
        }
        out.extend_from_slice(&dw);
        out
    }

    fn outer_loss(&self, z: &[T]) -> T {
        self.model.sample_loss(z, self.y)
    }

    fn outer_grad(&self, z: &[T]) -> Vec<T> {
        self.model.loss_grad_z(z, self.y)
    }
}

fn check_input<T: Scalar>(model: &ToyDeqModel<T>, x: &[T]) -> Result<()> {
    if x.len() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Equilibrium `z*` for input `x`, from `z = 0`. Non-convergence is reported through
/// `SolveResult::converged`.
pub fn deq_forward<T: Scalar>(
    model: &ToyDeqModel<T>,
    x: &[T],
    solver: DeqSolver,
    cfg: &QNConfig<T>,
) -> Result<SolveResult<T>> {
    check_input(model, x)?;
    let z0 = vec![T::zero(); model.state_dim()];
    let g = |z: &[T]| model.residual(z, x);
    match solver {
        DeqSolver::Broyden => broyden_solve(g, &z0, cfg),
        DeqSolver::AdjointBroyden => adjoint_broyden_solve(g, |v, z| model.vjp(z, x, v), None, &z0, cfg),
    }
}

/// As [`deq_forward`], with the target available so Adjoint Broyden can make
/// outer-problem-aware updates when `cfg.opa_frequency` is set.
pub fn deq_forward_with_target<T: Scalar>(
    model: &ToyDeqModel<T>,
    x: &[T],
    y: &[T],
    solver: DeqSolver,
    cfg: &QNConfig<T>,
) -> Result<SolveResult<T>> {
    check_input(model, x)?;
    if y.len() != model.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.output_dim(),
            got: y.len(),
        });
    }
    if solver == DeqSolver::Broyden {
        return deq_forward(model, x, solver, cfg);
    }
    let z0 = vec![T::zero(); model.state_dim()];
    let lg = |z: &[T]| model.loss_grad_z(z, y);
    adjoint_broyden_solve(
        |z| model.residual(z, x),
        |v, z| model.vjp(z, x, v),
        Some(&lg),
        &z0,
        cfg,
    )
}
