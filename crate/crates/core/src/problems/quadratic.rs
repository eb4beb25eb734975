use super::BilevelProblem;
use crate::numkit::{dot, sub};
use crate::Scalar;

/// Analytic ground-truth problem: `g_θ(z) = (1 + θ) z − a`, `L(z) = ½‖z − b‖²`.
///
/// The root is `z*(θ) = a / (1 + θ)` and the Jacobian `(1 + θ) I`, so every quantity
/// of the hypergradient is available in closed form. Valid for `θ > −1`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticOracle<T> {
    a: Vec<T>,
    target: Vec<T>,
    theta0: T,
}

/// Oracle with outer target `b = 0`; `theta0` is the reference hyperparameter.
pub fn make_quadratic_oracle<T: Scalar>(a: Vec<T>, theta0: T) -> QuadraticOracle<T> {
    let target = vec![T::zero(); a.len()];
    QuadraticOracle { a, target, theta0 }
}

impl<T: Scalar> QuadraticOracle<T> {
    pub fn with_target(mut self, target: Vec<T>) -> Self {
        assert_eq!(target.len(), self.a.len(), "target dimension");
        self.target = target;
        self
    }

    pub fn theta0(&self) -> T {
        self.theta0
    }

    pub fn root(&self, theta: T) -> Vec<T> {
        let c = T::one() / (T::one() + theta);
        self.a.iter().map(|&ai| c * ai).collect()
    }

    /// `dL/dθ = −(z* − b)ᵀ z* / (1 + θ)`.
    pub fn true_hypergradient(&self, theta: T) -> T {
        let z = self.root(theta);
        -dot(&sub(&z, &self.target), &z) / (T::one() + theta)
    }

    /// `L(z*(θ))`.
    pub fn outer_value(&self, theta: T) -> T {
        self.outer_loss(&self.root(theta))
    }
}

impl<T: Scalar> BilevelProblem<T> for QuadraticOracle<T> {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn theta_dim(&self) -> usize {
        1
    }

    fn inner_residual(&self, theta: &[T], z: &[T]) -> Vec<T> {
        let c = T::one() + theta[0];
        z.iter().zip(&self.a).map(|(&zi, &ai)| c * zi - ai).collect()
    }

    fn inner_objective(&self, theta: &[T], z: &[T]) -> Option<T> {
        Some(T::lit(0.5) * (T::one() + theta[0]) * dot(z, z) - dot(&self.a, z))
    }

    fn symmetric_inner(&self) -> bool {
        true
    }

    fn inner_jvp(&self, theta: &[T], _z: &[T], u: &[T]) -> Vec<T> {
        let c = T::one() + theta[0];
        u.iter().map(|&x| c * x).collect()
    }

    fn inner_vjp(&self, theta: &[T], z: &[T], v: &[T]) -> Vec<T> {
        self.inner_jvp(theta, z, v)
    }

    fn dg_dtheta(&self, _theta: &[T], z: &[T], dtheta: &[T]) -> Vec<T> {
        z.iter().map(|&zi| zi * dtheta[0]).collect()
    }

    fn dg_dtheta_adjoint(&self, _theta: &[T], z: &[T], w: &[T]) -> Vec<T> {
        vec![dot(z, w)]
    }

    fn outer_loss(&self, z: &[T]) -> T {
        let r = sub(z, &self.target);
        T::lit(0.5) * dot(&r, &r)
    }

    fn outer_grad(&self, z: &[T]) -> Vec<T> {
        sub(z, &self.target)
    }

    fn test_loss(&self, z: &[T]) -> Option<T> {
        Some(self.outer_loss(z))
    }
}
