//! The bi-level problem contract and concrete instances.
//!
//! A problem supplies the inner root equation `g_θ(z) = 0`, its Jacobian actions,
//! the partial derivative `∂g/∂θ` in both directions, and the outer loss `L(z)`.

mod logreg;
mod nls;
mod quadratic;

pub use logreg::{make_l2_logreg, LogisticRegression};
pub use nls::{make_nls, NonlinearLeastSquares};
pub use quadratic::{make_quadratic_oracle, QuadraticOracle};

use serde::{Deserialize, Serialize};

use crate::dataio::{CsrMatrix, Dataset};
use crate::Scalar;

/// How the raw hyperparameter `θ` maps to the regularization strength.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Parametrization {
    /// strength = `e^λ`, with `λ` the optimized variable
    #[default]
    Log,
    /// strength = `θ`
    Linear,
}

impl Parametrization {
    pub fn strength<T: Scalar>(self, theta: T) -> T {
        match self {
            Parametrization::Log => theta.exp(),
            Parametrization::Linear => theta,
        }
    }

    /// d(strength)/dθ
    pub fn strength_derivative<T: Scalar>(self, theta: T) -> T {
        match self {
            Parametrization::Log => theta.exp(),
            Parametrization::Linear => T::one(),
        }
    }

    /// Maps a regularization strength back to the optimized variable.
    pub fn from_strength<T: Scalar>(self, strength: T) -> T {
        match self {
            Parametrization::Log => strength.ln(),
            Parametrization::Linear => strength,
        }
    }
}

pub trait BilevelProblem<T: Scalar>: Sync {
    fn dim(&self) -> usize;

    fn theta_dim(&self) -> usize;

    /// `g_θ(z)`
    fn inner_residual(&self, theta: &[T], z: &[T]) -> Vec<T>;

    /// `r_θ(z)` when `g_θ = ∇_z r_θ`; `None` for general root problems.
    fn inner_objective(&self, _theta: &[T], _z: &[T]) -> Option<T> {
        None
    }

    /// True when `g_θ` is the gradient of a scalar objective, so `J` is symmetric.
    fn symmetric_inner(&self) -> bool {
        false
    }

    /// `J_{g_θ}(z) u`
    fn inner_jvp(&self, theta: &[T], z: &[T], u: &[T]) -> Vec<T>;

    /// `J_{g_θ}(z)ᵀ v`, i.e. the row vector `vᵀ J`.
    fn inner_vjp(&self, theta: &[T], z: &[T], v: &[T]) -> Vec<T>;

    /// Hessian-vector product for gradient-type problems.
    fn inner_hvp(&self, theta: &[T], z: &[T], u: &[T]) -> Vec<T> {
        self.inner_jvp(theta, z, u)
    }

    /// `(∂g/∂θ) δθ`, a vector of length `dim`.
    fn dg_dtheta(&self, theta: &[T], z: &[T], dtheta: &[T]) -> Vec<T>;

    /// `wᵀ (∂g/∂θ)`, a vector of length `theta_dim`.
    fn dg_dtheta_adjoint(&self, theta: &[T], z: &[T], w: &[T]) -> Vec<T>;

    fn outer_loss(&self, z: &[T]) -> T;

    fn outer_grad(&self, z: &[T]) -> Vec<T>;

    /// Training loss without regularization, reported in traces.
    fn train_loss(&self, _z: &[T]) -> Option<T> {
        None
    }

    /// Held-out loss, reported in traces and never optimized.
    fn test_loss(&self, _z: &[T]) -> Option<T> {
        None
    }

    fn parametrization(&self) -> Parametrization {
        Parametrization::Linear
    }
}

/// Rows and `±1` labels of one data part, converted to the working scalar type.
#[derive(Debug, Clone)]
pub(crate) struct LabeledRows<T> {
    pub x: CsrMatrix<T>,
    pub y: Vec<T>,
}

impl<T: Scalar> LabeledRows<T> {
    pub fn from_dataset(ds: &Dataset, n_features: usize) -> Self {
        let mut x = ds.features.cast::<T>();
        x.set_n_cols(n_features);
        Self {
            x,
            y: ds.labels.iter().map(|&l| if l > 0 { T::one() } else { -T::one() }).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }
}

/// `σ(x) = 1 / (1 + e^{−x})`, evaluated without overflow.
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + e^{x})`, evaluated without overflow.
pub fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
