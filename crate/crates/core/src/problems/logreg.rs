use super::{sigmoid, softplus, BilevelProblem, LabeledRows, Parametrization};
use crate::dataio::DataSplit;
use crate::error::{Error, Result};
use crate::numkit::{axpy, dot};
use crate::Scalar;

/// ℓ2-regularized logistic regression with the regularization strength as hyperparameter.
///
/// Inner residual `g(z) = ∇ L_train(z) + 2·s(θ)·z` where `L_train` is the mean logistic
/// loss and `s(θ)` the parametrized strength (`e^λ` or `θ`). Outer loss is the mean
/// logistic loss on the validation part.
#[derive(Debug, Clone)]
pub struct LogisticRegression<T> {
    train: LabeledRows<T>,
    validation: LabeledRows<T>,
    test: LabeledRows<T>,
    parametrization: Parametrization,
    dim: usize,
}

pub fn make_l2_logreg<T: Scalar>(split: &DataSplit, parametrization: Parametrization) -> Result<LogisticRegression<T>> {
    if split.train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if split.validation.is_empty() {
        return Err(Error::EmptySplit("validation"));
    }
    let dim = split
        .train
        .n_features()
        .max(split.validation.n_features())
        .max(split.test.n_features());
    Ok(LogisticRegression {
        train: LabeledRows::from_dataset(&split.train, dim),
        validation: LabeledRows::from_dataset(&split.validation, dim),
        test: LabeledRows::from_dataset(&split.test, dim),
        parametrization,
        dim,
    })
}

fn mean_loss<T: Scalar>(rows: &LabeledRows<T>, z: &[T]) -> T {
    if rows.len() == 0 {
        return T::nan();
    }
    let total: T = (0..rows.len())
        .map(|i| softplus(-rows.y[i] * rows.x.row_dot(i, z)))
        .sum();
    total / T::from_usize_lossy(rows.len())
}

fn mean_loss_grad<T: Scalar>(rows: &LabeledRows<T>, z: &[T]) -> Vec<T> {
    let mut g = vec![T::zero(); z.len()];
    let inv_n = T::one() / T::from_usize_lossy(rows.len());
    for i in 0..rows.len() {
        let m = rows.y[i] * rows.x.row_dot(i, z);
        rows.x.row_axpy(i, -rows.y[i] * sigmoid(-m) * inv_n, &mut g);
    }
    g
}

impl<T: Scalar> LogisticRegression<T> {
    fn strength(&self, theta: &[T]) -> T {
        self.parametrization.strength(theta[0])
    }

    /// Fraction of correctly classified rows in the test part.
    pub fn test_accuracy(&self, z: &[T]) -> f64 {
        let rows = &self.test;
        let correct = (0..rows.len())
            .filter(|&i| rows.y[i] * rows.x.row_dot(i, z) > T::zero())
            .count();
        correct as f64 / rows.len().max(1) as f64
    }
}

impl<T: Scalar> BilevelProblem<T> for LogisticRegression<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn theta_dim(&self) -> usize {
        1
    }

    fn inner_residual(&self, theta: &[T], z: &[T]) -> Vec<T> {
        let mut g = mean_loss_grad(&self.train, z);
        axpy(T::lit(2.0) * self.strength(theta), z, &mut g);
        g
    }

    fn inner_objective(&self, theta: &[T], z: &[T]) -> Option<T> {
        Some(mean_loss(&self.train, z) + self.strength(theta) * dot(z, z))
    }

    fn symmetric_inner(&self) -> bool {
        true
    }

    fn inner_jvp(&self, theta: &[T], z: &[T], u: &[T]) -> Vec<T> {
        let rows = &self.train;
        let inv_n = T::one() / T::from_usize_lossy(rows.len());
        let mut out = vec![T::zero(); z.len()];
        for i in 0..rows.len() {
            let p = sigmoid(rows.x.row_dot(i, z));
            let c = p * (T::one() - p) * rows.x.row_dot(i, u) * inv_n;
            rows.x.row_axpy(i, c, &mut out);
        }
        axpy(T::lit(2.0) * self.strength(theta), u, &mut out);
        out
    }

    fn inner_vjp(&self, theta: &[T], z: &[T], v: &[T]) -> Vec<T> {
        self.inner_jvp(theta, z, v)
    }

    fn dg_dtheta(&self, theta: &[T], z: &[T], dtheta: &[T]) -> Vec<T> {
        let c = T::lit(2.0) * self.parametrization.strength_derivative(theta[0]) * dtheta[0];
        z.iter().map(|&zi| c * zi).collect()
    }

    fn dg_dtheta_adjoint(&self, theta: &[T], z: &[T], w: &[T]) -> Vec<T> {
        vec![T::lit(2.0) * self.parametrization.strength_derivative(theta[0]) * dot(z, w)]
    }

    fn outer_loss(&self, z: &[T]) -> T {
        mean_loss(&self.validation, z)
    }

    fn outer_grad(&self, z: &[T]) -> Vec<T> {
        mean_loss_grad(&self.validation, z)
    }

    fn train_loss(&self, z: &[T]) -> Option<T> {
        Some(mean_loss(&self.train, z))
    }

    fn test_loss(&self, z: &[T]) -> Option<T> {
        Some(mean_loss(&self.test, z))
    }

    fn parametrization(&self) -> Parametrization {
        self.parametrization
    }
}
