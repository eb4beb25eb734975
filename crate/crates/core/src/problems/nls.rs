use super::{sigmoid, BilevelProblem, LabeledRows, Parametrization};
use crate::dataio::DataSplit;
use crate::error::{Error, Result};
use crate::numkit::{axpy, dot};
use crate::Scalar;

/// Regularized nonlinear least squares on sigmoid outputs.
///
/// Inner objective `½ Σ_j (y_j − σ(zᵀx_j))² + (s(θ)/2)‖z‖²` with labels remapped to
/// `{0, 1}`; the outer loss is the same data term on the validation part. The inner
/// problem is nonconvex, so its Hessian may be indefinite away from the solution.
#[derive(Debug, Clone)]
pub struct NonlinearLeastSquares<T> {
    train: LabeledRows<T>,
    validation: LabeledRows<T>,
    test: LabeledRows<T>,
    parametrization: Parametrization,
    dim: usize,
}

fn to_unit_interval<T: Scalar>(mut rows: LabeledRows<T>) -> LabeledRows<T> {
    for y in &mut rows.y {
        *y = if *y > T::zero() { T::one() } else { T::zero() };
    }
    rows
}

pub fn make_nls<T: Scalar>(split: &DataSplit, parametrization: Parametrization) -> Result<NonlinearLeastSquares<T>> {
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
    Ok(NonlinearLeastSquares {
        train: to_unit_interval(LabeledRows::from_dataset(&split.train, dim)),
        validation: to_unit_interval(LabeledRows::from_dataset(&split.validation, dim)),
        test: to_unit_interval(LabeledRows::from_dataset(&split.test, dim)),
        parametrization,
        dim,
    })
}

fn data_term<T: Scalar>(rows: &LabeledRows<T>, z: &[T]) -> T {
    let half = T::lit(0.5);
    (0..rows.len())
        .map(|i| {
            let r = rows.y[i] - sigmoid(rows.x.row_dot(i, z));
            half * r * r
        })
        .sum()
}

fn data_grad<T: Scalar>(rows: &LabeledRows<T>, z: &[T]) -> Vec<T> {
    let mut g = vec![T::zero(); z.len()];
    for i in 0..rows.len() {
        let s = sigmoid(rows.x.row_dot(i, z));
        rows.x.row_axpy(i, (s - rows.y[i]) * s * (T::one() - s), &mut g);
    }
    g
}

impl<T: Scalar> NonlinearLeastSquares<T> {
    fn strength(&self, theta: &[T]) -> T {
        self.parametrization.strength(theta[0])
    }
}

impl<T: Scalar> BilevelProblem<T> for NonlinearLeastSquares<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn theta_dim(&self) -> usize {
        1
    }

    fn inner_residual(&self, theta: &[T], z: &[T]) -> Vec<T> {
        let mut g = data_grad(&self.train, z);
        axpy(self.strength(theta), z, &mut g);
        g
    }

    fn inner_objective(&self, theta: &[T], z: &[T]) -> Option<T> {
        Some(data_term(&self.train, z) + T::lit(0.5) * self.strength(theta) * dot(z, z))
    }

    fn symmetric_inner(&self) -> bool {
        true
    }

    fn inner_jvp(&self, theta: &[T], z: &[T], u: &[T]) -> Vec<T> {
        let rows = &self.train;
        let mut out = vec![T::zero(); z.len()];
        let two = T::lit(2.0);
        for i in 0..rows.len() {
            let s = sigmoid(rows.x.row_dot(i, z));
            let ds = s * (T::one() - s);
            let dds = ds * (T::one() - two * s);
            let c = (ds * ds + (s - rows.y[i]) * dds) * rows.x.row_dot(i, u);
            rows.x.row_axpy(i, c, &mut out);
        }
        axpy(self.strength(theta), u, &mut out);
        out
    }

    fn inner_vjp(&self, theta: &[T], z: &[T], v: &[T]) -> Vec<T> {
        self.inner_jvp(theta, z, v)
    }

    fn dg_dtheta(&self, theta: &[T], z: &[T], dtheta: &[T]) -> Vec<T> {
        let c = self.parametrization.strength_derivative(theta[0]) * dtheta[0];
        z.iter().map(|&zi| c * zi).collect()
    }

    fn dg_dtheta_adjoint(&self, theta: &[T], z: &[T], w: &[T]) -> Vec<T> {
        vec![self.parametrization.strength_derivative(theta[0]) * dot(z, w)]
    }

    fn outer_loss(&self, z: &[T]) -> T {
        data_term(&self.validation, z)
    }

    fn outer_grad(&self, z: &[T]) -> Vec<T> {
        data_grad(&self.validation, z)
    }

    fn train_loss(&self, z: &[T]) -> Option<T> {
        Some(data_term(&self.train, z))
    }

    fn test_loss(&self, z: &[T]) -> Option<T> {
        if self.test.len() == 0 {
            None
        } else {
            Some(data_term(&self.test, z))
        }
    }

    fn parametrization(&self) -> Parametrization {
        self.parametrization
    }
}
