use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{axpy, norm, DenseMatrix};
use crate::Scalar;

use super::nonlinear_power_method;

/// Spectral norm given to `W` by [`ToyDeqModel::random`].
pub const INIT_SPECTRAL_NORM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ReadoutLoss {
    /// `½‖R z + c − y‖²` per sample
    #[default]
    Mse,
}

/// Equilibrium layer `z* = tanh(W z* + U x + b)` followed by a linear readout `R z* + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDeqModel<T> {
    pub w: DenseMatrix<T>,
    pub u: DenseMatrix<T>,
    pub b: Vec<T>,
    pub readout: DenseMatrix<T>,
    pub readout_bias: Vec<T>,
    pub loss: ReadoutLoss,
}

/// Gradients with the same block layout as [`ToyDeqModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct DeqGrads<T> {
    pub w: DenseMatrix<T>,
    pub u: DenseMatrix<T>,
    pub b: Vec<T>,
    pub readout: DenseMatrix<T>,
    pub readout_bias: Vec<T>,
}

impl<T: Scalar> DeqGrads<T> {
    pub fn zeros_like(model: &ToyDeqModel<T>) -> Self {
        let (d, m, k) = (model.state_dim(), model.input_dim(), model.output_dim());
        Self {
            w: DenseMatrix::zeros(d, d),
            u: DenseMatrix::zeros(d, m),
            b: vec![T::zero(); d],
            readout: DenseMatrix::zeros(k, d),
            readout_bias: vec![T::zero(); k],
        }
    }

    /// Blocks concatenated as `[W, U, b, R, c]`, matrices row-major.
    pub fn flatten(&self) -> Vec<T> {
        let mut v = Vec::new();
        v.extend_from_slice(self.w.as_slice());
        v.extend_from_slice(self.u.as_slice());
        v.extend_from_slice(&self.b);
        v.extend_from_slice(self.readout.as_slice());
        v.extend_from_slice(&self.readout_bias);
        v
    }

    /// `(name, values)` for each parameter block.
    pub fn blocks(&self) -> [(&'static str, &[T]); 5] {
        [
            ("W", self.w.as_slice()),
            ("U", self.u.as_slice()),
            ("b", &self.b),
            ("readout", self.readout.as_slice()),
            ("readout_bias", &self.readout_bias),
        ]
    }

    /// `self += alpha · other`
    pub fn add_scaled(&mut self, alpha: T, other: &Self) {
        axpy(alpha, other.w.as_slice(), self.w.as_mut_slice());
        axpy(alpha, other.u.as_slice(), self.u.as_mut_slice());
        axpy(alpha, &other.b, &mut self.b);
        axpy(alpha, other.readout.as_slice(), self.readout.as_mut_slice());
        axpy(alpha, &other.readout_bias, &mut self.readout_bias);
    }
}

fn gaussian_matrix<T: Scalar>(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> DenseMatrix<T> {
    let normal = Normal::new(0.0, std).expect("finite std");
    let data = (0..rows * cols).map(|_| T::lit(normal.sample(rng))).collect();
    DenseMatrix::from_row_major(rows, cols, data).expect("sized buffer")
}

/// Largest singular value, by power iteration on `MᵀM`.
pub fn spectral_norm<T: Scalar>(m: &DenseMatrix<T>) -> T {
    let start = vec![T::one(); m.cols()];
    match nonlinear_power_method(|v: &[T]| m.vecmat(&m.matvec(v)), &start, 500) {
        Ok(r) => r.sqrt(),
        Err(_) => T::zero(),
    }
}

impl<T: Scalar> ToyDeqModel<T> {
    pub fn new(
        w: DenseMatrix<T>,
        u: DenseMatrix<T>,
        b: Vec<T>,
        readout: DenseMatrix<T>,
        readout_bias: Vec<T>,
    ) -> Result<Self> {
        let d = w.rows();
        let ok = d >= 1
            && w.cols() == d
            && u.rows() == d
            && u.cols() >= 1
            && b.len() == d
            && readout.cols() == d
            && readout.rows() >= 1
            && readout_bias.len() == readout.rows();
        if !ok {
            return Err(Error::InvalidConfig("inconsistent DEQ parameter shapes".into()));
        }
        let model = Self { w, u, b, readout, readout_bias, loss: ReadoutLoss::Mse };
        if !crate::numkit::is_finite(&model.flatten()) {
            return Err(Error::InvalidConfig("DEQ parameters must be finite".into()));
        }
        Ok(model)
    }

    /// Gaussian initialization with `‖W‖₂ = 0.9`, `U ~ N(0, 1/m)`, `b ~ N(0, 0.01)`,
    /// `R ~ N(0, 1/d)` and a zero readout bias.
    pub fn random(d: usize, m: usize, k: usize, seed: u64) -> Self {
        assert!(d >= 1 && m >= 1 && k >= 1, "DEQ dimensions must be at least 1");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = gaussian_matrix::<T>(d, d, 1.0, &mut rng);
        let s = spectral_norm(&w);
        if s > T::zero() {
            let f = T::lit(INIT_SPECTRAL_NORM) / s;
            w.as_mut_slice().iter_mut().for_each(|v| *v = *v * f);
        }
        let u = gaussian_matrix(d, m, 1.0 / (m as f64).sqrt(), &mut rng);
        let b = gaussian_matrix::<T>(1, d, 0.1, &mut rng).as_slice().to_vec();
        let readout = gaussian_matrix(k, d, 1.0 / (d as f64).sqrt(), &mut rng);
        Self {
            w,
            u,
            b,
            readout,
            readout_bias: vec![T::zero(); k],
            loss: ReadoutLoss::Mse,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.u.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.readout.rows()
    }

    /// Number of parameters in `(W, U, b)`, the ones the equilibrium depends on.
    pub fn core_param_count(&self) -> usize {
        let (d, m) = (self.state_dim(), self.input_dim());
        d * d + d * m + d
    }

    pub fn param_count(&self) -> usize {
        self.core_param_count() + self.output_dim() * (self.state_dim() + 1)
    }

    /// `(W, U, b)` concatenated, matrices row-major.
    pub fn flatten_core(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.core_param_count());
        v.extend_from_slice(self.w.as_slice());
        v.extend_from_slice(self.u.as_slice());
        v.extend_from_slice(&self.b);
        v
    }

    /// All parameters in the layout of [`DeqGrads::flatten`].
    pub fn flatten(&self) -> Vec<T> {
        let mut v = self.flatten_core();
        v.extend_from_slice(self.readout.as_slice());
        v.extend_from_slice(&self.readout_bias);
        v
    }

    /// Mutable access to parameter `idx` in the [`flatten`](Self::flatten) layout.
    pub fn param_mut(&mut self, idx: usize) -> &mut T {
        let (d, m, k) = (self.state_dim(), self.input_dim(), self.output_dim());
        let sizes = [d * d, d * m, d, k * d, k];
        let mut i = idx;
        for (block, &n) in sizes.iter().enumerate() {
            if i < n {
                return match block {
                    0 => &mut self.w.as_mut_slice()[i],
                    1 => &mut self.u.as_mut_slice()[i],
                    2 => &mut self.b[i],
                    3 => &mut self.readout.as_mut_slice()[i],
                    _ => &mut self.readout_bias[i],
                };
            }
            i -= n;
        }
        panic!("parameter index {idx} out of range");
    }

    /// `θ ← θ − lr·grad`
    pub fn apply_step(&mut self, grads: &DeqGrads<T>, lr: T) {
        axpy(-lr, grads.w.as_slice(), self.w.as_mut_slice());
        axpy(-lr, grads.u.as_slice(), self.u.as_mut_slice());
        axpy(-lr, &grads.b, &mut self.b);
        axpy(-lr, grads.readout.as_slice(), self.readout.as_mut_slice());
        axpy(-lr, &grads.readout_bias, &mut self.readout_bias);
    }

    /// `W z + U x + b`
    pub fn pre_activation(&self, z: &[T], x: &[T]) -> Vec<T> {
        let wz = self.w.matvec(z);
        let ux = self.u.matvec(x);
        wz.iter().zip(&ux).zip(&self.b).map(|((a, c), e)| *a + *c + *e).collect()
    }

    /// `f(z) = tanh(W z + U x + b)`
    pub fn map(&self, z: &[T], x: &[T]) -> Vec<T> {
        self.pre_activation(z, x).into_iter().map(|v| v.tanh()).collect()
    }

    /// `g(z) = z − f(z)`
    pub fn residual(&self, z: &[T], x: &[T]) -> Vec<T> {
        self.map(z, x).iter().zip(z).map(|(f, zi)| *zi - *f).collect()
    }

    /// Diagonal of `D = diag(1 − tanh²(W z + U x + b))`.
    pub fn activation_slope(&self, z: &[T], x: &[T]) -> Vec<T> {
        self.map(z, x).into_iter().map(|t| T::one() - t * t).collect()
    }

    /// `J u = u − D W u`
    pub fn jvp(&self, z: &[T], x: &[T], u: &[T]) -> Vec<T> {
        let dw = self.w.matvec(u);
        let slope = self.activation_slope(z, x);
        u.iter().zip(&dw).zip(&slope).map(|((ui, wi), si)| *ui - *si * *wi).collect()
    }

    /// `Jᵀ v = v − Wᵀ D v`
    pub fn vjp(&self, z: &[T], x: &[T], v: &[T]) -> Vec<T> {
        let slope = self.activation_slope(z, x);
        let dv: Vec<T> = v.iter().zip(&slope).map(|(a, s)| *a * *s).collect();
        let wt = self.w.vecmat(&dv);
        v.iter().zip(&wt).map(|(a, c)| *a - *c).collect()
    }

    /// Dense `J = I − D W`, for oracles.
    pub fn jacobian(&self, z: &[T], x: &[T]) -> DenseMatrix<T> {
        DenseMatrix::from_columns(self.state_dim(), self.state_dim(), |e| self.jvp(z, x, e))
    }

    pub fn predict(&self, z: &[T]) -> Vec<T> {
        let rz = self.readout.matvec(z);
        rz.iter().zip(&self.readout_bias).map(|(a, c)| *a + *c).collect()
    }

    pub fn prediction_error(&self, z: &[T], y: &[T]) -> Vec<T> {
        self.predict(z).iter().zip(y).map(|(p, t)| *p - *t).collect()
    }

    pub fn sample_loss(&self, z: &[T], y: &[T]) -> T {
        let r = norm(&self.prediction_error(z, y));
        T::lit(0.5) * r * r
    }

    /// `∇_z ½‖R z + c − y‖² = Rᵀ (R z + c − y)`
    pub fn loss_grad_z(&self, z: &[T], y: &[T]) -> Vec<T> {
        self.readout.vecmat(&self.prediction_error(z, y))
    }
}

/// Inputs and targets, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DeqBatch<T> {
    pub inputs: Vec<Vec<T>>,
    pub targets: Vec<Vec<T>>,
}

impl<T: Scalar> DeqBatch<T> {
    pub fn new(inputs: Vec<Vec<T>>, targets: Vec<Vec<T>>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        if inputs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Standard normal inputs of dimension `m`, labelled by a teacher model's equilibrium output.
    pub fn from_teacher(teacher: &ToyDeqModel<T>, n: usize, seed: u64, tol: T) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let m = teacher.input_dim();
        let cfg = crate::qn::QNConfig::default().with_tol(tol).with_memory(None);
        let mut inputs = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<T> = (0..m).map(|_| T::lit(normal.sample(&mut rng))).collect();
            let fwd = super::deq_forward(teacher, &x, super::DeqSolver::Broyden, &cfg)?;
            targets.push(teacher.predict(&fwd.z_star));
            inputs.push(x);
        }
        Self::new(inputs, targets)
    }
}
