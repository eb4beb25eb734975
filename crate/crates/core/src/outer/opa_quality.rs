use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{cosine, dense_solve, norm, DenseMatrix};
use crate::problems::{BilevelProblem, Parametrization};
use crate::qn::{lbfgs_opa_solve, QNConfig, WolfeParams};
use crate::Scalar;

/// Largest inner dimension for which the dense inverse oracle is formed.
pub const MAX_DENSE_ORACLE_DIM: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpaDirection {
    /// The random direction the extra updates were made in.
    Prescribed,
    /// `J(z*)(z_N − z_{N−1})`
    Krylov,
    /// A fresh random direction.
    Random,
}

impl OpaDirection {
    pub const ALL: [OpaDirection; 3] = [Self::Prescribed, Self::Krylov, Self::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Prescribed => "prescribed",
            Self::Krylov => "krylov",
            Self::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpaQualityRow {
    pub seed: u64,
    pub direction: OpaDirection,
    /// `cos(a, b)` with `a = J⁻¹v`, `b = H v`.
    pub cosine: f64,
    /// `‖b‖ / ‖a‖`
    pub norm_ratio: f64,
}

/// Delegates to `inner` but reports `∂g/∂θ = p`, so OPA updates follow `p`.
struct Prescribed<'a, T, P: ?Sized> {
    inner: &'a P,
    p: Vec<T>,
}

impl<T: Scalar, P: BilevelProblem<T> + ?Sized> BilevelProblem<T> for Prescribed<'_, T, P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn theta_dim(&self) -> usize {
        1
    }
    fn inner_residual(&self, theta: &[T], z: &[T]) -> Vec<T> {
        self.inner.inner_residual(theta, z)
    }
    fn inner_objective(&self, theta: &[T], z: &[T]) -> Option<T> {
        self.inner.inner_objective(theta, z)
    }
    fn symmetric_inner(&self) -> bool {
        self.inner.symmetric_inner()
    }
    fn inner_jvp(&self, theta: &[T], z: &[T], u: &[T]) -> Vec<T> {
        self.inner.inner_jvp(theta, z, u)
    }
    fn inner_vjp(&self, theta: &[T], z: &[T], v: &[T]) -> Vec<T> {
        self.inner.inner_vjp(theta, z, v)
    }
    fn dg_dtheta(&self, _theta: &[T], _z: &[T], dtheta: &[T]) -> Vec<T> {
        self.p.iter().map(|v| *v * dtheta[0]).collect()
    }
    fn dg_dtheta_adjoint(&self, _theta: &[T], _z: &[T], w: &[T]) -> Vec<T> {
        vec![crate::numkit::dot(w, &self.p)]
    }
    fn outer_loss(&self, z: &[T]) -> T {
        self.inner.outer_loss(z)
    }
    fn outer_grad(&self, z: &[T]) -> Vec<T> {
        self.inner.outer_grad(z)
    }
    fn parametrization(&self) -> Parametrization {
        self.inner.parametrization()
    }
}

fn gaussian_unit<T: Scalar>(dim: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let n = norm(&v);
    v.iter().map(|x| T::lit(x / n)).collect()
}

/// The default solver settings for the study: memory 60, tolerance 1e-6, an extra
/// update every 5 iterations.
pub fn opa_quality_config<T: Scalar>() -> QNConfig<T> {
    QNConfig::default()
        .with_tol(T::lit(1e-6))
        .with_memory(Some(60))
        .with_opa(Some(5))
}

/// One trial: solve with L-BFGS whose extra updates follow a random prescribed
/// direction, then compare `H v` against the dense `J⁻¹ v` for the prescribed,
/// Krylov and a fresh random direction.
pub fn opa_quality_trial<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    theta: &[T],
    seed: u64,
    cfg: &QNConfig<T>,
) -> Result<Vec<OpaQualityRow>> {
    let dim = problem.dim();
    if dim > MAX_DENSE_ORACLE_DIM {
        return Err(Error::InvalidConfig(format!(
            "inner dimension {dim} exceeds the dense oracle limit {MAX_DENSE_ORACLE_DIM}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prescribed = gaussian_unit::<T>(dim, &mut rng);
    let random = gaussian_unit::<T>(dim, &mut rng);
    let wrapped = Prescribed { inner: problem, p: prescribed.clone() };
    let res = lbfgs_opa_solve(&wrapped, theta, &vec![T::zero(); dim], cfg, &WolfeParams::default())?;
    let z = &res.z_star;
    let jac = DenseMatrix::from_columns(dim, dim, |e| problem.inner_jvp(theta, z, e));
    let step = res
        .last_step
        .clone()
        .ok_or_else(|| Error::InvalidConfig("inner solve took no step".into()))?;
    let krylov = jac.matvec(&step);
    let mut rows = Vec::with_capacity(3);
    for (direction, v) in [
        (OpaDirection::Prescribed, prescribed),
        (OpaDirection::Krylov, krylov),
        (OpaDirection::Random, random),
    ] {
        let a = dense_solve(&jac, &v)?;
        let b = res.inverse_op.apply(&v)?;
        rows.push(OpaQualityRow {
            seed,
            direction,
            cosine: cosine(&a, &b).as_f64(),
            norm_ratio: (norm(&b) / norm(&a)).as_f64(),
        });
    }
    Ok(rows)
}

/// Median of the finite values, `NaN` when there are none.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
