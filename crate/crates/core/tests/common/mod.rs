#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shine_core::numkit::{dot, sub, DenseMatrix};
use shine_core::problems::BilevelProblem;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// `scale·I + noise·G/√n` with uniform entries in `G`; nonsymmetric.
pub fn perturbed_identity(rng: &mut ChaCha8Rng, n: usize, scale: f64, noise: f64) -> DenseMatrix<f64> {
    let s = noise / (n as f64).sqrt();
    let data = (0..n * n)
        .map(|k| {
            let diag = if k / n == k % n { scale } else { 0.0 };
            diag + s * rng.random_range(-1.0..1.0)
        })
        .collect();
    DenseMatrix::from_row_major(n, n, data).unwrap()
}

/// `MᵀM + shift·I`
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> DenseMatrix<f64> {
    let m = perturbed_identity(rng, n, 0.0, 1.0);
    let mut a = m.transpose().matmul(&m);
    for i in 0..n {
        a[(i, i)] += shift;
    }
    a
}

/// `g(z) = A z − θ c`, `L(z) = ½‖z − b‖²`. Symmetric when `A` is.
pub struct LinearProblem {
    pub a: DenseMatrix<f64>,
    pub c: Vec<f64>,
    pub b: Vec<f64>,
    pub symmetric: bool,
}

impl LinearProblem {
    pub fn nonsymmetric(seed: u64, n: usize) -> Self {
        let mut r = rng(seed);
        let a = perturbed_identity(&mut r, n, 2.0, 1.0);
        Self {
            c: random_vec(&mut r, n),
            b: random_vec(&mut r, n),
            a,
            symmetric: false,
        }
    }

    pub fn spd(seed: u64, n: usize) -> Self {
        let mut r = rng(seed);
        let a = random_spd(&mut r, n, 0.5);
        Self {
            c: random_vec(&mut r, n),
            b: random_vec(&mut r, n),
            a,
            symmetric: true,
        }
    }

    pub fn root(&self, theta: f64) -> Vec<f64> {
        let rhs: Vec<f64> = self.c.iter().map(|c| theta * c).collect();
        shine_core::numkit::dense_solve(&self.a, &rhs).unwrap()
    }

    /// Dense-solve left vector `A⁻ᵀ ∇L(z)`.
    pub fn dense_left(&self, z: &[f64]) -> Vec<f64> {
        shine_core::numkit::dense_solve(&self.a.transpose(), &self.outer_grad(z)).unwrap()
    }

    /// Hypergradient at `θ` via dense solves: `dL/dθ = wᵀ c`.
    pub fn dense_hypergradient(&self, theta: f64) -> f64 {
        dot(&self.dense_left(&self.root(theta)), &self.c)
    }
}

impl BilevelProblem<f64> for LinearProblem {
    fn dim(&self) -> usize {
        self.c.len()
    }
    fn theta_dim(&self) -> usize {
        1
    }
    fn inner_residual(&self, theta: &[f64], z: &[f64]) -> Vec<f64> {
        let az = self.a.matvec(z);
        az.iter().zip(&self.c).map(|(v, c)| v - theta[0] * c).collect()
    }
    fn inner_objective(&self, theta: &[f64], z: &[f64]) -> Option<f64> {
        self.symmetric
            .then(|| 0.5 * dot(z, &self.a.matvec(z)) - theta[0] * dot(&self.c, z))
    }
    fn symmetric_inner(&self) -> bool {
        self.symmetric
    }
    fn inner_jvp(&self, _: &[f64], _: &[f64], u: &[f64]) -> Vec<f64> {
        self.a.matvec(u)
    }
    fn inner_vjp(&self, _: &[f64], _: &[f64], v: &[f64]) -> Vec<f64> {
        self.a.vecmat(v)
    }
    fn dg_dtheta(&self, _: &[f64], _: &[f64], d: &[f64]) -> Vec<f64> {
        self.c.iter().map(|c| -c * d[0]).collect()
    }
    fn dg_dtheta_adjoint(&self, _: &[f64], _: &[f64], w: &[f64]) -> Vec<f64> {
        vec![-dot(w, &self.c)]
    }
    fn outer_loss(&self, z: &[f64]) -> f64 {
        let d = sub(z, &self.b);
        0.5 * dot(&d, &d)
    }
    fn outer_grad(&self, z: &[f64]) -> Vec<f64> {
        sub(z, &self.b)
    }
}

/// Strictly convex `r(z) = ½zᵀAz − cᵀz + θ Σ log cosh z_i` with `g = ∇r`.
pub struct ConvexProblem {
    pub a: DenseMatrix<f64>,
    pub c: Vec<f64>,
}

impl ConvexProblem {
    pub fn new(seed: u64, n: usize) -> Self {
        let mut r = rng(seed);
        let a = random_spd(&mut r, n, 0.2);
        let c: Vec<f64> = random_vec(&mut r, n).iter().map(|v| 3.0 * v).collect();
        Self { a, c }
    }
}

impl BilevelProblem<f64> for ConvexProblem {
    fn dim(&self) -> usize {
        self.c.len()
    }
    fn theta_dim(&self) -> usize {
        1
    }
    fn inner_residual(&self, theta: &[f64], z: &[f64]) -> Vec<f64> {
        let az = self.a.matvec(z);
        (0..z.len()).map(|i| az[i] - self.c[i] + theta[0] * z[i].tanh()).collect()
    }
    fn inner_objective(&self, theta: &[f64], z: &[f64]) -> Option<f64> {
        let lc: f64 = z.iter().map(|v| v.cosh().ln()).sum();
        Some(0.5 * dot(z, &self.a.matvec(z)) - dot(&self.c, z) + theta[0] * lc)
    }
    fn symmetric_inner(&self) -> bool {
        true
    }
    fn inner_jvp(&self, theta: &[f64], z: &[f64], u: &[f64]) -> Vec<f64> {
        let au = self.a.matvec(u);
        (0..z.len())
            .map(|i| au[i] + theta[0] * (1.0 - z[i].tanh().powi(2)) * u[i])
            .collect()
    }
    fn inner_vjp(&self, theta: &[f64], z: &[f64], v: &[f64]) -> Vec<f64> {
        self.inner_jvp(theta, z, v)
    }
    fn dg_dtheta(&self, _: &[f64], z: &[f64], d: &[f64]) -> Vec<f64> {
        z.iter().map(|v| v.tanh() * d[0]).collect()
    }
    fn dg_dtheta_adjoint(&self, _: &[f64], z: &[f64], w: &[f64]) -> Vec<f64> {
        vec![z.iter().zip(w).map(|(v, wi)| v.tanh() * wi).sum()]
    }
    fn outer_loss(&self, z: &[f64]) -> f64 {
        0.5 * dot(z, z)
    }
    fn outer_grad(&self, z: &[f64]) -> Vec<f64> {
        z.to_vec()
    }
}

/// Nonsymmetric smooth system `g(z) = A z + ε sin(z) − c`.
pub struct NonlinearSystem {
    pub a: DenseMatrix<f64>,
    pub c: Vec<f64>,
    pub eps: f64,
}

impl NonlinearSystem {
    pub fn new(seed: u64, n: usize) -> Self {
        let mut r = rng(seed);
        let a = perturbed_identity(&mut r, n, 2.0, 1.0);
        let c = random_vec(&mut r, n);
        Self { a, c, eps: 0.3 }
    }

    pub fn residual(&self, z: &[f64]) -> Vec<f64> {
        let az = self.a.matvec(z);
        (0..z.len()).map(|i| az[i] + self.eps * z[i].sin() - self.c[i]).collect()
    }

    /// `J(z)ᵀ v`
    pub fn vjp(&self, z: &[f64], v: &[f64]) -> Vec<f64> {
        let atv = self.a.vecmat(v);
        (0..z.len()).map(|i| atv[i] + self.eps * z[i].cos() * v[i]).collect()
    }
}
