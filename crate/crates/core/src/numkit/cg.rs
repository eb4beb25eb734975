use crate::numkit::vector::{axpy, dot, norm};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome<T> {
    pub solution: Vec<T>,
    pub iterations: usize,
    /// `‖A x − b‖` of the returned iterate.
    pub residual_norm: T,
    pub converged: bool,
}

/// Conjugate gradient for a symmetric positive definite linear map.
///
/// Starts from `x0` (zero when `None`) and returns the iterate with the smallest
/// residual seen, so the returned residual never exceeds the initial one.
/// Non-convergence is reported through `converged`/`iterations`, never as an error.
pub fn cg_solve<T, F>(mut hvp: F, rhs: &[T], x0: Option<&[T]>, tol: T, max_iter: usize) -> CgOutcome<T>
where
    T: Scalar,
    F: FnMut(&[T]) -> Vec<T>,
{
    let n = rhs.len();
    let mut x = x0.map_or_else(|| vec![T::zero(); n], <[T]>::to_vec);
    let mut r = rhs.to_vec();
    if x.iter().any(|v| *v != T::zero()) {
        let ax = hvp(&x);
        axpy(-T::one(), &ax, &mut r);
    }
    let target = tol * norm(rhs);
    let mut rr = dot(&r, &r);
    let mut best = (x.clone(), rr.sqrt());
    if best.1 <= target {
        return CgOutcome {
            solution: x,
            iterations: 0,
            residual_norm: best.1,
            converged: true,
        };
    }
    let mut p = r.clone();
    let mut iterations = 0;
    while iterations < max_iter {
        let ap = hvp(&p);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) || !pap.is_finite() {
            break;
        }
        iterations += 1;
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r);
        let res = rr_new.sqrt();
        if res < best.1 {
            best = (x.clone(), res);
        }
        if res <= target || rr_new == T::zero() {
            break;
        }
        let beta = rr_new / rr;
        for (pi, &ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    let (solution, residual_norm) = best;
    CgOutcome {
        converged: residual_norm <= target,
        solution,
        iterations,
        residual_norm,
    }
}
