//! Slice kernels. Vectors are plain `Vec<T>` / `&[T]`; lengths are checked by callers
//! at public entry points and debug-asserted here.

use crate::Scalar;

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn norm_inf<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

pub fn scale<T: Scalar>(alpha: T, x: &[T]) -> Vec<T> {
    x.iter().map(|&v| alpha * v).collect()
}

pub fn scale_in_place<T: Scalar>(alpha: T, x: &mut [T]) {
    x.iter_mut().for_each(|v| *v = alpha * *v);
}

pub fn add<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn neg<T: Scalar>(a: &[T]) -> Vec<T> {
    a.iter().map(|&x| -x).collect()
}

pub fn is_finite<T: Scalar>(a: &[T]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Cosine similarity; zero when either vector vanishes.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    let na = norm(a);
    let nb = norm(b);
    if na == T::zero() || nb == T::zero() {
        return T::zero();
    }
    (dot(a, b) / (na * nb)).max(-T::one()).min(T::one())
}

pub fn unit<T: Scalar>(dim: usize, i: usize) -> Vec<T> {
    let mut e = vec![T::zero(); dim];
    e[i] = T::one();
    e
}

pub fn relative_error<T: Scalar>(approx: &[T], exact: &[T]) -> T {
    let denom = norm(exact);
    let diff = norm(&sub(approx, exact));
    if denom == T::zero() {
        diff
    } else {
        diff / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels() {
        let a = [3.0f64, 4.0];
        let mut y = [1.0, 1.0];
        axpy(2.0, &a, &mut y);
        assert_eq!(y, [7.0, 9.0]);
        assert_eq!(norm(&a), 5.0);
        assert_eq!(norm_inf(&[-6.0f64, 2.0]), 6.0);
        assert_eq!(sub(&a, &a), vec![0.0, 0.0]);
        assert_eq!(unit::<f64>(3, 1), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn cosine_is_clamped_and_zero_safe() {
        assert_eq!(cosine(&[1.0f64, 0.0], &[0.0, 0.0]), 0.0);
        assert!((cosine(&[1.0f64, 1.0], &[2.0, 2.0]) - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0f64, 0.0], &[-1.0, 0.0]), -1.0);
    }

    #[test]
    fn relative_error_falls_back_to_absolute() {
        assert_eq!(relative_error(&[1.0f64], &[0.0]), 1.0);
        assert!((relative_error(&[1.1f64], &[1.0]) - 0.1).abs() < 1e-12);
        assert!(!is_finite(&[1.0f64, f64::NAN]));
    }
}
