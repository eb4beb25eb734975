use crate::numkit::vector::norm_inf;
use crate::Scalar;

/// Central-difference gradient `(f(x + h e_i) − f(x − h e_i)) / 2h`.
pub fn finite_diff_grad<T: Scalar, F: FnMut(&[T]) -> T>(mut f: F, x: &[T], h: T) -> Vec<T> {
    assert!(h > T::zero(), "finite-difference step must be positive");
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let xi = xp[i];
            xp[i] = xi + h;
            let fp = f(&xp);
            xp[i] = xi - h;
            let fm = f(&xp);
            xp[i] = xi;
            (fp - fm) / (h + h)
        })
        .collect()
}

/// Default step `1e-6·(1 + ‖x‖∞)`.
pub fn default_step<T: Scalar>(x: &[T]) -> T {
    T::lit(1e-6) * (T::one() + norm_inf(x))
}

/// Central-difference directional derivative of a vector map: `(F(x + h v) − F(x − h v)) / 2h`.
pub fn finite_diff_jvp<T: Scalar, F: FnMut(&[T]) -> Vec<T>>(mut f: F, x: &[T], v: &[T], h: T) -> Vec<T> {
    let xp: Vec<T> = x.iter().zip(v).map(|(&a, &b)| a + h * b).collect();
    let xm: Vec<T> = x.iter().zip(v).map(|(&a, &b)| a - h * b).collect();
    let fp = f(&xp);
    let fm = f(&xm);
    fp.iter().zip(&fm).map(|(&a, &b)| (a - b) / (h + h)).collect()
}
