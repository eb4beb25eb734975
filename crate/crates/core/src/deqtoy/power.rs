use crate::error::{Error, Result};
use crate::numkit::norm;
use crate::Scalar;

/// Images smaller than this count as zero.
pub const ZERO_IMAGE_THRESHOLD: f64 = 1e-14;

/// Growth-rate estimate of a (possibly nonlinear) map by normalized iteration.
///
/// Iterates `u ← f(u)/‖f(u)‖` from `u0/‖u0‖` and returns the last `‖f(u)‖`. A map
/// whose first image already vanishes has zero growth and yields `0`; an image
/// vanishing later is reported as [`Error::ZeroImage`].
pub fn nonlinear_power_method<T, F>(mut f: F, u0: &[T], iters: usize) -> Result<T>
where
    T: Scalar,
    F: FnMut(&[T]) -> Vec<T>,
{
    let n0 = norm(u0);
    if !(n0 > T::zero()) || !n0.is_finite() {
        return Err(Error::InvalidConfig("power method needs a finite non-zero start".into()));
    }
    if iters == 0 {
        return Err(Error::InvalidConfig("power method needs at least one iteration".into()));
    }
    let mut u: Vec<T> = u0.iter().map(|v| *v / n0).collect();
    let mut radius = T::zero();
    for i in 0..iters {
        let fu = f(&u);
        radius = norm(&fu);
        if !radius.is_finite() {
            return Err(Error::NonFiniteIterate {
                iteration: i,
                residual_norms: vec![radius.as_f64()],
            });
        }
        if radius < T::lit(ZERO_IMAGE_THRESHOLD) {
            if i == 0 {
                return Ok(T::zero());
            }
            return Err(Error::ZeroImage { iteration: i });
        }
        u = fu.iter().map(|v| *v / radius).collect();
    }
    Ok(radius)
}
