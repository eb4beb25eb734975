use super::WolfeParams;
use crate::error::{Error, Result};
use crate::Scalar;

/// Strong Wolfe line search (bracketing then zoom), trying `α = 1` first.
///
/// `phi(α)` returns `(φ(α), φ'(α))`. The accepted step satisfies
/// `φ(α) ≤ φ(0) + c1·α·φ'(0)` and `|φ'(α)| ≤ c2·|φ'(0)|`. When `φ(α)` is within
/// rounding noise of `φ(0)`, sufficient decrease is checked on the derivative instead,
/// `φ'(α) ≤ (1 − 2·c1)·|φ'(0)|`.
pub fn wolfe_line_search<T, F>(mut phi: F, phi0: T, dphi0: T, params: &WolfeParams<T>) -> Result<(T, usize)>
where
    T: Scalar,
    F: FnMut(T) -> (T, T),
{
    params.validate()?;
    if !(dphi0 < T::zero()) {
        return Err(Error::NotDescentDirection { slope: dphi0.as_f64() });
    }
    let (c1, c2) = (params.c1, params.c2);
    let noise = T::lit(1e3) * T::epsilon() * phi0.abs().max(T::one());
    let two = T::lit(2.0);
    let armijo = |a: T, v: T, d: T| {
        v <= phi0 + c1 * a * dphi0 || ((v - phi0).abs() <= noise && d <= (two * c1 - T::one()) * dphi0)
    };
    let curvature = |d: T| d.abs() <= -c2 * dphi0;

    let mut evals = 0usize;
    let mut a_prev = T::zero();
    let mut phi_prev = phi0;
    let mut dphi_prev = dphi0;
    let mut alpha = T::one();

    // bracketing phase
    let (mut lo, mut hi) = loop {
        if evals >= params.max_backtracks {
            return Err(Error::LineSearchFailed { evals });
        }
        let (v, d) = phi(alpha);
        evals += 1;
        if !v.is_finite() || !d.is_finite() || !armijo(alpha, v, d) || (evals > 1 && v >= phi_prev) {
            break ((a_prev, phi_prev, dphi_prev), (alpha, v));
        }
        if curvature(d) {
            return Ok((alpha, evals));
        }
        if d >= T::zero() {
            break ((alpha, v, d), (a_prev, phi_prev));
        }
        a_prev = alpha;
        phi_prev = v;
        dphi_prev = d;
        alpha = alpha * two;
    };

    // zoom phase
    let tenth = T::lit(0.1);
    while evals < params.max_backtracks {
        let (a_lo, phi_lo, dphi_lo) = lo;
        let (a_hi, phi_hi) = hi;
        let width = a_hi - a_lo;
        // quadratic interpolant through φ(lo), φ'(lo), φ(hi), safeguarded to the interior
        let mut a = a_lo;
        if phi_hi.is_finite() {
            let denom = two * (phi_hi - phi_lo - dphi_lo * width);
            if denom != T::zero() {
                a = a_lo - dphi_lo * width * width / denom;
            }
        }
        let (left, right) = if a_lo < a_hi {
            (a_lo + tenth * width.abs(), a_hi - tenth * width.abs())
        } else {
            (a_hi + tenth * width.abs(), a_lo - tenth * width.abs())
        };
        if !a.is_finite() || a < left || a > right {
            a = (a_lo + a_hi) / two;
        }
        let (v, d) = phi(a);
        evals += 1;
        if !v.is_finite() || !d.is_finite() || !armijo(a, v, d) || v >= phi_lo {
            hi = (a, v);
        } else {
            if curvature(d) {
                return Ok((a, evals));
            }
            if d * (a_hi - a_lo) >= T::zero() {
                hi = (a_lo, phi_lo);
            }
            lo = (a, v, d);
        }
        if (hi.0 - lo.0).abs() <= T::epsilon() * lo.0.abs().max(T::one()) {
            break;
        }
    }
    Err(Error::LineSearchFailed { evals })
}
