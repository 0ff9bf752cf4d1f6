//! Bracketing root finder for monotone scalar equations.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct RootConfig<T> {
    /// Absolute floor on the bracket half-width at convergence.
    pub x_tol: T,
    pub max_iter: usize,
}

impl<T: Scalar> Default for RootConfig<T> {
    fn default() -> Self {
        Self { x_tol: T::zero(), max_iter: 200 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Root<T> {
    pub x: T,
    pub residual: T,
    pub iterations: usize,
}

/// Brent's method: bisection safeguarded by secant and inverse-quadratic steps.
///
/// `fa` and `fb` are `f(a)` and `f(b)` and must have opposite signs (or one
/// of them is zero). Iterates until the bracket shrinks to a few ulps of the
/// root (plus `cfg.x_tol`) or the residual is exactly zero.
pub fn brent<T, F>(mut f: F, a: T, b: T, fa: T, fb: T, cfg: &RootConfig<T>) -> Result<Root<T>>
where
    T: Scalar,
    F: FnMut(T) -> Result<T>,
{
    if fa == T::zero() {
        return Ok(Root { x: a, residual: fa, iterations: 0 });
    }
    if fb == T::zero() {
        return Ok(Root { x: b, residual: fb, iterations: 0 });
    }
    if (fa > T::zero()) == (fb > T::zero()) {
        return Err(Error::RootFinding(format!(
            "bracket [{}, {}] does not straddle a root (f = {}, {})",
            a.to_f64_lossy(),
            b.to_f64_lossy(),
            fa.to_f64_lossy(),
            fb.to_f64_lossy()
        )));
    }
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let (mut a, mut b, mut fa, mut fb) = (a, b, fa, fb);
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for iter in 1..=cfg.max_iter {
        if (fb > T::zero()) == (fc > T::zero()) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = two * T::epsilon() * b.abs() + half * cfg.x_tol;
        let m = half * (c - b);
        if m.abs() <= tol || fb == T::zero() {
            return Ok(Root { x: b, residual: fb, iterations: iter });
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = two * m * s;
                q = T::one() - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (two * m * qa * (qa - r) - (b - a) * (r - T::one()));
                q = (qa - T::one()) * (r - T::one()) * (s - T::one());
            }
            if p > T::zero() {
                q = -q;
            } else {
                p = -p;
            }
            let min1 = T::lit(3.0) * m * q - (tol * q).abs();
            let min2 = (e * q).abs();
            if two * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = d;
            }
        } else {
            d = m;
            e = d;
        }
        a = b;
        fa = fb;
        b = if d.abs() > tol { b + d } else if m > T::zero() { b + tol } else { b - tol };
        fb = f(b)?;
    }
    Err(Error::RootFinding(format!("no convergence within {} iterations", cfg.max_iter)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_cubic_root() {
        let f = |x: f64| Ok(x * x * x - 2.0);
        let r = brent(f, 0.0, 2.0, -2.0, 6.0, &RootConfig::default()).unwrap();
        assert!((r.x - 2f64.cbrt()).abs() < 1e-15);
        assert!(r.iterations < 60);
    }

    #[test]
    fn flat_tail_still_converges_in_x() {
        // tanh saturates; the root must still be located precisely in x.
        let target = 1.0 - 1e-9;
        let f = |x: f64| Ok(x.tanh() - target);
        let r = brent(f, 0.0, 30.0, -target, 30f64.tanh() - target, &RootConfig::default()).unwrap();
        assert!((r.x - target.atanh()).abs() < 1e-6);
    }

    #[test]
    fn rejects_non_bracket() {
        let f = |x: f64| Ok(x);
        assert!(brent(f, 1.0, 2.0, 1.0, 2.0, &RootConfig::default()).is_err());
    }
}
