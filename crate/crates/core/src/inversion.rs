//! Functional inverse of the posterior-mean curve and its derivative.

use crate::error::{Error, Result};
use crate::posterior::{Monotonicity, Posterior, PosteriorCurve, PosteriorMoments};
use crate::scalar::Scalar;

/// An estimator `g` with a well-defined functional inverse on its open range.
pub trait Estimator<T: Scalar>: Send + Sync {
    fn estimate(&self, y: T) -> Result<T>;
    /// `(g^-1(x), d g^-1 / dx)` for `x` inside the open range.
    fn inverse(&self, x: T) -> Result<(T, T)>;
    /// Open range of `g`; infinite bounds when unbounded.
    fn range(&self) -> (T, T);
}

/// `g(y) = slope * y + intercept` with positive slope.
#[derive(Debug, Clone, Copy)]
pub struct LinearEstimator<T> {
    slope: T,
    intercept: T,
}

impl<T: Scalar> LinearEstimator<T> {
    pub fn new(slope: T, intercept: T) -> Result<Self> {
        if !(slope > T::zero() && slope.is_finite() && intercept.is_finite()) {
            return Err(Error::NonInvertible(format!("linear estimator needs a positive finite slope, got {slope}")));
        }
        Ok(Self { slope, intercept })
    }
}

impl<T: Scalar> Estimator<T> for LinearEstimator<T> {
    fn estimate(&self, y: T) -> Result<T> {
        Ok(self.slope * y + self.intercept)
    }

    fn inverse(&self, x: T) -> Result<(T, T)> {
        Ok(((x - self.intercept) / self.slope, T::one() / self.slope))
    }

    fn range(&self) -> (T, T) {
        (T::neg_infinity(), T::infinity())
    }
}

const MIN_SLOPE: f64 = 1e-13;
const MAX_DOUBLINGS: usize = 60;

/// Inverse of a strictly increasing posterior-mean curve.
#[derive(Debug, Clone)]
pub struct InverseMap<T> {
    curve: PosteriorCurve<T>,
    range: (T, T),
}

impl<T: Scalar> InverseMap<T> {
    pub fn new(curve: PosteriorCurve<T>) -> Result<Self> {
        if curve.certificate() != Monotonicity::Strict {
            return Err(Error::NonInvertible(format!(
                "posterior mean is not certified strictly increasing ({:?})",
                curve.certificate()
            )));
        }
        let range = range_of(&curve);
        Ok(Self { curve, range })
    }

    pub fn curve(&self) -> &PosteriorCurve<T> {
        &self.curve
    }

    pub fn range(&self) -> (T, T) {
        self.range
    }

    pub fn sigma(&self) -> T {
        self.curve.sigma()
    }

    pub fn invert(&self, x: T) -> Result<T> {
        self.solve(x).map(|(y, _)| y)
    }

    /// `d X^-1 / dx` from the analytic slope at the root (numeric slope for
    /// noises without a score).
    pub fn inverse_derivative(&self, x: T) -> Result<T> {
        let (y, m) = self.solve(x)?;
        let slope = match m.slope {
            Some(s) => s,
            None => numeric_slope(&self.curve.posterior(), y)?,
        };
        reciprocal_slope(y, slope)
    }

    /// `d X^-1 / dx` from a centered finite difference of the mean.
    pub fn inverse_derivative_numeric(&self, x: T) -> Result<T> {
        let y = self.invert(x)?;
        reciprocal_slope(y, numeric_slope(&self.curve.posterior(), y)?)
    }

    /// `sigma^2 / Var(X | Y = X^-1(x))`; Gaussian noise only.
    pub fn inverse_derivative_variance(&self, x: T) -> Result<T> {
        if !self.curve.noise().is_gaussian() {
            return Err(Error::Unsupported("variance form of the inverse derivative needs Gaussian noise".into()));
        }
        let (y, m) = self.solve(x)?;
        let s2 = self.sigma() * self.sigma();
        reciprocal_slope(y, m.variance / s2)
    }

    /// Root `y` of `E[X|Y=y] = x` together with the posterior at `y`.
    pub fn solve(&self, x: T) -> Result<(T, PosteriorMoments<T>)> {
        let (lo, hi) = self.range;
        if !(x > lo && x < hi) {
            return Err(Error::OutOfRange { x: x.to_f64_lossy(), lo: lo.to_f64_lossy(), hi: hi.to_f64_lossy() });
        }
        let post = self.curve.posterior();
        let out_of_range = || Error::OutOfRange { x: x.to_f64_lossy(), lo: lo.to_f64_lossy(), hi: hi.to_f64_lossy() };
        let grid = self.curve.grid();
        let span = grid[grid.len() - 1].y - grid[0].y;
        let idx = grid.partition_point(|p| p.mean < x);
        let (mut a, mut ma, mut b, mut mb);
        if idx == 0 {
            (b, mb) = (grid[0].y, grid[0].mean);
            let mut step = span;
            loop {
                let y = b - step;
                let m = post.mean(y).map_err(|_| out_of_range())?;
                if m <= x {
                    (a, ma) = (y, m);
                    break;
                }
                (b, mb) = (y, m);
                step = step + step;
                if step > span * T::lit(2f64.powi(MAX_DOUBLINGS as i32)) {
                    return Err(out_of_range());
                }
            }
        } else if idx == grid.len() {
            let last = grid[grid.len() - 1];
            (a, ma) = (last.y, last.mean);
            let mut step = span;
            loop {
                let y = a + step;
                let m = post.mean(y).map_err(|_| out_of_range())?;
                if m >= x {
                    (b, mb) = (y, m);
                    break;
                }
                (a, ma) = (y, m);
                step = step + step;
                if step > span * T::lit(2f64.powi(MAX_DOUBLINGS as i32)) {
                    return Err(out_of_range());
                }
            }
        } else {
            (a, ma) = (grid[idx - 1].y, grid[idx - 1].mean);
            (b, mb) = (grid[idx].y, grid[idx].mean);
        }
        newton_bisect(&post, x, (a, ma), (b, mb))
    }
}

impl<T: Scalar> Estimator<T> for InverseMap<T> {
    fn estimate(&self, y: T) -> Result<T> {
        self.curve.posterior().mean(y)
    }

    fn inverse(&self, x: T) -> Result<(T, T)> {
        let (y, m) = self.solve(x)?;
        let slope = match m.slope {
            Some(s) => s,
            None => numeric_slope(&self.curve.posterior(), y)?,
        };
        Ok((y, reciprocal_slope(y, slope)?))
    }

    fn range(&self) -> (T, T) {
        self.range
    }
}

fn reciprocal_slope<T: Scalar>(y: T, slope: T) -> Result<T> {
    if slope < T::lit(MIN_SLOPE) || !slope.is_finite() {
        return Err(Error::SlopeUnderflow { y: y.to_f64_lossy(), slope: slope.to_f64_lossy() });
    }
    Ok(T::one() / slope)
}

/// Centered difference with step `max(1e-6, 1e-6 |y|)`.
pub fn numeric_slope<T: Scalar>(post: &Posterior<'_, T>, y: T) -> Result<T> {
    let h = T::lit(1e-6).max(T::lit(1e-6) * y.abs());
    Ok((post.mean(y + h)? - post.mean(y - h)?) / (h + h))
}

/// Safeguarded Newton iteration on `mean(y) - x` inside `[a, b]`, falling
/// back to bisection whenever the Newton step leaves the bracket or stalls.
fn newton_bisect<T: Scalar>(
    post: &Posterior<'_, T>,
    x: T,
    (mut a, ma): (T, T),
    (mut b, mb): (T, T),
) -> Result<(T, PosteriorMoments<T>)> {
    let mut y = if mb > ma { a + (x - ma) / (mb - ma) * (b - a) } else { T::lit(0.5) * (a + b) };
    y = y.max(a).min(b);
    let mut dx_old = b - a;
    let mut dx = dx_old;
    let half = T::lit(0.5);
    for _ in 0..200 {
        let m = post.evaluate(y)?;
        let f = m.mean - x;
        if f == T::zero() {
            return Ok((y, m));
        }
        if f < T::zero() {
            a = y;
        } else {
            b = y;
        }
        let slope = match m.slope {
            Some(s) => s,
            None => numeric_slope(post, y)?,
        };
        let scale = T::one().max(y.abs());
        if slope > T::zero() && (f / slope).abs() <= T::lit(1e-13) * scale {
            return Ok((y - f / slope, m));
        }
        if b - a <= T::lit(4.0) * T::epsilon() * a.abs().max(b.abs()).max(T::min_positive_value()) {
            return Ok((y, m));
        }
        let newton = y - f / slope;
        let stalled = (f + f).abs() > (dx_old * slope).abs();
        if !(slope > T::zero()) || !(newton > a && newton < b) || stalled {
            dx_old = dx;
            dx = half * (b - a);
            y = a + dx;
        } else {
            dx_old = dx;
            dx = f / slope;
            y = newton;
        }
    }
    Err(Error::RootFinding(format!("inversion at x = {x} did not converge")))
}

/// Open range `(lim_{y -> -inf} E[X|Y=y], lim_{y -> +inf} E[X|Y=y])`.
///
/// The grid ends are pushed outward by doubling steps until the mean stops
/// changing in floating point or the observation becomes unreachable; an
/// unreachable end of an unbounded hull is reported as infinite.
pub fn range_of<T: Scalar>(curve: &PosteriorCurve<T>) -> (T, T) {
    let prior = curve.prior();
    if prior.is_degenerate() {
        let (lo, _) = prior.support_hull();
        return (lo, lo);
    }
    let grid = curve.grid();
    let post = curve.posterior();
    let (hull_lo, hull_hi) = prior.support_hull();
    let spread = if (hull_hi - hull_lo).is_finite() { hull_hi - hull_lo } else { T::one() };
    let span = grid[grid.len() - 1].y - grid[0].y;
    let first = grid[0];
    let last = grid[grid.len() - 1];
    let lo = extend(&post, first.y, first.mean, -span, hull_lo, spread);
    let hi = extend(&post, last.y, last.mean, span, hull_hi, spread);
    (lo, hi)
}

fn extend<T: Scalar>(post: &Posterior<'_, T>, y0: T, m0: T, step0: T, bound: T, spread: T) -> T {
    let mut prev = m0;
    let mut step = step0;
    for _ in 0..MAX_DOUBLINGS {
        match post.mean(y0 + step) {
            Ok(m) => {
                let settled = (m - prev).abs() <= T::lit(64.0) * T::epsilon() * m.abs().max(spread);
                prev = m;
                if settled {
                    return if bound.is_finite() && (m - bound).abs() <= T::lit(1e-9) * spread { bound } else { m };
                }
                step = step + step;
            }
            Err(_) => break,
        }
    }
    bound
}

/// Convenience form of [`InverseMap::invert`].
pub fn invert<T: Scalar>(curve: &PosteriorCurve<T>, x: T) -> Result<T> {
    InverseMap::new(curve.clone())?.invert(x)
}

/// Convenience form of [`InverseMap::inverse_derivative`].
pub fn inverse_derivative<T: Scalar>(curve: &PosteriorCurve<T>, x: T) -> Result<T> {
    InverseMap::new(curve.clone())?.inverse_derivative(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{ContinuousPrior, DiscretePrior, NoiseSpec, PriorSpec};
    use crate::posterior::default_y_range;

    fn curve(prior: PriorSpec<f64>, sigma: f64) -> PosteriorCurve<f64> {
        let noise = NoiseSpec::gaussian();
        let r = default_y_range(&prior, &noise, sigma);
        PosteriorCurve::build(&prior, &noise, sigma, r, 128).unwrap()
    }

    #[test]
    fn gaussian_linear_inverse() {
        let map = InverseMap::new(curve(ContinuousPrior::gaussian(0.0, 1.0).unwrap().into(), 1.0)).unwrap();
        assert_eq!(map.range(), (f64::NEG_INFINITY, f64::INFINITY));
        assert!((map.invert(1.0).unwrap() - 2.0).abs() < 1e-9);
        let y = map.invert(-7.5).unwrap();
        assert!((y + 15.0).abs() < 1e-8, "{y}");
        assert!((map.inverse_derivative(0.3).unwrap() - 2.0).abs() < 1e-8);
        assert!((map.inverse_derivative_variance(0.3).unwrap() - 2.0).abs() < 1e-8);
    }

    #[test]
    fn binary_inverse_and_derivative() {
        let map = InverseMap::new(curve(DiscretePrior::binary(0.5).unwrap().into(), 1.0)).unwrap();
        assert_eq!(map.range(), (-1.0, 1.0));
        assert!((map.invert(1f64.tanh()).unwrap() - 1.0).abs() < 1e-10);
        assert!((map.inverse_derivative(0.0).unwrap() - 1.0).abs() < 1e-10);
        assert!((map.inverse_derivative(0.5).unwrap() - 4.0 / 3.0).abs() < 1e-10);
        let fd = (map.invert(0.5 + 1e-6).unwrap() - map.invert(0.5 - 1e-6).unwrap()) / 2e-6;
        assert!((fd - 4.0 / 3.0).abs() < 1e-6);
        assert!((map.inverse_derivative_numeric(0.5).unwrap() - 4.0 / 3.0).abs() < 1e-6);
        assert!(matches!(map.invert(1.0), Err(Error::OutOfRange { .. })));
        assert!(matches!(map.invert(-1.5), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn near_edge_needs_expansion() {
        let map = InverseMap::new(curve(DiscretePrior::binary(0.3).unwrap().into(), 0.5)).unwrap();
        let x = 1.0 - 1e-14;
        let y = map.invert(x).unwrap();
        let want = 0.125 * ((1.0 + x) / (1.0 - x) * 0.7 / 0.3).ln();
        assert!((y - want).abs() < 1e-3, "{y} vs {want}");
    }

    #[test]
    fn point_mass_is_not_invertible() {
        let c = curve(DiscretePrior::point(0.5).into(), 1.0);
        let r = range_of(&c);
        assert!(!(r.1 > r.0));
        assert!(matches!(InverseMap::new(c), Err(Error::NonInvertible(_))));
    }

    #[test]
    fn bounded_prior_range_is_hull() {
        let c = curve(ContinuousPrior::uniform(0.0, 1.0).unwrap().into(), 0.3);
        assert_eq!(range_of(&c), (0.0, 1.0));
    }

    #[test]
    fn linear_estimator() {
        let g = LinearEstimator::new(0.5, 1.0).unwrap();
        assert_eq!(g.inverse(2.0).unwrap(), (2.0, 2.0));
        assert!(LinearEstimator::new(0.0, 1.0).is_err());
    }
}
