//! Density of the estimation error `W = X - g(Y)` for an invertible
//! estimator `g`, its MMSE and Gaussian-noise forms, the normalized error
//! `E = W / sigma`, and closed forms for the binary and conjugate Gaussian
//! models.
//!
//! For an invertible `g` with range `R`,
//! `f_W(w) = E[ f_Z((g^-1(X - w) - X) / sigma) / sigma * |d g^-1 / dt|(X - w) * 1{X - w in R} ]`.

use std::cell::RefCell;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::dist::{ContinuousPrior, NoiseSpec, PriorSpec};
use crate::error::{Error, Result};
use crate::inversion::{Estimator, InverseMap};
use crate::posterior::{default_y_range, PosteriorCurve};
use crate::quadrature::{integrate_vec, integrate_vec_clustered, QuadConfig};
use crate::scalar::Scalar;

/// Grid size of the posterior curve behind MMSE densities.
pub const CURVE_POINTS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityMode {
    GeneralG,
    Mmse,
    GaussianSpecialized,
    ClosedFormBinary,
    ClosedFormGaussian,
}

#[derive(Clone)]
enum Route<T: Scalar> {
    /// Inverse derivative supplied by the estimator.
    Slope(Arc<dyn Estimator<T>>),
    /// `sigma^2 / Var(X | Y = g^-1(t))`.
    Variance(Arc<InverseMap<T>>),
}

impl<T: Scalar> Route<T> {
    fn range(&self) -> (T, T) {
        match self {
            Route::Slope(g) => g.range(),
            Route::Variance(m) => m.range(),
        }
    }

    /// `(g^-1(t), |d g^-1 / dt|)`.
    fn inverse(&self, t: T, sigma: T) -> Result<(T, T)> {
        match self {
            Route::Slope(g) => g.inverse(t),
            Route::Variance(m) => {
                let (y, post) = m.solve(t)?;
                let slope = post.variance / (sigma * sigma);
                if !(slope >= T::lit(1e-13)) {
                    return Err(Error::SlopeUnderflow { y: y.to_f64_lossy(), slope: slope.to_f64_lossy() });
                }
                Ok((y, T::one() / slope))
            }
        }
    }
}

#[derive(Clone)]
enum Kernel<T: Scalar> {
    Pipeline { prior: PriorSpec<T>, noise: NoiseSpec<T>, route: Route<T> },
    Binary { p: T },
    Gaussian { variance: T },
}

/// Queryable error density with support and normalization certificate.
#[derive(Clone)]
pub struct ErrorDensity<T: Scalar> {
    kernel: Kernel<T>,
    mode: DensityMode,
    sigma: T,
    normalized: bool,
    /// Support and cusp locations in `W` units.
    support: (T, T),
    cusps: Vec<T>,
    normalization: T,
}

impl<T: Scalar> fmt::Debug for ErrorDensity<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ErrorDensity")
            .field("mode", &self.mode)
            .field("sigma", &self.sigma)
            .field("normalized", &self.normalized)
            .field("support", &self.support_hint())
            .field("normalization", &self.normalization)
            .finish()
    }
}

fn check_sigma<T: Scalar>(sigma: T) -> Result<()> {
    if sigma > T::zero() && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidSigma(sigma.to_f64_lossy()))
    }
}

fn mmse_map<T: Scalar>(prior: &PriorSpec<T>, noise: &NoiseSpec<T>, sigma: T) -> Result<InverseMap<T>> {
    check_sigma(sigma)?;
    let range = default_y_range(prior, noise, sigma);
    InverseMap::new(PosteriorCurve::build(prior, noise, sigma, range, CURVE_POINTS)?)
}

impl<T: Scalar> ErrorDensity<T> {
    /// Error density of an arbitrary invertible estimator.
    pub fn general(g: Arc<dyn Estimator<T>>, prior: &PriorSpec<T>, noise: &NoiseSpec<T>, sigma: T) -> Result<Self> {
        check_sigma(sigma)?;
        Self::pipeline(prior.clone(), noise.clone(), sigma, Route::Slope(g), DensityMode::GeneralG)
    }

    /// Error density of the posterior mean.
    pub fn mmse(prior: &PriorSpec<T>, noise: &NoiseSpec<T>, sigma: T) -> Result<Self> {
        Self::from_map(Arc::new(mmse_map(prior, noise, sigma)?))
    }

    /// Error density of the posterior mean behind an existing inverse map.
    pub fn from_map(map: Arc<InverseMap<T>>) -> Result<Self> {
        let curve = map.curve();
        let (prior, noise, sigma) = (curve.prior().clone(), curve.noise().clone(), curve.sigma());
        Self::pipeline(prior, noise, sigma, Route::Slope(map), DensityMode::Mmse)
    }

    /// Gaussian-noise form using `sigma^2 / Var(X | Y)` for the inverse derivative.
    pub fn gaussian_specialized(prior: &PriorSpec<T>, sigma: T) -> Result<Self> {
        let noise = NoiseSpec::gaussian();
        let map = Arc::new(mmse_map(prior, &noise, sigma)?);
        Self::pipeline(prior.clone(), noise, sigma, Route::Variance(map), DensityMode::GaussianSpecialized)
    }

    /// Same as [`Self::gaussian_specialized`] on an existing map.
    pub fn gaussian_specialized_from_map(map: Arc<InverseMap<T>>) -> Result<Self> {
        let curve = map.curve();
        if !curve.noise().is_gaussian() {
            return Err(Error::Unsupported("the variance form needs Gaussian noise".into()));
        }
        let (prior, noise, sigma) = (curve.prior().clone(), curve.noise().clone(), curve.sigma());
        Self::pipeline(prior, noise, sigma, Route::Variance(map), DensityMode::GaussianSpecialized)
    }

    /// Binary prior on `{-1, +1}` with `P(X = 1) = p`, Gaussian noise.
    pub fn closed_form_binary(p: T, sigma: T) -> Result<Self> {
        check_sigma(sigma)?;
        if !(p > T::zero() && p < T::one()) {
            return Err(Error::InvalidPrior(format!("binary mass must lie in (0, 1), got {p}")));
        }
        let two = T::lit(2.0);
        let mut d = Self {
            kernel: Kernel::Binary { p },
            mode: DensityMode::ClosedFormBinary,
            sigma,
            normalized: false,
            support: (-two, two),
            cusps: vec![T::zero()],
            normalization: T::nan(),
        };
        d.normalization = d.integrate_density()?;
        Ok(d)
    }

    /// Gaussian prior `N(m, s^2)` with Gaussian noise: `W ~ N(0, s^2 sigma^2 / (s^2 + sigma^2))`.
    pub fn closed_form_gaussian(prior_std: T, sigma: T) -> Result<Self> {
        check_sigma(sigma)?;
        if !(prior_std > T::zero() && prior_std.is_finite()) {
            return Err(Error::InvalidPrior(format!("prior std must be positive, got {prior_std}")));
        }
        let (s2, v2) = (prior_std * prior_std, sigma * sigma);
        let mut d = Self {
            kernel: Kernel::Gaussian { variance: s2 * v2 / (s2 + v2) },
            mode: DensityMode::ClosedFormGaussian,
            sigma,
            normalized: false,
            support: (T::neg_infinity(), T::infinity()),
            cusps: Vec::new(),
            normalization: T::nan(),
        };
        d.normalization = d.integrate_density()?;
        Ok(d)
    }

    fn pipeline(prior: PriorSpec<T>, noise: NoiseSpec<T>, sigma: T, route: Route<T>, mode: DensityMode) -> Result<Self> {
        let (rlo, rhi) = route.range();
        if !(rhi > rlo) {
            return Err(Error::NonInvertible("estimator range is empty".into()));
        }
        let (hlo, hhi) = prior.support_hull();
        let support = (hlo - rhi, hhi - rlo);
        let mut cusps = Vec::new();
        for a in prior.atom_locations() {
            for r in [rlo, rhi] {
                if r.is_finite() {
                    cusps.push(a - r);
                }
            }
        }
        cusps.sort_by(|a, b| a.partial_cmp(b).expect("finite cusps"));
        cusps.dedup();
        let mut d = Self {
            kernel: Kernel::Pipeline { prior, noise, route },
            mode,
            sigma,
            normalized: false,
            support,
            cusps,
            normalization: T::nan(),
        };
        d.normalization = d.integrate_density()?;
        Ok(d)
    }

    /// The density of `E = W / sigma`; the normalization carries over by
    /// the change of variables.
    pub fn normalized(&self) -> Self {
        Self { normalized: true, ..self.clone() }
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn mode(&self) -> DensityMode {
        self.mode
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    /// Integral of the density over its support, by quadrature.
    pub fn normalization(&self) -> T {
        self.normalization
    }

    fn unit(&self) -> T {
        if self.normalized {
            self.sigma
        } else {
            T::one()
        }
    }

    /// Open interval outside which the density vanishes.
    pub fn support_hint(&self) -> (T, T) {
        (self.support.0 / self.unit(), self.support.1 / self.unit())
    }

    /// Points where the density may have integrable spikes.
    pub fn cusps(&self) -> Vec<T> {
        self.cusps.iter().map(|&c| c / self.unit()).collect()
    }

    /// Density at `w` (in `E` units when normalized).
    pub fn query(&self, w: T) -> Result<T> {
        let (lo, hi) = self.support_hint();
        if !(w > lo && w < hi) {
            return Ok(T::zero());
        }
        if let (Kernel::Binary { p }, true) = (&self.kernel, self.normalized) {
            return Ok(closed_form_binary(w, *p, self.sigma));
        }
        if self.normalized {
            normalized_error_pdf(w, self.sigma, |v| self.density_w(v))
        } else {
            self.density_w(w)
        }
    }

    fn density_w(&self, w: T) -> Result<T> {
        let sigma = self.sigma;
        match &self.kernel {
            Kernel::Binary { p } => Ok(closed_form_binary(w / sigma, *p, sigma) / sigma),
            Kernel::Gaussian { variance } => {
                let two_pi = T::lit(2.0) * T::PI();
                Ok((-(w * w) / (T::lit(2.0) * *variance)).exp() / (two_pi * *variance).sqrt())
            }
            Kernel::Pipeline { prior, noise, route } => {
                let v = inverse_expectation(prior, noise, sigma, route, w)?;
                Ok(v.max(T::zero()))
            }
        }
    }

    fn integrate_density(&self) -> Result<T> {
        let (lo, hi) = self.support_hint();
        let mut pts = vec![lo, hi, T::zero()];
        let cusps = self.cusps();
        pts.extend(cusps.iter().copied());
        let scale = match &self.kernel {
            Kernel::Pipeline { noise, .. } => self.sigma * noise.variance().map(|v| v.sqrt()).unwrap_or(T::one()),
            Kernel::Binary { .. } => self.sigma,
            Kernel::Gaussian { variance } => variance.sqrt(),
        } / self.unit();
        for k in [0.1, 0.3, 1.0, 3.0, 10.0, 30.0] {
            pts.push(T::lit(k) * scale);
            pts.push(-T::lit(k) * scale);
        }
        if lo.is_finite() && hi.is_finite() {
            for j in 1..16 {
                pts.push(lo + (hi - lo) * T::lit(j as f64 / 16.0));
            }
        }
        pts.retain(|p| !(p < &lo || p > &hi));
        pts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        pts.dedup();
        let failure = RefCell::new(None);
        let cfg = QuadConfig { max_intervals: 600, ..QuadConfig::new(1e-9, 1e-300) };
        let q = integrate_vec_clustered(
            |w| match self.query(w) {
                Ok(v) => [v],
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    [T::zero()]
                }
            },
            &pts,
            &cusps,
            &cfg,
        );
        match failure.into_inner() {
            Some(e) => Err(e),
            None => Ok(q.value[0]),
        }
    }
}

/// Whether an inversion failure means the integrand is negligible there
/// rather than a genuine error.
fn vanishing(e: &Error) -> bool {
    matches!(e, Error::OutOfRange { .. } | Error::SlopeUnderflow { .. } | Error::Unreachable { .. })
}

fn inverse_term<T: Scalar>(noise: &NoiseSpec<T>, sigma: T, route: &Route<T>, x: T, w: T) -> Result<T> {
    let (rlo, rhi) = route.range();
    let t = x - w;
    if !(t > rlo && t < rhi) {
        return Ok(T::zero());
    }
    match route.inverse(t, sigma) {
        Ok((y, dydt)) => Ok(noise.density((y - x) / sigma) / sigma * dydt.abs()),
        Err(e) if vanishing(&e) => Ok(T::zero()),
        Err(e) => Err(e),
    }
}

fn inverse_expectation<T: Scalar>(prior: &PriorSpec<T>, noise: &NoiseSpec<T>, sigma: T, route: &Route<T>, w: T) -> Result<T> {
    match prior {
        PriorSpec::Discrete(d) => {
            let mut acc = T::zero();
            for a in d.atoms() {
                acc = acc + a.mass * inverse_term(noise, sigma, route, a.location, w)?;
            }
            Ok(acc)
        }
        PriorSpec::Continuous(c) => continuous_expectation(c, noise, sigma, route, w),
        PriorSpec::Mixture(m) => {
            let mut acc = T::zero();
            if m.weight > T::zero() {
                acc = acc + m.weight * inverse_expectation(&m.first, noise, sigma, route, w)?;
            }
            if m.weight < T::one() {
                acc = acc + (T::one() - m.weight) * inverse_expectation(&m.second, noise, sigma, route, w)?;
            }
            Ok(acc)
        }
    }
}

fn continuous_expectation<T: Scalar>(
    c: &ContinuousPrior<T>,
    noise: &NoiseSpec<T>,
    sigma: T,
    route: &Route<T>,
    w: T,
) -> Result<T> {
    let (slo, shi) = c.effective_support();
    let (rlo, rhi) = route.range();
    let (lo, hi) = (slo.max(rlo + w), shi.min(rhi + w));
    if !(hi > lo) {
        return Ok(T::zero());
    }
    let mut pts = vec![lo, hi];
    pts.extend(c.breakpoints());
    for j in 1..8 {
        pts.push(lo + (hi - lo) * T::lit(j as f64 / 8.0));
    }
    pts.retain(|p| *p >= lo && *p <= hi);
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    pts.dedup();
    let edges: Vec<T> = [rlo + w, rhi + w].into_iter().filter(|e| e.is_finite() && *e >= lo && *e <= hi).collect();
    let failure = RefCell::new(None);
    let cfg = QuadConfig { max_intervals: 400, ..QuadConfig::new(1e-9, 1e-300) };
    let f = |x: T| {
        let fx = c.density(x);
        if fx == T::zero() {
            return [T::zero()];
        }
        match inverse_term(noise, sigma, route, x, w) {
            Ok(v) => [fx * v],
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                [T::zero()]
            }
        }
    };
    let q = if edges.is_empty() { integrate_vec(f, &pts, &cfg) } else { integrate_vec_clustered(f, &pts, &edges, &cfg) };
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(q.value[0]),
    }
}

/// Change-of-variables density of `X - g(Y)` at `w` for an arbitrary invertible `g`.
pub fn error_pdf_general<T: Scalar>(
    w: T,
    g: Arc<dyn Estimator<T>>,
    prior: &PriorSpec<T>,
    noise: &NoiseSpec<T>,
    sigma: T,
) -> Result<T> {
    check_sigma(sigma)?;
    let v = inverse_expectation(prior, noise, sigma, &Route::Slope(g), w)?;
    Ok(v.max(T::zero()))
}

/// Density of the MMSE error `X - E[X|Y]` at `w`.
pub fn error_pdf_mmse<T: Scalar>(w: T, prior: &PriorSpec<T>, noise: &NoiseSpec<T>, sigma: T) -> Result<T> {
    let map: Arc<dyn Estimator<T>> = Arc::new(mmse_map(prior, noise, sigma)?);
    error_pdf_general(w, map, prior, noise, sigma)
}

/// Gaussian-noise MMSE error density via the posterior variance.
pub fn error_pdf_gaussian_specialized<T: Scalar>(w: T, prior: &PriorSpec<T>, sigma: T) -> Result<T> {
    let noise = NoiseSpec::gaussian();
    let route = Route::Variance(Arc::new(mmse_map(prior, &noise, sigma)?));
    let v = inverse_expectation(prior, &noise, sigma, &route, w)?;
    Ok(v.max(T::zero()))
}

/// `sigma * f_W(sigma * w)`.
pub fn normalized_error_pdf<T: Scalar, F: Fn(T) -> Result<T>>(w: T, sigma: T, f_w: F) -> Result<T> {
    check_sigma(sigma)?;
    Ok(sigma * f_w(sigma * w)?)
}

fn phi_sigma<T: Scalar>(a: T, sigma: T) -> T {
    let z = a / sigma;
    (-T::lit(0.5) * z * z).exp() / (sigma * (T::lit(2.0) * T::PI()).sqrt())
}

/// Density of the normalized error `E` for the binary prior on `{-1, +1}`
/// with `P(X = 1) = p` and Gaussian noise.
pub fn closed_form_binary<T: Scalar>(w: T, p: T, sigma: T) -> T {
    let u = sigma * w;
    let two = T::lit(2.0);
    let half_s2 = sigma * sigma / two;
    let odds = ((T::one() - p) / p).ln();
    let s3 = sigma * sigma * sigma;
    if u > T::zero() && u < two {
        let arg = half_s2 * (((two - u) / u).ln() + odds) - T::one();
        p * s3 * phi_sigma(arg, sigma) / (u * (two - u))
    } else if u < T::zero() && u > -two {
        let v = -u;
        let arg = half_s2 * ((v / (two - v)).ln() + odds) + T::one();
        (T::one() - p) * s3 * phi_sigma(arg, sigma) / (v * (two - v))
    } else {
        T::zero()
    }
}

/// The `p = 1/2` specialization of [`closed_form_binary`].
pub fn closed_form_binary_symmetric<T: Scalar>(w: T, sigma: T) -> T {
    let two = T::lit(2.0);
    let a = (sigma * w).abs();
    if !(a > T::zero() && a < two) {
        return T::zero();
    }
    let arg = sigma * sigma / two * ((two - a) / a).ln() - T::one();
    T::lit(0.5) * phi_sigma(arg, sigma) * sigma * sigma * sigma / (a * (two - a))
}

/// `(w, f(w))` rows in grid order.
pub fn emit_density_curve<T: Scalar>(density: &ErrorDensity<T>, grid: &[T]) -> Result<Vec<(T, T)>> {
    grid.par_iter().map(|&w| density.query(w).map(|f| (w, f))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::DiscretePrior;
    use crate::inversion::LinearEstimator;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs())
    }

    #[test]
    fn symmetric_display_matches_general_p() {
        for sigma in [0.3, 0.5, 1.0] {
            for i in 0..1001 {
                let w = -2.5 / sigma + 5.0 / sigma * i as f64 / 1000.0;
                let a = closed_form_binary(w, 0.5, sigma);
                let b = closed_form_binary_symmetric(w, sigma);
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300), "{w}: {a} vs {b}");
                assert!((b - closed_form_binary_symmetric(-w, sigma)).abs() <= 1e-15 * b.max(1e-300));
            }
        }
        assert_eq!(closed_form_binary(2.5, 0.5, 1.0), 0.0);
    }

    #[test]
    fn closed_forms_normalize() {
        for (p, sigma) in [(0.5, 1.0), (0.3, 0.5), (0.9, 0.3)] {
            let d = ErrorDensity::<f64>::closed_form_binary(p, sigma).unwrap();
            assert!((d.normalization() - 1.0).abs() < 1e-6, "{p} {sigma}: {}", d.normalization());
        }
        let g = ErrorDensity::closed_form_gaussian(1.0, 1.0).unwrap();
        assert!((g.query(0.0).unwrap() - 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-15);
        assert!((g.normalization() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gaussian_pipeline_at_zero() {
        let prior: PriorSpec<f64> = ContinuousPrior::gaussian(0.0, 1.0).unwrap().into();
        let noise = NoiseSpec::gaussian();
        let want = 1.0 / std::f64::consts::PI.sqrt();
        let d = ErrorDensity::mmse(&prior, &noise, 1.0).unwrap();
        assert!((d.query(0.0).unwrap() - want).abs() < 1e-8);
        assert!((d.normalization() - 1.0).abs() < 1e-6);
        assert!((error_pdf_gaussian_specialized(0.0, &prior, 1.0).unwrap() - want).abs() < 1e-8);
    }

    #[test]
    fn general_g_linear_estimator() {
        // W = (1 - a) X - a Z - b for X, Z standard Gaussian and g(y) = a y + b.
        let prior: PriorSpec<f64> = ContinuousPrior::gaussian(0.0, 1.0).unwrap().into();
        let noise = NoiseSpec::gaussian();
        let (a, b) = (0.3, 0.2);
        let g: Arc<dyn Estimator<f64>> = Arc::new(LinearEstimator::new(a, b).unwrap());
        let var = (1.0 - a) * (1.0 - a) + a * a;
        for w in [-1.0, -0.2, 0.0, 0.7] {
            let got = error_pdf_general(w, g.clone(), &prior, &noise, 1.0).unwrap();
            let want = (-(w + b) * (w + b) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
            assert!(rel_close(got, want, 1e-8), "{w}: {got} vs {want}");
        }
    }

    #[test]
    fn binary_pipeline_matches_closed_form() {
        let prior: PriorSpec<f64> = DiscretePrior::binary(0.5).unwrap().into();
        let noise = NoiseSpec::gaussian();
        let d = ErrorDensity::mmse(&prior, &noise, 1.0).unwrap();
        assert_eq!(d.support_hint(), (-2.0, 2.0));
        assert!((d.query(1.0).unwrap() - closed_form_binary(1.0, 0.5, 1.0)).abs() < 1e-6);
        assert_eq!(d.query(2.0).unwrap(), 0.0);
        assert_eq!(d.query(-2.5).unwrap(), 0.0);
        let e = ErrorDensity::mmse(&prior, &noise, 0.5).unwrap().normalized();
        assert_eq!(e.support_hint(), (-4.0, 4.0));
        for w in [-3.0, -0.4, 0.01, 1.3] {
            assert!((e.query(w).unwrap() - closed_form_binary(w, 0.5, 0.5)).abs() < 1e-6);
        }
    }

    #[test]
    fn degenerate_prior_is_rejected() {
        let prior: PriorSpec<f64> = DiscretePrior::point(1.0).into();
        let noise = NoiseSpec::gaussian();
        assert!(matches!(ErrorDensity::mmse(&prior, &noise, 1.0), Err(Error::NonInvertible(_))));
    }

    #[test]
    fn scaling_is_definitional() {
        let d = ErrorDensity::closed_form_gaussian(1.0, 0.5).unwrap();
        let e = d.normalized();
        for w in [-1.0, 0.0, 0.3] {
            assert_eq!(e.query(w).unwrap(), 0.5 * d.query(0.5 * w).unwrap());
        }
    }

    #[test]
    fn emission_keeps_order() {
        let d = ErrorDensity::closed_form_binary(0.5, 1.0).unwrap().normalized();
        assert!(emit_density_curve(&d, &[]).unwrap().is_empty());
        let grid: Vec<f64> = (0..50).map(|i| -2.0 + 0.08 * i as f64).collect();
        let rows = emit_density_curve(&d, &grid).unwrap();
        assert!(rows.iter().zip(&grid).all(|(r, g)| r.0 == *g));
    }
}
