//! Posterior moments of `X` given `Y = y` for `Y = X + sigma Z`.
//!
//! Every expectation is formed in log space: discrete priors use
//! log-sum-exp over atoms, continuous priors integrate the shifted weight
//! `f_X(x) exp(psi((y - x) / sigma) - M)` over a window where the noise
//! kernel is not negligible. Moments are accumulated about a reference point
//! near the posterior mode so that small posterior variances survive.

use rayon::prelude::*;
use serde::Serialize;

use crate::dist::{ContinuousPrior, DiscretePrior, NoiseSpec, PriorSpec};
use crate::error::{Error, Result};
use crate::quadrature::{integrate_vec, QuadConfig};
use crate::scalar::{log_sum_exp, Scalar};

/// Numerical settings for posterior evaluation.
#[derive(Debug, Clone, Copy)]
pub struct PosteriorOptions<T> {
    pub quad: QuadConfig<T>,
    /// Observations whose log-normalizer falls below this are unreachable.
    pub log_floor: T,
}

impl<T: Scalar> Default for PosteriorOptions<T> {
    fn default() -> Self {
        Self { quad: QuadConfig::fine(), log_floor: T::lit(-700.0) }
    }
}

/// Posterior summary at one observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PosteriorMoments<T> {
    pub mean: T,
    pub variance: T,
    /// `d E[X|Y=y] / dy = Cov(X, psi'((y - X) / sigma) | y) / sigma`; `None`
    /// when the noise density is discontinuous.
    pub slope: Option<T>,
    /// `log E[f_Z((y - X) / sigma)]`.
    pub log_normalizer: T,
}

#[derive(Debug, Clone, Copy)]
struct Raw<T> {
    log_norm: T,
    mean: T,
    var: T,
    /// Posterior mean of `psi'((y - X) / sigma)`.
    score: T,
    /// `Cov(X, psi'((y - X) / sigma)) / sigma`.
    slope: T,
}

impl<T: Scalar> Raw<T> {
    fn unreachable() -> Self {
        let nan = T::nan();
        Self { log_norm: T::neg_infinity(), mean: nan, var: nan, score: nan, slope: nan }
    }
}

/// Posterior engine for one `(prior, noise, sigma)` triple.
#[derive(Debug, Clone, Copy)]
pub struct Posterior<'a, T> {
    prior: &'a PriorSpec<T>,
    noise: &'a NoiseSpec<T>,
    sigma: T,
    opts: PosteriorOptions<T>,
}

fn check_sigma<T: Scalar>(sigma: T) -> Result<()> {
    if sigma > T::zero() && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidSigma(sigma.to_f64_lossy()))
    }
}

impl<'a, T: Scalar> Posterior<'a, T> {
    pub fn new(prior: &'a PriorSpec<T>, noise: &'a NoiseSpec<T>, sigma: T) -> Result<Self> {
        Self::with_options(prior, noise, sigma, PosteriorOptions::default())
    }

    pub fn with_options(
        prior: &'a PriorSpec<T>,
        noise: &'a NoiseSpec<T>,
        sigma: T,
        opts: PosteriorOptions<T>,
    ) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(Self { prior, noise, sigma, opts })
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn prior(&self) -> &'a PriorSpec<T> {
        self.prior
    }

    pub fn noise(&self) -> &'a NoiseSpec<T> {
        self.noise
    }

    pub fn evaluate(&self, y: T) -> Result<PosteriorMoments<T>> {
        let raw = self.raw(self.prior, y);
        if !(raw.log_norm >= self.opts.log_floor) {
            return Err(Error::Unreachable { y: y.to_f64_lossy(), log_normalizer: raw.log_norm.to_f64_lossy() });
        }
        let (lo, hi) = self.prior.support_hull();
        let mean = raw.mean.max(lo).min(hi);
        let variance = raw.var.max(T::zero());
        let slope = self.noise.score(T::zero()).map(|_| raw.slope);
        Ok(PosteriorMoments { mean, variance, slope, log_normalizer: raw.log_norm })
    }

    pub fn mean(&self, y: T) -> Result<T> {
        self.evaluate(y).map(|m| m.mean)
    }

    pub fn variance(&self, y: T) -> Result<T> {
        self.evaluate(y).map(|m| m.variance)
    }

    /// `E[Z | Y = y] = (y - E[X | Y = y]) / sigma`.
    pub fn mean_z(&self, y: T) -> Result<T> {
        self.mean(y).map(|m| (y - m) / self.sigma)
    }

    /// Density of `Y` at `y`, in log form.
    pub fn log_density_y(&self, y: T) -> T {
        self.raw(self.prior, y).log_norm - self.sigma.ln()
    }

    fn raw(&self, prior: &PriorSpec<T>, y: T) -> Raw<T> {
        match prior {
            PriorSpec::Discrete(d) => self.raw_discrete(d, y),
            PriorSpec::Continuous(c) => self.raw_continuous(c, y),
            PriorSpec::Mixture(m) => {
                if let Some(c) = prior.active_component() {
                    return self.raw(m.component(c), y);
                }
                let r1 = self.raw(&m.first, y);
                let r2 = self.raw(&m.second, y);
                let l1 = m.weight.ln() + r1.log_norm;
                let l2 = (T::one() - m.weight).ln() + r2.log_norm;
                let log_norm = log_sum_exp(&[l1, l2]);
                if log_norm == T::neg_infinity() {
                    return Raw::unreachable();
                }
                let (w1, w2) = ((l1 - log_norm).exp(), (l2 - log_norm).exp());
                let parts = [(w1, r1), (w2, r2)];
                let live = || parts.iter().filter(|(w, _)| *w > T::zero());
                let mean: T = live().map(|(w, r)| *w * r.mean).sum();
                let var: T = live().map(|(w, r)| *w * (r.var + (r.mean - mean).powi(2))).sum();
                let score: T = live().map(|(w, r)| *w * r.score).sum();
                let slope: T = live()
                    .map(|(w, r)| *w * (r.slope + (r.mean - mean) * (r.score - score) / self.sigma))
                    .sum();
                Raw { log_norm, mean, var, score, slope }
            }
        }
    }

    fn score_at(&self, z: T) -> T {
        self.noise.score(z).unwrap_or(T::zero())
    }

    fn raw_discrete(&self, d: &DiscretePrior<T>, y: T) -> Raw<T> {
        let atoms = d.atoms();
        let logw: Vec<T> = atoms
            .iter()
            .zip(d.log_masses())
            .map(|(a, &lm)| lm + self.noise.log_density((y - a.location) / self.sigma))
            .collect();
        let log_norm = log_sum_exp(&logw);
        if log_norm == T::neg_infinity() {
            return Raw::unreachable();
        }
        let mut best = 0;
        for (i, &l) in logw.iter().enumerate() {
            if l > logw[best] {
                best = i;
            }
        }
        let r = atoms[best].location;
        let w: Vec<T> = logw.iter().map(|&l| (l - log_norm).exp()).collect();
        let mean = r + atoms.iter().zip(&w).map(|(a, &wi)| wi * (a.location - r)).sum::<T>();
        let var: T = atoms.iter().zip(&w).map(|(a, &wi)| wi * (a.location - mean).powi(2)).sum();
        let scores: Vec<T> = atoms.iter().map(|a| self.score_at((y - a.location) / self.sigma)).collect();
        let score: T = scores.iter().zip(&w).map(|(&s, &wi)| wi * s).sum();
        let cov: T = atoms
            .iter()
            .zip(&w)
            .zip(&scores)
            .map(|((a, &wi), &s)| wi * (a.location - mean) * (s - score))
            .sum();
        Raw { log_norm, mean, var, score, slope: cov / self.sigma }
    }

    fn raw_continuous(&self, c: &ContinuousPrior<T>, y: T) -> Raw<T> {
        let sigma = self.sigma;
        let (lo, hi) = c.effective_support();
        let centre = y.max(lo).min(hi);
        let mut pts = vec![lo, hi, centre, y];
        let offsets = [1.0, 3.0, 10.0, 30.0, 100.0];
        for k in offsets {
            let d = T::lit(k) * sigma;
            pts.push(y - d);
            pts.push(y + d);
        }
        pts.extend(c.breakpoints());
        let clean = |pts: &mut Vec<T>| {
            pts.retain(|p| *p >= lo && *p <= hi);
            pts.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
            pts.dedup();
        };
        clean(&mut pts);

        let log_integrand = |x: T| c.log_density(x) + self.noise.log_density((y - x) / sigma);
        // Shift and reference point: coarse scan, then a golden-section
        // polish around the best probe.
        let mut shift = T::neg_infinity();
        let mut reference = centre;
        let mut bracket = (lo, hi);
        let probes = 8;
        for w in pts.windows(2) {
            let h = (w[1] - w[0]) / T::lit(probes as f64);
            for j in 0..=probes {
                let x = if j == probes { w[1] } else { w[0] + h * T::lit(j as f64) };
                let g = log_integrand(x);
                if g > shift {
                    shift = g;
                    reference = x;
                    bracket = ((x - h).max(lo), (x + h).min(hi));
                }
            }
        }
        if shift == T::neg_infinity() {
            return Raw::unreachable();
        }
        let (mode, peak) = golden_max(&log_integrand, bracket.0, bracket.1);
        if peak > shift {
            shift = peak;
            reference = mode;
        }
        for k in offsets {
            let d = T::lit(k) * sigma;
            pts.push(reference - d);
            pts.push(reference + d);
        }
        pts.push(reference);
        clean(&mut pts);

        let q = integrate_vec(
            |x| {
                let e = (log_integrand(x) - shift).exp();
                if e == T::zero() {
                    return [T::zero(); 5];
                }
                let d = x - reference;
                let s = self.score_at((y - x) / sigma);
                [e, d * e, d * d * e, s * e, d * s * e]
            },
            &pts,
            &self.opts.quad,
        );
        let [i0, i1, i2, i3, i4] = q.value;
        if !(i0 > T::zero()) {
            return Raw::unreachable();
        }
        let m1 = i1 / i0;
        let score = i3 / i0;
        Raw {
            log_norm: shift + i0.ln(),
            mean: reference + m1,
            var: i2 / i0 - m1 * m1,
            score,
            slope: (i4 / i0 - m1 * score) / sigma,
        }
    }
}

fn golden_max<T: Scalar, F: Fn(T) -> T>(f: &F, mut a: T, mut b: T) -> (T, T) {
    let r = T::lit(0.618_033_988_749_894_8);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..30 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd { (c, fc) } else { (d, fd) }
}

/// `E[X | Y = y]`.
pub fn posterior_mean<T: Scalar>(y: T, prior: &PriorSpec<T>, noise: &NoiseSpec<T>, sigma: T) -> Result<T> {
    Posterior::new(prior, noise, sigma)?.mean(y)
}

/// `Var(X | Y = y)`.
pub fn posterior_variance<T: Scalar>(y: T, prior: &PriorSpec<T>, noise: &NoiseSpec<T>, sigma: T) -> Result<T> {
    Posterior::new(prior, noise, sigma)?.variance(y)
}

/// `E[Z | Y = y]`.
pub fn posterior_mean_z<T: Scalar>(y: T, prior: &PriorSpec<T>, noise: &NoiseSpec<T>, sigma: T) -> Result<T> {
    Posterior::new(prior, noise, sigma)?.mean_z(y)
}

/// Monotonicity certificate of a tabulated posterior mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Monotonicity<T> {
    Strict,
    NonDecreasing,
    /// The mean decreases between `from` and `to`.
    Failed { from: T, to: T },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint<T> {
    pub y: T,
    pub mean: T,
    pub variance: T,
    pub slope: Option<T>,
}

/// Posterior mean and variance tabulated on a `y` grid, plus a certificate
/// of strict monotonicity. Owns its prior and noise, so it can be shared.
#[derive(Debug, Clone)]
pub struct PosteriorCurve<T> {
    prior: PriorSpec<T>,
    noise: NoiseSpec<T>,
    sigma: T,
    opts: PosteriorOptions<T>,
    grid: Vec<CurvePoint<T>>,
    certificate: Monotonicity<T>,
}

/// Default `y` window: the bulk of `X` (its hull, clipped to eight standard
/// deviations for unbounded components) inflated by `6 sigma` noise scales.
pub fn default_y_range<T: Scalar>(prior: &PriorSpec<T>, noise: &NoiseSpec<T>, sigma: T) -> (T, T) {
    let (lo, hi) = bulk_hull(prior);
    let scale = noise.variance().map(|v| v.sqrt()).unwrap_or(T::one());
    let pad = T::lit(6.0) * sigma * scale;
    (lo - pad, hi + pad)
}

fn bulk_hull<T: Scalar>(prior: &PriorSpec<T>) -> (T, T) {
    match prior {
        PriorSpec::Discrete(_) => prior.support_hull(),
        PriorSpec::Continuous(c) => {
            let (lo, hi) = c.effective_support();
            let (m, v) = c.moments();
            let k = T::lit(8.0) * v.sqrt();
            (lo.max(m - k), hi.min(m + k))
        }
        PriorSpec::Mixture(mix) => match prior.active_component() {
            Some(c) => bulk_hull(mix.component(c)),
            None => {
                let (a, b) = bulk_hull(&mix.first);
                let (c, d) = bulk_hull(&mix.second);
                (a.min(c), b.max(d))
            }
        },
    }
}

const STRICT_STEP: f64 = 1e-13;

impl<T: Scalar> PosteriorCurve<T> {
    pub fn build(
        prior: &PriorSpec<T>,
        noise: &NoiseSpec<T>,
        sigma: T,
        y_range: (T, T),
        n_points: usize,
    ) -> Result<Self> {
        Self::build_with_options(prior, noise, sigma, y_range, n_points, PosteriorOptions::default())
    }

    pub fn build_with_options(
        prior: &PriorSpec<T>,
        noise: &NoiseSpec<T>,
        sigma: T,
        y_range: (T, T),
        n_points: usize,
        opts: PosteriorOptions<T>,
    ) -> Result<Self> {
        check_sigma(sigma)?;
        if n_points < 64 {
            return Err(Error::InvalidArgument(format!("curve needs at least 64 points, got {n_points}")));
        }
        let (a, b) = y_range;
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::InvalidArgument("y range must be a finite interval".into()));
        }
        let post = Posterior::with_options(prior, noise, sigma, opts)?;
        let step = (b - a) / T::from_usize(n_points - 1).expect("grid size");
        let grid = (0..n_points)
            .into_par_iter()
            .map(|i| {
                let y = if i + 1 == n_points { b } else { a + step * T::from_usize(i).expect("index") };
                post.evaluate(y).map(|m| CurvePoint { y, mean: m.mean, variance: m.variance, slope: m.slope })
            })
            .collect::<Result<Vec<_>>>()?;
        let certificate = certify(&grid);
        Ok(Self { prior: prior.clone(), noise: noise.clone(), sigma, opts, grid, certificate })
    }

    pub fn posterior(&self) -> Posterior<'_, T> {
        Posterior { prior: &self.prior, noise: &self.noise, sigma: self.sigma, opts: self.opts }
    }

    pub fn query(&self, y: T) -> Result<PosteriorMoments<T>> {
        self.posterior().evaluate(y)
    }

    pub fn grid(&self) -> &[CurvePoint<T>] {
        &self.grid
    }

    pub fn certificate(&self) -> Monotonicity<T> {
        self.certificate
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn prior(&self) -> &PriorSpec<T> {
        &self.prior
    }

    pub fn noise(&self) -> &NoiseSpec<T> {
        &self.noise
    }
}

/// Strict when every step rises by more than `1e-13` or is backed by a
/// positive analytic slope at both ends; failed on any decrease beyond that.
fn certify<T: Scalar>(grid: &[CurvePoint<T>]) -> Monotonicity<T> {
    let tol = T::lit(STRICT_STEP);
    let mut strict = true;
    for w in grid.windows(2) {
        let delta = w[1].mean - w[0].mean;
        if delta < -tol {
            return Monotonicity::Failed { from: w[0].y, to: w[1].y };
        }
        let slope_backed = matches!((w[0].slope, w[1].slope), (Some(s0), Some(s1)) if s0 > T::zero() && s1 > T::zero());
        if !(delta > tol || slope_backed) {
            strict = false;
        }
    }
    if strict {
        Monotonicity::Strict
    } else {
        Monotonicity::NonDecreasing
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{ContinuousPrior, DiscretePrior, NoiseFamily};

    fn gauss_prior() -> PriorSpec<f64> {
        ContinuousPrior::gaussian(0.0, 1.0).unwrap().into()
    }

    #[test]
    fn gaussian_gaussian_linear_estimator() {
        let prior = gauss_prior();
        let noise = NoiseSpec::gaussian();
        for sigma in [0.01, 0.25, 1.0, 2.0] {
            let post = Posterior::new(&prior, &noise, sigma).unwrap();
            for y in [-15.0, -3.0, -0.2, 0.0, 2.0, 5.0, 30.0] {
                let m = post.evaluate(y).unwrap();
                let s2 = sigma * sigma;
                assert!((m.mean - y / (1.0 + s2)).abs() < 1e-12, "sigma {sigma} y {y}: {}", m.mean);
                assert!((m.variance - s2 / (1.0 + s2)).abs() < 1e-12 * (1.0 + s2));
            }
        }
        assert!((posterior_mean(2.0, &prior, &noise, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((posterior_mean_z(2.0, &prior, &noise, 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn binary_tanh_estimator() {
        let prior: PriorSpec<f64> = DiscretePrior::binary(0.5).unwrap().into();
        let noise = NoiseSpec::gaussian();
        let m = posterior_mean(0.5, &prior, &noise, 1.0).unwrap();
        assert!((m - 0.5f64.tanh()).abs() < 1e-15);
        assert!((posterior_variance(0.0, &prior, &noise, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(posterior_mean_z(0.0, &prior, &noise, 1.0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn point_mass_is_fixed() {
        let prior: PriorSpec<f64> = DiscretePrior::point(2.5).into();
        for fam in NoiseFamily::registry() {
            let noise = NoiseSpec::new(fam).unwrap();
            let post = Posterior::new(&prior, &noise, 0.7).unwrap();
            let m = post.evaluate(2.9).unwrap();
            assert_eq!(m.mean, 2.5);
            assert_eq!(m.variance, 0.0);
            assert!((post.mean_z(2.9).unwrap() - 0.4 / 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_sigma_and_unreachable_y() {
        let prior: PriorSpec<f64> = DiscretePrior::binary(0.5).unwrap().into();
        let noise = NoiseSpec::gaussian();
        assert!(matches!(posterior_mean(0.0, &prior, &noise, 0.0), Err(Error::InvalidSigma(_))));
        assert!(matches!(posterior_mean(0.0, &prior, &noise, 1e-3), Err(Error::Unreachable { .. })));
        let uni = NoiseSpec::new(NoiseFamily::Uniform).unwrap();
        assert!(matches!(posterior_mean(5.0, &prior, &uni, 1.0), Err(Error::Unreachable { .. })));
    }

    #[test]
    fn analytic_slope_matches_finite_difference() {
        let priors: Vec<PriorSpec<f64>> = vec![
            DiscretePrior::from_pairs(&[(-1.0, 0.2), (0.0, 0.3), (2.0, 0.5)]).unwrap().into(),
            ContinuousPrior::uniform(0.0, 1.0).unwrap().into(),
            PriorSpec::mixture(0.4, DiscretePrior::point(0.0), ContinuousPrior::uniform(2.0, 3.0).unwrap()).unwrap(),
        ];
        for fam in [NoiseFamily::Gaussian, NoiseFamily::Logistic, NoiseFamily::StudentT { nu: 3.0 }] {
            let noise = NoiseSpec::new(fam).unwrap();
            for prior in &priors {
                let post = Posterior::new(prior, &noise, 0.6).unwrap();
                for y in [-0.5, 0.4, 1.3, 2.6] {
                    let h = 1e-5;
                    let fd = (post.mean(y + h).unwrap() - post.mean(y - h).unwrap()) / (2.0 * h);
                    let s = post.evaluate(y).unwrap().slope.unwrap();
                    assert!((fd - s).abs() < 1e-6 * (1.0 + s.abs()), "{fam:?} y={y}: {fd} vs {s}");
                }
            }
        }
    }

    #[test]
    fn log_domain_matches_naive_sum() {
        let prior = DiscretePrior::<f64>::from_pairs(&[(-1.0, 0.2), (0.5, 0.5), (3.0, 0.3)]).unwrap();
        let noise = NoiseSpec::gaussian();
        let sigma = 0.8;
        let spec: PriorSpec<f64> = prior.clone().into();
        for y in [-2.0, 0.0, 1.1, 4.0] {
            let w: Vec<f64> = prior.atoms().iter().map(|a| a.mass * noise.density((y - a.location) / sigma)).collect();
            let naive = prior.atoms().iter().zip(&w).map(|(a, wi)| a.location * wi).sum::<f64>() / w.iter().sum::<f64>();
            let m = posterior_mean(y, &spec, &noise, sigma).unwrap();
            assert!((m - naive).abs() <= 1e-12 * naive.abs().max(1e-300), "{m} vs {naive}");
        }
    }

    #[test]
    fn curve_certificates() {
        let noise = NoiseSpec::gaussian();
        let gg = gauss_prior();
        let c = PosteriorCurve::build(&gg, &noise, 1.0, (-8.0, 8.0), 64).unwrap();
        assert_eq!(c.certificate(), Monotonicity::Strict);
        let point: PriorSpec<f64> = DiscretePrior::point(1.0).into();
        let c = PosteriorCurve::build(&point, &noise, 1.0, (-5.0, 5.0), 64).unwrap();
        assert_eq!(c.certificate(), Monotonicity::NonDecreasing);
        let bin: PriorSpec<f64> = DiscretePrior::binary(0.3).unwrap().into();
        let range = default_y_range(&bin, &noise, 0.5);
        let c = PosteriorCurve::build(&bin, &noise, 0.5, range, 128).unwrap();
        assert_eq!(c.certificate(), Monotonicity::Strict);
        assert!(PosteriorCurve::build(&bin, &noise, 0.5, range, 10).is_err());
    }

    #[test]
    fn laplace_noise_gives_flat_segments() {
        let bin: PriorSpec<f64> = DiscretePrior::binary(0.5).unwrap().into();
        let noise = NoiseSpec::new(NoiseFamily::Laplace).unwrap();
        let c = PosteriorCurve::build(&bin, &noise, 0.5, (-4.0, 4.0), 64).unwrap();
        assert_eq!(c.certificate(), Monotonicity::NonDecreasing);
    }

    #[test]
    fn generic_over_f32() {
        let prior: PriorSpec<f32> = DiscretePrior::binary(0.5).unwrap().into();
        let noise = NoiseSpec::<f32>::gaussian();
        let m = posterior_mean(0.5f32, &prior, &noise, 1.0).unwrap();
        assert!((m - 0.5f32.tanh()).abs() < 1e-6);
    }
}
