//! Seeded Monte-Carlo ground truth: empirical error distributions, the
//! analytic CDF of an [`ErrorDensity`], and the Kolmogorov–Smirnov distance
//! between them.

use rand::Rng;
use rayon::prelude::*;

use crate::dist::{NoiseSpec, PriorSpec};
use crate::error::{Error, Result};
use crate::error_density::ErrorDensity;
use crate::posterior::Posterior;
use crate::rng::{generate, try_generate};
use crate::scalar::Scalar;

/// Sorted sample with its seed.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution<T> {
    samples: Vec<T>,
    seed: u64,
}

impl<T: Scalar> EmpiricalDistribution<T> {
    pub fn new(mut samples: Vec<T>, seed: u64) -> Self {
        samples.par_sort_unstable_by(|a, b| a.partial_cmp(b).expect("NaN in sample"));
        Self { samples, seed }
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Fraction of samples `<= w`.
    pub fn ecdf(&self, w: T) -> T {
        if self.samples.is_empty() {
            return T::zero();
        }
        let k = self.samples.partition_point(|s| *s <= w);
        T::from_usize(k).expect("count") / T::from_usize(self.len()).expect("count")
    }

    /// `(bin centre, density)` for `bins` equal bins on `[lo, hi)`, normalized
    /// by the full sample size.
    pub fn histogram(&self, bins: usize, lo: T, hi: T) -> Vec<(T, T)> {
        if bins == 0 || !(hi > lo) || self.samples.is_empty() {
            return Vec::new();
        }
        let width = (hi - lo) / T::from_usize(bins).expect("bins");
        let mut counts = vec![0usize; bins];
        for &s in &self.samples {
            if s >= lo && s < hi {
                let k = ((s - lo) / width).to_usize().unwrap_or(bins - 1).min(bins - 1);
                counts[k] += 1;
            }
        }
        let n = T::from_usize(self.len()).expect("count");
        counts
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let centre = lo + width * (T::from_usize(k).expect("bin") + T::lit(0.5));
                (centre, T::from_usize(c).expect("count") / (n * width))
            })
            .collect()
    }

    pub fn mean(&self) -> T {
        let n = T::from_usize(self.len()).expect("count");
        self.samples.iter().copied().sum::<T>() / n
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> T {
        let m = self.mean();
        let n = T::from_usize(self.len()).expect("count");
        self.samples.iter().map(|&s| (s - m) * (s - m)).sum::<T>() / (n - T::one())
    }

    /// Standard error of the mean.
    pub fn standard_error(&self) -> T {
        (self.variance() / T::from_usize(self.len()).expect("count")).sqrt()
    }

    /// Samples multiplied by `factor` (positive), e.g. `1 / sigma` for `E`.
    pub fn scaled(&self, factor: T) -> Self {
        Self { samples: self.samples.iter().map(|&s| s * factor).collect(), seed: self.seed }
    }
}

/// `n` draws of `W = X - E[X | X + sigma Z]`.
pub fn simulate_errors<T: Scalar>(
    prior: &PriorSpec<T>,
    noise: &NoiseSpec<T>,
    sigma: T,
    n: usize,
    seed: u64,
) -> Result<EmpiricalDistribution<T>> {
    if n < 1000 {
        return Err(Error::InvalidArgument(format!("simulate_errors needs n >= 1000, got {n}")));
    }
    let post = Posterior::new(prior, noise, sigma)?;
    let w = try_generate(n, seed, |rng, _| {
        let (x, _) = prior.draw(rng);
        let z = noise.draw(rng);
        Ok(x - post.mean(x + sigma * z)?)
    })?;
    Ok(EmpiricalDistribution::new(w, seed))
}

/// Target size of the analytic CDF grid.
pub const CDF_POINTS: usize = 4096;
const DECADES: usize = 30;
const PER_DECADE: usize = 4;

/// CDF obtained by cumulative Simpson sums on a grid that is uniform in the
/// bulk and geometric towards cusps and support edges. Between nodes it
/// integrates the Simpson quadratic of the cell, so values inside a cell are
/// as accurate as the node values.
#[derive(Debug, Clone)]
pub struct AnalyticCdf<T> {
    grid: Vec<T>,
    cdf: Vec<T>,
    cells: Vec<Cell<T>>,
}

impl<T: Scalar> AnalyticCdf<T> {
    pub fn new(density: &ErrorDensity<T>) -> Result<Self> {
        let (lo, hi) = effective_range(density)?;
        let mut anchors = vec![lo, hi];
        anchors.extend(density.cusps().into_iter().filter(|c| *c > lo && *c < hi));
        anchors.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        anchors.dedup();
        let total = hi - lo;
        let geometric = 2 * (DECADES * PER_DECADE + 1) * (anchors.len() - 1);
        let bulk = CDF_POINTS.saturating_sub(geometric).max(256);
        let mut grid = Vec::with_capacity(CDF_POINTS + geometric);
        for w in anchors.windows(2) {
            let (a, b) = (w[0], w[1]);
            let len = b - a;
            let m = ((len / total).to_f64_lossy() * bulk as f64).ceil().max(16.0) as usize;
            for j in 0..m {
                grid.push(a + len * T::lit(j as f64 / m as f64));
            }
            for k in 0..=DECADES * PER_DECADE {
                let off = len * T::lit(0.5) * T::lit(10f64.powf(-(k as f64) / PER_DECADE as f64));
                grid.push(a + off);
                grid.push(b - off);
            }
        }
        grid.push(hi);
        grid.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        grid.dedup();
        let cells: Vec<Cell<T>> = grid.windows(2).map(|w| Cell::new(&anchors, w[0], w[1])).collect();
        let f = grid.par_iter().map(|&w| density.query(w)).collect::<Result<Vec<T>>>()?;
        let fm = cells.par_iter().map(|c| density.query(c.mid)).collect::<Result<Vec<T>>>()?;
        let mut cells = cells;
        let mut cdf = Vec::with_capacity(grid.len());
        let mut acc = T::zero();
        cdf.push(acc);
        for (i, c) in cells.iter_mut().enumerate() {
            c.set_values(f[i], fm[i], f[i + 1]);
            acc = acc + c.partial(T::one());
            cdf.push(acc);
        }
        Ok(Self { grid, cdf, cells })
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    /// Total mass captured by the grid.
    pub fn total(&self) -> T {
        self.cdf[self.cdf.len() - 1]
    }

    pub fn eval(&self, w: T) -> T {
        if w <= self.grid[0] {
            return T::zero();
        }
        let n = self.grid.len();
        if w >= self.grid[n - 1] {
            return self.total().min(T::one());
        }
        let k = self.grid.partition_point(|g| *g <= w);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let cell = &self.cells[k - 1];
        (c0 + cell.partial(cell.coordinate(w))).max(c0).min(c1).min(T::one())
    }

    /// Generalized inverse of the interpolated CDF, for `u` in `[0, 1]`.
    pub fn quantile(&self, u: T) -> T {
        let n = self.grid.len();
        let u = u * self.total();
        let k = self.cdf.partition_point(|c| *c < u);
        if k == 0 {
            return self.grid[0];
        }
        if k >= n {
            return self.grid[n - 1];
        }
        let (mut a, mut b) = (self.grid[k - 1], self.grid[k]);
        for _ in 0..100 {
            let m = T::lit(0.5) * (a + b);
            if m <= a || m >= b {
                break;
            }
            if self.eval(m) < u {
                a = m;
            } else {
                b = m;
            }
        }
        b
    }

    /// Inverse-CDF draws from the interpolated law.
    pub fn sample(&self, n: usize, seed: u64) -> EmpiricalDistribution<T> {
        let s = generate(n, seed, |rng, _| self.quantile(T::lit(rng.random::<f64>())));
        EmpiricalDistribution::new(s, seed)
    }
}

/// One grid cell, integrated by Simpson's rule either in `w` or in
/// `log |w - anchor|` for the nearest anchor; the latter is exact for
/// `1 / |w - anchor|` spikes.
#[derive(Debug, Clone)]
struct Cell<T> {
    a: T,
    b: T,
    mid: T,
    /// `(anchor, |a - anchor|, |b - anchor|)` in log mode.
    log: Option<(T, T, T)>,
    /// Integrand in the cell coordinate `s` in `[0, 1]` at `s = 0, 1/2, 1`.
    g: [T; 3],
}

impl<T: Scalar> Cell<T> {
    fn new(anchors: &[T], a: T, b: T) -> Self {
        let k = anchors.partition_point(|c| *c <= a);
        let near = match (k.checked_sub(1).map(|i| anchors[i]), anchors.get(k).copied()) {
            (Some(l), Some(r)) => Some(if a - l <= r - b { l } else { r }),
            (l, r) => l.or(r),
        };
        let half = T::lit(0.5);
        if let Some(c) = near {
            let (da, db) = ((a - c).abs(), (b - c).abs());
            if da > T::zero() && db > T::zero() && da != db {
                let dm = (da * db).sqrt();
                let mid = if a < c { c - dm } else { c + dm };
                return Self { a, b, mid, log: Some((c, da, db)), g: [T::zero(); 3] };
            }
        }
        Self { a, b, mid: half * (a + b), log: None, g: [T::zero(); 3] }
    }

    fn set_values(&mut self, fa: T, fm: T, fb: T) {
        self.g = match self.log {
            Some((c, da, db)) => {
                let span = (da.max(db) / da.min(db)).ln();
                let dm = (self.mid - c).abs();
                [fa * da * span, fm * dm * span, fb * db * span]
            }
            None => {
                let len = self.b - self.a;
                [fa * len, fm * len, fb * len]
            }
        };
    }

    /// Cell coordinate of `w`: linear in `w`, or in `log |w - anchor|`.
    fn coordinate(&self, w: T) -> T {
        match self.log {
            Some((c, da, db)) => {
                let d = (w - c).abs();
                if d <= T::zero() {
                    return if da < db { T::zero() } else { T::one() };
                }
                ((d / da).ln() / (db / da).ln()).max(T::zero()).min(T::one())
            }
            None => ((w - self.a) / (self.b - self.a)).max(T::zero()).min(T::one()),
        }
    }

    /// Integral of the Simpson quadratic over `[0, t]`; `t = 1` is Simpson's rule.
    fn partial(&self, t: T) -> T {
        let [g0, gm, g1] = self.g;
        let (two, three, four) = (T::lit(2.0), T::lit(3.0), T::lit(4.0));
        let c1 = four * gm - three * g0 - g1;
        let c2 = two * (g0 + g1) - four * gm;
        t * (g0 + t * (c1 / two + t * c2 / three))
    }
}

/// Finite window carrying essentially all of the density's mass.
pub fn effective_range<T: Scalar>(density: &ErrorDensity<T>) -> Result<(T, T)> {
    let (lo, hi) = density.support_hint();
    if lo.is_finite() && hi.is_finite() {
        return Ok((lo, hi));
    }
    let centre = if lo.is_finite() {
        lo
    } else if hi.is_finite() {
        hi
    } else {
        T::zero()
    };
    let peak = density.query(centre)?;
    let grow = |dir: T| -> Result<T> {
        let mut step = T::one();
        let mut best = peak;
        for _ in 0..80 {
            let w = centre + dir * step;
            let f = density.query(w)?;
            best = best.max(f);
            if f <= T::lit(1e-16) * best && step > T::one() {
                return Ok(w);
            }
            step = step * T::lit(1.5);
        }
        Err(Error::InvalidArgument("density tail does not decay".into()))
    };
    let lo = if lo.is_finite() { lo } else { grow(-T::one())? };
    let hi = if hi.is_finite() { hi } else { grow(T::one())? };
    Ok((lo, hi))
}

/// `sup |F_n - F|` over the sample, counting both one-sided gaps.
pub fn ks_distance_cdf<T: Scalar>(emp: &EmpiricalDistribution<T>, cdf: &AnalyticCdf<T>) -> T {
    let n = T::from_usize(emp.len()).expect("count");
    emp.samples()
        .par_iter()
        .enumerate()
        .map(|(i, &s)| {
            let f = cdf.eval(s);
            let i = T::from_usize(i).expect("index");
            (f - i / n).abs().max(((i + T::one()) / n - f).abs())
        })
        .reduce(T::zero, T::max)
}

/// KS distance between a sample and an analytic density, which must be
/// normalized within `1e-4`.
pub fn ks_distance<T: Scalar>(emp: &EmpiricalDistribution<T>, density: &ErrorDensity<T>) -> Result<T> {
    if !((density.normalization() - T::one()).abs() <= T::lit(1e-4)) {
        return Err(Error::InvalidArgument(format!(
            "density normalization {} is not within 1e-4 of 1",
            density.normalization()
        )));
    }
    Ok(ks_distance_cdf(emp, &AnalyticCdf::new(density)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{ContinuousPrior, DiscretePrior};

    #[test]
    fn ecdf_is_right_continuous() {
        let e = EmpiricalDistribution::new(vec![3.0, 1.0, 2.0, 2.0], 0);
        assert_eq!(e.samples(), &[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(e.ecdf(0.5), 0.0);
        assert_eq!(e.ecdf(2.0), 0.75);
        assert_eq!(e.ecdf(3.0), 1.0);
        let h = e.histogram(2, 1.0, 3.0);
        assert_eq!(h, vec![(1.5, 0.25), (2.5, 0.5)]);
    }

    #[test]
    fn point_mass_has_zero_error() {
        let prior: PriorSpec<f64> = DiscretePrior::point(0.7).into();
        let e = simulate_errors(&prior, &NoiseSpec::gaussian(), 1.0, 1000, 3).unwrap();
        assert!(e.samples().iter().all(|&w| w == 0.0));
        assert!(simulate_errors(&prior, &NoiseSpec::gaussian(), 1.0, 10, 3).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let prior: PriorSpec<f64> = DiscretePrior::binary(0.5).unwrap().into();
        let a = simulate_errors(&prior, &NoiseSpec::gaussian(), 1.0, 5000, 9).unwrap();
        let b = simulate_errors(&prior, &NoiseSpec::gaussian(), 1.0, 5000, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.samples().iter().all(|w| w.abs() < 2.0));
    }

    #[test]
    fn inverse_cdf_stream_is_null_true() {
        let d = ErrorDensity::<f64>::closed_form_binary(0.3, 0.5).unwrap().normalized();
        let cdf = AnalyticCdf::new(&d).unwrap();
        assert!((cdf.total() - 1.0).abs() < 1e-5, "{}", cdf.total());
        let n = 100_000;
        let s = cdf.sample(n, 5);
        assert!(ks_distance_cdf(&s, &cdf) < 1.7 / (n as f64).sqrt());
    }

    #[test]
    fn gaussian_ks_self_test() {
        let noise = NoiseSpec::<f64>::gaussian();
        let draws = EmpiricalDistribution::new(noise.sample(200_000, 1), 1);
        let d = ErrorDensity::closed_form_gaussian(1e6, 1.0).unwrap();
        let ks = ks_distance(&draws, &d).unwrap();
        assert!(ks < 1.63 / (200_000f64).sqrt(), "{ks}");
        let _ = ContinuousPrior::<f64>::gaussian(0.0, 1.0).unwrap();
    }
}
