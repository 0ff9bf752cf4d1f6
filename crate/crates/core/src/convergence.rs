//! Small-noise behaviour of the normalized error `E = (X - E[X|Y]) / sigma`:
//! pathwise sweeps against the predicted limit of each prior class, the
//! mixture decomposition, the MMSE dimension and the Doob registry.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{Component, NoiseFamily, NoiseSpec, PriorKind, PriorSpec, RealizationPath};
use crate::error::{Error, Result};
use crate::posterior::Posterior;
use crate::quadrature::{integrate_vec, QuadConfig};
use crate::rng::try_generate;
use crate::scalar::Scalar;

/// Rows of the small-noise limit table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitRow {
    /// Discrete `X`: limit `0`.
    Discrete,
    /// Continuous bounded density, `Z` integrable: limit `E[Z] - z`.
    BoundedContinuous,
    /// Absolutely continuous `X`, bounded `f_Z = O(|z|^-a)` with `a > 2`: limit `E[Z] - z`.
    AbsContinuous,
    /// Discrete and continuous components with Doob noise: `1{u continuous} (E[Z] - z)`.
    Mixture,
}

impl LimitRow {
    pub const ALL: [LimitRow; 4] = [LimitRow::Discrete, LimitRow::BoundedContinuous, LimitRow::AbsContinuous, LimitRow::Mixture];

    pub fn name(self) -> &'static str {
        match self {
            LimitRow::Discrete => "discrete",
            LimitRow::BoundedContinuous => "bounded_continuous",
            LimitRow::AbsContinuous => "abs_continuous",
            LimitRow::Mixture => "mixture",
        }
    }
}

/// Default sweep grid: `n` geometric points from `1` down to `sigma_min`.
pub fn geometric_grid<T: Scalar>(sigma_max: T, sigma_min: T, n: usize) -> Result<Vec<T>> {
    if n < 2 || !(sigma_max > sigma_min && sigma_min > T::zero()) {
        return Err(Error::InvalidArgument("geometric grid needs n >= 2 and 0 < sigma_min < sigma_max".into()));
    }
    let ratio = (sigma_min / sigma_max).ln() / T::from_usize(n - 1).expect("grid size");
    Ok((0..n)
        .map(|k| {
            if k == n - 1 {
                sigma_min
            } else {
                sigma_max * (ratio * T::from_usize(k).expect("index")).exp()
            }
        })
        .collect())
}

/// Forty points from `1` to `1e-3`.
pub fn default_grid<T: Scalar>() -> Vec<T> {
    geometric_grid(T::one(), T::lit(1e-3), 40).expect("valid default grid")
}

fn check_grid<T: Scalar>(grid: &[T]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty sigma grid".into()));
    }
    for w in grid.windows(2) {
        let r = w[1] / w[0];
        if !(w[1] > T::zero() && r > T::zero() && r < T::one()) {
            return Err(Error::InvalidArgument("sigma grid must be positive and strictly decreasing".into()));
        }
    }
    if !(grid[0] > T::zero() && grid[0].is_finite()) {
        return Err(Error::InvalidSigma(grid[0].to_f64_lossy()));
    }
    Ok(())
}

/// Limit row and predicted limit of `E` along `path`.
pub fn predict<T: Scalar>(path: &RealizationPath<T>, prior: &PriorSpec<T>, noise: &NoiseSpec<T>) -> Result<(LimitRow, T)> {
    let flags = noise.flags();
    let none = |why: &str| Err(Error::NoPrediction(why.to_string()));
    let active = match prior.active_component() {
        Some(c) => match prior {
            PriorSpec::Mixture(m) => m.component(c),
            _ => prior,
        },
        None => prior,
    };
    match active {
        PriorSpec::Discrete(_) => {
            if flags.bounded_density {
                Ok((LimitRow::Discrete, T::zero()))
            } else {
                none("discrete prior needs a bounded noise density")
            }
        }
        PriorSpec::Continuous(c) => {
            let limit = noise.mean()? - path.z;
            if c.density_bounded() && c.density_continuous() && flags.in_l1 {
                Ok((LimitRow::BoundedContinuous, limit))
            } else if flags.bounded_density && noise.tail_exponent() > T::lit(2.0) {
                Ok((LimitRow::AbsContinuous, limit))
            } else {
                none("continuous prior without a matching noise condition")
            }
        }
        PriorSpec::Mixture(m) => {
            let continuous = match (m.first.kind(), m.second.kind()) {
                (PriorKind::Discrete, PriorKind::Continuous) => Component::Second,
                (PriorKind::Continuous, PriorKind::Discrete) => Component::First,
                _ => return none("mixture components are not one discrete and one continuous"),
            };
            if !flags.doob {
                return none("mixture row needs Doob noise");
            }
            let u = path.component.ok_or_else(|| Error::InvalidArgument("mixture path without component label".into()))?;
            let limit = if u == continuous { noise.mean()? - path.z } else { T::zero() };
            Ok((LimitRow::Mixture, limit))
        }
    }
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint<T> {
    pub sigma: T,
    pub e_value: Option<T>,
    pub error: Option<String>,
}

/// Per-path record of `E` along a decreasing `sigma` grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport<T> {
    pub path: RealizationPath<T>,
    pub points: Vec<SweepPoint<T>>,
    pub limit_row: Option<LimitRow>,
    pub predicted_limit: Option<T>,
    /// Why no row applies, when `predicted_limit` is `None`.
    pub no_prediction: Option<String>,
    pub second_moment_track: Option<Vec<T>>,
}

impl<T: Scalar> SweepReport<T> {
    pub fn sigma_grid(&self) -> Vec<T> {
        self.points.iter().map(|p| p.sigma).collect()
    }

    pub fn e_values(&self) -> Vec<Option<T>> {
        self.points.iter().map(|p| p.e_value).collect()
    }

    /// The predicted limit, or a no-prediction error.
    pub fn require_prediction(&self) -> Result<T> {
        self.predicted_limit
            .ok_or_else(|| Error::NoPrediction(self.no_prediction.clone().unwrap_or_default()))
    }

    pub fn deviations(&self) -> Vec<Option<T>> {
        self.points
            .iter()
            .map(|p| match (p.e_value, self.predicted_limit) {
                (Some(e), Some(l)) => Some((e - l).abs()),
                _ => None,
            })
            .collect()
    }

    /// `|E| - limit` at the last grid point.
    pub fn terminal_deviation(&self) -> Option<T> {
        self.deviations().last().copied().flatten()
    }

    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| p.e_value.is_none()).count()
    }

    /// Deviations at `sigma <= 10 sigma_final` never increase as `sigma`
    /// decreases. An increase counts only if it exceeds the rounding level
    /// `64 eps max(1, |x|) / sigma` of `E = (x - E[X|y]) / sigma`.
    pub fn final_decade_nonincreasing(&self) -> bool {
        self.final_decade_violations().map(|v| v.is_empty()).unwrap_or(false)
    }

    /// Grid indices in the final decade where the deviation increases beyond
    /// rounding; `None` if a deviation there is missing.
    pub fn final_decade_violations(&self) -> Option<Vec<usize>> {
        let last = self.points.last()?;
        let cut = last.sigma * T::lit(10.0);
        let devs = self.deviations();
        let start = self.points.iter().position(|p| p.sigma <= cut)?;
        let scale = self.path.x.abs().max(T::one()) * T::lit(64.0) * T::epsilon();
        let mut out = Vec::new();
        for k in start..self.points.len() {
            let d = devs[k]?;
            if k > start {
                let prev = devs[k - 1]?;
                if d > prev + scale / self.points[k].sigma {
                    out.push(k);
                }
            }
        }
        Some(out)
    }
}

/// `E` along `path` at every `sigma` of the grid.
pub fn pathwise_sweep<T: Scalar>(
    path: &RealizationPath<T>,
    prior: &PriorSpec<T>,
    noise: &NoiseSpec<T>,
    sigma_grid: &[T],
) -> Result<SweepReport<T>> {
    check_grid(sigma_grid)?;
    let points = sigma_grid
        .iter()
        .map(|&sigma| {
            let e = Posterior::new(prior, noise, sigma)
                .and_then(|p| p.mean(path.x + sigma * path.z))
                .map(|m| (path.x - m) / sigma);
            match e {
                Ok(v) if v.is_finite() => SweepPoint { sigma, e_value: Some(v), error: None },
                Ok(v) => SweepPoint { sigma, e_value: None, error: Some(format!("non-finite value {v}")) },
                Err(err) => SweepPoint { sigma, e_value: None, error: Some(err.to_string()) },
            }
        })
        .collect();
    let (limit_row, predicted_limit, no_prediction) = match predict(path, prior, noise) {
        Ok((row, l)) => (Some(row), Some(l), None),
        Err(Error::NoPrediction(why)) => (None, None, Some(why)),
        Err(e) => return Err(e),
    };
    Ok(SweepReport { path: *path, points, limit_row, predicted_limit, no_prediction, second_moment_track: None })
}

/// Sweeps for the paths drawn from `seeds`, in seed order.
pub fn sweep_paths<T: Scalar>(
    prior: &PriorSpec<T>,
    noise: &NoiseSpec<T>,
    sigma_grid: &[T],
    seeds: &[u64],
) -> Result<Vec<SweepReport<T>>> {
    seeds
        .par_iter()
        .map(|&s| pathwise_sweep(&RealizationPath::draw(prior, noise, s), prior, noise, sigma_grid))
        .collect()
}

/// `|E - E_u|` along a path of a mixture, where `E_u` uses the posterior
/// of the path's own component alone.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionReport<T> {
    pub path: RealizationPath<T>,
    pub sigma_grid: Vec<T>,
    pub deviations: Vec<Option<T>>,
    pub errors: Vec<Option<String>>,
}

impl<T: Scalar> DecompositionReport<T> {
    pub fn terminal_deviation(&self) -> Option<T> {
        self.deviations.last().copied().flatten()
    }

    /// The last three deviations never increase.
    pub fn tail_nonincreasing(&self) -> bool {
        let n = self.deviations.len();
        let tail = &self.deviations[n.saturating_sub(3)..];
        tail.iter().all(|d| d.is_some()) && tail.windows(2).all(|w| w[1].unwrap() <= w[0].unwrap())
    }
}

pub fn decomposition_check<T: Scalar>(
    path: &RealizationPath<T>,
    prior: &PriorSpec<T>,
    noise: &NoiseSpec<T>,
    sigma_grid: &[T],
) -> Result<DecompositionReport<T>> {
    check_grid(sigma_grid)?;
    let PriorSpec::Mixture(m) = prior else {
        return Err(Error::InvalidPrior("decomposition needs a mixture prior".into()));
    };
    let u = path.component.ok_or_else(|| Error::InvalidArgument("mixture path without component label".into()))?;
    let own = m.component(u);
    let (mut deviations, mut errors) = (Vec::new(), Vec::new());
    for &sigma in sigma_grid {
        let y = path.x + sigma * path.z;
        let full = Posterior::new(prior, noise, sigma).and_then(|p| p.mean(y));
        let part = Posterior::new(own, noise, sigma).and_then(|p| p.mean(y));
        match (full, part) {
            (Ok(a), Ok(b)) => {
                deviations.push(Some(((path.x - a) / sigma - (path.x - b) / sigma).abs()));
                errors.push(None);
            }
            (Err(e), _) | (_, Err(e)) => {
                deviations.push(None);
                errors.push(Some(e.to_string()));
            }
        }
    }
    Ok(DecompositionReport { path: *path, sigma_grid: sigma_grid.to_vec(), deviations, errors })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmseMethod {
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MmseEstimate<T> {
    pub method: MmseMethod,
    /// Estimate of `E[E^2]`.
    pub value: T,
    /// Monte-Carlo standard error; `None` for quadrature.
    pub standard_error: Option<T>,
}

/// `E[E^2] = E[Var(X | Y)] / sigma^2`, by integrating against the density
/// of `Y` or by seeded sampling.
pub fn mmse_dimension_estimate<T: Scalar>(
    prior: &PriorSpec<T>,
    noise: &NoiseSpec<T>,
    sigma: T,
    method: MmseMethod,
    n: usize,
    seed: u64,
) -> Result<MmseEstimate<T>> {
    noise.variance()?;
    let post = Posterior::new(prior, noise, sigma)?;
    match method {
        MmseMethod::Quadrature => {
            let value = expected_posterior_variance(&post, prior, noise, sigma)? / (sigma * sigma);
            Ok(MmseEstimate { method, value, standard_error: None })
        }
        MmseMethod::MonteCarlo => {
            if n < 2 {
                return Err(Error::InvalidArgument("Monte-Carlo estimate needs n >= 2".into()));
            }
            let sq = try_generate(n, seed, |rng, _| {
                let (x, _) = prior.draw(rng);
                let z = noise.draw(rng);
                let e = (x - post.mean(x + sigma * z)?) / sigma;
                Ok(e * e)
            })?;
            let nn = T::from_usize(n).expect("count");
            let mean = sq.iter().copied().sum::<T>() / nn;
            let var = sq.iter().map(|&s| (s - mean) * (s - mean)).sum::<T>() / (nn - T::one());
            Ok(MmseEstimate { method, value: mean, standard_error: Some((var / nn).sqrt()) })
        }
    }
}

fn expected_posterior_variance<T: Scalar>(
    post: &Posterior<'_, T>,
    prior: &PriorSpec<T>,
    noise: &NoiseSpec<T>,
    sigma: T,
) -> Result<T> {
    let (lo, hi) = prior.effective_hull();
    let scale = sigma * noise.variance()?.sqrt();
    let pad = T::lit(40.0) * scale;
    let mut pts = vec![lo - pad, hi + pad];
    for b in prior.breakpoints() {
        pts.push(b);
        for k in [1.0, 3.0, 10.0] {
            pts.push(b - T::lit(k) * scale);
            pts.push(b + T::lit(k) * scale);
        }
    }
    pts.retain(|p| p.is_finite() && *p >= lo - pad && *p <= hi + pad);
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    pts.dedup();
    let cfg = QuadConfig { max_intervals: 1000, ..QuadConfig::new(1e-8, 1e-300) };
    let q = integrate_vec(
        |y| match post.evaluate(y) {
            Ok(m) => [(m.log_normalizer - sigma.ln()).exp() * m.variance],
            Err(_) => [T::zero()],
        },
        &pts,
        &cfg,
    );
    Ok(q.value[0])
}

/// Weight of the absolutely continuous part of the prior.
pub fn continuous_weight<T: Scalar>(prior: &PriorSpec<T>) -> T {
    match prior {
        PriorSpec::Discrete(_) => T::zero(),
        PriorSpec::Continuous(_) => T::one(),
        PriorSpec::Mixture(m) => m.weight * continuous_weight(&m.first) + (T::one() - m.weight) * continuous_weight(&m.second),
    }
}

/// Status of one regularity condition of a Doob noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionStatus {
    AnalyticTrue,
    AnalyticFalse,
    Unchecked,
}

/// Doob conditions A1–A5 for a noise, with numeric spot checks of A1
/// (boundedness of `f_Z` and `|z| f_Z`) and of the tail decay.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoobRecord {
    pub noise_name: String,
    pub conditions: [ConditionStatus; 5],
    pub sup_density: f64,
    pub sup_z_density: f64,
    pub a1_numeric_pass: bool,
    /// Least-squares slope of `-log f_Z` against `log |z|` on `[10, 1000]`;
    /// `None` when the density underflows there.
    pub fitted_tail_exponent: Option<f64>,
    pub registry_tail_exponent: f64,
    pub tail_consistent: bool,
}

pub fn doob_registry_lookup<T: Scalar>(noise: &NoiseSpec<T>) -> DoobRecord {
    let conditions = match noise.family() {
        NoiseFamily::Gaussian => [ConditionStatus::AnalyticTrue; 5],
        _ => [ConditionStatus::Unchecked; 5],
    };
    let n = 200_001;
    let (mut sup_f, mut sup_zf) = (0f64, 0f64);
    for i in 0..n {
        let z = -1000.0 + 2000.0 * i as f64 / (n - 1) as f64;
        let f = noise.density(T::lit(z)).to_f64_lossy();
        sup_f = sup_f.max(f);
        sup_zf = sup_zf.max(z.abs() * f);
    }
    let a1_numeric_pass = sup_f.is_finite() && sup_zf.is_finite();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for k in 0..=40 {
        let z = 10f64 * 100f64.powf(k as f64 / 40.0);
        for s in [-1.0, 1.0] {
            let lf = noise.log_density(T::lit(s * z)).to_f64_lossy();
            if lf.is_finite() && lf > -700.0 {
                xs.push(z.ln());
                ys.push(-lf);
            }
        }
    }
    let fitted_tail_exponent = if xs.len() >= 4 {
        let mx = xs.iter().sum::<f64>() / xs.len() as f64;
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    let registry_tail_exponent = noise.tail_exponent().to_f64_lossy();
    let tail_consistent = match fitted_tail_exponent {
        None => registry_tail_exponent.is_infinite(),
        Some(a) if registry_tail_exponent.is_infinite() => a > 20.0,
        Some(a) => (a - registry_tail_exponent).abs() <= 0.05 * registry_tail_exponent,
    };
    DoobRecord {
        noise_name: noise.name(),
        conditions,
        sup_density: sup_f,
        sup_z_density: sup_zf,
        a1_numeric_pass,
        fitted_tail_exponent,
        registry_tail_exponent,
        tail_consistent,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{ContinuousPrior, DiscretePrior};

    fn path(x: f64, z: f64, component: Option<Component>) -> RealizationPath<f64> {
        RealizationPath { x, z, component, seed: 0 }
    }

    #[test]
    fn grid_shape() {
        let g: Vec<f64> = default_grid();
        assert_eq!(g.len(), 40);
        assert_eq!((g[0], g[39]), (1.0, 1e-3));
        assert!(check_grid(&[1.0, 1.0]).is_err());
        assert!(check_grid(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn gaussian_sweep_is_exact() {
        let prior: PriorSpec<f64> = ContinuousPrior::gaussian(0.0, 1.0).unwrap().into();
        let noise = NoiseSpec::gaussian();
        let p = path(0.3, -1.1, None);
        let r = pathwise_sweep(&p, &prior, &noise, &default_grid()).unwrap();
        assert_eq!(r.limit_row, Some(LimitRow::BoundedContinuous));
        assert_eq!(r.predicted_limit, Some(1.1));
        for pt in &r.points {
            let want = (pt.sigma * 0.3 + 1.1) / (1.0 + pt.sigma * pt.sigma);
            assert!((pt.e_value.unwrap() - want).abs() < 1e-9);
        }
        assert!((r.terminal_deviation().unwrap() - ((3e-4 + 1.1) / (1.0 + 1e-6) - 1.1)).abs() < 1e-9);
        assert!(r.final_decade_nonincreasing());
    }

    #[test]
    fn binary_sweep_vanishes() {
        let prior: PriorSpec<f64> = DiscretePrior::binary(0.5).unwrap().into();
        let r = pathwise_sweep(&path(1.0, 0.7, None), &prior, &NoiseSpec::gaussian(), &default_grid()).unwrap();
        assert_eq!(r.limit_row, Some(LimitRow::Discrete));
        assert!(r.terminal_deviation().unwrap() < 1e-6);
    }

    #[test]
    fn mutually_continuous_mixture_has_no_row() {
        let prior = PriorSpec::mixture(0.5, ContinuousPrior::uniform(0.0, 1.0).unwrap(), ContinuousPrior::uniform(0.0, 2.0).unwrap()).unwrap();
        let r = pathwise_sweep(&path(0.5, 0.1, Some(Component::Second)), &prior, &NoiseSpec::gaussian(), &[1.0, 0.1]).unwrap();
        assert!(r.predicted_limit.is_none());
        assert!(matches!(r.require_prediction(), Err(Error::NoPrediction(_))));
        assert!(r.points.iter().all(|p| p.e_value.is_some()));
    }

    #[test]
    fn degenerate_mixture_decomposes_exactly() {
        let noise = NoiseSpec::gaussian();
        for (w, u) in [(0.0, Component::Second), (1.0, Component::First)] {
            let prior = PriorSpec::mixture(w, DiscretePrior::binary(0.5).unwrap(), ContinuousPrior::uniform(5.0, 6.0).unwrap()).unwrap();
            let x = if u == Component::First { 1.0 } else { 5.5 };
            let r = decomposition_check(&path(x, 0.4, Some(u)), &prior, &noise, &default_grid()).unwrap();
            assert!(r.deviations.iter().all(|d| *d == Some(0.0)));
        }
    }

    #[test]
    fn mmse_dimension_gaussian() {
        let prior: PriorSpec<f64> = ContinuousPrior::gaussian(0.0, 1.0).unwrap().into();
        let noise = NoiseSpec::gaussian();
        let q = mmse_dimension_estimate(&prior, &noise, 1e-2, MmseMethod::Quadrature, 0, 0).unwrap();
        assert!((q.value - 1.0 / (1.0 + 1e-4)).abs() < 1e-6, "{}", q.value);
        let t = NoiseSpec::new(NoiseFamily::StudentT { nu: 1.5 }).unwrap();
        assert!(matches!(
            mmse_dimension_estimate(&prior, &t, 1e-2, MmseMethod::Quadrature, 0, 0),
            Err(Error::DivergentMoment { .. })
        ));
    }

    #[test]
    fn doob_records() {
        let g = doob_registry_lookup(&NoiseSpec::<f64>::gaussian());
        assert!(g.conditions.iter().all(|c| *c == ConditionStatus::AnalyticTrue));
        assert!(g.a1_numeric_pass && g.tail_consistent);
        let t = doob_registry_lookup(&NoiseSpec::<f64>::new(NoiseFamily::StudentT { nu: 3.0 }).unwrap());
        assert!(t.a1_numeric_pass && t.tail_consistent, "{t:?}");
        assert!(t.conditions[1..].iter().all(|c| *c == ConditionStatus::Unchecked));
        let u = doob_registry_lookup(&NoiseSpec::<f64>::new(NoiseFamily::Uniform).unwrap());
        assert!(u.a1_numeric_pass && u.tail_consistent);
    }
}
