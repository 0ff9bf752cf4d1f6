//! Property tests of model invariants against closed forms computed here.

use errdist::dist::{ContinuousPrior, DiscretePrior, NoiseFamily, RealizationPath};
use errdist::convergence::pathwise_sweep;
use errdist::inversion::InverseMap;
use errdist::mc_oracle::EmpiricalDistribution;
use errdist::posterior::{Posterior, PosteriorCurve};
use errdist::registry::PriorConfig;
use errdist::{NoiseSpec64, PriorSpec64};
use proptest::prelude::*;

fn binary(p: f64) -> PriorSpec64 {
    DiscretePrior::binary(p).unwrap().into()
}

fn std_normal() -> PriorSpec64 {
    ContinuousPrior::gaussian(0.0, 1.0).unwrap().into()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gaussian_posterior_is_linear(y in -6.0..6.0f64, sigma in 0.1..3.0f64) {
        let prior = std_normal();
        let noise = NoiseSpec64::gaussian();
        let post = Posterior::new(&prior, &noise, sigma).unwrap();
        let s2 = sigma * sigma;
        let m = post.evaluate(y).unwrap();
        prop_assert!((m.mean - y / (1.0 + s2)).abs() < 1e-10);
        prop_assert!((m.variance - s2 / (1.0 + s2)).abs() < 1e-10);
    }

    #[test]
    fn binary_posterior_is_shifted_tanh(y in -4.0..4.0f64, sigma in 0.3..3.0f64, p in 0.05..0.95f64) {
        let prior = binary(p);
        let noise = NoiseSpec64::gaussian();
        let post = Posterior::new(&prior, &noise, sigma).unwrap();
        let expect = (y / (sigma * sigma) + 0.5 * (p / (1.0 - p)).ln()).tanh();
        prop_assert!((post.mean(y).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn posterior_mean_is_monotone(a in -5.0..5.0f64, d in 1e-3..2.0f64, sigma in 0.2..2.0f64, noise_ix in 0usize..3) {
        let family = [NoiseFamily::Gaussian, NoiseFamily::Logistic, NoiseFamily::Laplace][noise_ix];
        let noise = NoiseSpec64::new(family).unwrap();
        let prior: PriorSpec64 = ContinuousPrior::uniform(0.0, 1.0).unwrap().into();
        let post = Posterior::new(&prior, &noise, sigma).unwrap();
        let (lo, hi) = (post.mean(a).unwrap(), post.mean(a + d).unwrap());
        prop_assert!(hi >= lo - 1e-13, "{lo} > {hi}");
        prop_assert!((0.0..=1.0).contains(&lo));
    }

    #[test]
    fn inverse_map_round_trips(x in -0.95..0.95f64) {
        let prior = binary(0.5);
        let noise = NoiseSpec64::gaussian();
        let curve = PosteriorCurve::build(&prior, &noise, 0.8, (-6.0, 6.0), 128).unwrap();
        let map = InverseMap::new(curve).unwrap();
        let y = map.invert(x).unwrap();
        prop_assert!((y - 0.64 * x.atanh()).abs() < 1e-9 * (1.0 + y.abs()));
    }

    #[test]
    fn gaussian_sweep_matches_closed_form(seed in 0u64..1000) {
        let prior = std_normal();
        let noise = NoiseSpec64::gaussian();
        let path = RealizationPath::draw(&prior, &noise, seed);
        let grid = [1.0, 0.3, 0.1, 0.03, 0.01];
        let r = pathwise_sweep(&path, &prior, &noise, &grid).unwrap();
        for (p, &s) in r.points.iter().zip(&grid) {
            let exact = (path.x - (path.x + s * path.z) / (1.0 + s * s)) / s;
            prop_assert!((p.e_value.unwrap() - exact).abs() < 1e-8, "sigma {s}");
        }
        prop_assert!((r.predicted_limit.unwrap() + path.z).abs() < 1e-12);
    }

    #[test]
    fn ecdf_is_a_distribution_function(v in prop::collection::vec(-10.0..10.0f64, 1..200), a in -12.0..12.0f64, b in -12.0..12.0f64) {
        let e = EmpiricalDistribution::new(v, 0);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (fl, fh) = (e.ecdf(lo), e.ecdf(hi));
        prop_assert!((0.0..=1.0).contains(&fl) && (0.0..=1.0).contains(&fh));
        prop_assert!(fl <= fh);
        prop_assert_eq!(e.ecdf(11.0), 1.0);
        prop_assert_eq!(e.ecdf(-11.0), 0.0);
    }

    #[test]
    fn prior_configs_round_trip(w in 0.0..=1.0f64, p in 0.01..0.99f64, lo in -3.0..3.0f64, len in 0.1..4.0f64) {
        let cfg = PriorConfig::Mixture {
            weight: w,
            first: Box::new(PriorConfig::Binary { p }),
            second: Box::new(PriorConfig::Uniform { lo, hi: lo + len }),
        };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: PriorConfig = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert!(back.build().is_ok());
    }
}

#[test]
fn sampling_is_reproducible() {
    let prior = PriorSpec64::mixture(0.5, DiscretePrior::point(0.0), ContinuousPrior::uniform(2.0, 3.0).unwrap()).unwrap();
    let a = prior.sample(10_000, 42);
    assert_eq!(a, prior.sample(10_000, 42));
    assert_ne!(a, prior.sample(10_000, 43));
    let atoms = a.iter().filter(|&&x| x == 0.0).count() as f64 / a.len() as f64;
    assert!((atoms - 0.5).abs() < 0.02, "{atoms}");
    assert!(a.iter().all(|&x| x == 0.0 || (2.0..=3.0).contains(&x)));
    let noise = NoiseSpec64::new(NoiseFamily::StudentT { nu: 3.0 }).unwrap();
    assert_eq!(noise.sample(1000, 5), noise.sample(1000, 5));
}
