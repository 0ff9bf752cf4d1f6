//! Declarative prior/noise descriptions and the built-in scenario registry.

use serde::{Deserialize, Serialize};

use crate::convergence::LimitRow;
use crate::dist::{ContinuousPrior, DiscretePrior, NoiseFamily, NoiseSpec, PriorSpec};
use crate::error::Result;

/// Serializable description of a prior, as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorConfig {
    /// Atoms as `[location, mass]` pairs.
    Discrete { atoms: Vec<(f64, f64)> },
    /// `+1` with probability `p`, `-1` otherwise.
    Binary { p: f64 },
    Point { at: f64 },
    Gaussian { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
    Beta { a: f64, b: f64, lo: f64, hi: f64 },
    /// Piecewise-linear density through `[x, f]` points, renormalized.
    Tabulated { points: Vec<(f64, f64)> },
    Mixture { weight: f64, first: Box<PriorConfig>, second: Box<PriorConfig> },
}

impl PriorConfig {
    pub fn build(&self) -> Result<PriorSpec<f64>> {
        Ok(match self {
            PriorConfig::Discrete { atoms } => DiscretePrior::from_pairs(atoms)?.into(),
            PriorConfig::Binary { p } => DiscretePrior::binary(*p)?.into(),
            PriorConfig::Point { at } => DiscretePrior::point(*at).into(),
            PriorConfig::Gaussian { mean, std } => ContinuousPrior::gaussian(*mean, *std)?.into(),
            PriorConfig::Uniform { lo, hi } => ContinuousPrior::uniform(*lo, *hi)?.into(),
            PriorConfig::Beta { a, b, lo, hi } => ContinuousPrior::beta(*a, *b, *lo, *hi)?.into(),
            PriorConfig::Tabulated { points } => ContinuousPrior::tabulated_normalized(points)?.into(),
            PriorConfig::Mixture { weight, first, second } => PriorSpec::mixture(*weight, first.build()?, second.build()?)?,
        })
    }

    /// Compact human-readable label.
    pub fn label(&self) -> String {
        match self {
            PriorConfig::Discrete { atoms } => {
                let a: Vec<String> = atoms.iter().map(|(x, p)| format!("{x}:{p}")).collect();
                format!("discrete{{{}}}", a.join(","))
            }
            PriorConfig::Binary { p } => format!("binary(p={p})"),
            PriorConfig::Point { at } => format!("point({at})"),
            PriorConfig::Gaussian { mean, std } => format!("N({mean},{std}^2)"),
            PriorConfig::Uniform { lo, hi } => format!("U({lo},{hi})"),
            PriorConfig::Beta { a, b, lo, hi } => format!("Beta({a},{b}) on [{lo},{hi}]"),
            PriorConfig::Tabulated { points } => format!("tabulated({} points)", points.len()),
            PriorConfig::Mixture { weight, first, second } => {
                format!("{weight}*{} + {}*{}", first.label(), 1.0 - weight, second.label())
            }
        }
    }
}

pub fn build_noise(family: NoiseFamily) -> Result<NoiseSpec<f64>> {
    NoiseSpec::new(family)
}

/// A named prior/noise pair at a fixed noise scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub prior: PriorConfig,
    pub noise: NoiseFamily,
    pub sigma: f64,
}

impl Scenario {
    fn new(name: &str, prior: PriorConfig, noise: NoiseFamily, sigma: f64) -> Self {
        Scenario { name: name.to_string(), prior, noise, sigma }
    }

    pub fn prior_spec(&self) -> Result<PriorSpec<f64>> {
        self.prior.build()
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec<f64>> {
        build_noise(self.noise)
    }
}

fn uniform(lo: f64, hi: f64) -> PriorConfig {
    PriorConfig::Uniform { lo, hi }
}

fn mixture(weight: f64, first: PriorConfig, second: PriorConfig) -> PriorConfig {
    PriorConfig::Mixture { weight, first: Box::new(first), second: Box::new(second) }
}

/// Scenarios whose error density is checked against the Monte-Carlo oracle.
pub fn density_scenarios() -> Vec<Scenario> {
    use NoiseFamily::*;
    vec![
        Scenario::new("gauss-gauss", PriorConfig::Gaussian { mean: 0.0, std: 1.0 }, Gaussian, 1.0),
        Scenario::new("binary-sym", PriorConfig::Binary { p: 0.5 }, Gaussian, 0.5),
        Scenario::new("binary-skew", PriorConfig::Binary { p: 0.3 }, Gaussian, 0.5),
        Scenario::new("uniform-gauss", uniform(0.0, 1.0), Gaussian, 0.3),
        Scenario::new(
            "ternary-logistic",
            PriorConfig::Discrete { atoms: vec![(-1.0, 0.3), (0.0, 0.3), (2.0, 0.4)] },
            Logistic,
            0.5,
        ),
        Scenario::new("atom-uniform-mix", mixture(0.5, PriorConfig::Point { at: 0.0 }, uniform(2.0, 3.0)), Gaussian, 0.5),
    ]
}

/// One scenario per small-noise limit row; `sigma` is the sweep's upper end.
pub fn limit_row_scenarios() -> Vec<(LimitRow, Scenario)> {
    use NoiseFamily::*;
    vec![
        (LimitRow::Discrete, Scenario::new("row-discrete", PriorConfig::Binary { p: 0.5 }, Gaussian, 1.0)),
        (
            LimitRow::BoundedContinuous,
            Scenario::new("row-bounded-continuous", PriorConfig::Gaussian { mean: 0.0, std: 1.0 }, Gaussian, 1.0),
        ),
        (LimitRow::AbsContinuous, Scenario::new("row-abs-continuous", uniform(0.0, 1.0), StudentT { nu: 3.0 }, 1.0)),
        (
            LimitRow::Mixture,
            Scenario::new("row-mixture", mixture(0.5, PriorConfig::Point { at: 0.0 }, uniform(2.0, 3.0)), Gaussian, 1.0),
        ),
    ]
}

/// Mixtures of mutually singular components under Gaussian noise.
pub fn decomposition_scenarios() -> Vec<Scenario> {
    use NoiseFamily::Gaussian;
    let atoms = || PriorConfig::Discrete { atoms: vec![(-1.0, 0.5), (1.0, 0.5)] };
    vec![
        Scenario::new("decomp-atoms-uniform", mixture(0.5, atoms(), uniform(5.0, 6.0)), Gaussian, 1.0),
        Scenario::new("decomp-point-uniform", mixture(0.5, PriorConfig::Point { at: 0.0 }, uniform(2.0, 3.0)), Gaussian, 1.0),
        Scenario::new("decomp-weight-0", mixture(0.0, atoms(), uniform(5.0, 6.0)), Gaussian, 1.0),
        Scenario::new("decomp-weight-1", mixture(1.0, atoms(), uniform(5.0, 6.0)), Gaussian, 1.0),
    ]
}

/// Mixture of two mutually continuous components; no limit is predicted
/// beyond the decomposition itself, so runs are only logged.
pub fn overlapping_mixture() -> Scenario {
    Scenario::new("overlap-uniforms", mixture(0.5, uniform(0.0, 1.0), uniform(0.0, 2.0)), NoiseFamily::Gaussian, 1.0)
}

/// Continuous weights 0, 1/2 and 1 for the second-moment check.
pub fn mmse_scenarios() -> Vec<(f64, Scenario)> {
    use NoiseFamily::Gaussian;
    let s = 1e-2;
    vec![
        (0.0, Scenario::new("mmse-discrete", PriorConfig::Binary { p: 0.5 }, Gaussian, s)),
        (0.5, Scenario::new("mmse-half", mixture(0.5, PriorConfig::Point { at: 0.0 }, uniform(2.0, 3.0)), Gaussian, s)),
        (1.0, Scenario::new("mmse-continuous", uniform(0.0, 1.0), Gaussian, s)),
    ]
}

/// Every distinct prior used by the registry, plus Beta and tabulated
/// densities, for identities that must hold across all priors.
pub fn registry_priors() -> Vec<(String, PriorConfig)> {
    let mut out: Vec<(String, PriorConfig)> = Vec::new();
    let mut push = |p: PriorConfig| {
        let label = p.label();
        if !out.iter().any(|(l, _)| *l == label) {
            out.push((label, p));
        }
    };
    for s in density_scenarios() {
        push(s.prior);
    }
    for (_, s) in limit_row_scenarios() {
        push(s.prior);
    }
    for s in decomposition_scenarios() {
        push(s.prior);
    }
    push(overlapping_mixture().prior);
    for (_, s) in mmse_scenarios() {
        push(s.prior);
    }
    push(PriorConfig::Binary { p: 0.1 });
    push(PriorConfig::Beta { a: 2.0, b: 3.0, lo: 0.0, hi: 1.0 });
    push(PriorConfig::Tabulated { points: vec![(0.0, 0.0), (1.0, 2.0), (2.0, 1.0), (3.0, 0.0)] });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn configs_round_trip_and_build() {
        for (_, p) in registry_priors() {
            let text = serde_json::to_string(&p).unwrap();
            let back: PriorConfig = serde_json::from_str(&text).unwrap();
            assert_eq!(back, p);
            p.build().unwrap();
        }
        let p: PriorConfig = serde_json::from_str(r#"{"type":"binary","p":0.3}"#).unwrap();
        assert_eq!(p, PriorConfig::Binary { p: 0.3 });
        assert!(serde_json::from_str::<PriorConfig>(r#"{"type":"binary","q":0.3}"#).is_err());
        assert!(PriorConfig::Uniform { lo: 1.0, hi: 0.0 }.build().is_err());
    }

    #[test]
    fn scenario_names_unique() {
        let mut names: Vec<String> = density_scenarios().into_iter().map(|s| s.name).collect();
        names.extend(limit_row_scenarios().into_iter().map(|(_, s)| s.name));
        names.extend(decomposition_scenarios().into_iter().map(|s| s.name));
        names.extend(mmse_scenarios().into_iter().map(|(_, s)| s.name));
        let n = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), n);
    }
}
