//! The acceptance suite, shared by the `acceptance` test target and the
//! CLI `selftest` command. Each criterion returns a report with a one-line
//! verdict and deterministic artifacts (no timings, fixed ordering).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::convergence::{decomposition_check, default_grid, sweep_paths, LimitRow};
use crate::dist::{ContinuousPrior, DiscretePrior, NoiseSpec, PriorSpec, RealizationPath};
use crate::error::{Error, Result};
use crate::error_density::{closed_form_binary, ErrorDensity};
use crate::inversion::InverseMap;
use crate::posterior::{default_y_range, Posterior, PosteriorCurve};
use crate::registry::{
    decomposition_scenarios, density_scenarios, mmse_scenarios, registry_priors, limit_row_scenarios, PriorConfig,
};
use crate::runner::{mmse_check, oracle_check, run_in_memory, Artifact, ExperimentConfig, RunOptions};

/// Calibrated terminal deviations, produced by [`Calibration::generate`].
pub const CALIBRATION_JSON: &str = include_str!("../calibration.json");

/// Seeds of the acceptance paths are `0..paths`; calibration uses
/// `CALIBRATION_SEED_BASE..` so the two sets never overlap.
pub const CALIBRATION_SEED_BASE: u64 = 1_000_000;
pub const CALIBRATION_PATHS: usize = 4096;

/// Sizes of the sampling-heavy criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Sizes stated by the criteria.
    Full,
    /// Reduced sizes, for quick determinism runs.
    Quick,
}

impl Profile {
    fn oracle_samples(self) -> usize {
        match self {
            Profile::Full => 1_000_000,
            Profile::Quick => 20_000,
        }
    }

    fn paths(self) -> usize {
        match self {
            Profile::Full => 256,
            Profile::Quick => 32,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CriterionReport {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub artifacts: Vec<Artifact>,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} [{}] {}: {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.detail
        )
    }

    fn errored(id: u8, title: &'static str, e: Error) -> Self {
        CriterionReport { id, title, passed: false, detail: format!("error: {e}"), artifacts: Vec::new() }
    }
}

pub const TITLES: [&str; 10] = [
    "closed-form estimators",
    "closed-form inverses",
    "variance identity",
    "error-density pipeline vs closed forms",
    "Monte-Carlo closure",
    "symmetric binary normalized densities",
    "small-noise limit rows",
    "mixture decomposition",
    "MMSE dimension",
    "determinism across thread counts",
];

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
        .collect()
}

fn json_artifact(id: u8, value: serde_json::Value) -> Artifact {
    let mut contents = serde_json::to_string_pretty(&value).expect("serializable");
    contents.push('\n');
    Artifact { path: format!("criterion-{id:02}.json"), contents }
}

fn finish(id: u8, passed: bool, detail: String, artifacts: Vec<Artifact>) -> CriterionReport {
    CriterionReport { id, title: TITLES[id as usize - 1], passed, detail, artifacts }
}

fn wrap(id: u8, f: impl FnOnce() -> Result<CriterionReport>) -> CriterionReport {
    f().unwrap_or_else(|e| CriterionReport::errored(id, TITLES[id as usize - 1], e))
}

const SIGMAS: [f64; 4] = [0.25, 0.5, 1.0, 2.0];
const MASSES: [f64; 3] = [0.1, 0.5, 0.9];

fn binary_mean(y: f64, p: f64, sigma: f64) -> f64 {
    (y / (sigma * sigma) + 0.5 * (p / (1.0 - p)).ln()).tanh()
}

fn binary_inverse(x: f64, p: f64, sigma: f64) -> f64 {
    0.5 * sigma * sigma * (((1.0 + x) / (1.0 - x)).ln() + ((1.0 - p) / p).ln())
}

/// Posterior means against `y / (1 + sigma^2)` and the binary `tanh` form.
pub fn criterion_1() -> CriterionReport {
    wrap(1, || {
        let noise = NoiseSpec::gaussian();
        let ys = linspace(-5.0, 5.0, 101);
        let gauss: PriorSpec<f64> = ContinuousPrior::gaussian(0.0, 1.0)?.into();
        let mut rows = Vec::new();
        let mut worst = 0f64;
        for &sigma in &SIGMAS {
            let post = Posterior::new(&gauss, &noise, sigma)?;
            let mut err = 0f64;
            for &y in &ys {
                err = err.max((post.mean(y)? - y / (1.0 + sigma * sigma)).abs());
            }
            worst = worst.max(err);
            rows.push(json!({"prior": "gaussian", "sigma": sigma, "max_abs_error": err}));
            for &p in &MASSES {
                let prior: PriorSpec<f64> = DiscretePrior::binary(p)?.into();
                let post = Posterior::new(&prior, &noise, sigma)?;
                let mut err = 0f64;
                for &y in &ys {
                    err = err.max((post.mean(y)? - binary_mean(y, p, sigma)).abs());
                }
                worst = worst.max(err);
                rows.push(json!({"prior": "binary", "p": p, "sigma": sigma, "max_abs_error": err}));
            }
        }
        let passed = worst <= 1e-8;
        Ok(finish(1, passed, format!("max abs error {worst:.3e} over 16 cases x 101 points (tol 1e-8)"), vec![
            json_artifact(1, json!({ "tolerance": 1e-8, "cases": rows })),
        ]))
    })
}

/// Inverses against `(1 + sigma^2) x` and the binary log-odds form, plus
/// the round trip through the posterior mean.
pub fn criterion_2() -> CriterionReport {
    wrap(2, || {
        let noise = NoiseSpec::gaussian();
        let mut rows = Vec::new();
        let (mut worst_inv, mut worst_rt) = (0f64, 0f64);
        let mut check = |label: &str, p: Option<f64>, sigma: f64, prior: PriorSpec<f64>, xs: &[f64]| -> Result<()> {
            let exact = |x: f64| match p {
                Some(p) => binary_inverse(x, p, sigma),
                None => (1.0 + sigma * sigma) * x,
            };
            let curve = PosteriorCurve::build(&prior, &noise, sigma, default_y_range(&prior, &noise, sigma), 512)?;
            let map = InverseMap::new(curve)?;
            let post = Posterior::new(&prior, &noise, sigma)?;
            let (mut e_inv, mut e_rt) = (0f64, 0f64);
            for &x in xs {
                let y = exact(x);
                e_inv = e_inv.max((map.invert(x)? - y).abs());
                e_rt = e_rt.max((map.invert(post.mean(y)?)? - y).abs());
            }
            worst_inv = worst_inv.max(e_inv);
            worst_rt = worst_rt.max(e_rt);
            rows.push(json!({"prior": label, "p": p, "sigma": sigma, "inverse_error": e_inv, "round_trip_error": e_rt}));
            Ok(())
        };
        let gx = linspace(-3.0, 3.0, 101);
        let bx = linspace(-0.99, 0.99, 101);
        for &sigma in &SIGMAS {
            check("gaussian", None, sigma, ContinuousPrior::gaussian(0.0, 1.0)?.into(), &gx)?;
            for &p in &MASSES {
                check("binary", Some(p), sigma, DiscretePrior::binary(p)?.into(), &bx)?;
            }
        }
        let passed = worst_inv <= 1e-8 && worst_rt <= 1e-9;
        Ok(finish(
            2,
            passed,
            format!("max inverse error {worst_inv:.3e} (tol 1e-8), max round-trip error {worst_rt:.3e} (tol 1e-9)"),
            vec![json_artifact(2, json!({ "cases": rows }))],
        ))
    })
}

/// Five-point central difference of the posterior mean.
fn fd_slope(post: &Posterior<'_, f64>, y: f64, h: f64) -> Result<f64> {
    let m = |t: f64| post.mean(y + t * h);
    Ok((m(-2.0)? - 8.0 * m(-1.0)? + 8.0 * m(1.0)? - m(2.0)?) / (12.0 * h))
}

/// `sigma^2 d E[X|y] / dy = Var(X|y)` with the derivative taken by finite
/// differences, across every registry prior. Points where the posterior
/// variance is below `1e-6 Var(X)` are skipped: there the difference
/// quotient is dominated by rounding of the mean.
pub fn criterion_3() -> CriterionReport {
    wrap(3, || {
        let noise = NoiseSpec::gaussian();
        let mut rows = Vec::new();
        let mut worst = 0f64;
        let (mut checked, mut skipped) = (0usize, 0usize);
        for (label, cfg) in registry_priors() {
            let prior = cfg.build()?;
            let (_, var_x) = prior.moments()?;
            for sigma in [0.5, 1.0] {
                let post = Posterior::new(&prior, &noise, sigma)?;
                let (lo, hi) = prior.effective_hull();
                let (lo, hi) = (lo.max(-10.0) - 3.0 * sigma, hi.min(10.0) + 3.0 * sigma);
                let mut err = 0f64;
                for y in linspace(lo, hi, 61) {
                    let var = post.variance(y)?;
                    if var < 1e-6 * var_x {
                        skipped += 1;
                        continue;
                    }
                    checked += 1;
                    let lhs = sigma * sigma * fd_slope(&post, y, 1e-2 * sigma)?;
                    err = err.max((lhs - var).abs() / var);
                }
                worst = worst.max(err);
                rows.push(json!({"prior": label, "sigma": sigma, "max_relative_error": err}));
            }
        }
        let passed = worst <= 1e-5;
        Ok(finish(
            3,
            passed,
            format!("max relative error {worst:.3e} (tol 1e-5) at {checked} points, {skipped} low-variance points skipped"),
            vec![json_artifact(3, json!({ "checked": checked, "skipped": skipped, "cases": rows }))],
        ))
    })
}

/// The MMSE error-density pipeline against the conjugate Gaussian density
/// and the binary closed form, plus normalization of every density.
pub fn criterion_4() -> CriterionReport {
    wrap(4, || {
        let noise = NoiseSpec::gaussian();
        let mut rows = Vec::new();
        let (mut worst, mut worst_norm) = (0f64, 0f64);
        let gauss: PriorSpec<f64> = ContinuousPrior::gaussian(0.0, 1.0)?.into();
        for sigma in [0.5, 1.0] {
            let d = ErrorDensity::mmse(&gauss, &noise, sigma)?;
            let v = sigma * sigma / (1.0 + sigma * sigma);
            let sd = v.sqrt();
            let mut err = 0f64;
            for w in linspace(-6.0 * sd, 6.0 * sd, 512) {
                let exact = (-w * w / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
                err = err.max((d.query(w)? - exact).abs());
            }
            let norm = (d.normalization() - 1.0).abs();
            worst = worst.max(err);
            worst_norm = worst_norm.max(norm);
            rows.push(json!({"case": "gaussian", "sigma": sigma, "max_abs_error": err, "normalization_error": norm}));
        }
        for p in [0.3, 0.5] {
            for sigma in [0.4, 1.0] {
                let prior: PriorSpec<f64> = DiscretePrior::binary(p)?.into();
                let d = ErrorDensity::mmse(&prior, &noise, sigma)?.normalized();
                let closed = ErrorDensity::closed_form_binary(p, sigma)?;
                let edge = 2.0 / sigma;
                let grid: Vec<f64> = linspace(-edge, edge, 514)[1..513].to_vec();
                let mut err = 0f64;
                for &e in &grid {
                    err = err.max((d.query(e)? - closed_form_binary(e, p, sigma)).abs());
                }
                let norm = (d.normalization() - 1.0).abs().max((closed.normalization() - 1.0).abs());
                worst = worst.max(err);
                worst_norm = worst_norm.max(norm);
                rows.push(json!({"case": "binary", "p": p, "sigma": sigma, "max_abs_error": err, "normalization_error": norm}));
            }
        }
        let passed = worst <= 1e-6 && worst_norm <= 1e-4;
        Ok(finish(
            4,
            passed,
            format!("max abs error {worst:.3e} (tol 1e-6), max normalization error {worst_norm:.3e} (tol 1e-4)"),
            vec![json_artifact(4, json!({ "cases": rows }))],
        ))
    })
}

/// KS distance between seeded error samples and the analytic CDF for every
/// density scenario of the registry.
pub fn criterion_5(profile: Profile) -> CriterionReport {
    wrap(5, || {
        let n = profile.oracle_samples();
        let mut rows = Vec::new();
        let mut artifacts = Vec::new();
        let mut worst = 0f64;
        for (i, sc) in density_scenarios().into_iter().enumerate() {
            let (check, csv) = oracle_check(&sc.prior_spec()?, &sc.noise_spec()?, sc.sigma, n, 500 + i as u64)?;
            worst = worst.max(check.ks);
            rows.push(json!({"scenario": sc.name, "check": check}));
            artifacts.push(Artifact { path: format!("criterion-05-{}.csv", sc.name), contents: csv });
        }
        artifacts.insert(0, json_artifact(5, json!({ "n": n, "tolerance": 0.005, "scenarios": rows })));
        Ok(finish(5, worst < 0.005, format!("max KS distance {worst:.4} at n = {n} over 6 scenarios (tol 0.005)"), artifacts))
    })
}

/// Normalized densities of the symmetric binary model, emitted through the
/// runner: nonnegative, symmetric, supported in `(-2/sigma, 2/sigma)`,
/// integrating to one.
pub fn criterion_6() -> CriterionReport {
    wrap(6, || {
        let sigmas = [0.3, 0.5, 1.0];
        let config = ExperimentConfig::parse(
            &json!({
                "version": 1,
                "scenarios": [{
                    "name": "binary-symmetric",
                    "prior": {"type": "binary", "p": 0.5},
                    "job": "normalized_density",
                    "sigma_grid": sigmas,
                    "mode": "closed_form_binary",
                    "tolerance": 1e-4
                }]
            })
            .to_string(),
        )?;
        let (summary, artifacts) = run_in_memory(&config, RunOptions::default());
        let mut passed = summary.exit_code() == 0;
        let mut notes = Vec::new();
        let (mut asym, mut min_f, mut norm_err) = (0f64, f64::INFINITY, 0f64);
        for &sigma in &sigmas {
            let d = ErrorDensity::closed_form_binary(0.5, sigma)?.normalized();
            let path = format!("binary-symmetric_sigma{sigma}.csv");
            let art = artifacts.iter().find(|a| a.path == path).ok_or_else(|| Error::Io(format!("missing {path}")))?;
            let edge = 2.0 / sigma;
            for line in art.contents.lines().skip(1) {
                let (e, f) = line.split_once(',').ok_or_else(|| Error::Io("bad csv".into()))?;
                let (e, f): (f64, f64) = (e.parse().map_err(|_| Error::Io("bad csv".into()))?, f.parse().map_err(|_| Error::Io("bad csv".into()))?);
                min_f = min_f.min(f);
                asym = asym.max((f - d.query(-e)?).abs());
                if f != 0.0 && !(e > -edge && e < edge) {
                    passed = false;
                    notes.push(format!("nonzero density {f} at {e} outside the support"));
                }
            }
            let (lo, hi) = d.support_hint();
            if lo < -edge || hi > edge {
                passed = false;
                notes.push(format!("support ({lo}, {hi}) exceeds (-{edge}, {edge})"));
            }
            norm_err = norm_err.max((d.normalization() - 1.0).abs());
        }
        passed &= min_f >= 0.0 && asym <= 1e-10 && norm_err <= 1e-4;
        let detail = format!(
            "min density {min_f:.3e}, max asymmetry {asym:.3e} (tol 1e-10), max normalization error {norm_err:.3e} (tol 1e-4){}",
            if notes.is_empty() { String::new() } else { format!("; {}", notes.join("; ")) }
        );
        let mut out = vec![json_artifact(6, json!({ "asymmetry": asym, "min_density": min_f, "normalization_error": norm_err }))];
        out.extend(artifacts.into_iter().filter(|a| a.path.ends_with(".csv")).map(|a| Artifact {
            path: format!("criterion-06-{}", a.path),
            contents: a.contents,
        }));
        Ok(finish(6, passed, detail, out))
    })
}

/// Per-row maxima of terminal deviations over the calibration paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub version: u32,
    pub seed_base: u64,
    pub paths: usize,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub grid_points: usize,
    pub rows: Vec<CalibratedRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedRow {
    pub row: LimitRow,
    pub scenario: String,
    pub max_terminal_deviation: f64,
}

impl Calibration {
    pub fn load() -> Result<Self> {
        serde_json::from_str(CALIBRATION_JSON).map_err(|e| Error::Config(format!("calibration file: {e}")))
    }

    pub fn bound(&self, row: LimitRow) -> Option<f64> {
        self.rows.iter().find(|r| r.row == row).map(|r| r.max_terminal_deviation)
    }

    /// Sweeps the calibration paths of every row.
    pub fn generate() -> Result<Self> {
        let grid = default_grid::<f64>();
        let seeds: Vec<u64> = (0..CALIBRATION_PATHS as u64).map(|i| CALIBRATION_SEED_BASE + i).collect();
        let mut rows = Vec::new();
        for (row, sc) in limit_row_scenarios() {
            let reports = sweep_paths(&sc.prior_spec()?, &sc.noise_spec()?, &grid, &seeds)?;
            let mut max = 0f64;
            for r in &reports {
                let d = r.terminal_deviation().ok_or_else(|| Error::NoPrediction(format!("calibration path {}", r.path.seed)))?;
                max = max.max(d);
            }
            rows.push(CalibratedRow { row, scenario: sc.name, max_terminal_deviation: max });
        }
        Ok(Calibration {
            version: 1,
            seed_base: CALIBRATION_SEED_BASE,
            paths: CALIBRATION_PATHS,
            sigma_max: grid[0],
            sigma_min: grid[grid.len() - 1],
            grid_points: grid.len(),
            rows,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }
}

/// Seeded sweeps for each limit row: terminal deviations within twice the
/// calibrated value, nonincreasing deviations over the final decade, and
/// exact agreement on the conjugate Gaussian row.
pub fn criterion_7(profile: Profile) -> CriterionReport {
    wrap(7, || {
        let calibration = Calibration::load()?;
        let grid = default_grid::<f64>();
        let seeds: Vec<u64> = (0..profile.paths() as u64).collect();
        let mut passed = true;
        let mut parts = Vec::new();
        let mut rows = Vec::new();
        let mut csv = String::from("row,seed,terminal_deviation,final_decade_violations\n");
        for (row, sc) in limit_row_scenarios() {
            let prior = sc.prior_spec()?;
            let noise = sc.noise_spec()?;
            let bound = 2.0 * calibration.bound(row).ok_or_else(|| Error::Config(format!("no calibration for {row:?}")))?;
            let reports = sweep_paths(&prior, &noise, &grid, &seeds)?;
            let mut over = Vec::new();
            let mut nonmono = Vec::new();
            let mut max_dev = 0f64;
            let mut exact_err = 0f64;
            for r in &reports {
                if r.limit_row != Some(row) {
                    return Err(Error::NoPrediction(format!("{} predicted {:?}, expected {row:?}", sc.name, r.limit_row)));
                }
                let d = r.terminal_deviation().unwrap_or(f64::INFINITY);
                max_dev = max_dev.max(d);
                if !(d <= bound) {
                    over.push(r.path.seed);
                }
                let viol = r.final_decade_violations();
                if viol.as_ref().is_none_or(|v| !v.is_empty()) {
                    nonmono.push(r.path.seed);
                }
                writeln!(
                    csv,
                    "{},{},{},{}",
                    row.name(),
                    r.path.seed,
                    d,
                    viol.map_or("missing".to_string(), |v| v.len().to_string())
                )
                .unwrap();
                if row == LimitRow::BoundedContinuous {
                    for p in &r.points {
                        let s = p.sigma;
                        let exact = (s * r.path.x - r.path.z) / (1.0 + s * s);
                        exact_err = exact_err.max(p.e_value.map_or(f64::INFINITY, |e| (e - exact).abs()));
                    }
                }
            }
            let mut ok = over.is_empty() && nonmono.is_empty();
            if row == LimitRow::BoundedContinuous {
                ok &= exact_err <= 1e-9;
            }
            passed &= ok;
            let mut part = format!(
                "{}: max {max_dev:.3e} <= {bound:.3e} on {}/{} paths, nonincreasing on {}/{}",
                row.name(),
                reports.len() - over.len(),
                reports.len(),
                reports.len() - nonmono.len(),
                reports.len()
            );
            if row == LimitRow::BoundedContinuous {
                let _ = write!(part, ", exact-form error {exact_err:.2e}");
            }
            if !nonmono.is_empty() {
                let _ = write!(part, " (seeds {nonmono:?})");
            }
            parts.push(part);
            rows.push(json!({
                "row": row,
                "scenario": sc.name,
                "bound": bound,
                "max_terminal_deviation": max_dev,
                "paths_over_bound": over,
                "paths_not_nonincreasing": nonmono,
                "gaussian_exact_error": (row == LimitRow::BoundedContinuous).then_some(exact_err),
            }));
        }
        Ok(finish(7, passed, parts.join("; "), vec![
            json_artifact(7, json!({ "paths": seeds.len(), "rows": rows })),
            Artifact { path: "criterion-07-paths.csv".into(), contents: csv },
        ]))
    })
}

/// Decomposition deviations for separated mixtures, and exact zeros for the
/// degenerate weights.
pub fn criterion_8(profile: Profile) -> CriterionReport {
    wrap(8, || {
        let grid = default_grid::<f64>();
        let paths = profile.paths() as u64;
        let mut passed = true;
        let mut parts = Vec::new();
        let mut rows = Vec::new();
        for sc in decomposition_scenarios() {
            let prior = sc.prior_spec()?;
            let noise = sc.noise_spec()?;
            let degenerate = matches!(&sc.prior, PriorConfig::Mixture { weight, .. } if *weight == 0.0 || *weight == 1.0);
            let reports = (0..paths)
                .map(|s| decomposition_check(&RealizationPath::draw(&prior, &noise, s), &prior, &noise, &grid))
                .collect::<Result<Vec<_>>>()?;
            let missing = reports.iter().flat_map(|r| &r.deviations).filter(|d| d.is_none()).count();
            let max_terminal = reports.iter().filter_map(|r| r.terminal_deviation()).fold(0f64, f64::max);
            let max_any = reports.iter().flat_map(|r| r.deviations.iter().flatten()).fold(0f64, |m, d| m.max(*d));
            let ok = missing == 0 && if degenerate { max_any == 0.0 } else { max_terminal < 1e-3 };
            passed &= ok;
            parts.push(if degenerate {
                format!("{}: max deviation {max_any:e} (must be 0)", sc.name)
            } else {
                format!("{}: max terminal {max_terminal:.3e} (tol 1e-3)", sc.name)
            });
            rows.push(json!({"scenario": sc.name, "max_terminal": max_terminal, "max_any": max_any, "missing": missing}));
        }
        Ok(finish(8, passed, parts.join("; "), vec![json_artifact(8, json!({ "paths": paths, "scenarios": rows }))]))
    })
}

/// Second moment of the normalized error at `sigma = 1e-2` against
/// `weight * Var(Z)`, by quadrature and by Monte Carlo.
pub fn criterion_9(profile: Profile) -> CriterionReport {
    wrap(9, || {
        let n = profile.oracle_samples();
        let mut passed = true;
        let mut parts = Vec::new();
        let mut rows = Vec::new();
        for (i, (alpha, sc)) in mmse_scenarios().into_iter().enumerate() {
            let c = mmse_check(&sc.prior_spec()?, &sc.noise_spec()?, sc.sigma, n, 900 + i as u64, 0.05)?;
            passed &= c.within_relative && c.methods_agree;
            parts.push(format!(
                "weight {alpha}: target {}, quadrature {:.5}, MC {:.5} +- {:.1e}{}{}",
                c.target,
                c.quadrature,
                c.monte_carlo,
                c.standard_error,
                if c.within_relative { "" } else { " OFF TARGET" },
                if c.methods_agree { "" } else { " METHODS DISAGREE" }
            ));
            rows.push(json!({"scenario": sc.name, "weight": alpha, "check": c}));
        }
        Ok(finish(9, passed, parts.join("; "), vec![json_artifact(9, json!({ "n": n, "scenarios": rows }))]))
    })
}

/// Artifacts of criteria 1-9, then the suite summary.
pub fn selftest_artifacts(reports: &[CriterionReport]) -> Vec<Artifact> {
    let mut out: Vec<Artifact> = reports.iter().flat_map(|r| r.artifacts.clone()).collect();
    let summary: Vec<_> = reports
        .iter()
        .map(|r| json!({"criterion": r.id, "title": r.title, "status": if r.passed { "pass" } else { "fail" }, "detail": r.detail}))
        .collect();
    let mut contents = serde_json::to_string_pretty(&json!({ "version": 1, "criteria": summary })).expect("json");
    contents.push('\n');
    out.push(Artifact { path: "selftest.json".into(), contents });
    out
}

/// Criteria 1-9 in order.
pub fn run_numeric(profile: Profile) -> Vec<CriterionReport> {
    vec![
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(profile),
        criterion_6(),
        criterion_7(profile),
        criterion_8(profile),
        criterion_9(profile),
    ]
}

/// Runs the self-test artifact generation on pools of 1 and 8 threads and
/// compares the bytes.
pub fn criterion_10(profile: Profile) -> CriterionReport {
    wrap(10, || {
        let produce = |threads: usize| -> Result<Vec<Artifact>> {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Io(e.to_string()))?;
            Ok(pool.install(|| selftest_artifacts(&run_numeric(profile))))
        };
        let one = produce(1)?;
        let eight = produce(8)?;
        let differing: Vec<String> = one
            .iter()
            .zip(&eight)
            .filter(|(a, b)| a != b)
            .map(|(a, _)| a.path.clone())
            .collect();
        let passed = one.len() == eight.len() && differing.is_empty();
        let bytes: usize = one.iter().map(|a| a.contents.len()).sum();
        let detail = if passed {
            format!("{} artifacts ({bytes} bytes) identical with 1 and 8 threads", one.len())
        } else {
            format!("artifacts differ: {differing:?} ({} vs {} files)", one.len(), eight.len())
        };
        Ok(finish(10, passed, detail, Vec::new()))
    })
}
