//! Declarative experiment runner: a versioned JSON config lists scenarios,
//! each scenario runs one job, and every job yields CSV artifacts plus an
//! entry in a run-level JSON summary.
//!
//! Artifacts are produced in memory first, so their bytes depend on the
//! config alone and not on thread count or scheduling.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::convergence::{
    continuous_weight, decomposition_check, default_grid, geometric_grid, mmse_dimension_estimate, sweep_paths,
    MmseMethod,
};
use crate::dist::{NoiseFamily, NoiseSpec, PriorKind, PriorSpec, RealizationPath};
use crate::error::{Error, Result};
use crate::error_density::{emit_density_curve, DensityMode, ErrorDensity};
use crate::mc_oracle::{effective_range, ks_distance_cdf, simulate_errors, AnalyticCdf};
use crate::posterior::{default_y_range, PosteriorCurve};
use crate::registry::PriorConfig;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Curve,
    Density,
    NormalizedDensity,
    Sweep,
    Decomposition,
    MmseDimension,
    Oracle,
}

impl JobKind {
    pub fn name(self) -> &'static str {
        match self {
            JobKind::Curve => "curve",
            JobKind::Density => "density",
            JobKind::NormalizedDensity => "normalized_density",
            JobKind::Sweep => "sweep",
            JobKind::Decomposition => "decomposition",
            JobKind::MmseDimension => "mmse_dimension",
            JobKind::Oracle => "oracle",
        }
    }
}

/// Either explicit values or `n` geometric points from `max` down to `min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaGrid {
    Values(Vec<f64>),
    Geometric { max: f64, min: f64, n: usize },
}

impl SigmaGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            SigmaGrid::Values(v) => Ok(v.clone()),
            SigmaGrid::Geometric { max, min, n } => geometric_grid(*max, *min, *n),
        }
    }
}

/// Evaluation grid `n` points on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl PointGrid {
    pub fn points(&self) -> Result<Vec<f64>> {
        if self.n < 2 || !(self.hi > self.lo) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::Config(format!("grid needs n >= 2 and finite lo < hi, got {self:?}")));
        }
        Ok(linspace(self.lo, self.hi, self.n))
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
        .collect()
}

fn default_noise() -> NoiseFamily {
    NoiseFamily::Gaussian
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub prior: PriorConfig,
    #[serde(default = "default_noise")]
    pub noise: NoiseFamily,
    pub job: JobKind,
    /// Noise scale for single-scale jobs.
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Several scales (density jobs emit one curve each) or the sweep grid.
    #[serde(default)]
    pub sigma_grid: Option<SigmaGrid>,
    /// File stem of the artifacts; defaults to `name`.
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub seed: u64,
    /// Sample count (oracle, Monte-Carlo second moment) or path count (sweeps).
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub grid: Option<PointGrid>,
    #[serde(default)]
    pub mode: Option<DensityMode>,
    /// Declared tolerance of the job's pass/fail check.
    #[serde(default)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub scenarios: Vec<ScenarioConfig>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {} column {}: {e}", e.line(), e.column())))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!("unsupported version {}, expected {CONFIG_VERSION}", cfg.version)));
        }
        let mut names: Vec<&str> = cfg.scenarios.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate scenario name {:?}", w[0])));
        }
        let mut stems: Vec<String> = cfg.scenarios.iter().map(|s| s.stem().to_string()).collect();
        stems.sort_unstable();
        if let Some(w) = stems.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate output stem {:?}", w[0])));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

impl ScenarioConfig {
    pub fn stem(&self) -> &str {
        self.output.as_deref().unwrap_or(&self.name)
    }

    fn field_err(&self, field: &str, msg: impl std::fmt::Display) -> Error {
        Error::Config(format!("scenario {:?}, field `{field}`: {msg}", self.name))
    }

    fn single_sigma(&self) -> Result<f64> {
        let s = self.sigma.ok_or_else(|| self.field_err("sigma", "required for this job"))?;
        check_sigma_value(s).map_err(|m| self.field_err("sigma", m))?;
        Ok(s)
    }

    /// `sigma_grid` if present, else `[sigma]`.
    fn sigmas(&self) -> Result<Vec<f64>> {
        match (&self.sigma_grid, self.sigma) {
            (Some(g), _) => {
                let v = g.values().map_err(|e| self.field_err("sigma_grid", e))?;
                if v.is_empty() {
                    return Err(self.field_err("sigma_grid", "empty"));
                }
                for &s in &v {
                    check_sigma_value(s).map_err(|m| self.field_err("sigma_grid", m))?;
                }
                Ok(v)
            }
            (None, Some(_)) => Ok(vec![self.single_sigma()?]),
            (None, None) => Err(self.field_err("sigma", "either sigma or sigma_grid is required")),
        }
    }

    fn tolerance_or(&self, default: f64) -> Result<f64> {
        let t = self.tolerance.unwrap_or(default);
        if !(t >= 0.0) || !t.is_finite() {
            return Err(self.field_err("tolerance", format!("must be finite and nonnegative, got {t}")));
        }
        Ok(t)
    }
}

fn check_sigma_value(s: f64) -> std::result::Result<(), String> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(format!("noise scale must be positive and finite, got {s}"))
    }
}

/// A generated file, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub path: String,
    pub contents: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSummary {
    pub name: String,
    pub job: JobKind,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub metrics: Value,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub version: u32,
    pub passed: usize,
    pub failed: usize,
    pub errors: usize,
    pub scenarios: Vec<ScenarioSummary>,
}

impl RunSummary {
    /// 0 when every scenario passed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.failed + self.errors == 0 {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}

/// Run options that apply to every scenario.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub seed_override: Option<u64>,
}

/// Executes every scenario and returns the summary plus all artifacts,
/// `summary.json` last.
pub fn run_in_memory(config: &ExperimentConfig, opts: RunOptions) -> (RunSummary, Vec<Artifact>) {
    let results: Vec<(ScenarioSummary, Vec<Artifact>)> = config
        .scenarios
        .par_iter()
        .map(|sc| {
            let mut sc = sc.clone();
            if let Some(seed) = opts.seed_override {
                sc.seed = seed;
            }
            run_scenario(&sc)
        })
        .collect();
    let mut artifacts = Vec::new();
    let mut scenarios = Vec::new();
    for (summary, arts) in results {
        artifacts.extend(arts);
        scenarios.push(summary);
    }
    let count = |st: Status| scenarios.iter().filter(|s| s.status == st).count();
    let summary = RunSummary {
        version: CONFIG_VERSION,
        passed: count(Status::Pass),
        failed: count(Status::Fail),
        errors: count(Status::Error),
        scenarios,
    };
    artifacts.push(Artifact { path: "summary.json".into(), contents: summary.to_json() });
    (summary, artifacts)
}

/// Writes artifacts below `out_dir`, creating it if needed.
pub fn write_artifacts(out_dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Io(format!("{}: {e}", out_dir.display())))?;
    artifacts
        .iter()
        .map(|a| {
            let p = out_dir.join(&a.path);
            if let Some(parent) = p.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::Io(format!("{}: {e}", parent.display())))?;
            }
            std::fs::write(&p, &a.contents).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            Ok(p)
        })
        .collect()
}

/// Runs `config` and writes its artifacts to `out_dir`.
pub fn run(config: &ExperimentConfig, out_dir: &Path, opts: RunOptions) -> Result<RunSummary> {
    let (summary, artifacts) = run_in_memory(config, opts);
    write_artifacts(out_dir, &artifacts)?;
    Ok(summary)
}

struct JobOutput {
    passed: bool,
    message: Option<String>,
    metrics: Value,
    artifacts: Vec<Artifact>,
}

fn run_scenario(sc: &ScenarioConfig) -> (ScenarioSummary, Vec<Artifact>) {
    let out = execute(sc);
    let (status, message, metrics, artifacts) = match out {
        Ok(o) => (if o.passed { Status::Pass } else { Status::Fail }, o.message, o.metrics, o.artifacts),
        Err(e) => (Status::Error, Some(e.to_string()), json!({}), Vec::new()),
    };
    let summary = ScenarioSummary {
        name: sc.name.clone(),
        job: sc.job,
        status,
        message,
        metrics,
        artifacts: artifacts.iter().map(|a| a.path.clone()).collect(),
    };
    (summary, artifacts)
}

fn execute(sc: &ScenarioConfig) -> Result<JobOutput> {
    let prior = sc.prior.build().map_err(|e| sc.field_err("prior", e))?;
    let noise = NoiseSpec::new(sc.noise).map_err(|e| sc.field_err("noise", e))?;
    match sc.job {
        JobKind::Curve => curve_job(sc, &prior, &noise),
        JobKind::Density | JobKind::NormalizedDensity => density_job(sc, &prior, &noise),
        JobKind::Sweep => sweep_job(sc, &prior, &noise),
        JobKind::Decomposition => decomposition_job(sc, &prior, &noise),
        JobKind::MmseDimension => mmse_job(sc, &prior, &noise),
        JobKind::Oracle => oracle_job(sc, &prior, &noise),
    }
}

/// Shortest round-trip decimal; missing values are empty fields.
fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn sigma_tag(s: f64) -> String {
    format!("sigma{s}")
}

fn require_invertible(sc: &ScenarioConfig, prior: &PriorSpec<f64>) -> Result<()> {
    if prior.is_degenerate() {
        return Err(sc.field_err("prior", "job needs a non-degenerate (invertible) scenario"));
    }
    Ok(())
}

fn curve_job(sc: &ScenarioConfig, prior: &PriorSpec<f64>, noise: &NoiseSpec<f64>) -> Result<JobOutput> {
    let sigma = sc.single_sigma()?;
    let n = sc.grid.map(|g| g.n).unwrap_or(512);
    let range = match sc.grid {
        Some(g) => {
            g.points()?;
            (g.lo, g.hi)
        }
        None => default_y_range(prior, noise, sigma),
    };
    let curve = PosteriorCurve::build(prior, noise, sigma, range, n)?;
    let mut csv = String::from("y,mean,variance,slope\n");
    for p in curve.grid() {
        writeln!(csv, "{},{},{},{}", num(p.y), num(p.mean), num(p.variance), opt(p.slope)).unwrap();
    }
    let cert = curve.certificate();
    let failed = matches!(cert, crate::posterior::Monotonicity::Failed { .. });
    Ok(JobOutput {
        passed: !failed,
        message: failed.then(|| "posterior mean is not monotone on the grid".to_string()),
        metrics: json!({ "sigma": sigma, "points": curve.grid().len(), "certificate": cert }),
        artifacts: vec![Artifact { path: format!("{}.csv", sc.stem()), contents: csv }],
    })
}

fn build_density(
    sc: &ScenarioConfig,
    prior: &PriorSpec<f64>,
    noise: &NoiseSpec<f64>,
    sigma: f64,
) -> Result<ErrorDensity<f64>> {
    let mode = sc.mode.unwrap_or(DensityMode::Mmse);
    match mode {
        DensityMode::Mmse => {
            require_invertible(sc, prior)?;
            ErrorDensity::mmse(prior, noise, sigma)
        }
        DensityMode::GaussianSpecialized => {
            if !noise.is_gaussian() {
                return Err(sc.field_err("mode", "gaussian_specialized needs Gaussian noise"));
            }
            require_invertible(sc, prior)?;
            ErrorDensity::gaussian_specialized(prior, sigma)
        }
        DensityMode::ClosedFormBinary => match (&sc.prior, noise.is_gaussian()) {
            (PriorConfig::Binary { p }, true) => ErrorDensity::closed_form_binary(*p, sigma),
            _ => Err(sc.field_err("mode", "closed_form_binary needs a binary prior and Gaussian noise")),
        },
        DensityMode::ClosedFormGaussian => match (&sc.prior, noise.is_gaussian()) {
            (PriorConfig::Gaussian { mean, std }, true) if *mean == 0.0 => ErrorDensity::closed_form_gaussian(*std, sigma),
            _ => Err(sc.field_err("mode", "closed_form_gaussian needs a centred Gaussian prior and Gaussian noise")),
        },
        DensityMode::GeneralG => Err(sc.field_err("mode", "general_g needs an estimator and is not available from configs")),
    }
}

fn density_job(sc: &ScenarioConfig, prior: &PriorSpec<f64>, noise: &NoiseSpec<f64>) -> Result<JobOutput> {
    let normalized = sc.job == JobKind::NormalizedDensity;
    let tol = sc.tolerance_or(1e-4)?;
    let sigmas = sc.sigmas()?;
    let multi = sigmas.len() > 1;
    let column = if normalized { "e" } else { "w" };
    let mut artifacts = Vec::new();
    let mut per_sigma = Vec::new();
    let mut passed = true;
    for sigma in sigmas {
        let base = build_density(sc, prior, noise, sigma)?;
        let d = if normalized { base.normalized() } else { base };
        let grid = match sc.grid {
            Some(g) => g.points()?,
            None => {
                let (lo, hi) = effective_range(&d)?;
                linspace(lo, hi, 513)
            }
        };
        let curve = emit_density_curve(&d, &grid)?;
        let mut csv = format!("{column},density\n");
        for (w, f) in &curve {
            writeln!(csv, "{},{}", num(*w), num(*f)).unwrap();
        }
        let deficit = (d.normalization() - 1.0).abs();
        passed &= deficit <= tol;
        let path = if multi { format!("{}_{}.csv", sc.stem(), sigma_tag(sigma)) } else { format!("{}.csv", sc.stem()) };
        per_sigma.push(json!({
            "sigma": sigma,
            "normalization": d.normalization(),
            "min_density": curve.iter().map(|c| c.1).fold(f64::INFINITY, f64::min),
            "support": [d.support_hint().0, d.support_hint().1],
            "file": path,
        }));
        artifacts.push(Artifact { path, contents: csv });
    }
    Ok(JobOutput {
        passed,
        message: (!passed).then(|| format!("normalization off by more than {tol}")),
        metrics: json!({ "mode": sc.mode.unwrap_or(DensityMode::Mmse), "tolerance": tol, "curves": per_sigma }),
        artifacts,
    })
}

fn sweep_grid(sc: &ScenarioConfig) -> Result<Vec<f64>> {
    match &sc.sigma_grid {
        Some(g) => g.values().map_err(|e| sc.field_err("sigma_grid", e)),
        None => Ok(default_grid()),
    }
}

fn sweep_job(sc: &ScenarioConfig, prior: &PriorSpec<f64>, noise: &NoiseSpec<f64>) -> Result<JobOutput> {
    let grid = sweep_grid(sc)?;
    let paths = sc.n.unwrap_or(16);
    let seeds: Vec<u64> = (0..paths as u64).map(|i| sc.seed.wrapping_add(i)).collect();
    let reports = sweep_paths(prior, noise, &grid, &seeds)?;
    let mut csv = String::from("seed,sigma,e_value,predicted_limit,deviation\n");
    for r in &reports {
        for (p, d) in r.points.iter().zip(r.deviations()) {
            writeln!(csv, "{},{},{},{},{}", r.path.seed, num(p.sigma), opt(p.e_value), opt(r.predicted_limit), opt(d))
                .unwrap();
        }
    }
    let failures: usize = reports.iter().map(|r| r.failures()).sum();
    let max_terminal = reports.iter().filter_map(|r| r.terminal_deviation()).fold(None, |m: Option<f64>, d| {
        Some(m.map_or(d, |m| m.max(d)))
    });
    let nonincreasing = reports.iter().filter(|r| r.final_decade_nonincreasing()).count();
    let row = reports.first().and_then(|r| r.limit_row);
    let no_prediction = reports.first().and_then(|r| r.no_prediction.clone());
    let mut passed = failures == 0;
    let mut message = (failures > 0).then(|| format!("{failures} grid evaluations failed"));
    if let (Some(tol), Some(m)) = (sc.tolerance, max_terminal) {
        if m > tol {
            passed = false;
            message = Some(format!("max terminal deviation {m} exceeds tolerance {tol}"));
        }
    }
    Ok(JobOutput {
        passed,
        message: message.or(no_prediction.clone().map(|w| format!("no limit prediction: {w}"))),
        metrics: json!({
            "paths": paths,
            "limit_row": row,
            "max_terminal_deviation": max_terminal,
            "final_decade_nonincreasing": nonincreasing,
            "evaluation_failures": failures,
            "tolerance": sc.tolerance,
        }),
        artifacts: vec![Artifact { path: format!("{}.csv", sc.stem()), contents: csv }],
    })
}

fn decomposition_job(sc: &ScenarioConfig, prior: &PriorSpec<f64>, noise: &NoiseSpec<f64>) -> Result<JobOutput> {
    if prior.kind() != PriorKind::Mixture {
        return Err(sc.field_err("prior", "decomposition needs a mixture prior"));
    }
    let tol = sc.tolerance_or(1e-3)?;
    let grid = sweep_grid(sc)?;
    let paths = sc.n.unwrap_or(16);
    let reports: Vec<_> = (0..paths as u64)
        .into_par_iter()
        .map(|i| {
            let path = RealizationPath::draw(prior, noise, sc.seed.wrapping_add(i));
            decomposition_check(&path, prior, noise, &grid)
        })
        .collect::<Result<_>>()?;
    let mut csv = String::from("seed,component,sigma,deviation\n");
    for r in &reports {
        let u = r.path.component.map(|c| c.index().to_string()).unwrap_or_default();
        for (s, d) in r.sigma_grid.iter().zip(&r.deviations) {
            writeln!(csv, "{},{},{},{}", r.path.seed, u, num(*s), opt(*d)).unwrap();
        }
    }
    let failures = reports.iter().flat_map(|r| &r.deviations).filter(|d| d.is_none()).count();
    let max_terminal = reports.iter().filter_map(|r| r.terminal_deviation()).fold(0.0, f64::max);
    let passed = failures == 0 && max_terminal < tol;
    Ok(JobOutput {
        passed,
        message: (!passed).then(|| format!("max terminal deviation {max_terminal}, {failures} failed evaluations")),
        metrics: json!({
            "paths": paths,
            "max_terminal_deviation": max_terminal,
            "tail_nonincreasing": reports.iter().filter(|r| r.tail_nonincreasing()).count(),
            "evaluation_failures": failures,
            "tolerance": tol,
        }),
        artifacts: vec![Artifact { path: format!("{}.csv", sc.stem()), contents: csv }],
    })
}

/// Quadrature and Monte-Carlo estimates of `E[E^2]` at one scale, with the
/// expected `weight * Var(Z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MmseCheck {
    pub sigma: f64,
    pub target: f64,
    pub quadrature: f64,
    pub monte_carlo: f64,
    pub standard_error: f64,
    pub within_relative: bool,
    pub methods_agree: bool,
}

/// Both estimates against `continuous weight * Var(Z)`. The relative
/// tolerance is taken against `Var(Z)` when the target is zero.
pub fn mmse_check(
    prior: &PriorSpec<f64>,
    noise: &NoiseSpec<f64>,
    sigma: f64,
    n: usize,
    seed: u64,
    rel_tol: f64,
) -> Result<MmseCheck> {
    let var_z = noise.variance()?;
    let target = continuous_weight(prior) * var_z;
    let q = mmse_dimension_estimate(prior, noise, sigma, MmseMethod::Quadrature, 0, seed)?;
    let mc = mmse_dimension_estimate(prior, noise, sigma, MmseMethod::MonteCarlo, n, seed)?;
    let se = mc.standard_error.unwrap_or(0.0);
    let scale = if target != 0.0 { target.abs() } else { var_z };
    let within = [q.value, mc.value].iter().all(|v| (v - target).abs() <= rel_tol * scale);
    Ok(MmseCheck {
        sigma,
        target,
        quadrature: q.value,
        monte_carlo: mc.value,
        standard_error: se,
        within_relative: within,
        methods_agree: (q.value - mc.value).abs() <= 3.0 * se + 1e-12,
    })
}

fn mmse_job(sc: &ScenarioConfig, prior: &PriorSpec<f64>, noise: &NoiseSpec<f64>) -> Result<JobOutput> {
    let tol = sc.tolerance_or(0.05)?;
    let n = sc.n.unwrap_or(100_000);
    let sigmas = sc.sigmas()?;
    let checks: Vec<MmseCheck> = sigmas.iter().map(|&s| mmse_check(prior, noise, s, n, sc.seed, tol)).collect::<Result<_>>()?;
    let mut csv = String::from("sigma,target,quadrature,monte_carlo,standard_error\n");
    for c in &checks {
        writeln!(
            csv,
            "{},{},{},{},{}",
            num(c.sigma),
            num(c.target),
            num(c.quadrature),
            num(c.monte_carlo),
            num(c.standard_error)
        )
        .unwrap();
    }
    let passed = checks.iter().all(|c| c.within_relative && c.methods_agree);
    Ok(JobOutput {
        passed,
        message: (!passed).then(|| "second moment off target or methods disagree".to_string()),
        metrics: json!({ "tolerance": tol, "n": n, "checks": checks }),
        artifacts: vec![Artifact { path: format!("{}.csv", sc.stem()), contents: csv }],
    })
}

/// KS distance of `n` seeded error draws against the analytic MMSE error CDF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleCheck {
    pub sigma: f64,
    pub n: usize,
    pub seed: u64,
    pub ks: f64,
    pub cdf_total: f64,
    pub normalization: f64,
    pub sample_mean: f64,
    pub sample_standard_error: f64,
}

/// Runs the oracle and returns the check with a histogram CSV.
pub fn oracle_check(
    prior: &PriorSpec<f64>,
    noise: &NoiseSpec<f64>,
    sigma: f64,
    n: usize,
    seed: u64,
) -> Result<(OracleCheck, String)> {
    if prior.is_degenerate() {
        return Err(Error::InvalidPrior("oracle needs a non-degenerate prior".into()));
    }
    let density = Arc::new(ErrorDensity::mmse(prior, noise, sigma)?);
    if (density.normalization() - 1.0).abs() > 1e-4 {
        return Err(Error::InvalidArgument(format!(
            "analytic density integrates to {}, outside 1e-4 of 1",
            density.normalization()
        )));
    }
    let cdf = AnalyticCdf::new(&density)?;
    let emp = simulate_errors(prior, noise, sigma, n, seed)?;
    let ks = ks_distance_cdf(&emp, &cdf);
    let (lo, hi) = effective_range(&density)?;
    let hist = emp.histogram(200, lo, hi);
    let centres: Vec<f64> = hist.iter().map(|h| h.0).collect();
    let analytic = emit_density_curve(&density, &centres)?;
    let mut csv = String::from("w,empirical_density,analytic_density\n");
    for ((w, e), (_, a)) in hist.iter().zip(&analytic) {
        writeln!(csv, "{},{},{}", num(*w), num(*e), num(*a)).unwrap();
    }
    let check = OracleCheck {
        sigma,
        n,
        seed,
        ks,
        cdf_total: cdf.total(),
        normalization: density.normalization(),
        sample_mean: emp.mean(),
        sample_standard_error: emp.standard_error(),
    };
    Ok((check, csv))
}

fn oracle_job(sc: &ScenarioConfig, prior: &PriorSpec<f64>, noise: &NoiseSpec<f64>) -> Result<JobOutput> {
    let sigma = sc.single_sigma()?;
    require_invertible(sc, prior)?;
    let tol = sc.tolerance_or(0.005)?;
    let n = sc.n.unwrap_or(100_000);
    let (check, csv) = oracle_check(prior, noise, sigma, n, sc.seed)?;
    let passed = check.ks < tol;
    Ok(JobOutput {
        passed,
        message: (!passed).then(|| format!("KS distance {} not below {tol}", check.ks)),
        metrics: json!({ "tolerance": tol, "check": check }),
        artifacts: vec![Artifact { path: format!("{}.csv", sc.stem()), contents: csv }],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_passes() {
        let cfg = ExperimentConfig::parse(r#"{"version": 1, "scenarios": []}"#).unwrap();
        let (summary, arts) = run_in_memory(&cfg, RunOptions::default());
        assert_eq!(summary.exit_code(), 0);
        assert!(summary.scenarios.is_empty());
        assert_eq!(arts.len(), 1);
        assert_eq!(arts[0].path, "summary.json");
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = ExperimentConfig::parse("{\"version\": 1,\n \"scenarios\": [ {\"name\": 3} ]}").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(ExperimentConfig::parse(r#"{"version": 2}"#).is_err());
        let dup = r#"{"version":1,"scenarios":[
            {"name":"a","prior":{"type":"binary","p":0.5},"job":"curve","sigma":1},
            {"name":"a","prior":{"type":"binary","p":0.5},"job":"curve","sigma":1}]}"#;
        assert!(ExperimentConfig::parse(dup).is_err());
    }

    #[test]
    fn scenario_errors_are_collected() {
        let text = r#"{"version":1,"scenarios":[
            {"name":"bad-sigma","prior":{"type":"binary","p":0.5},"job":"curve","sigma":-1},
            {"name":"point-density","prior":{"type":"point","at":0},"job":"density","sigma":1},
            {"name":"ok","prior":{"type":"binary","p":0.5},"job":"curve","sigma":1,"grid":{"lo":-3,"hi":3,"n":64}}]}"#;
        let cfg = ExperimentConfig::parse(text).unwrap();
        let (summary, arts) = run_in_memory(&cfg, RunOptions::default());
        let st: Vec<Status> = summary.scenarios.iter().map(|s| s.status).collect();
        assert_eq!(st, vec![Status::Error, Status::Error, Status::Pass]);
        assert!(summary.scenarios[0].message.as_ref().unwrap().contains("`sigma`"));
        assert_eq!(summary.exit_code(), 1);
        assert_eq!(arts.iter().map(|a| a.path.as_str()).collect::<Vec<_>>(), vec!["ok.csv", "summary.json"]);
        let csv = &arts[0].contents;
        assert!(csv.starts_with("y,mean,variance,slope\n-3,"));
        assert_eq!(csv.lines().count(), 65);
    }

    #[test]
    fn normalized_density_curves_per_sigma() {
        let text = r#"{"version":1,"scenarios":[
            {"name":"fig","prior":{"type":"binary","p":0.5},"job":"normalized_density",
             "sigma_grid":[0.5,1.0],"mode":"closed_form_binary"}]}"#;
        let cfg = ExperimentConfig::parse(text).unwrap();
        let (summary, arts) = run_in_memory(&cfg, RunOptions::default());
        assert_eq!(summary.exit_code(), 0, "{}", summary.to_json());
        let names: Vec<&str> = arts.iter().map(|a| a.path.as_str()).collect();
        assert_eq!(names, vec!["fig_sigma0.5.csv", "fig_sigma1.csv", "summary.json"]);
        assert!(arts[0].contents.starts_with("e,density\n-4,0\n"));
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, 5e-324] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(opt(None), "");
    }
}
