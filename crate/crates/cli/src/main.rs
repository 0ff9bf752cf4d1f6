//! `errdist`: run experiment configs, list the built-in registry, or run the
//! acceptance self-test.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use errdist::acceptance::{self, Profile};
use errdist::convergence::doob_registry_lookup;
use errdist::dist::{NoiseFamily, NoiseSpec};
use errdist::registry;
use errdist::runner::{self, ExperimentConfig, RunOptions};

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "errdist", version, about = "Bayesian estimation-error densities and small-noise limits")]
struct Cli {
    /// Directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Replace the seed of every scenario.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scenario of a JSON config.
    Run { config: PathBuf },
    /// Print the built-in noises and scenarios.
    ListRegistry {
        #[arg(long)]
        json: bool,
    },
    /// Run the acceptance suite and write its artifacts.
    Selftest {
        /// Reduced sample sizes; skips the determinism criterion.
        #[arg(long)]
        quick: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    match cli.command {
        Command::Run { ref config } => run(&cli, config),
        Command::ListRegistry { json } => list_registry(json),
        Command::Selftest { quick } => selftest(&cli, quick),
    }
}

fn run(cli: &Cli, path: &std::path::Path) -> ExitCode {
    let config = match ExperimentConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let opts = RunOptions { seed_override: cli.seed_override };
    match runner::run(&config, &cli.out_dir, opts) {
        Ok(summary) => {
            for s in &summary.scenarios {
                let status = serde_json::to_value(s.status).unwrap();
                let status = status.as_str().unwrap_or("?");
                match &s.message {
                    Some(m) => println!("{:<6} {} ({}): {m}", status, s.name, s.job.name()),
                    None => println!("{:<6} {} ({})", status, s.name, s.job.name()),
                }
            }
            println!(
                "{} passed, {} failed, {} errors; artifacts in {}",
                summary.passed,
                summary.failed,
                summary.errors,
                cli.out_dir.display()
            );
            ExitCode::from(summary.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn list_registry(as_json: bool) -> ExitCode {
    let mut noises = Vec::new();
    for family in NoiseFamily::registry() {
        let noise = match NoiseSpec::<f64>::new(family) {
            Ok(n) => n,
            Err(e) => {
                eprintln!("error: {family:?}: {e}");
                return ExitCode::from(EXIT_FAIL);
            }
        };
        let doob = doob_registry_lookup(&noise);
        noises.push(json!({
            "name": noise.name(),
            "family": family,
            "flags": noise.flags(),
            "tail_exponent": noise.tail_exponent(),
            "variance": noise.variance().ok(),
            "doob": doob,
        }));
    }
    let scenarios = json!({
        "density": registry::density_scenarios(),
        "limit_rows": registry::limit_row_scenarios().into_iter().map(|(r, s)| json!({"row": r, "scenario": s})).collect::<Vec<_>>(),
        "decomposition": registry::decomposition_scenarios(),
        "overlapping_mixture": registry::overlapping_mixture(),
        "mmse_dimension": registry::mmse_scenarios().into_iter().map(|(w, s)| json!({"weight": w, "scenario": s})).collect::<Vec<_>>(),
    });
    if as_json {
        println!("{}", serde_json::to_string_pretty(&json!({ "noises": noises, "scenarios": scenarios })).unwrap());
        return ExitCode::SUCCESS;
    }
    println!("noises:");
    for n in &noises {
        let f = &n["flags"];
        println!(
            "  {:<14} tail exponent {:<5} log-concave {:<5} doob {:<5} A1 check {}",
            n["name"].as_str().unwrap_or(""),
            n["tail_exponent"].as_f64().map_or("inf".to_string(), |a| a.to_string()),
            f["strictly_log_concave"],
            f["doob"],
            if n["doob"]["a1_numeric_pass"].as_bool() == Some(true) { "pass" } else { "fail" },
        );
    }
    let show = |title: &str, list: Vec<(String, registry::Scenario)>| {
        println!("{title}:");
        for (tag, s) in list {
            let noise = NoiseSpec::<f64>::new(s.noise).map(|n| n.name()).unwrap_or_default();
            println!("  {:<24} {:<34} noise {:<12} sigma {}{}", s.name, s.prior.label(), noise, s.sigma, tag);
        }
    };
    show("density scenarios", registry::density_scenarios().into_iter().map(|s| (String::new(), s)).collect());
    show(
        "limit rows",
        registry::limit_row_scenarios().into_iter().map(|(r, s)| (format!("  [{}]", r.name()), s)).collect(),
    );
    show(
        "decomposition",
        registry::decomposition_scenarios()
            .into_iter()
            .chain([registry::overlapping_mixture()])
            .map(|s| (String::new(), s))
            .collect(),
    );
    show(
        "second moment",
        registry::mmse_scenarios().into_iter().map(|(w, s)| (format!("  [weight {w}]"), s)).collect(),
    );
    ExitCode::SUCCESS
}

fn selftest(cli: &Cli, quick: bool) -> ExitCode {
    let profile = if quick { Profile::Quick } else { Profile::Full };
    let mut reports = Vec::new();
    for r in acceptance::run_numeric(profile) {
        println!("{}", r.line());
        reports.push(r);
    }
    let artifacts = acceptance::selftest_artifacts(&reports);
    if let Err(e) = runner::write_artifacts(&cli.out_dir, &artifacts) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let mut failed = reports.iter().filter(|r| !r.passed).count();
    if !quick {
        let r = acceptance::criterion_10(Profile::Quick);
        println!("{}", r.line());
        failed += usize::from(!r.passed);
    }
    println!("{} artifacts written to {}", artifacts.len(), cli.out_dir.display());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAIL)
    }
}
