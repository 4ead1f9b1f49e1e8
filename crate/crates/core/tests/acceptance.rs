//! Acceptance suite. Runs every primary criterion once on the default
//! configuration and prints one PASS/FAIL line per criterion; the process
//! fails if any criterion does.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use compscore_core::experiments::checks::{self, replication_seeds, CheckOutcome};
use compscore_core::experiments::panels::{run_panel_a, run_panel_b, run_panel_c, write_csv};
use compscore_core::experiments::ExperimentConfig;
use compscore_core::rng::derive_seed;

const CHECK_STREAM: u64 = 8;

struct Criterion {
    label: &'static str,
    outcome: Result<CheckOutcome, String>,
    elapsed: Duration,
    limit: Option<Duration>,
}

impl Criterion {
    fn passed(&self) -> bool {
        let in_time = self.limit.is_none_or(|l| self.elapsed <= l);
        matches!(&self.outcome, Ok(c) if c.passed) && in_time
    }

    fn line(&self) -> String {
        let detail = match &self.outcome {
            Ok(c) => c.detail.clone(),
            Err(e) => format!("error: {e}"),
        };
        let timing = match self.limit {
            Some(l) => format!("{:.1}s, limit {:.0}s", self.elapsed.as_secs_f64(), l.as_secs_f64()),
            None => format!("{:.1}s", self.elapsed.as_secs_f64()),
        };
        format!(
            "{} {:<28} {detail} [{timing}]",
            if self.passed() { "PASS" } else { "FAIL" },
            self.label
        )
    }
}

fn run(
    label: &'static str,
    limit: Option<Duration>,
    f: impl FnOnce() -> compscore_core::Result<CheckOutcome>,
) -> Criterion {
    let start = Instant::now();
    let outcome = f().map_err(|e| e.to_string());
    let c = Criterion {
        label,
        outcome,
        elapsed: start.elapsed(),
        limit,
    };
    println!("{}", c.line());
    c
}

fn all_of(name: &str, parts: Vec<CheckOutcome>) -> CheckOutcome {
    CheckOutcome {
        name: name.to_string(),
        passed: parts.iter().all(|c| c.passed),
        detail: parts
            .iter()
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect::<Vec<_>>()
            .join(" | "),
        dominance: parts.iter().any(|c| c.dominance),
    }
}

fn determinism(cfg: &ExperimentConfig) -> compscore_core::Result<CheckOutcome> {
    let dir = tempfile::tempdir().map_err(|e| compscore_core::Error::Io(e.to_string()))?;
    let paths = [dir.path().join("first.csv"), dir.path().join("second.csv")];
    for p in &paths {
        write_csv(&run_panel_a(cfg)?, p)?;
    }
    let a = std::fs::read(&paths[0])?;
    let b = std::fs::read(&paths[1])?;
    Ok(CheckOutcome {
        name: "determinism".into(),
        passed: a == b && !a.is_empty(),
        detail: format!("two panel-a runs, {} bytes, identical: {}", a.len(), a == b),
        dominance: false,
    })
}

fn main() -> ExitCode {
    let cfg = ExperimentConfig::default();
    let seed = derive_seed(cfg.seed, CHECK_STREAM);
    let seeds = replication_seeds(&cfg, 5);
    let mut results = Vec::new();

    results.push(run("gaussian exactness", None, || checks::gaussian_exactness(seed)));
    results.push(run("gap chain", Some(Duration::from_secs(10)), || {
        checks::wasserstein_precision_chain(seed, 200)
    }));
    results.push(run("aggregation perturbation", None, || checks::lambda_perturbation(seed, 500)));

    let mut panel_c_runs = Vec::new();
    let mut panel_b = Vec::new();
    results.push(run("bound dominance", Some(Duration::from_secs(120)), || {
        let a = run_panel_a(&cfg)?;
        panel_b = run_panel_b(&cfg)?;
        panel_c_runs.push(run_panel_c(&cfg)?);
        Ok(all_of(
            "dominance",
            vec![
                checks::dominance("A", &a),
                checks::dominance("B", &panel_b),
                checks::dominance("C", &panel_c_runs[0]),
            ],
        ))
    }));
    results.push(run("panel B trend", None, || Ok(checks::panel_b_trend(&panel_b, &cfg.time_grid))));
    results.push(run("panel C trend", None, || {
        for &s in &seeds[1..] {
            panel_c_runs.push(run_panel_c(&ExperimentConfig { seed: s, ..cfg.clone() })?);
        }
        Ok(checks::panel_c_trend(&panel_c_runs, &cfg.time_grid))
    }));
    results.push(run("sampler fidelity", None, || checks::sampler_fidelity(&cfg, &seeds)));
    results.push(run("single observation MSE", None, || checks::single_observation_mse(&cfg)));
    results.push(run("double expectation", None, || checks::double_expectation_check(&cfg)));
    results.push(run("score gradients", None, || checks::score_gradients(seed, 100)));
    results.push(run("determinism", None, || determinism(&cfg)));

    let failed = results.iter().filter(|c| !c.passed()).count();
    println!(
        "acceptance: {}/{} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
