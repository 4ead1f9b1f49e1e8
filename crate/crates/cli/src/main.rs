use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use compscore_core::experiments::{
    checks::replication_seeds, run_figure1, run_panel, run_verify, write_csv, ExperimentConfig, SweepRecord,
};
use compscore_core::Error;

/// Worker threads; unset or 0 lets rayon decide.
const THREADS_ENV: &str = "COMPSCORE_THREADS";

#[derive(Parser)]
#[command(name = "compscore", version, about = "Compositional score experiments for Gaussian models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the precision error with exact scores.
    PanelA(PanelArgs),
    /// Sweep the number of observations.
    PanelB(PanelArgs),
    /// Sweep the score error.
    PanelC(PanelArgs),
    /// Sample clouds and posterior grid for the two-dimensional figure.
    Figure1(PanelArgs),
    /// Run the invariant suite.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PanelArgs {
    #[command(flatten)]
    common: Common,
    /// Output CSV, or output directory for figure1.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// Optional file receiving the report table.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seeds for replicated checks.
    #[arg(long, default_value_t = 5)]
    replications: usize,
}

enum Failure {
    Config(String),
    Run(String),
    Verify,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::RequiresDim2(_) => Failure::Config(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn configure_threads() -> Result<(), Failure> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Failure::Config(format!("{THREADS_ENV} must be a nonnegative integer, got {v:?}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Run(e.to_string()))
}

fn summarize(r: &SweepRecord) -> String {
    let bound = match r.theoretical_bound {
        Some(b) if r.admissible => format!("{b:.4e}"),
        _ => "inadmissible".to_string(),
    };
    format!(
        "t={:<5} value={:<8} mse={:.4e} (se {:.1e}) bound={bound} eps={:.4e}",
        r.t, r.sweep_value, r.empirical_mse, r.mse_std_err, r.eps_used
    )
}

fn run_sweep(name: &str, args: &PanelArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.common)?;
    // Catch a mismatched sweep before any work is done.
    cfg.sweep_for(name)?;
    let records = run_panel(name, &cfg)?;
    for r in &records {
        println!("{}", summarize(r));
    }
    write_csv(&records, &args.out)?;
    Ok(())
}

fn run_figure(args: &PanelArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.common)?;
    let data = run_figure1(&cfg)?;
    data.write_dir(&args.out)?;
    println!(
        "n=1: {} samples, n=11: {} samples, grid {} points -> {}",
        data.samples_n1.len(),
        data.samples_n11.len(),
        data.grid.len(),
        args.out.display()
    );
    Ok(())
}

fn write_report(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, format!("{text}\n")).map_err(|e| Failure::Run(format!("cannot write {}: {e}", path.display())))
}

fn run_verify_cmd(args: &VerifyArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.common)?;
    if args.replications == 0 {
        return Err(Failure::Config("--replications must be positive".into()));
    }
    println!(
        "verify: seeds {:?}",
        replication_seeds(&cfg, args.replications)
    );
    let report = run_verify(&cfg, args.replications, |c| println!("{c}"))?;
    let passed = report.checks.iter().filter(|c| c.passed).count();
    println!("{passed}/{} checks passed", report.checks.len());
    if let Some(path) = &args.out {
        write_report(path, &report.to_string())?;
    }
    if report.all_passed() {
        Ok(())
    } else {
        Err(Failure::Verify)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::PanelA(a) => run_sweep("panel-a", a),
        Command::PanelB(a) => run_sweep("panel-b", a),
        Command::PanelC(a) => run_sweep("panel-c", a),
        Command::Figure1(a) => run_figure(a),
        Command::Verify(a) => run_verify_cmd(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Verify) => {
            eprintln!("verify: one or more checks failed");
            ExitCode::from(3)
        }
    }
}
