//! Command-line entry point. Loads a scenario file, applies overrides,
//! runs the selected experiments, and exits 0 only if every executed
//! check passed its stated tolerance.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use impulse_core::experiments::{run, RunReport};
use impulse_core::scenario::{load_scenario, ExperimentKind, Scenario, ScenarioError};

#[derive(Parser)]
#[command(
    name = "impulse",
    about = "Long-run average-cost impulse control under generalised discounting",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a scenario file against the standing assumptions.
    Validate(CommonArgs),
    /// Solve the time-independent Bellman equation and check its drift.
    Solve(CommonArgs),
    /// Solve the time-indexed discounted Bellman equation.
    SolveDiscounted(CommonArgs),
    /// Compare the solver against exhaustive strategy enumeration.
    Oracle(CommonArgs),
    /// Check that discounted and undiscounted optimal values coincide.
    Equivalence(CommonArgs),
    /// Sweep the h-ladder of a generator scenario.
    Refine(CommonArgs),
    /// Monte Carlo estimates of both functionals under the optimal strategy.
    Simulate(CommonArgs),
    /// Run every experiment applicable to the scenario.
    Report(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Scenario file (JSON).
    scenario: PathBuf,

    /// Output directory for report.json and CSV tables.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Override the simulation seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the solver residual tolerance.
    #[arg(long)]
    tol: Option<f64>,

    /// Override the strategy-extraction tie tolerance.
    #[arg(long)]
    tie_tol: Option<f64>,

    /// Override the discounted-solver horizon length.
    #[arg(long)]
    k_horizon: Option<usize>,

    /// Override the number of Monte Carlo paths.
    #[arg(long)]
    paths: Option<usize>,

    /// Override the Monte Carlo horizon (coarse steps).
    #[arg(long)]
    steps: Option<usize>,

    /// Override the sub-grid refinement factor.
    #[arg(long)]
    fine_factor: Option<usize>,

    /// Override the checkpoint grid (comma-separated step counts).
    #[arg(long, value_delimiter = ',')]
    checkpoints: Option<Vec<usize>>,
}

impl CommonArgs {
    fn load(&self) -> Result<Scenario, ScenarioError> {
        let mut scenario = load_scenario(&self.scenario)?;
        if let Some(seed) = self.seed {
            scenario.simulation.seed = seed;
        }
        if let Some(tol) = self.tol {
            scenario.solver.tol = tol;
        }
        if let Some(tie_tol) = self.tie_tol {
            scenario.solver.tie_tol = tie_tol;
        }
        if let Some(k) = self.k_horizon {
            scenario.k_horizon = k;
        }
        if let Some(paths) = self.paths {
            scenario.simulation.n_paths = paths;
        }
        if let Some(steps) = self.steps {
            scenario.simulation.horizon_steps = steps;
        }
        if let Some(f) = self.fine_factor {
            scenario.simulation.fine_factor = f;
        }
        if let Some(cp) = &self.checkpoints {
            scenario.simulation.checkpoint_grid = cp.clone();
        }
        Ok(scenario)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<bool> {
    let (args, kinds): (&CommonArgs, Vec<ExperimentKind>) = match &cli.command {
        Command::Validate(a) => (a, vec![]),
        Command::Solve(a) => (a, vec![ExperimentKind::Solve]),
        Command::SolveDiscounted(a) => (a, vec![ExperimentKind::SolveDiscounted]),
        Command::Oracle(a) => (a, vec![ExperimentKind::Oracle]),
        Command::Equivalence(a) => (a, vec![ExperimentKind::Equivalence]),
        Command::Refine(a) => (a, vec![ExperimentKind::Refine]),
        Command::Simulate(a) => (a, vec![ExperimentKind::Simulate]),
        Command::Report(a) => (a, vec![ExperimentKind::Report]),
    };
    let scenario = args
        .load()
        .with_context(|| format!("failed to load {}", args.scenario.display()))?;

    if matches!(cli.command, Command::Validate(_)) {
        println!(
            "[PASS] validation: scenario '{}' satisfies (A1), (A2), (A4); digest {}",
            scenario.name,
            scenario.digest()
        );
        return Ok(true);
    }

    let report = run(&scenario, &kinds, args.out.as_deref())?;
    print_report(&report);
    if let Some(dir) = &args.out {
        println!("report written to {}", dir.join("report.json").display());
    }
    Ok(report.all_passed())
}

fn print_report(report: &RunReport) {
    println!("scenario '{}' (digest {})", report.scenario, report.input_digest);
    for record in &report.experiments {
        let tag = if record.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] {}: {}", record.id, record.claim);
        match record.id.as_str() {
            "solve" => {
                println!(
                    "       lambda = {}, residual = {:.3e}, iterations = {}, contraction = {:.4}",
                    record.details["lambda"],
                    record.details["residual"].as_f64().unwrap_or(f64::NAN),
                    record.details["iterations"],
                    record.details["contraction_factor"].as_f64().unwrap_or(f64::NAN),
                );
            }
            "solve-discounted" => {
                println!(
                    "       lambda_d(0) = {}, weighted avg = {}, residual = {:.3e}, buffer = {}",
                    record.details["lambda_first"],
                    record.details["lambda_weighted_avg"],
                    record.details["residual"].as_f64().unwrap_or(f64::NAN),
                    record.details["buffer"],
                );
            }
            "oracle" => {
                println!(
                    "       solver lambda = {}, enumeration lambda = {}, gap = {:.3e}",
                    record.details["lambda_solver"],
                    record.details["lambda_enumeration"],
                    record.details["gap"].as_f64().unwrap_or(f64::NAN),
                );
            }
            "equivalence" => {
                println!(
                    "       lambda = {}, weighted-avg gap = {:.3e}, discounted-exact gap = {:.3e}",
                    record.details["lambda"],
                    record.details["weighted_avg_gap"].as_f64().unwrap_or(f64::NAN),
                    record.details["discounted_exact_gap"].as_f64().unwrap_or(f64::NAN),
                );
            }
            "refine" => {
                if let Some(rows) = record.details["rows"].as_array() {
                    for row in rows {
                        println!(
                            "       h = {:<8} lambda = {:<22} gap = {:<12} weighted avg = {}",
                            row["h"],
                            row["lambda"],
                            row["gap_to_previous"]
                                .as_f64()
                                .map_or("-".to_string(), |g| format!("{g:.3e}")),
                            row["lambda_weighted_avg"],
                        );
                    }
                }
            }
            "simulate" => {
                println!(
                    "       undiscounted gap = {:.3e}, discounted gap = {:.3e}",
                    record.details["gap_undiscounted"].as_f64().unwrap_or(f64::NAN),
                    record.details["gap_discounted"].as_f64().unwrap_or(f64::NAN),
                );
            }
            _ => {}
        }
    }
}
