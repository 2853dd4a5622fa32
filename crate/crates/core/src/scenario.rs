//! Scenario files: one JSON document declaring the state space, dynamics
//! (a kernel at fixed h, or a generator with an h-ladder), costs, discount
//! function, solver tolerances, simulation configuration, and the
//! experiment selection. Loading is total: every violation surfaces as a
//! structured diagnostic naming the violated standing assumption, never a
//! crash.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bellman::SolverOptions;
use crate::costs::{metric_cost, validate_costs, CostModel};
use crate::discount::{validate_discount, DiscountSpec};
use crate::error::Error as CoreError;
use crate::model::ControlProblem;
use crate::montecarlo::SimConfig;
use crate::numeric::Matrix;
use crate::process::{doeblin_coefficient, kernel_from_generator, Generator, Kernel, StateSpace};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("scenario violates ({assumption}) at {location}: {detail}")]
    Semantic { assumption: String, location: String, detail: String },

    #[error(transparent)]
    Core(#[from] CoreError),
}

fn semantic(assumption: &str, location: &str, detail: impl Into<String>) -> ScenarioError {
    ScenarioError::Semantic {
        assumption: assumption.into(),
        location: location.into(),
        detail: detail.into(),
    }
}

/// Experiments runnable on a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Solve,
    SolveDiscounted,
    Oracle,
    Equivalence,
    Refine,
    Simulate,
    /// Everything applicable to the scenario.
    Report,
}

impl ExperimentKind {
    pub fn id(&self) -> &'static str {
        match self {
            ExperimentKind::Solve => "solve",
            ExperimentKind::SolveDiscounted => "solve-discounted",
            ExperimentKind::Oracle => "oracle",
            ExperimentKind::Equivalence => "equivalence",
            ExperimentKind::Refine => "refine",
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Report => "report",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Dynamics {
    Kernel(Kernel),
    Generator { generator: Generator, h_ladder: Vec<f64> },
}

/// A fully validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub states: StateSpace,
    pub dynamics: Dynamics,
    pub costs: CostModel,
    pub discount: DiscountSpec,
    pub solver: SolverOptions,
    pub k_horizon: usize,
    pub simulation: SimConfig,
    pub start_state: usize,
    pub experiments: Vec<ExperimentKind>,
    canonical_json: String,
}

impl Scenario {
    /// Grid step the non-ladder experiments work at: the kernel's own h,
    /// or the finest ladder entry for generator dynamics.
    pub fn working_h(&self) -> f64 {
        match &self.dynamics {
            Dynamics::Kernel(k) => k.h(),
            Dynamics::Generator { h_ladder, .. } => *h_ladder.last().expect("ladder nonempty"),
        }
    }

    /// The working-step control problem.
    pub fn working_problem(&self) -> Result<ControlProblem, CoreError> {
        let kernel = match &self.dynamics {
            Dynamics::Kernel(k) => k.clone(),
            Dynamics::Generator { generator, h_ladder } => {
                kernel_from_generator(generator, *h_ladder.last().expect("ladder nonempty"))?
            }
        };
        ControlProblem::new(self.states.clone(), kernel, self.costs.clone())
    }

    /// SHA-256 of the canonicalized (sorted-key, compact) scenario JSON.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_json.as_bytes());
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

// Wire schema.

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    states: StatesSection,
    dynamics: DynamicsSection,
    costs: CostsSection,
    discount: DiscountSpec,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    simulation: Option<SimConfig>,
    #[serde(default)]
    start_state: Option<usize>,
    #[serde(default)]
    experiments: Option<Vec<ExperimentKind>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StatesSection {
    #[serde(default)]
    labels: Option<Vec<String>>,
    #[serde(default)]
    n_states: Option<usize>,
    #[serde(default)]
    coords: Option<Vec<Vec<f64>>>,
    impulse_targets: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DynamicsSection {
    #[serde(default)]
    kernel: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    h: Option<f64>,
    #[serde(default)]
    generator: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    h_ladder: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostsSection {
    g: Vec<f64>,
    #[serde(default)]
    c: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    metric_cost: Option<MetricCostSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricCostSection {
    h_table: Vec<[f64; 2]>,
    c0: f64,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    #[serde(default)]
    tol: Option<f64>,
    #[serde(default)]
    tie_tol: Option<f64>,
    #[serde(default)]
    max_iterations: Option<usize>,
    #[serde(default)]
    k_horizon: Option<usize>,
}

/// Default horizon length for the discounted solver and the exact
/// discounted evaluations.
pub const DEFAULT_K_HORIZON: usize = 4096;

/// Loads and fully validates a scenario: schema, referential integrity,
/// and the standing assumptions (A1) discount axioms, (A2) cost axioms,
/// (A4) uniform ergodicity. (A3) holds automatically on a finite space.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_scenario_str(&text)
}

/// Same validation pipeline from an in-memory JSON string.
pub fn load_scenario_str(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    // Canonical form: serde_json::Value sorts object keys, so one
    // re-serialization pins the digest independent of formatting.
    let value: serde_json::Value = serde_json::from_str(text).expect("already parsed");
    let canonical_json = serde_json::to_string(&value).expect("value serializes");

    // State space.
    let n = match (&file.states.labels, file.states.n_states) {
        (Some(labels), maybe_n) => {
            if maybe_n.is_some_and(|n| n != labels.len()) {
                return Err(semantic("schema", "states", "n_states disagrees with labels length"));
            }
            labels.len()
        }
        (None, Some(n)) => n,
        (None, None) => return Err(semantic("schema", "states", "need labels or n_states")),
    };
    let states = StateSpace {
        labels: file
            .states
            .labels
            .unwrap_or_else(|| (0..n).map(|i| format!("s{i}")).collect()),
        coords: file.states.coords,
        impulse_targets: file.states.impulse_targets,
    };
    states
        .validate()
        .map_err(|e| semantic("schema", "states", e.to_string()))?;

    // Dynamics: exactly one of kernel / generator.
    let dynamics = match (&file.dynamics.kernel, &file.dynamics.generator) {
        (Some(rows), None) => {
            let h = file
                .dynamics
                .h
                .ok_or_else(|| semantic("schema", "dynamics", "kernel dynamics need \"h\""))?;
            if file.dynamics.h_ladder.is_some() {
                return Err(semantic("schema", "dynamics", "h_ladder belongs to generator dynamics"));
            }
            let kernel = Kernel::from_rows(h, rows)
                .map_err(|e| semantic("A4", "dynamics.kernel", e.to_string()))?;
            if kernel.n_states() != n {
                return Err(semantic(
                    "schema",
                    "dynamics.kernel",
                    format!("kernel size disagrees with the {n}-state space"),
                ));
            }
            Dynamics::Kernel(kernel)
        }
        (None, Some(rows)) => {
            let ladder = file
                .dynamics
                .h_ladder
                .clone()
                .ok_or_else(|| semantic("schema", "dynamics", "generator dynamics need \"h_ladder\""))?;
            if ladder.is_empty() || ladder.iter().any(|&h| !(h > 0.0)) {
                return Err(semantic("schema", "dynamics.h_ladder", "ladder entries must be positive"));
            }
            if ladder.windows(2).any(|w| w[1] >= w[0]) {
                return Err(semantic("schema", "dynamics.h_ladder", "ladder must be strictly decreasing"));
            }
            let generator = Generator::from_rows(rows)
                .map_err(|e| semantic("schema", "dynamics.generator", e.to_string()))?;
            if generator.n_states() != n {
                return Err(semantic(
                    "schema",
                    "dynamics.generator",
                    format!("generator size disagrees with the {n}-state space"),
                ));
            }
            Dynamics::Generator { generator, h_ladder: ladder }
        }
        _ => {
            return Err(semantic(
                "schema",
                "dynamics",
                "exactly one of \"kernel\" and \"generator\" must be present",
            ))
        }
    };

    // Costs: direct matrix or metric construction.
    let costs = match (&file.costs.c, &file.costs.metric_cost) {
        (Some(rows), None) => {
            let c = Matrix::from_rows(rows)
                .ok_or_else(|| semantic("schema", "costs.c", "rows have unequal lengths"))?;
            let model = CostModel { g: file.costs.g.clone(), c, c0: 0.0 };
            let report = validate_costs(&model, &states)
                .map_err(|e| semantic("A2", "costs", e.to_string()))?;
            if let Some(first) = report.violations.first() {
                return Err(semantic("A2", "costs.c", first.clone()));
            }
            CostModel { c0: report.tightest_c0, ..model }
        }
        (None, Some(metric)) => metric_cost(&states, &metric.h_table, metric.c0, file.costs.g.clone())
            .map_err(|e| semantic("A2", "costs.metric_cost", e.to_string()))?,
        _ => {
            return Err(semantic(
                "schema",
                "costs",
                "exactly one of \"c\" and \"metric_cost\" must be present",
            ))
        }
    };

    // Discount axioms (A1) on a sample grid scaled to the working step.
    let h_work = match &dynamics {
        Dynamics::Kernel(k) => k.h(),
        Dynamics::Generator { h_ladder, .. } => *h_ladder.last().expect("nonempty"),
    };
    file.discount
        .validate_basic()
        .map_err(|e| semantic("A1", "discount", e.to_string()))?;
    let grid: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0].iter().map(|m| m * h_work).collect();
    let report = validate_discount(&file.discount, &grid)
        .map_err(|e| semantic("A1", "discount", e.to_string()))?;
    if let Some(fail) = report.failures().next() {
        return Err(semantic("A1", "discount", format!("{}: {}", fail.axiom, fail.detail)));
    }

    // Uniform ergodicity (A4) at the working step.
    let working_kernel = match &dynamics {
        Dynamics::Kernel(k) => k.clone(),
        Dynamics::Generator { generator, .. } => kernel_from_generator(generator, h_work)
            .map_err(|e| semantic("schema", "dynamics.generator", e.to_string()))?,
    };
    let coeff = doeblin_coefficient(&working_kernel);
    if coeff >= 1.0 {
        return Err(semantic(
            "A4",
            "dynamics",
            format!("Doeblin coefficient at h = {h_work} equals {coeff}; the chain is not uniformly ergodic"),
        ));
    }

    // Solver and simulation sections.
    let defaults = SolverOptions::default();
    let solver = SolverOptions {
        tol: file.solver.tol.unwrap_or(defaults.tol),
        tie_tol: file.solver.tie_tol.unwrap_or(defaults.tie_tol),
        max_iterations: file.solver.max_iterations.unwrap_or(defaults.max_iterations),
        x_ref: 0,
    };
    let k_horizon = file.solver.k_horizon.unwrap_or(DEFAULT_K_HORIZON);
    let simulation = file.simulation.unwrap_or_else(|| SimConfig::new(10_000, 10_000, 42));
    simulation
        .validate()
        .map_err(|e| semantic("schema", "simulation", e.to_string()))?;
    if simulation.fine_factor > 1 && matches!(dynamics, Dynamics::Kernel(_)) {
        return Err(semantic(
            "schema",
            "simulation",
            "fine_factor > 1 requires generator dynamics; a bare kernel cannot be sub-sampled",
        ));
    }
    let start_state = file.start_state.unwrap_or(0);
    if start_state >= n {
        return Err(semantic("schema", "start_state", format!("state {start_state} out of range")));
    }

    Ok(Scenario {
        name: file.name,
        states,
        dynamics,
        costs,
        discount: file.discount,
        solver,
        k_horizon,
        simulation,
        start_state,
        experiments: file.experiments.unwrap_or_else(|| vec![ExperimentKind::Report]),
        canonical_json,
    })
}
