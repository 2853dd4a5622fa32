//! Trajectory simulation of controlled chains, estimating the
//! continuous-time discounted and undiscounted functionals at grid
//! checkpoints.
//!
//! Paths evolve on a fine sub-grid h/f (f = `fine_factor`) to resolve the
//! running-cost integral by left-endpoint Riemann sums; impulse decisions
//! stay restricted to multiples of h. Each path owns an RNG stream
//! derived from (seed, path index) only, so estimates are reproducible
//! and extending `n_paths` never perturbs earlier paths. Across-path
//! reductions use fixed-order pairwise summation, so parallel and serial
//! runs produce bit-identical estimates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discount::{compute_phi, eval_beta, DiscountSpec};
use crate::error::{Error, Result};
use crate::model::ControlProblem;
use crate::numeric::pairwise_sum;
use crate::process::{kernel_from_generator, Generator, Kernel, StateSpace};
use crate::strategy::StationaryStrategy;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_paths: usize,
    pub horizon_steps: usize,
    pub seed: u64,
    /// Coarse-step counts at which the running estimate is recorded;
    /// empty means 20 evenly spaced checkpoints up to the horizon.
    #[serde(default)]
    pub checkpoint_grid: Vec<usize>,
    /// Sub-grid refinement for the running-cost integral.
    #[serde(default = "default_fine_factor")]
    pub fine_factor: usize,
}

fn default_fine_factor() -> usize {
    1
}

impl SimConfig {
    pub fn new(n_paths: usize, horizon_steps: usize, seed: u64) -> Self {
        Self { n_paths, horizon_steps, seed, checkpoint_grid: Vec::new(), fine_factor: 1 }
    }

    pub fn checkpoints(&self) -> Vec<usize> {
        if self.checkpoint_grid.is_empty() {
            let mut grid: Vec<usize> =
                (1..=20).map(|k| self.horizon_steps * k / 20).filter(|&s| s >= 1).collect();
            grid.dedup();
            grid
        } else {
            self.checkpoint_grid.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 || self.horizon_steps == 0 {
            return Err(Error::Domain("need at least one path and one step".into()));
        }
        if self.fine_factor == 0 {
            return Err(Error::Domain("fine factor must be at least 1".into()));
        }
        let grid = self.checkpoints();
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("checkpoints must be strictly increasing".into()));
        }
        if grid.first().is_some_and(|&f| f == 0) || grid.last().is_some_and(|&l| l > self.horizon_steps) {
            return Err(Error::Domain("checkpoints must lie in 1..=horizon".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointStat {
    pub step: usize,
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionalEstimate {
    /// Across-path mean at the final checkpoint.
    pub mean: f64,
    pub std_error: f64,
    pub per_checkpoint: Vec<CheckpointStat>,
    /// Max of checkpoint means over the last quarter of checkpoints, a
    /// conservative finite-horizon stand-in for the limsup.
    pub tail_sup: f64,
}

/// Estimates the undiscounted average-cost functional of a stationary
/// strategy: time-normalized running-cost integral plus raw impulse
/// charges.
pub fn simulate_undiscounted(
    strategy: &StationaryStrategy,
    problem: &ControlProblem,
    cfg: &SimConfig,
    x0: usize,
    fine_kernel: Option<&Kernel>,
) -> Result<FunctionalEstimate> {
    simulate_functional(strategy, problem, &DiscountSpec::Constant, cfg, x0, fine_kernel)
}

/// Estimates the discounted functional: β-weighted running cost and
/// β(τ)-weighted impulse charges, normalized by ∫₀ᵀ β.
pub fn simulate_discounted(
    strategy: &StationaryStrategy,
    problem: &ControlProblem,
    beta: &DiscountSpec,
    cfg: &SimConfig,
    x0: usize,
    fine_kernel: Option<&Kernel>,
) -> Result<FunctionalEstimate> {
    simulate_functional(strategy, problem, beta, cfg, x0, fine_kernel)
}

fn simulate_functional(
    strategy: &StationaryStrategy,
    problem: &ControlProblem,
    beta: &DiscountSpec,
    cfg: &SimConfig,
    x0: usize,
    fine_kernel: Option<&Kernel>,
) -> Result<FunctionalEstimate> {
    cfg.validate()?;
    strategy.validate(problem.states())?;
    if x0 >= problem.n() {
        return Err(Error::Domain(format!("start state {x0} out of range")));
    }
    let h = problem.h();
    let f = cfg.fine_factor;
    let step_kernel = match (f, fine_kernel) {
        (1, None) => problem.kernel().clone(),
        (_, Some(k)) => {
            if k.n_states() != problem.n() {
                return Err(Error::Shape {
                    expected: format!("fine kernel over {} states", problem.n()),
                    got: format!("{}", k.n_states()),
                });
            }
            if (k.h() - h / f as f64).abs() > 1e-9 * h {
                return Err(Error::Invalid(format!(
                    "fine kernel step {} does not equal h/fine_factor = {}",
                    k.h(),
                    h / f as f64
                )));
            }
            k.clone()
        }
        (_, None) => {
            return Err(Error::Invalid(
                "fine_factor > 1 needs a refined kernel; kernel-only dynamics cannot be sub-sampled".into(),
            ))
        }
    };
    let fine_h = h / f as f64;
    let horizon = cfg.horizon_steps;
    let checkpoints = cfg.checkpoints();

    // Shared read-only tables: β on the fine grid and the exact
    // normalizers ∫β = h·Σφ at every coarse index.
    let mut weights = Vec::with_capacity(horizon * f + 1);
    for j in 0..=horizon * f {
        weights.push(eval_beta(beta, j as f64 * fine_h)?);
    }
    let phi = compute_phi(beta, h, horizon)?;
    let norm: Vec<f64> = phi.prefix_sums().iter().map(|s| s * h).collect();

    // Per-impulse charge table (raw c, continuous-time convention).
    let mut exit_charge = vec![0.0; problem.n()];
    for x in 0..problem.n() {
        if let Some(target) = strategy.shift_target(x) {
            let j = problem
                .targets()
                .iter()
                .position(|&u| u == target)
                .ok_or(Error::StrategyInvalid { state: x, target })?;
            exit_charge[x] = problem.costs().shift(x, j);
        }
    }

    let per_path: Vec<Vec<f64>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            run_path(
                strategy,
                problem,
                &step_kernel,
                &weights,
                &norm,
                &exit_charge,
                &checkpoints,
                cfg,
                x0,
                p as u64,
                fine_h,
            )
        })
        .collect();

    let n_paths = cfg.n_paths as f64;
    let mut per_checkpoint = Vec::with_capacity(checkpoints.len());
    let mut scratch = vec![0.0; cfg.n_paths];
    for (ci, &step) in checkpoints.iter().enumerate() {
        for (s, path) in scratch.iter_mut().zip(&per_path) {
            *s = path[ci];
        }
        let mean = pairwise_sum(&scratch) / n_paths;
        let std_error = if cfg.n_paths > 1 {
            let sq: Vec<f64> = scratch.iter().map(|v| (v - mean) * (v - mean)).collect();
            (pairwise_sum(&sq) / (n_paths - 1.0) / n_paths).sqrt()
        } else {
            0.0
        };
        per_checkpoint.push(CheckpointStat { step, mean, std_error });
    }
    let last = per_checkpoint.last().expect("at least one checkpoint");
    let tail_start = per_checkpoint.len() - per_checkpoint.len().div_ceil(4);
    let tail_sup = per_checkpoint[tail_start..]
        .iter()
        .map(|c| c.mean)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(FunctionalEstimate {
        mean: last.mean,
        std_error: last.std_error,
        per_checkpoint,
        tail_sup,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_path(
    strategy: &StationaryStrategy,
    problem: &ControlProblem,
    step_kernel: &Kernel,
    weights: &[f64],
    norm: &[f64],
    exit_charge: &[f64],
    checkpoints: &[usize],
    cfg: &SimConfig,
    x0: usize,
    path_index: u64,
    fine_h: f64,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(path_index);
    let f = cfg.fine_factor;
    let g = &problem.costs().g;
    let total_fine = cfg.horizon_steps * f;

    let mut state = x0;
    let mut accum = 0.0f64;
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next_checkpoint = 0usize;
    let mut j = 0usize;
    loop {
        if j % f == 0 {
            let i = j / f;
            if !strategy.is_continuation(state) {
                accum += weights[j] * exit_charge[state];
                state = strategy.resolve(state);
            }
            if next_checkpoint < checkpoints.len() && checkpoints[next_checkpoint] == i {
                out.push(accum / norm[i]);
                next_checkpoint += 1;
            }
            if j == total_fine {
                break;
            }
        }
        accum += weights[j] * g[state] * fine_h;
        let u: f64 = rng.gen();
        let row = step_kernel.row(state);
        let mut cum = 0.0;
        let mut next = row.len() - 1;
        for (z, &p) in row.iter().enumerate() {
            cum += p;
            if u < cum {
                next = z;
                break;
            }
        }
        state = next;
        j += 1;
    }
    out
}

/// One ladder rung of the refinement experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsilonRow {
    pub h: f64,
    pub lambda: f64,
    pub solver_residual: f64,
    pub undiscounted: FunctionalEstimate,
    pub discounted: FunctionalEstimate,
    pub gap_undiscounted: f64,
    pub gap_discounted: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsilonReport {
    pub rows: Vec<EpsilonRow>,
}

/// For each grid step h in the ladder: solve the undiscounted problem,
/// extract its optimal strategy, and estimate both continuous-time
/// functionals under that strategy. The gap columns |estimate − λ_h|
/// quantify how nearly optimal the discrete strategy is for the
/// continuous-time criteria.
#[allow(clippy::too_many_arguments)]
pub fn epsilon_optimality_report(
    states: &StateSpace,
    generator: &Generator,
    costs: &crate::costs::CostModel,
    beta: &DiscountSpec,
    h_ladder: &[f64],
    cfg: &SimConfig,
    opts: &crate::bellman::SolverOptions,
    x0: usize,
) -> Result<EpsilonReport> {
    if h_ladder.is_empty() {
        return Err(Error::Domain("ladder must be nonempty".into()));
    }
    if h_ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Domain("ladder must be strictly decreasing".into()));
    }
    let mut rows = Vec::with_capacity(h_ladder.len());
    for &h in h_ladder {
        let kernel = kernel_from_generator(generator, h)?;
        let problem = ControlProblem::new(states.clone(), kernel, costs.clone())?;
        let solution = crate::bellman::solve_undiscounted(&problem, opts)?;
        let strategy = crate::bellman::extract_strategy(&solution, &problem, opts.tie_tol)?;
        let fine = if cfg.fine_factor > 1 {
            Some(kernel_from_generator(generator, h / cfg.fine_factor as f64)?)
        } else {
            None
        };
        let undiscounted = simulate_undiscounted(&strategy, &problem, cfg, x0, fine.as_ref())?;
        let discounted = simulate_discounted(&strategy, &problem, beta, cfg, x0, fine.as_ref())?;
        rows.push(EpsilonRow {
            h,
            lambda: solution.lambda,
            solver_residual: solution.residual,
            gap_undiscounted: (undiscounted.mean - solution.lambda).abs(),
            gap_discounted: (discounted.mean - solution.lambda).abs(),
            undiscounted,
            discounted,
        });
    }
    Ok(EpsilonReport { rows })
}
