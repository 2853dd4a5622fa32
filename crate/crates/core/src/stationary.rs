//! Exact analysis of arbitrary stationary strategies: the embedded
//! controlled chain, the fixed-policy Poisson equation, exact values of
//! both long-run functionals, and the exhaustive enumeration oracle.
//!
//! One controlled step from y: draw z ~ P_h(y,·); if z stays in the
//! continuation set nothing happens, otherwise the controller pays
//! (1/h)·c(z, ψ(z)) and the chain restarts at ψ(z). Marginalizing the
//! two stages gives the effective kernel and the per-step expected
//! impulse cost used everywhere below.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discount::PhiSequence;
use crate::error::{Error, Result};
use crate::model::ControlProblem;
use crate::numeric::{mid_range, Matrix};
use crate::process::{doeblin_of_matrix, stationary_of_matrix};
use crate::strategy::StationaryStrategy;

/// Enumeration guard for the brute-force oracle.
pub const MAX_ORACLE_STATES: usize = 12;
pub const MAX_ORACLE_TARGETS: usize = 6;

/// The embedded post-impulse chain of a stationary strategy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlledChain {
    pub strategy: StationaryStrategy,
    /// Marginalized one-step kernel; every row lands inside D.
    pub kernel_eff: Matrix,
    /// Expected impulse cost charged during one step from each state.
    pub impulse_cost_rate: Vec<f64>,
}

impl ControlledChain {
    /// Doeblin coefficient of the chain restricted to the continuation set.
    pub fn doeblin_on_continuation(&self) -> f64 {
        doeblin_of_matrix(&self.kernel_eff, Some(&self.strategy.continuation_states()))
    }

    /// Stationary law of the restricted chain, zero outside D.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        stationary_of_matrix(&self.kernel_eff, Some(&self.strategy.continuation_states()))
    }
}

/// Column index of each state inside the impulse-target list.
fn target_columns(problem: &ControlProblem) -> Vec<Option<usize>> {
    let mut cols = vec![None; problem.n()];
    for (j, &xi) in problem.targets().iter().enumerate() {
        cols[xi] = Some(j);
    }
    cols
}

/// Shift cost (1/h)·c(z, ψ(z)) for an intervention state z.
fn exit_cost(problem: &ControlProblem, cols: &[Option<usize>], strategy: &StationaryStrategy, z: usize) -> Result<f64> {
    let target = strategy.shift_target(z).ok_or(Error::Invalid(format!("state {z} has no shift target")))?;
    let j = cols[target].ok_or(Error::StrategyInvalid { state: z, target })?;
    Ok(problem.costs().shift(z, j) / problem.h())
}

/// Marginalizes the two-stage controlled step into `kernel_eff` and
/// `impulse_cost_rate`.
pub fn build_controlled_chain(strategy: &StationaryStrategy, problem: &ControlProblem) -> Result<ControlledChain> {
    strategy.validate(problem.states())?;
    let n = problem.n();
    let cols = target_columns(problem);
    let mut kernel_eff = Matrix::zeros(n, n);
    let mut impulse_cost_rate = vec![0.0; n];
    for y in 0..n {
        let row = problem.kernel().row(y);
        for z in 0..n {
            let p = row[z];
            if p == 0.0 {
                continue;
            }
            if strategy.is_continuation(z) {
                kernel_eff[(y, z)] += p;
            } else {
                kernel_eff[(y, strategy.resolve(z))] += p;
                impulse_cost_rate[y] += p * exit_cost(problem, &cols, strategy, z)?;
            }
        }
    }
    Ok(ControlledChain { strategy: strategy.clone(), kernel_eff, impulse_cost_rate })
}

/// Solution of the fixed-policy Poisson equation: on D,
/// w(x) = g(x) − λ + E_x[w(X_h)] with w extended to Dᶜ by
/// w(x) = (1/h)c(x,ψ(x)) + w(ψ(x)).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoissonSolution {
    pub w: Vec<f64>,
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Span-contraction iteration for the Poisson equation of a fixed
/// stationary strategy, gauged at the lowest continuation state.
pub fn solve_poisson(strategy: &StationaryStrategy, problem: &ControlProblem, tol: f64) -> Result<PoissonSolution> {
    let chain = build_controlled_chain(strategy, problem)?;
    let d_states = strategy.continuation_states();
    if d_states.is_empty() {
        return Err(Error::Invalid("continuation set is empty".into()));
    }
    let coeff = chain.doeblin_on_continuation();
    if coeff >= 1.0 {
        return Err(Error::Ergodicity { coefficient: coeff });
    }
    let x_ref = d_states[0];
    let g = &problem.costs().g;
    let threshold = tol * (1.0 - coeff);
    let n = problem.n();
    let cols = target_columns(problem);

    let mut v = vec![0.0; n];
    let mut lambda = 0.0;
    let mut iterations = 0usize;
    let mut converged = false;
    while iterations < 1_000_000 {
        iterations += 1;
        let kv = chain.kernel_eff.mul_vec(&v);
        let u: Vec<f64> = (0..n).map(|x| g[x] + chain.impulse_cost_rate[x] + kv[x]).collect();
        let d_increments: Vec<f64> = d_states.iter().map(|&x| u[x] - v[x]).collect();
        lambda = mid_range(&d_increments);
        let span_d = crate::numeric::span(&d_increments);
        let offset = u[x_ref];
        v = u.into_iter().map(|x| x - offset).collect();
        if span_d <= threshold {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Convergence { iterations, last_span: f64::NAN });
    }

    // Extend to the intervention region and certify both identities.
    let mut w = v;
    for &x in &strategy.intervention_states() {
        let target = strategy.resolve(x);
        w[x] = exit_cost(problem, &cols, strategy, x)? + w[target];
    }
    let mut residual = poisson_residual(&w, lambda, strategy, problem)?;
    let mut extra = 0usize;
    while residual > tol && extra < 1_000 {
        extra += 1;
        iterations += 1;
        let kv = chain.kernel_eff.mul_vec(&w);
        let u: Vec<f64> = (0..n).map(|x| g[x] + chain.impulse_cost_rate[x] + kv[x]).collect();
        let d_increments: Vec<f64> = d_states.iter().map(|&x| u[x] - w[x]).collect();
        lambda = mid_range(&d_increments);
        let offset = u[x_ref];
        w = u.into_iter().map(|x| x - offset).collect();
        for &x in &strategy.intervention_states() {
            let target = strategy.resolve(x);
            w[x] = exit_cost(problem, &cols, strategy, x)? + w[target];
        }
        residual = poisson_residual(&w, lambda, strategy, problem)?;
    }
    if residual > tol {
        return Err(Error::Convergence { iterations, last_span: residual });
    }
    Ok(PoissonSolution { w, lambda, residual, iterations })
}

/// Max defect of the two Poisson identities at (w, λ).
fn poisson_residual(w: &[f64], lambda: f64, strategy: &StationaryStrategy, problem: &ControlProblem) -> Result<f64> {
    let cols = target_columns(problem);
    let pw = problem.kernel().expect(w);
    let g = &problem.costs().g;
    let mut worst = 0.0f64;
    for x in 0..problem.n() {
        if strategy.is_continuation(x) {
            worst = worst.max((w[x] - (g[x] - lambda + pw[x])).abs());
        } else {
            let target = strategy.resolve(x);
            let rhs = exit_cost(problem, &cols, strategy, x)? + w[target];
            worst = worst.max((w[x] - rhs).abs());
        }
    }
    Ok(worst)
}

/// Exact long-run average of a stationary strategy through the stationary
/// law of its controlled chain: λ_V = π·(g + impulse_cost_rate). The
/// starting state does not enter; it is kept for interface symmetry with
/// the discounted evaluator.
pub fn evaluate_undiscounted_exact(
    strategy: &StationaryStrategy,
    problem: &ControlProblem,
    _x0: usize,
) -> Result<f64> {
    let chain = build_controlled_chain(strategy, problem)?;
    let pi = chain.stationary()?;
    let g = &problem.costs().g;
    Ok(pi
        .iter()
        .enumerate()
        .map(|(y, &p)| p * (g[y] + chain.impulse_cost_rate[y]))
        .sum())
}

/// Exact discounted partial values of a stationary strategy by forward
/// propagation of the state distribution:
///
/// ```text
/// value_n = [ Σ_{i<n} φ(i)·E[g(Y_i)] + Σ_{i≤n} φ(i)·E[impulse cost at i] ]
///           / Σ_{i<n} φ(i),
/// ```
///
/// with impulses resolved on landing in Dᶜ at grid times (left-index
/// weight φ(i), post-impulse state charged the running cost). Returns the
/// value at n = N and the whole curve for convergence diagnostics.
pub fn evaluate_discounted_exact(
    strategy: &StationaryStrategy,
    problem: &ControlProblem,
    phi: &PhiSequence,
    x0: usize,
    n_steps: usize,
) -> Result<(f64, Vec<f64>)> {
    strategy.validate(problem.states())?;
    if x0 >= problem.n() {
        return Err(Error::Domain(format!("start state {x0} out of range")));
    }
    if n_steps == 0 {
        return Err(Error::Domain("need at least one step".into()));
    }
    if phi.len() < n_steps + 1 {
        return Err(Error::PhiTooShort { needed: n_steps + 1, have: phi.len() });
    }
    let n = problem.n();
    let cols = target_columns(problem);
    let g = &problem.costs().g;

    let mut mu = vec![0.0; n];
    mu[x0] = 1.0;
    let resolve_and_charge = |mu: &mut Vec<f64>, weight: f64, problem: &ControlProblem| -> Result<f64> {
        let mut charge = 0.0;
        for z in 0..n {
            if !strategy.is_continuation(z) && mu[z] > 0.0 {
                charge += mu[z] * exit_cost(problem, &cols, strategy, z)?;
                let target = strategy.resolve(z);
                mu[target] += mu[z];
                mu[z] = 0.0;
            }
        }
        Ok(weight * charge)
    };

    let mut numerator = resolve_and_charge(&mut mu, phi.value(0), problem)?;
    let mut denominator = 0.0;
    let mut curve = Vec::with_capacity(n_steps);
    for i in 0..n_steps {
        let running: f64 = mu.iter().zip(g).map(|(m, gg)| m * gg).sum();
        numerator += phi.value(i) * running;
        denominator += phi.value(i);
        mu = problem.kernel().matrix().vec_mul(&mu);
        numerator += resolve_and_charge(&mut mu, phi.value(i + 1), problem)?;
        curve.push(numerator / denominator);
    }
    Ok((*curve.last().expect("n_steps >= 1"), curve))
}

/// Every valid stationary strategy: all continuation sets D with
/// D ∩ U ≠ ∅ whenever Dᶜ ≠ ∅, and all shift maps ψ: Dᶜ → D ∩ U.
fn strategies_for_mask(problem: &ControlProblem, mask: u32) -> Vec<StationaryStrategy> {
    let n = problem.n();
    let full = (1u32 << n) - 1;
    let d_states: Vec<usize> = (0..n).filter(|&x| mask >> x & 1 == 1).collect();
    if mask == full {
        return vec![StationaryStrategy::no_impulse(n)];
    }
    let in_targets: Vec<usize> = problem
        .targets()
        .iter()
        .copied()
        .filter(|&u| mask >> u & 1 == 1)
        .collect();
    if d_states.is_empty() || in_targets.is_empty() {
        return Vec::new();
    }
    let complement: Vec<usize> = (0..n).filter(|&x| mask >> x & 1 == 0).collect();
    let base = in_targets.len();
    let count = base.pow(complement.len() as u32);
    let mut out = Vec::with_capacity(count);
    for code in 0..count {
        let mut digits = code;
        let mut psi = Vec::with_capacity(complement.len());
        // most-significant digit on the lowest intervention state
        for &x in complement.iter().rev() {
            psi.push((x, in_targets[digits % base]));
            digits /= base;
        }
        psi.reverse();
        out.push(
            StationaryStrategy::new(problem.states(), &d_states, &psi)
                .expect("enumerated strategy is valid by construction"),
        );
    }
    out
}

/// Exhaustively enumerates stationary strategies and returns the exact
/// minimizer of the long-run average cost, with lexicographic
/// (continuation mask, shift code) tie-breaking so parallel and serial
/// runs agree bit-for-bit.
pub fn brute_force_optimum(problem: &ControlProblem) -> Result<(f64, StationaryStrategy)> {
    guard(problem)?;
    let n = problem.n();
    let best = (1u32..(1u32 << n) + 1)
        .into_par_iter()
        .map(|mask_plus| -> Result<Option<(f64, u64, StationaryStrategy)>> {
            let mask = mask_plus - 1;
            if mask == 0 {
                return Ok(None);
            }
            let mut best: Option<(f64, u64, StationaryStrategy)> = None;
            for (code, strategy) in strategies_for_mask(problem, mask).into_iter().enumerate() {
                let value = evaluate_undiscounted_exact(&strategy, problem, 0)?;
                let rank = (mask as u64) << 32 | code as u64;
                if best.as_ref().map_or(true, |(bv, br, _)| value < *bv || (value == *bv && rank < *br)) {
                    best = Some((value, rank, strategy));
                }
            }
            Ok(best)
        })
        .try_reduce(
            || None,
            |a, b| {
                Ok(match (a, b) {
                    (None, x) | (x, None) => x,
                    (Some(a), Some(b)) => {
                        if a.0 < b.0 || (a.0 == b.0 && a.1 < b.1) {
                            Some(a)
                        } else {
                            Some(b)
                        }
                    }
                })
            },
        )?;
    let (lambda, _, strategy) = best.ok_or_else(|| Error::Invalid("no valid strategy exists".into()))?;
    Ok((lambda, strategy))
}

/// Full enumeration table (strategy, exact value) in canonical order.
pub fn brute_force_table(problem: &ControlProblem) -> Result<Vec<(StationaryStrategy, f64)>> {
    guard(problem)?;
    let n = problem.n();
    let mut out = Vec::new();
    for mask in 1u32..1u32 << n {
        for strategy in strategies_for_mask(problem, mask) {
            let value = evaluate_undiscounted_exact(&strategy, problem, 0)?;
            out.push((strategy, value));
        }
    }
    Ok(out)
}

fn guard(problem: &ControlProblem) -> Result<()> {
    if problem.n() > MAX_ORACLE_STATES || problem.targets().len() > MAX_ORACLE_TARGETS {
        return Err(Error::SizeGuard {
            n_states: problem.n(),
            n_targets: problem.targets().len(),
            max_states: MAX_ORACLE_STATES,
            max_targets: MAX_ORACLE_TARGETS,
        });
    }
    Ok(())
}
