//! Binds a state space, a one-step kernel, and a cost model into one
//! impulse control problem instance.

use serde::{Deserialize, Serialize};

use crate::costs::{validate_costs, CostModel};
use crate::error::{Error, Result};
use crate::process::{doeblin_coefficient, Kernel, StateSpace};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlProblem {
    states: StateSpace,
    kernel: Kernel,
    costs: CostModel,
}

impl ControlProblem {
    pub fn new(states: StateSpace, kernel: Kernel, costs: CostModel) -> Result<Self> {
        states.validate()?;
        if kernel.n_states() != states.n_states() {
            return Err(Error::Shape {
                expected: format!("kernel over {} states", states.n_states()),
                got: format!("{}", kernel.n_states()),
            });
        }
        let report = validate_costs(&costs, &states)?;
        if !report.passed() {
            return Err(Error::Invalid(format!(
                "cost model violates (A2): {}",
                report.violations.first().map(String::as_str).unwrap_or("unknown")
            )));
        }
        Ok(Self { states, kernel, costs })
    }

    pub fn n(&self) -> usize {
        self.states.n_states()
    }

    pub fn h(&self) -> f64 {
        self.kernel.h()
    }

    pub fn states(&self) -> &StateSpace {
        &self.states
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn costs(&self) -> &CostModel {
        &self.costs
    }

    pub fn targets(&self) -> &[usize] {
        &self.states.impulse_targets
    }

    /// Doeblin coefficient of the one-step kernel (computed on demand).
    pub fn doeblin(&self) -> f64 {
        doeblin_coefficient(&self.kernel)
    }

    /// Upper bound on the span of any relative value function:
    /// (‖g‖_sp + ‖c‖/h) / (1 − Λ_h).
    pub fn span_bound(&self) -> Result<f64> {
        let coeff = self.doeblin();
        if coeff >= 1.0 {
            return Err(Error::Ergodicity { coefficient: coeff });
        }
        Ok((self.costs.g_span() + self.costs.c_max() / self.h()) / (1.0 - coeff))
    }
}
