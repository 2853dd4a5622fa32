//! Stationary Markov impulse strategies: a continuation set D whose exit
//! times are the impulse times, and a shift map ψ: Dᶜ → D ∩ U. The
//! condition ψ(Dᶜ) ⊆ D rules out an impulse triggering another one
//! immediately.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::StateSpace;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "StrategyData", into = "StrategyData")]
pub struct StationaryStrategy {
    /// in_continuation[x] is true when x ∈ D.
    in_continuation: Vec<bool>,
    /// shift[x] = Some(ψ(x)) exactly when x ∉ D.
    shift: Vec<Option<usize>>,
}

/// Wire form: {"D": [states...], "psi": {"state": target, ...}}.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct StrategyData {
    #[serde(rename = "D")]
    continuation: Vec<usize>,
    psi: BTreeMap<String, usize>,
}

impl StationaryStrategy {
    /// Builds and validates against the state space: ψ must be defined
    /// exactly on Dᶜ with image in D ∩ U.
    pub fn new(states: &StateSpace, continuation: &[usize], psi: &[(usize, usize)]) -> Result<Self> {
        let n = states.n_states();
        let mut in_continuation = vec![false; n];
        for &x in continuation {
            if x >= n {
                return Err(Error::Invalid(format!("continuation state {x} out of range")));
            }
            in_continuation[x] = true;
        }
        let mut shift = vec![None; n];
        for &(x, target) in psi {
            if x >= n || target >= n {
                return Err(Error::Invalid(format!("shift pair ({x}, {target}) out of range")));
            }
            if in_continuation[x] {
                return Err(Error::Invalid(format!("shift defined on continuation state {x}")));
            }
            if shift[x].is_some() {
                return Err(Error::Invalid(format!("duplicate shift for state {x}")));
            }
            shift[x] = Some(target);
        }
        let strategy = Self { in_continuation, shift };
        strategy.validate(states)?;
        Ok(strategy)
    }

    /// The never-intervene strategy D = E.
    pub fn no_impulse(n: usize) -> Self {
        Self { in_continuation: vec![true; n], shift: vec![None; n] }
    }

    pub fn validate(&self, states: &StateSpace) -> Result<()> {
        let n = states.n_states();
        if self.in_continuation.len() != n || self.shift.len() != n {
            return Err(Error::Shape {
                expected: format!("strategy over {n} states"),
                got: format!("{}", self.in_continuation.len()),
            });
        }
        for x in 0..n {
            match (self.in_continuation[x], self.shift[x]) {
                (true, Some(t)) => {
                    return Err(Error::Invalid(format!("state {x} is in D but shifts to {t}")));
                }
                (false, None) => {
                    return Err(Error::Invalid(format!("state {x} is outside D but has no shift target")));
                }
                (false, Some(t)) => {
                    if !self.in_continuation[t] || !states.impulse_targets.contains(&t) {
                        return Err(Error::StrategyInvalid { state: x, target: t });
                    }
                }
                (true, None) => {}
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.in_continuation.len()
    }

    pub fn is_continuation(&self, x: usize) -> bool {
        self.in_continuation[x]
    }

    pub fn shift_target(&self, x: usize) -> Option<usize> {
        self.shift[x]
    }

    /// Resolves one landing: continuation states stay put, others shift.
    pub fn resolve(&self, x: usize) -> usize {
        self.shift[x].unwrap_or(x)
    }

    pub fn continuation_states(&self) -> Vec<usize> {
        (0..self.n()).filter(|&x| self.in_continuation[x]).collect()
    }

    pub fn intervention_states(&self) -> Vec<usize> {
        (0..self.n()).filter(|&x| !self.in_continuation[x]).collect()
    }

    pub fn is_no_impulse(&self) -> bool {
        self.in_continuation.iter().all(|&b| b)
    }
}

impl TryFrom<StrategyData> for StationaryStrategy {
    type Error = String;

    fn try_from(data: StrategyData) -> std::result::Result<Self, String> {
        let max_state = data
            .continuation
            .iter()
            .copied()
            .chain(data.psi.keys().filter_map(|k| k.parse::<usize>().ok()))
            .chain(data.psi.values().copied())
            .max()
            .ok_or("empty strategy")?;
        let n = max_state + 1;
        let mut in_continuation = vec![false; n];
        for &x in &data.continuation {
            in_continuation[x] = true;
        }
        let mut shift = vec![None; n];
        for (key, &target) in &data.psi {
            let x: usize = key.parse().map_err(|_| format!("bad state key {key:?}"))?;
            shift[x] = Some(target);
        }
        for x in 0..n {
            if in_continuation[x] == shift[x].is_some() {
                return Err(format!("state {x}: shift map must be defined exactly on the complement of D"));
            }
            if let Some(t) = shift[x] {
                if !in_continuation[t] {
                    return Err(format!("shift target {t} of state {x} lies outside D"));
                }
            }
        }
        Ok(Self { in_continuation, shift })
    }
}

impl From<StationaryStrategy> for StrategyData {
    fn from(s: StationaryStrategy) -> Self {
        let continuation = s.continuation_states();
        let psi = s
            .intervention_states()
            .into_iter()
            .map(|x| (x.to_string(), s.shift[x].expect("intervention state has a target")))
            .collect();
        Self { continuation, psi }
    }
}
