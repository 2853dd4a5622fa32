//! Running and shift costs. The shift cost c: E × U → (0, ∞) must be
//! bounded below by some c₀ > 0 and satisfy the triangle inequality
//! c(x,ξ) ≤ c(x,η) + c(η,ξ) for η, ξ ∈ U, which together price out
//! simultaneous double impulses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Matrix;
use crate::process::StateSpace;

/// Slack for the triangle check; sums of two costs lose an ulp or two.
const TRIANGLE_SLACK: f64 = 1e-12;

/// Running cost g over E and shift cost c over E × U (column j prices the
/// shift to target `impulse_targets[j]`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostModel {
    pub g: Vec<f64>,
    pub c: Matrix,
    pub c0: f64,
}

impl CostModel {
    /// Builds and fully validates a model against the state space.
    pub fn new(states: &StateSpace, g: Vec<f64>, c: Matrix) -> Result<Self> {
        let c0 = c.iter().fold(f64::INFINITY, f64::min);
        let model = Self { g, c, c0 };
        let report = validate_costs(&model, states)?;
        if !report.passed() {
            return Err(Error::Invalid(format!(
                "cost model violates (A2): {}",
                report.violations.first().map(String::as_str).unwrap_or("unknown")
            )));
        }
        Ok(model)
    }

    /// Shift cost from state x to the target with column index j.
    pub fn shift(&self, x: usize, j: usize) -> f64 {
        self.c[(x, j)]
    }

    pub fn g_span(&self) -> f64 {
        crate::numeric::span(&self.g)
    }

    pub fn c_max(&self) -> f64 {
        self.c.iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Result of the exhaustive cost validation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostValidation {
    pub violations: Vec<String>,
    /// The tightest admissible lower bound, min over all entries of c.
    pub tightest_c0: f64,
}

impl CostValidation {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Enumerates every (x, η, ξ) triple with η, ξ ∈ U and reports each
/// violated positivity or triangle constraint, plus the tightest valid c₀.
pub fn validate_costs(model: &CostModel, states: &StateSpace) -> Result<CostValidation> {
    let n = states.n_states();
    let targets = &states.impulse_targets;
    let m = targets.len();
    if model.g.len() != n {
        return Err(Error::Shape { expected: format!("g of length {n}"), got: format!("{}", model.g.len()) });
    }
    if model.c.rows() != n || model.c.cols() != m {
        return Err(Error::Shape {
            expected: format!("c of shape {n}x{m}"),
            got: format!("{}x{}", model.c.rows(), model.c.cols()),
        });
    }
    if model.g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("running cost g".into()));
    }
    if model.c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("shift cost c".into()));
    }

    let mut violations = Vec::new();
    for x in 0..n {
        for j in 0..m {
            let v = model.c[(x, j)];
            if !(v > 0.0) {
                violations.push(format!("c({x}, {}) = {v} is not strictly positive", targets[j]));
            }
        }
    }
    // Triangle: c(x, xi) <= c(x, eta) + c(eta, xi). The intermediate eta is
    // a U element viewed as a state, so its own shift row applies.
    for x in 0..n {
        for (je, &eta) in targets.iter().enumerate() {
            for (jx, &xi) in targets.iter().enumerate() {
                let direct = model.c[(x, jx)];
                let via = model.c[(x, je)] + model.c[(eta, jx)];
                if direct > via + TRIANGLE_SLACK {
                    violations.push(format!(
                        "triangle violated: c({x},{xi}) = {direct} > c({x},{eta}) + c({eta},{xi}) = {via}"
                    ));
                }
            }
        }
    }
    let tightest_c0 = model.c.iter().fold(f64::INFINITY, f64::min);
    Ok(CostValidation { violations, tightest_c0 })
}

/// Builds the metric shift cost c(x,ξ) = H(ρ(x,ξ)) + c₀, where ρ is the
/// Euclidean distance on the state coordinates and H is a nonnegative,
/// nondecreasing, subadditive function given as an interpolation table
/// with H(0) = 0. Queries beyond the table clamp to its last value, which
/// preserves monotonicity and subadditivity.
pub fn metric_cost(
    states: &StateSpace,
    h_table: &[[f64; 2]],
    c0: f64,
    g: Vec<f64>,
) -> Result<CostModel> {
    let coords = states
        .coords
        .as_ref()
        .ok_or_else(|| Error::Invalid("metric cost requires state coordinates".into()))?;
    if !(c0 > 0.0) {
        return Err(Error::Domain(format!("c0 must be strictly positive, got {c0}")));
    }
    if h_table.is_empty() || h_table[0] != [0.0, 0.0] {
        return Err(Error::Invalid("h table must start with the point (0, 0)".into()));
    }
    for w in h_table.windows(2) {
        if !(w[1][0] > w[0][0]) {
            return Err(Error::Invalid("h table distances must be strictly increasing".into()));
        }
        if w[1][1] < w[0][1] {
            return Err(Error::Invalid("h table must be nondecreasing".into()));
        }
    }
    if h_table.iter().any(|p| p[1] < 0.0) {
        return Err(Error::Invalid("h table values must be nonnegative".into()));
    }
    let eval_h = |d: f64| -> f64 {
        let last = h_table[h_table.len() - 1];
        if d >= last[0] {
            return last[1];
        }
        let idx = h_table.partition_point(|p| p[0] <= d);
        if idx == 0 {
            return h_table[0][1];
        }
        let (a, b) = (h_table[idx - 1], h_table[idx]);
        a[1] + (d - a[0]) / (b[0] - a[0]) * (b[1] - a[1])
    };
    // Subadditivity on sampled sums: H(d_i + d_j) <= H(d_i) + H(d_j).
    for pi in h_table {
        for pj in h_table {
            let sum = pi[0] + pj[0];
            if eval_h(sum) > pi[1] + pj[1] + TRIANGLE_SLACK {
                return Err(Error::Invalid(format!(
                    "h table is not subadditive: H({sum}) = {} > H({}) + H({}) = {}",
                    eval_h(sum),
                    pi[0],
                    pj[0],
                    pi[1] + pj[1]
                )));
            }
        }
    }

    let dist = |x: usize, y: usize| -> f64 {
        coords[x]
            .iter()
            .zip(&coords[y])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let n = states.n_states();
    let m = states.impulse_targets.len();
    let mut c = Matrix::zeros(n, m);
    for x in 0..n {
        for (j, &xi) in states.impulse_targets.iter().enumerate() {
            c[(x, j)] = eval_h(dist(x, xi)) + c0;
        }
    }
    CostModel::new(states, g, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(n: usize, u: Vec<usize>) -> StateSpace {
        StateSpace::anonymous(n, u).unwrap()
    }

    /// c(x, xi) = 0.5 + 0.4·[x != xi] on E = U = {0, 1}.
    fn half_plus_indicator() -> (StateSpace, CostModel) {
        let s = space(2, vec![0, 1]);
        let c = Matrix::from_rows(&[vec![0.5, 0.9], vec![0.9, 0.5]]).unwrap();
        let m = CostModel::new(&s, vec![0.0, 1.0], c).unwrap();
        (s, m)
    }

    #[test]
    fn indicator_cost_passes_with_c0_half() {
        let (s, m) = half_plus_indicator();
        let report = validate_costs(&m, &s).unwrap();
        assert!(report.passed());
        assert_eq!(report.tightest_c0, 0.5);
    }

    #[test]
    fn constant_cost_passes_with_c0_one() {
        let s = space(3, vec![0, 2]);
        let c = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let m = CostModel::new(&s, vec![0.0; 3], c).unwrap();
        let report = validate_costs(&m, &s).unwrap();
        assert!(report.passed());
        assert_eq!(report.tightest_c0, 1.0);
    }

    #[test]
    fn zero_entry_fails_positivity() {
        let s = space(2, vec![0, 1]);
        let c = Matrix::from_rows(&[vec![0.0, 0.9], vec![0.9, 0.5]]).unwrap();
        assert!(CostModel::new(&s, vec![0.0, 1.0], c.clone()).is_err());
        let model = CostModel { g: vec![0.0, 1.0], c, c0: 0.0 };
        let report = validate_costs(&model, &s).unwrap();
        assert!(!report.passed());
        assert!(report.violations[0].contains("strictly positive"));
    }

    #[test]
    fn triangle_violation_is_reported() {
        let s = space(3, vec![1, 2]);
        // direct c(0,2) = 3.0 beats the two-hop 0 -> 1 -> 2 at 0.5 + 0.5
        let c = Matrix::from_rows(&[vec![0.5, 3.0], vec![0.4, 0.5], vec![0.5, 0.4]]).unwrap();
        let model = CostModel { g: vec![0.0; 3], c, c0: 0.4 };
        let report = validate_costs(&model, &s).unwrap();
        assert!(!report.passed());
        assert!(report.violations.iter().any(|v| v.contains("triangle")));
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let s = space(3, vec![0]);
        let c = Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let model = CostModel { g: vec![0.0; 3], c, c0: 1.0 };
        assert!(matches!(validate_costs(&model, &s), Err(Error::Shape { .. })));
    }

    #[test]
    fn zero_h_gives_constant_c0() {
        let mut s = space(3, vec![0, 1]);
        s.coords = Some(vec![vec![0.0], vec![1.0], vec![2.0]]);
        let m = metric_cost(&s, &[[0.0, 0.0], [5.0, 0.0]], 0.3, vec![0.0; 3]).unwrap();
        for x in 0..3 {
            for j in 0..2 {
                assert_eq!(m.shift(x, j), 0.3);
            }
        }
    }

    #[test]
    fn capped_distance_cost_from_spec_example() {
        // H(d) = min(d, 1), c0 = 0.1 on colinear coords 0, 1, 2.
        let mut s = space(3, vec![0, 1, 2]);
        s.coords = Some(vec![vec![0.0], vec![1.0], vec![2.0]]);
        let m = metric_cost(&s, &[[0.0, 0.0], [1.0, 1.0], [2.0, 1.0]], 0.1, vec![0.0; 3]).unwrap();
        assert!((m.shift(0, 2) - 1.1).abs() < 1e-15);
        assert!((m.shift(0, 1) + m.shift(1, 2) - 2.2).abs() < 1e-15);
    }

    #[test]
    fn sqrt_table_on_random_cloud_passes_exhaustive_validation() {
        // H(d) = sqrt(d) sampled densely; concave with H(0) = 0, hence subadditive.
        let table: Vec<[f64; 2]> = (0..=400).map(|i| {
            let d = i as f64 * 0.05;
            [d, d.sqrt()]
        }).collect();
        let coords = vec![
            vec![0.13, 0.92], vec![0.77, 0.21], vec![0.45, 0.48],
            vec![0.91, 0.83], vec![0.05, 0.33], vec![0.62, 0.67],
        ];
        let mut s = space(6, vec![1, 3, 4]);
        s.coords = Some(coords);
        let m = metric_cost(&s, &table, 0.2, vec![0.0; 6]).unwrap();
        let report = validate_costs(&m, &s).unwrap();
        assert!(report.passed(), "{:?}", report.violations);
    }

    #[test]
    fn non_subadditive_table_is_rejected() {
        // H(d) = d^2 is superadditive.
        let table: Vec<[f64; 2]> = (0..=10).map(|i| {
            let d = i as f64 * 0.5;
            [d, d * d]
        }).collect();
        let mut s = space(2, vec![0, 1]);
        s.coords = Some(vec![vec![0.0], vec![1.0]]);
        let err = metric_cost(&s, &table, 0.1, vec![0.0; 2]);
        assert!(matches!(err, Err(Error::Invalid(_))));
    }
}
