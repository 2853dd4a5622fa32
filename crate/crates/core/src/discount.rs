//! Discount functions and their step-averaged discrete sequences.
//!
//! A discount function is a non-increasing map β: [0,∞) → (0,1] with
//! β(0) = 1, supermultiplicative (β(t+s) ≥ β(t)β(s)) and with divergent
//! integral. The working discrete object is the step average
//!
//! ```text
//! φ_h(i) = (1/h) ∫ β(s) ds  over  [ih, (i+1)h),
//! ```
//!
//! which inherits monotonicity and supermultiplicativity from β. The
//! generalised hyperbolic family β(t) = 1/(1 + rt)^α with α ∈ (0,1]
//! satisfies all axioms; β ≡ 1 recovers the undiscounted case.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute slack for supermultiplicativity checks; products of values
/// near 1 lose a few ulps.
pub const SUPERMULT_SLACK: f64 = 1e-12;

/// A discount function family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum DiscountSpec {
    /// β ≡ 1, the undiscounted case.
    Constant,
    /// β(t) = 1/(1 + rate·t)^exponent with rate > 0 and exponent ∈ (0,1].
    Hyperbolic {
        #[serde(rename = "h_beta")]
        rate: f64,
        #[serde(rename = "alpha")]
        exponent: f64,
    },
    /// Monotone piecewise-linear interpolation of sampled (t, β(t)) pairs.
    /// The grid must start at (0, 1); queries beyond the last knot are an
    /// extrapolation error.
    Tabulated { points: Vec<[f64; 2]> },
}

impl DiscountSpec {
    pub fn hyperbolic(rate: f64, exponent: f64) -> Self {
        DiscountSpec::Hyperbolic { rate, exponent }
    }

    /// Structural well-formedness: parameter ranges and grid shape.
    /// Axiom conformance (monotonicity etc.) is reported, not errored,
    /// by [`validate_discount`].
    pub fn validate_basic(&self) -> Result<()> {
        match self {
            DiscountSpec::Constant => Ok(()),
            DiscountSpec::Hyperbolic { rate, exponent } => {
                if !(*rate > 0.0) || !rate.is_finite() {
                    return Err(Error::Domain(format!("hyperbolic rate must be positive, got {rate}")));
                }
                if !(*exponent > 0.0 && *exponent <= 1.0) {
                    return Err(Error::Domain(format!(
                        "hyperbolic exponent must lie in (0, 1], got {exponent}"
                    )));
                }
                Ok(())
            }
            DiscountSpec::Tabulated { points } => {
                if points.is_empty() {
                    return Err(Error::Domain("tabulated discount needs at least one point".into()));
                }
                if points[0][0] != 0.0 {
                    return Err(Error::Domain("tabulated discount grid must start at t = 0".into()));
                }
                for w in points.windows(2) {
                    if !(w[1][0] > w[0][0]) {
                        return Err(Error::Domain("tabulated discount grid must be strictly increasing in t".into()));
                    }
                }
                if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
                    return Err(Error::NonFinite("tabulated discount point".into()));
                }
                Ok(())
            }
        }
    }

    fn grid_end(&self) -> Option<f64> {
        match self {
            DiscountSpec::Tabulated { points } => points.last().map(|p| p[0]),
            _ => None,
        }
    }
}

/// Evaluates β(t). Closed form for `Constant` and `Hyperbolic`, monotone
/// piecewise-linear interpolation for `Tabulated`.
pub fn eval_beta(spec: &DiscountSpec, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("discount function queried at negative time {t}")));
    }
    match spec {
        DiscountSpec::Constant => Ok(1.0),
        DiscountSpec::Hyperbolic { rate, exponent } => Ok((-exponent * (rate * t).ln_1p()).exp()),
        DiscountSpec::Tabulated { points } => {
            let t_max = spec.grid_end().unwrap_or(0.0);
            if t > t_max {
                return Err(Error::Extrapolation { t, t_max });
            }
            let idx = points.partition_point(|p| p[0] <= t);
            if idx == 0 {
                return Ok(points[0][1]);
            }
            if idx == points.len() {
                return Ok(points[points.len() - 1][1]);
            }
            let (a, b) = (points[idx - 1], points[idx]);
            let frac = (t - a[0]) / (b[0] - a[0]);
            Ok(a[1] + frac * (b[1] - a[1]))
        }
    }
}

/// Exact ∫₀ᵗ β(s) ds. Closed-form antiderivative for the analytic families,
/// segment-exact trapezoids for tabulated data.
pub fn integral_beta(spec: &DiscountSpec, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("integral endpoint must be nonnegative, got {t}")));
    }
    match spec {
        DiscountSpec::Constant => Ok(t),
        DiscountSpec::Hyperbolic { rate, exponent } => Ok(hyperbolic_integral(*rate, *exponent, 0.0, t)),
        DiscountSpec::Tabulated { points } => {
            let t_max = spec.grid_end().unwrap_or(0.0);
            if t > t_max {
                return Err(Error::Extrapolation { t, t_max });
            }
            let mut acc = 0.0;
            for w in points.windows(2) {
                let (t0, b0, t1, b1) = (w[0][0], w[0][1], w[1][0], w[1][1]);
                if t <= t0 {
                    break;
                }
                let hi = t.min(t1);
                let bhi = b0 + (hi - t0) / (t1 - t0) * (b1 - b0);
                acc += 0.5 * (b0 + bhi) * (hi - t0);
            }
            Ok(acc)
        }
    }
}

/// ∫ₐᵇ (1 + r s)^(−α) ds, written so that the α → 1 limit and large-t
/// cancellation are both handled: with ε = 1 − α and
/// ΔL = log((1+rb)/(1+ra)), the integral is (1+ra)^ε · expm1(ε ΔL)/(r ε),
/// degenerating to ΔL/r at ε = 0.
fn hyperbolic_integral(rate: f64, exponent: f64, a: f64, b: f64) -> f64 {
    let eps = 1.0 - exponent;
    let delta_l = (rate * (b - a) / (1.0 + rate * a)).ln_1p();
    if eps == 0.0 {
        delta_l / rate
    } else {
        let head = (eps * (rate * a).ln_1p()).exp();
        head * (eps * delta_l).exp_m1() / (rate * eps)
    }
}

/// The discrete discount sequence φ_h(0..K−1) together with its grid step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiSequence {
    h: f64,
    values: Vec<f64>,
}

impl PhiSequence {
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Cumulative sums Σ_{i<n} φ(i) for n = 0..=K.
    pub fn prefix_sums(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.values.len() + 1);
        let mut acc = 0.0;
        out.push(0.0);
        for &v in &self.values {
            acc += v;
            out.push(acc);
        }
        out
    }

    /// Verifies every stored invariant: positivity, φ(0) ≤ 1, monotone
    /// non-increase, and supermultiplicativity φ(i+k) ≥ φ(i)φ(k) − slack
    /// over all stored index pairs. Quadratic in length; meant for tests
    /// and validation reports, not hot paths.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let v = &self.values;
        if v.is_empty() {
            return Err("empty sequence".into());
        }
        if v[0] > 1.0 + 1e-15 {
            return Err(format!("phi(0) = {} exceeds 1", v[0]));
        }
        for (i, w) in v.windows(2).enumerate() {
            if w[1] > w[0] {
                return Err(format!("phi({}) = {} > phi({}) = {}", i + 1, w[1], i, w[0]));
            }
        }
        if let Some((i, &x)) = v.iter().enumerate().find(|(_, &x)| !(x > 0.0)) {
            return Err(format!("phi({i}) = {x} is not strictly positive"));
        }
        for i in 0..v.len() {
            for k in 0..v.len() - i {
                if v[i + k] < v[i] * v[k] - SUPERMULT_SLACK {
                    return Err(format!(
                        "supermultiplicativity violated at ({i}, {k}): {} < {}",
                        v[i + k],
                        v[i] * v[k]
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Computes φ_h(i) = (1/h) ∫ β over [ih, (i+1)h) for i = 0..K−1.
pub fn compute_phi(spec: &DiscountSpec, h: f64, k_len: usize) -> Result<PhiSequence> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Domain(format!("grid step must be positive, got {h}")));
    }
    if k_len == 0 {
        return Err(Error::Domain("horizon length must be at least 1".into()));
    }
    spec.validate_basic()?;
    let values = match spec {
        DiscountSpec::Constant => vec![1.0; k_len],
        DiscountSpec::Hyperbolic { rate, exponent } => (0..k_len)
            .map(|i| hyperbolic_integral(*rate, *exponent, i as f64 * h, (i + 1) as f64 * h) / h)
            .collect(),
        DiscountSpec::Tabulated { .. } => {
            let mut prev = integral_beta(spec, 0.0)?;
            let mut out = Vec::with_capacity(k_len);
            for i in 0..k_len {
                let next = integral_beta(spec, (i + 1) as f64 * h)?;
                out.push((next - prev) / h);
                prev = next;
            }
            out
        }
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("phi sequence".into()));
    }
    // Cheap invariants are enforced at construction; monotone violations
    // here would mean the family evaluator itself is broken.
    if let Some(w) = values.windows(2).find(|w| w[1] > w[0]) {
        return Err(Error::Invalid(format!("phi sequence not non-increasing: {} > {}", w[1], w[0])));
    }
    if values[0] > 1.0 + 1e-15 {
        return Err(Error::Invalid(format!("phi(0) = {} exceeds 1", values[0])));
    }
    if values.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Invalid("phi sequence must be strictly positive".into()));
    }
    Ok(PhiSequence { h, values })
}

/// Outcome of a single axiom check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The axiom cannot be decided from samples (e.g. the divergent
    /// integral of a tabulated function).
    Unverifiable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AxiomCheck {
    pub axiom: String,
    pub status: CheckStatus,
    pub detail: String,
}

/// Per-axiom report produced by [`validate_discount`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscountValidation {
    pub checks: Vec<AxiomCheck>,
}

impl DiscountValidation {
    /// True when no check failed (`Unverifiable` does not fail validation).
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AxiomCheck> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail)
    }
}

/// Checks the discount-function axioms on a sample grid: β(0) = 1, values
/// in (0,1], monotone non-increase, supermultiplicativity on all grid
/// pairs, and the divergent-integral condition (analytic for the closed
/// families, unverifiable by sampling for tabulated data).
pub fn validate_discount(spec: &DiscountSpec, sample_grid: &[f64]) -> Result<DiscountValidation> {
    if sample_grid.is_empty() {
        return Err(Error::Domain("sample grid must be nonempty".into()));
    }
    if sample_grid.windows(2).any(|w| w[1] < w[0]) || sample_grid[0] < 0.0 {
        return Err(Error::Domain("sample grid must be sorted and nonnegative".into()));
    }
    spec.validate_basic()?;

    let mut checks = Vec::new();
    let grid_end = spec.grid_end();
    let in_range = |t: f64| grid_end.map_or(true, |e| t <= e);

    let b0 = eval_beta(spec, 0.0)?;
    checks.push(AxiomCheck {
        axiom: "beta(0) = 1".into(),
        status: if (b0 - 1.0).abs() <= 1e-12 { CheckStatus::Pass } else { CheckStatus::Fail },
        detail: format!("beta(0) = {b0}"),
    });

    let mut values = Vec::with_capacity(sample_grid.len());
    for &t in sample_grid {
        if in_range(t) {
            values.push((t, eval_beta(spec, t)?));
        }
    }

    let range_ok = values.iter().all(|&(_, b)| b > 0.0 && b <= 1.0 + 1e-15);
    checks.push(AxiomCheck {
        axiom: "beta(t) in (0, 1]".into(),
        status: if range_ok { CheckStatus::Pass } else { CheckStatus::Fail },
        detail: format!("{} grid values checked", values.len()),
    });

    let mono_ok = values.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-15);
    checks.push(AxiomCheck {
        axiom: "beta non-increasing".into(),
        status: if mono_ok { CheckStatus::Pass } else { CheckStatus::Fail },
        detail: "checked on the sample grid".into(),
    });

    let mut super_status = CheckStatus::Pass;
    let mut super_detail = String::from("beta(t+s) >= beta(t)beta(s) on all checkable grid pairs");
    let mut checked = 0usize;
    'outer: for &(t, bt) in &values {
        for &(s, bs) in &values {
            let sum = t + s;
            if !in_range(sum) {
                continue;
            }
            checked += 1;
            let bsum = eval_beta(spec, sum)?;
            if bsum < bt * bs - SUPERMULT_SLACK {
                super_status = CheckStatus::Fail;
                super_detail =
                    format!("violated at (t, s) = ({t}, {s}): beta(t+s) = {bsum} < {}", bt * bs);
                break 'outer;
            }
        }
    }
    if checked == 0 {
        super_status = CheckStatus::Unverifiable;
        super_detail = "no grid pair stays inside the tabulated range".into();
    }
    checks.push(AxiomCheck { axiom: "supermultiplicative".into(), status: super_status, detail: super_detail });

    let (div_status, div_detail) = match spec {
        DiscountSpec::Constant => (CheckStatus::Pass, "integral of 1 diverges".to_string()),
        DiscountSpec::Hyperbolic { exponent, .. } => (
            CheckStatus::Pass,
            format!("(1+rt)^(-alpha) has divergent integral for alpha = {exponent} <= 1"),
        ),
        DiscountSpec::Tabulated { .. } => (
            CheckStatus::Unverifiable,
            "divergence cannot be decided from finitely many samples".to_string(),
        ),
    };
    checks.push(AxiomCheck { axiom: "divergent integral".into(), status: div_status, detail: div_detail });

    Ok(DiscountValidation { checks })
}
