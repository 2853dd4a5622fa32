//! Finite-state Markov dynamics: state space with impulse targets, one-step
//! transition kernels, continuous-time generators, and the Doeblin
//! ergodicity coefficient that drives every span-contraction argument.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{l1_distance, span, Matrix};

/// Row-sum tolerance for stochastic matrices.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Finite state set with labels, optional embedding coordinates (used by
/// metric shift costs), and the nonempty subset U of allowed after-impulse
/// states.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateSpace {
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<Vec<f64>>>,
    pub impulse_targets: Vec<usize>,
}

impl StateSpace {
    /// Unlabeled space with states `s0..s{n-1}` and the given targets.
    pub fn anonymous(n: usize, impulse_targets: Vec<usize>) -> Result<Self> {
        let s = Self {
            labels: (0..n).map(|i| format!("s{i}")).collect(),
            coords: None,
            impulse_targets,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn n_states(&self) -> usize {
        self.labels.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_states();
        if n == 0 {
            return Err(Error::Invalid("state space is empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if !self.labels.iter().all(|l| seen.insert(l)) {
            return Err(Error::Invalid("state labels must be distinct".into()));
        }
        if self.impulse_targets.is_empty() {
            return Err(Error::Invalid("impulse target set U must be nonempty".into()));
        }
        if self.impulse_targets.iter().any(|&u| u >= n) {
            return Err(Error::Invalid(format!("impulse target out of range (n = {n})")));
        }
        // Sorted targets make every lowest-index argmin tie-break a plain
        // in-order scan.
        if self.impulse_targets.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid("impulse targets must be strictly increasing".into()));
        }
        if let Some(coords) = &self.coords {
            if coords.len() != n {
                return Err(Error::Shape {
                    expected: format!("{n} coordinate points"),
                    got: format!("{}", coords.len()),
                });
            }
            let dim = coords.first().map_or(0, Vec::len);
            if coords.iter().any(|c| c.len() != dim) {
                return Err(Error::Invalid("coordinate points must share one dimension".into()));
            }
        }
        Ok(())
    }
}

/// One-step transition kernel P_h at grid step h.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Kernel {
    h: f64,
    matrix: Matrix,
}

impl Kernel {
    pub fn new(h: f64, matrix: Matrix) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Domain(format!("kernel step must be positive, got {h}")));
        }
        if matrix.rows() != matrix.cols() {
            return Err(Error::Shape {
                expected: "square matrix".into(),
                got: format!("{}x{}", matrix.rows(), matrix.cols()),
            });
        }
        for i in 0..matrix.rows() {
            let row = matrix.row(i);
            if row.iter().any(|&p| !(-ROW_SUM_TOL..=1.0 + ROW_SUM_TOL).contains(&p) || !p.is_finite()) {
                return Err(Error::Invalid(format!("kernel row {i} has entries outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Invalid(format!("kernel row {i} sums to {s}, not 1")));
            }
        }
        Ok(Self { h, matrix })
    }

    pub fn from_rows(h: f64, rows: &[Vec<f64>]) -> Result<Self> {
        let m = Matrix::from_rows(rows)
            .ok_or_else(|| Error::Shape { expected: "rectangular rows".into(), got: "ragged rows".into() })?;
        Self::new(h, m)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n_states(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn row(&self, x: usize) -> &[f64] {
        self.matrix.row(x)
    }

    /// E_x[v(X_h)] for every x.
    pub fn expect(&self, v: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(v)
    }
}

/// Rate matrix Q of a continuous-time chain: nonnegative off-diagonal,
/// zero row sums.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Generator {
    matrix: Matrix,
}

impl Generator {
    pub fn new(matrix: Matrix) -> Result<Self> {
        if matrix.rows() != matrix.cols() {
            return Err(Error::Shape {
                expected: "square matrix".into(),
                got: format!("{}x{}", matrix.rows(), matrix.cols()),
            });
        }
        for i in 0..matrix.rows() {
            let row = matrix.row(i);
            if row.iter().any(|q| !q.is_finite()) {
                return Err(Error::NonFinite(format!("generator row {i}")));
            }
            if row[i] > 0.0 {
                return Err(Error::Invalid(format!("generator diagonal entry ({i},{i}) must be <= 0")));
            }
            if row.iter().enumerate().any(|(j, &q)| j != i && q < 0.0) {
                return Err(Error::Invalid(format!("generator row {i} has a negative off-diagonal rate")));
            }
            let s: f64 = row.iter().sum();
            if s.abs() > ROW_SUM_TOL {
                return Err(Error::Invalid(format!("generator row {i} sums to {s}, not 0")));
            }
        }
        Ok(Self { matrix })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = Matrix::from_rows(rows)
            .ok_or_else(|| Error::Shape { expected: "rectangular rows".into(), got: "ragged rows".into() })?;
        Self::new(m)
    }

    pub fn n_states(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }
}

/// P_h = exp(hQ) by uniformization: Poisson-weighted powers of the
/// uniformized stochastic matrix S = I + Q/r, truncated once the Poisson
/// tail mass drops below 1e-12, then row-renormalized so the result is
/// exactly stochastic.
pub fn kernel_from_generator(gen: &Generator, h: f64) -> Result<Kernel> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Domain(format!("kernel step must be positive, got {h}")));
    }
    let n = gen.n_states();
    let rate = (0..n).map(|i| -gen.matrix()[(i, i)]).fold(0.0f64, f64::max);
    if rate == 0.0 {
        return Ok(Kernel { h, matrix: Matrix::identity(n) });
    }

    let mut s = Matrix::identity(n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] += gen.matrix()[(i, j)] / rate;
        }
    }

    let m = rate * h;
    let mut weight = (-m).exp();
    if weight == 0.0 {
        // Poisson mean too large for a direct leading weight; split the
        // interval and use the semigroup property.
        let half = kernel_from_generator(gen, h / 2.0)?;
        let prod = half.matrix.matmul(&half.matrix);
        return Kernel::new(h, prod);
    }
    let mut acc = Matrix::zeros(n, n);
    let mut power = Matrix::identity(n);
    let mut cum = weight;
    for i in 0..n {
        acc[(i, i)] = weight;
    }
    let mut k = 0usize;
    while cum < 1.0 - 1e-12 && k < 1_000_000 {
        k += 1;
        power = power.matmul(&s);
        weight *= m / k as f64;
        for i in 0..n {
            for j in 0..n {
                acc[(i, j)] += weight * power[(i, j)];
            }
        }
        cum += weight;
    }
    for i in 0..n {
        let row_sum: f64 = acc.row(i).iter().sum();
        if !(row_sum > 0.0) || !row_sum.is_finite() {
            return Err(Error::NonFinite(format!("uniformized kernel row {i}")));
        }
        for v in acc.row_mut(i) {
            *v /= row_sum;
        }
    }
    Kernel::new(h, acc)
}

/// The Doeblin ergodicity coefficient: the worst-case total-variation
/// distance between two rows,
/// Λ_h = max_{x,y} (1/2) Σ_z |P_h(x,z) − P_h(y,z)|.
/// Λ_h < 1 is the uniform-ergodicity condition making the Bellman
/// operators span contractions.
pub fn doeblin_coefficient(kernel: &Kernel) -> f64 {
    doeblin_of_matrix(kernel.matrix(), None)
}

/// Same coefficient restricted to a subset of rows (used for controlled
/// chains that live inside a continuation set).
pub(crate) fn doeblin_of_matrix(m: &Matrix, rows: Option<&[usize]>) -> f64 {
    let all: Vec<usize>;
    let idx: &[usize] = match rows {
        Some(r) => r,
        None => {
            all = (0..m.rows()).collect();
            &all
        }
    };
    let mut worst = 0.0f64;
    for (a, &x) in idx.iter().enumerate() {
        for &y in &idx[a + 1..] {
            let tv = 0.5 * l1_distance(m.row(x), m.row(y));
            worst = worst.max(tv);
        }
    }
    worst
}

/// Stationary distribution of an ergodic kernel by power iteration:
/// stops when the L1 change drops below 1e-13 and certifies the residual
/// ‖πP − π‖₁ ≤ 1e-12.
pub fn stationary_distribution(kernel: &Kernel) -> Result<Vec<f64>> {
    stationary_of_matrix(kernel.matrix(), None)
}

pub(crate) fn stationary_of_matrix(m: &Matrix, rows: Option<&[usize]>) -> Result<Vec<f64>> {
    let coeff = doeblin_of_matrix(m, rows);
    if coeff >= 1.0 {
        return Err(Error::Ergodicity { coefficient: coeff });
    }
    let n = m.rows();
    let support: Vec<usize> = match rows {
        Some(r) => r.to_vec(),
        None => (0..n).collect(),
    };
    let mut pi = vec![0.0; n];
    for &x in &support {
        pi[x] = 1.0 / support.len() as f64;
    }
    let mut last_change = f64::INFINITY;
    for _ in 0..10_000_000usize {
        let mut next = m.vec_mul(&pi);
        let total: f64 = next.iter().sum();
        for v in &mut next {
            *v /= total;
        }
        last_change = l1_distance(&next, &pi);
        pi = next;
        if last_change < 1e-13 {
            break;
        }
    }
    let residual = l1_distance(&m.vec_mul(&pi), &pi);
    if residual > 1e-12 {
        return Err(Error::Convergence { iterations: 10_000_000, last_span: last_change });
    }
    Ok(pi)
}

/// span(P v) ≤ Λ · span(v); exposed for diagnostics and property tests.
pub fn contraction_transfer(kernel: &Kernel, v: &[f64]) -> (f64, f64) {
    let pv = kernel.expect(v);
    (span(&pv), doeblin_coefficient(kernel) * span(v))
}
