//! Shared fixtures for the solver benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use impulse_core::numeric::Matrix;
use impulse_core::process::kernel_from_generator;
use impulse_core::{ControlProblem, CostModel, Generator, Kernel, StateSpace};

/// The bundled five-state birth-death chain at grid step h.
pub fn five_state_ctmc(h: f64) -> ControlProblem {
    let mut q = vec![vec![0.0; 5]; 5];
    for i in 0..5usize {
        if i + 1 < 5 {
            q[i][i + 1] = 1.0;
        }
        if i >= 1 {
            q[i][i - 1] = 1.0;
        }
        q[i][i] = -q[i].iter().sum::<f64>();
    }
    let generator = Generator::from_rows(&q).unwrap();
    let kernel = kernel_from_generator(&generator, h).unwrap();
    let states = StateSpace {
        labels: (0..5).map(|i| format!("q{i}")).collect(),
        coords: Some((0..5).map(|i| vec![i as f64]).collect()),
        impulse_targets: vec![0, 1],
    };
    let g = vec![0.0, 0.1, 0.2, 0.3, 0.4];
    let mut c = Matrix::zeros(5, 2);
    for x in 0..5usize {
        for (j, xi) in [0usize, 1].into_iter().enumerate() {
            c[(x, j)] = 0.25 + 0.1 * (x as f64 - xi as f64).abs();
        }
    }
    let costs = CostModel::new(&states, g, c).unwrap();
    ControlProblem::new(states, kernel, costs).unwrap()
}

/// Dense random ergodic instance for throughput benchmarks.
pub fn random_instance(n: usize, n_targets: usize, seed: u64) -> ControlProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / s).collect()
        })
        .collect();
    let kernel = Kernel::from_rows(1.0, &rows).unwrap();
    let targets: Vec<usize> = (0..n_targets).collect();
    let g: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
    let coords: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
    let mut c = Matrix::zeros(n, n_targets);
    for x in 0..n {
        for (j, &xi) in targets.iter().enumerate() {
            c[(x, j)] = 0.4 + 0.2 * (coords[x] - coords[xi]).abs();
        }
    }
    let states = StateSpace::anonymous(n, targets).unwrap();
    let costs = CostModel::new(&states, g, c).unwrap();
    ControlProblem::new(states, kernel, costs).unwrap()
}
