//! Fixtures for the benchmarks under `benches/`.

use softtarget_core::experiment::Architecture;
use softtarget_core::nn::Network;
use softtarget_core::{Matrix, Rng};

/// Input width and class count of MNIST.
pub const MNIST_FEATURES: usize = 784;
pub const MNIST_CLASSES: usize = 10;

pub fn uniform(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = Rng::new(seed);
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.uniform()).collect(),
    )
    .expect("sized to shape")
}

/// Rows normalized to sum to one.
pub fn distributions(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut m = uniform(rows, cols, seed);
    for r in 0..rows {
        let row = m.row_mut(r);
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    m
}

pub fn one_hot_rows(rows: usize, cols: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for r in 0..rows {
        m.set(r, r % cols, 1.0);
    }
    m
}

/// `hidden x units` ReLU network on MNIST-shaped input.
pub fn mlp(hidden: usize, units: usize, dropout: f64) -> Network {
    let specs = Architecture {
        hidden_layers: hidden,
        units,
    }
    .layers(MNIST_FEATURES, MNIST_CLASSES, dropout);
    Network::init(&specs, &mut Rng::new(1)).expect("valid architecture")
}
