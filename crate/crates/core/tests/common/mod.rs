//! Test-side oracles shared by the integration tests.
#![allow(dead_code)]

use softtarget_core::nn::{cross_entropy, DenseParams, LayerSpec, Network};
use softtarget_core::{Matrix, Rng};

/// Straight-line evaluation of a Dense/ReLU/Softmax stack, one scalar at a
/// time. Also reports the smallest |pre-activation| seen at any ReLU.
pub fn scalar_forward(
    layers: &[LayerSpec],
    params: &[DenseParams],
    x: &Matrix,
) -> (Vec<Vec<f64>>, f64) {
    let mut closest_kink = f64::INFINITY;
    let mut out = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let mut a: Vec<f64> = x.row(r).to_vec();
        let mut d = 0;
        for spec in layers {
            match *spec {
                LayerSpec::Dense { input, output } => {
                    let p = &params[d];
                    d += 1;
                    let mut z = vec![0.0; output];
                    for (j, zj) in z.iter_mut().enumerate() {
                        let mut s = p.bias.get(0, j);
                        for (i, ai) in a.iter().enumerate().take(input) {
                            s += ai * p.weights.get(i, j);
                        }
                        *zj = s;
                    }
                    a = z;
                }
                LayerSpec::Relu => {
                    for v in a.iter_mut() {
                        closest_kink = closest_kink.min(v.abs());
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                }
                LayerSpec::Softmax => {
                    let m = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let e: Vec<f64> = a.iter().map(|v| (v - m).exp()).collect();
                    let s: f64 = e.iter().sum();
                    a = e.into_iter().map(|v| v / s).collect();
                }
                LayerSpec::Dropout { .. } => {}
            }
        }
        out.push(a);
    }
    (out, closest_kink)
}

/// Random classifier `d -> [h]* -> k` with up to `max_dense` dense layers.
pub fn random_classifier(rng: &mut Rng, max_dense: usize, max_units: usize) -> Network {
    let dense = 1 + (rng.next_u64() % max_dense as u64) as usize;
    let mut width = 1 + (rng.next_u64() % max_units as u64) as usize;
    let mut specs = Vec::new();
    for i in 0..dense {
        let out = if i + 1 == dense {
            2 + (rng.next_u64() % (max_units as u64 - 1)) as usize
        } else {
            1 + (rng.next_u64() % max_units as u64) as usize
        };
        specs.push(LayerSpec::Dense {
            input: width,
            output: out,
        });
        specs.push(if i + 1 == dense {
            LayerSpec::Softmax
        } else {
            LayerSpec::Relu
        });
        width = out;
    }
    let mut net = Network::init(&specs, rng).unwrap();
    // Nonzero biases so their gradients are exercised too.
    for p in net.params_mut() {
        for b in p.bias.as_mut_slice() {
            *b = 0.1 * rng.normal();
        }
    }
    net
}

pub fn random_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
}

/// Random rows on the simplex (soft targets).
pub fn random_distributions(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for r in 0..rows {
        let row: Vec<f64> = (0..cols).map(|_| rng.uniform() + 1e-3).collect();
        let s: f64 = row.iter().sum();
        for (c, v) in row.into_iter().enumerate() {
            m.set(r, c, v / s);
        }
    }
    m
}

/// Mean cross-entropy computed entirely by the scalar oracle.
pub fn oracle_loss(net: &Network, params: &[DenseParams], x: &Matrix, t: &Matrix) -> f64 {
    let (p, _) = scalar_forward(net.layers(), params, x);
    let mut total = 0.0;
    for (i, row) in p.iter().enumerate() {
        for (k, &pk) in row.iter().enumerate() {
            total -= t.get(i, k) * pk.max(1e-12).ln();
        }
    }
    total / x.rows() as f64
}

/// Magnitude below which relative error is measured against this floor
/// instead of the gradient itself. Central differences with `h = 1e-5`
/// carry about `1e-11` of truncation and rounding error, so smaller
/// gradients cannot be resolved to 1e-5 relative accuracy.
pub const GRAD_FLOOR: f64 = 1e-5;

pub struct GradCheck {
    pub worst_relative: f64,
    pub checked: usize,
    /// Entries whose magnitude fell below [`GRAD_FLOOR`].
    pub floored: usize,
}

/// Compares backprop against central differences of the oracle loss.
///
/// Relative error is `|a - n| / max(|a|, |n|, GRAD_FLOOR)`.
pub fn grad_check(net: &Network, x: &Matrix, t: &Matrix, h: f64) -> GradCheck {
    let (probs, trace) = net.forward(x, &mut Rng::new(0)).unwrap();
    let (_, g) = cross_entropy(&probs, t).unwrap();
    let grads = net.backward(&trace, &g).unwrap();

    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut floored = 0;
    let base: Vec<DenseParams> = net.params().to_vec();
    for (l, gl) in grads.dense.iter().enumerate() {
        for (which, analytic) in [(0, &gl.weights), (1, &gl.bias)] {
            for idx in 0..analytic.as_slice().len() {
                let nudge = |delta: f64| {
                    let mut p = base.clone();
                    let m = if which == 0 {
                        &mut p[l].weights
                    } else {
                        &mut p[l].bias
                    };
                    m.as_mut_slice()[idx] += delta;
                    p
                };
                let (plus, minus) = (nudge(h), nudge(-h));
                let numeric =
                    (oracle_loss(net, &plus, x, t) - oracle_loss(net, &minus, x, t)) / (2.0 * h);
                let a = analytic.as_slice()[idx];
                let scale = a.abs().max(numeric.abs());
                if scale < GRAD_FLOOR {
                    floored += 1;
                }
                let err = (a - numeric).abs() / scale.max(GRAD_FLOOR);
                worst = worst.max(err);
                checked += 1;
            }
        }
    }
    GradCheck {
        worst_relative: worst,
        checked,
        floored,
    }
}

/// Draws inputs until no ReLU pre-activation lies within `margin` of zero,
/// so that central differences never straddle a kink.
pub fn inputs_away_from_kinks(net: &Network, rng: &mut Rng, rows: usize, margin: f64) -> Matrix {
    let d = net.input_dim().unwrap();
    loop {
        let x = random_matrix(rng, rows, d);
        let (_, kink) = scalar_forward(net.layers(), net.params(), &x);
        if kink > margin {
            return x;
        }
    }
}
