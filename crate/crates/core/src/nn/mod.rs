//! Feed-forward networks built from dense, ReLU, softmax and dropout layers,
//! with exact backpropagation.
//!
//! Conventions: rows are samples, dense weights are `in x out`, biases are
//! `1 x out`. Dropout is the inverted variant: in [`Mode::Train`] kept
//! activations are scaled by `1 / (1 - p)`, and in [`Mode::Infer`] the layer
//! is the identity and draws no random numbers.

mod loss;

pub use loss::{accuracy, cross_entropy, cross_entropy_loss, LOG_CLIP};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{softmax_in_place, Matrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { input: usize, output: usize },
    Relu,
    Softmax,
    Dropout { p: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    #[default]
    Infer,
}

/// Weights and bias of one dense layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub weights: Matrix,
    pub bias: Matrix,
}

impl DenseParams {
    pub fn zeros(input: usize, output: usize) -> Self {
        DenseParams {
            weights: Matrix::zeros(input, output),
            bias: Matrix::zeros(1, output),
        }
    }
}

/// Parameter gradients, one entry per dense layer in network order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub dense: Vec<DenseParams>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<LayerSpec>,
    params: Vec<DenseParams>,
    #[serde(default)]
    mode: Mode,
}

#[derive(Clone, Debug)]
enum TraceEntry {
    Dense { input: Matrix },
    Relu { output: Matrix },
    Softmax { output: Matrix },
    Dropout { mask: Option<Matrix> },
}

/// Activations cached by [`Network::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    entries: Vec<TraceEntry>,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Checks layer parameters and that consecutive dense layers chain.
pub fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::contract("network needs at least one layer"));
    }
    let mut width: Option<usize> = None;
    for (i, spec) in specs.iter().enumerate() {
        match *spec {
            LayerSpec::Dense { input, output } => {
                if input == 0 || output == 0 {
                    return Err(Error::contract(format!(
                        "layer {i}: dense dimensions must be positive, got {input}->{output}"
                    )));
                }
                if let Some(w) = width {
                    if w != input {
                        return Err(Error::contract(format!(
                            "layer {i}: dense input {input} does not match previous width {w}"
                        )));
                    }
                }
                width = Some(output);
            }
            LayerSpec::Dropout { p } => {
                if !(0.0..1.0).contains(&p) {
                    return Err(Error::contract(format!(
                        "layer {i}: dropout probability {p} outside [0, 1)"
                    )));
                }
            }
            LayerSpec::Relu | LayerSpec::Softmax => {}
        }
    }
    Ok(())
}

impl Network {
    /// Glorot-uniform weights in `±sqrt(6 / (in + out))`, zero biases.
    pub fn init(specs: &[LayerSpec], rng: &mut Rng) -> Result<Self> {
        validate_specs(specs)?;
        let params = specs
            .iter()
            .filter_map(|s| match *s {
                LayerSpec::Dense { input, output } => {
                    let limit = (6.0 / (input + output) as f64).sqrt();
                    let data = (0..input * output)
                        .map(|_| rng.uniform_range(-limit, limit))
                        .collect();
                    Some(DenseParams {
                        weights: Matrix::from_vec(input, output, data).expect("sized"),
                        bias: Matrix::zeros(1, output),
                    })
                }
                _ => None,
            })
            .collect();
        Ok(Network {
            layers: specs.to_vec(),
            params,
            mode: Mode::Infer,
        })
    }

    /// Assembles a network from explicit parameters.
    pub fn from_parts(specs: Vec<LayerSpec>, params: Vec<DenseParams>) -> Result<Self> {
        validate_specs(&specs)?;
        let dense: Vec<(usize, usize)> = specs
            .iter()
            .filter_map(|s| match *s {
                LayerSpec::Dense { input, output } => Some((input, output)),
                _ => None,
            })
            .collect();
        if dense.len() != params.len() {
            return Err(Error::contract(format!(
                "{} dense layers but {} parameter sets",
                dense.len(),
                params.len()
            )));
        }
        for (i, ((input, output), p)) in dense.iter().zip(&params).enumerate() {
            if p.weights.shape() != (*input, *output) || p.bias.shape() != (1, *output) {
                return Err(Error::contract(format!(
                    "dense layer {i}: parameters {:?}/{:?} do not fit {input}->{output}",
                    p.weights.shape(),
                    p.bias.shape()
                )));
            }
        }
        Ok(Network {
            layers: specs,
            params,
            mode: Mode::Infer,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[DenseParams] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [DenseParams] {
        &mut self.params
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.layers.iter().find_map(|l| match *l {
            LayerSpec::Dense { input, .. } => Some(input),
            _ => None,
        })
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.layers.iter().rev().find_map(|l| match *l {
            LayerSpec::Dense { output, .. } => Some(output),
            _ => None,
        })
    }

    pub fn is_classifier(&self) -> bool {
        matches!(self.layers.last(), Some(LayerSpec::Softmax))
    }

    pub fn parameter_count(&self) -> usize {
        self.params
            .iter()
            .map(|p| p.weights.as_slice().len() + p.bias.as_slice().len())
            .sum()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if let Some(d) = self.input_dim() {
            if x.cols() != d {
                let w = self.params[0].weights.shape();
                return Err(Error::shape("forward", x.shape(), w));
            }
        }
        Ok(())
    }

    /// Runs the network in its current mode, recording what backward needs.
    ///
    /// `rng` is only consumed by dropout layers with `p > 0` in train mode.
    pub fn forward(&self, x: &Matrix, rng: &mut Rng) -> Result<(Matrix, ForwardTrace)> {
        self.check_input(x)?;
        let mut entries = Vec::with_capacity(self.layers.len());
        let mut act = x.clone();
        let mut dense_idx = 0;
        for spec in &self.layers {
            match *spec {
                LayerSpec::Dense { .. } => {
                    let p = &self.params[dense_idx];
                    dense_idx += 1;
                    let mut out = act.matmul(&p.weights)?;
                    out.add_row_broadcast(&p.bias)?;
                    entries.push(TraceEntry::Dense { input: act });
                    act = out;
                }
                LayerSpec::Relu => {
                    relu_in_place(&mut act);
                    entries.push(TraceEntry::Relu {
                        output: act.clone(),
                    });
                }
                LayerSpec::Softmax => {
                    softmax_in_place(&mut act);
                    entries.push(TraceEntry::Softmax {
                        output: act.clone(),
                    });
                }
                LayerSpec::Dropout { p } => {
                    let mask = if self.mode == Mode::Train && p > 0.0 {
                        let m = dropout_mask(act.rows(), act.cols(), p, rng);
                        for (v, k) in act.as_mut_slice().iter_mut().zip(m.as_slice()) {
                            *v *= k;
                        }
                        Some(m)
                    } else {
                        None
                    };
                    entries.push(TraceEntry::Dropout { mask });
                }
            }
        }
        Ok((act, ForwardTrace { entries }))
    }

    /// Inference-mode forward pass: dropout off, no trace, no randomness.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut act = x.clone();
        let mut dense_idx = 0;
        for spec in &self.layers {
            match spec {
                LayerSpec::Dense { .. } => {
                    let p = &self.params[dense_idx];
                    dense_idx += 1;
                    let mut out = act.matmul(&p.weights)?;
                    out.add_row_broadcast(&p.bias)?;
                    act = out;
                }
                LayerSpec::Relu => relu_in_place(&mut act),
                LayerSpec::Softmax => softmax_in_place(&mut act),
                LayerSpec::Dropout { .. } => {}
            }
        }
        Ok(act)
    }

    /// Backpropagates `grad_out` through the trace of a matching forward pass.
    ///
    /// When the final layer is softmax, `grad_out` is taken to be the
    /// gradient with respect to that softmax's input (the logits), which is
    /// what [`cross_entropy`] returns; the final softmax is then passed
    /// through. Any other softmax layer is differentiated exactly.
    ///
    /// Parameter gradients are summed over rows; averaging belongs to the
    /// loss.
    pub fn backward(&self, trace: &ForwardTrace, grad_out: &Matrix) -> Result<Gradients> {
        if trace.entries.len() != self.layers.len() {
            return Err(Error::contract(format!(
                "trace has {} layers, network has {}",
                trace.entries.len(),
                self.layers.len()
            )));
        }
        let out_shape = match trace.entries.last() {
            Some(TraceEntry::Relu { output }) | Some(TraceEntry::Softmax { output }) => {
                Some(output.shape())
            }
            _ => None,
        };
        if let Some(shape) = out_shape {
            if shape != grad_out.shape() {
                return Err(Error::shape("backward", shape, grad_out.shape()));
            }
        }

        let mut grads: Vec<Option<DenseParams>> = vec![None; self.params.len()];
        let mut g = grad_out.clone();
        let mut dense_idx = self.params.len();
        let last = self.layers.len() - 1;
        let first_dense = self
            .layers
            .iter()
            .position(|l| matches!(l, LayerSpec::Dense { .. }));

        for (i, (spec, entry)) in self.layers.iter().zip(&trace.entries).enumerate().rev() {
            match (spec, entry) {
                (LayerSpec::Dense { .. }, TraceEntry::Dense { input }) => {
                    dense_idx -= 1;
                    let p = &self.params[dense_idx];
                    if input.rows() != g.rows() || g.cols() != p.weights.cols() {
                        return Err(Error::shape("backward", input.shape(), g.shape()));
                    }
                    let dw = input.t_matmul(&g)?;
                    let db = g.sum_rows();
                    grads[dense_idx] = Some(DenseParams {
                        weights: dw,
                        bias: db,
                    });
                    if Some(i) != first_dense {
                        g = g.matmul_t(&p.weights)?;
                    }
                }
                (LayerSpec::Relu, TraceEntry::Relu { output }) => {
                    for (gv, &o) in g.as_mut_slice().iter_mut().zip(output.as_slice()) {
                        if o <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                }
                (LayerSpec::Softmax, TraceEntry::Softmax { output }) => {
                    if i != last {
                        g = softmax_vjp(output, &g)?;
                    }
                }
                (LayerSpec::Dropout { .. }, TraceEntry::Dropout { mask }) => {
                    if let Some(m) = mask {
                        for (gv, k) in g.as_mut_slice().iter_mut().zip(m.as_slice()) {
                            *gv *= k;
                        }
                    }
                }
                _ => {
                    return Err(Error::contract(format!(
                        "trace entry {i} does not match layer {spec:?}"
                    )))
                }
            }
        }
        Ok(Gradients {
            dense: grads
                .into_iter()
                .map(|g| g.expect("every dense layer visited"))
                .collect(),
        })
    }
}

fn relu_in_place(m: &mut Matrix) {
    for v in m.as_mut_slice() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

// Entries are 0 or 1/(1-p); the draw order is row-major.
fn dropout_mask(rows: usize, cols: usize, p: f64, rng: &mut Rng) -> Matrix {
    let keep = 1.0 / (1.0 - p);
    let data = (0..rows * cols)
        .map(|_| if rng.uniform() < p { 0.0 } else { keep })
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

// dz = s * (g - <g, s>) row by row
fn softmax_vjp(s: &Matrix, g: &Matrix) -> Result<Matrix> {
    if s.shape() != g.shape() {
        return Err(Error::shape("softmax backward", s.shape(), g.shape()));
    }
    let mut out = g.clone();
    let cols = s.cols();
    if cols == 0 {
        return Ok(out);
    }
    for (orow, srow) in out
        .as_mut_slice()
        .chunks_exact_mut(cols)
        .zip(s.as_slice().chunks_exact(cols))
    {
        let dot: f64 = orow.iter().zip(srow).map(|(a, b)| a * b).sum();
        for (o, &sv) in orow.iter_mut().zip(srow) {
            *o = sv * (*o - dot);
        }
    }
    Ok(out)
}
