//! Network checkpoints, optionally with optimizer state.
//!
//! Two encodings carry the same content. JSON is the serde form of
//! [`Checkpoint`]. The binary form is little-endian throughout:
//!
//! ```text
//! magic        4 bytes  "STCK"
//! version      u32      1
//! epoch        u64
//! layer count  u32
//! layers       per layer a tag byte, then its fields:
//!                0 dense    input u32, output u32
//!                1 relu
//!                2 softmax
//!                3 dropout  p f64
//! parameters   per dense layer: weights (input*output f64, row-major),
//!              then bias (output f64)
//! optimizer    u8: 0 none, 1 adadelta
//!              adadelta: rho f64, eps f64, then per dense layer
//!              E[g^2] weights, E[g^2] bias, E[dx^2] weights, E[dx^2] bias
//! ```
//!
//! Trailing bytes are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{DenseParams, LayerSpec, Network};
use crate::optim::{Adadelta, AdadeltaConfig, AdadeltaState};
use crate::tensor::Matrix;

const MAGIC: &[u8; 4] = b"STCK";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub epoch: u64,
    pub network: Network,
    pub optimizer: Option<Adadelta>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.network.parameter_count() * 8 * 3);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&(self.network.layers().len() as u32).to_le_bytes());
        for layer in self.network.layers() {
            match *layer {
                LayerSpec::Dense { input, output } => {
                    out.push(0);
                    out.extend_from_slice(&(input as u32).to_le_bytes());
                    out.extend_from_slice(&(output as u32).to_le_bytes());
                }
                LayerSpec::Relu => out.push(1),
                LayerSpec::Softmax => out.push(2),
                LayerSpec::Dropout { p } => {
                    out.push(3);
                    out.extend_from_slice(&p.to_le_bytes());
                }
            }
        }
        for p in self.network.params() {
            put_matrix(&mut out, &p.weights);
            put_matrix(&mut out, &p.bias);
        }
        match &self.optimizer {
            None => out.push(0),
            Some(opt) => {
                out.push(1);
                out.extend_from_slice(&opt.config().rho.to_le_bytes());
                out.extend_from_slice(&opt.config().eps.to_le_bytes());
                for (w, b) in opt.weight_states().iter().zip(opt.bias_states()) {
                    put_matrix(&mut out, &w.sq_grad);
                    put_matrix(&mut out, &b.sq_grad);
                    put_matrix(&mut out, &w.sq_update);
                    put_matrix(&mut out, &b.sq_update);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let epoch = r.u64()?;
        let count = r.u32()? as usize;
        let mut layers = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            layers.push(match r.u8()? {
                0 => LayerSpec::Dense {
                    input: r.u32()? as usize,
                    output: r.u32()? as usize,
                },
                1 => LayerSpec::Relu,
                2 => LayerSpec::Softmax,
                3 => LayerSpec::Dropout { p: r.f64()? },
                t => return Err(Error::Checkpoint(format!("unknown layer tag {t}"))),
            });
        }
        let dims: Vec<(usize, usize)> = layers
            .iter()
            .filter_map(|l| match *l {
                LayerSpec::Dense { input, output } => Some((input, output)),
                _ => None,
            })
            .collect();
        let mut params = Vec::with_capacity(dims.len());
        for &(i, o) in &dims {
            params.push(DenseParams {
                weights: r.matrix(i, o)?,
                bias: r.matrix(1, o)?,
            });
        }
        let network =
            Network::from_parts(layers, params).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let config = AdadeltaConfig {
                    rho: r.f64()?,
                    eps: r.f64()?,
                };
                let mut weights = Vec::with_capacity(dims.len());
                let mut biases = Vec::with_capacity(dims.len());
                for &(i, o) in &dims {
                    let wg = r.matrix(i, o)?;
                    let bg = r.matrix(1, o)?;
                    let wu = r.matrix(i, o)?;
                    let bu = r.matrix(1, o)?;
                    weights.push(AdadeltaState {
                        sq_grad: wg,
                        sq_update: wu,
                    });
                    biases.push(AdadeltaState {
                        sq_grad: bg,
                        sq_update: bu,
                    });
                }
                Some(Adadelta::from_parts(config, weights, biases))
            }
            t => return Err(Error::Checkpoint(format!("unknown optimizer tag {t}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            epoch,
            network,
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = if is_json(path) {
            serde_json::to_vec(self)?
        } else {
            self.to_bytes()
        };
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Loads by extension: `.json` as JSON, anything else as binary.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if is_json(path) {
            Ok(serde_json::from_slice(&bytes)?)
        } else {
            Self::from_bytes(&bytes)
        }
    }
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "json")
}

fn put_matrix(out: &mut Vec<u8>, m: &Matrix) {
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8")))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Checkpoint("matrix size overflows".into()))?;
        let raw = self.take(n)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8")))
            .collect();
        Matrix::from_vec(rows, cols, data)
    }
}
