//! ADADELTA.
//!
//! Per parameter, with decay `rho` and conditioning constant `eps`:
//!
//! ```text
//! E[g^2]  <- rho * E[g^2]  + (1 - rho) * g^2
//! dx      <- -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
//! E[dx^2] <- rho * E[dx^2] + (1 - rho) * dx^2
//! x       <- x + dx
//! ```
//!
//! There is no global learning rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Gradients, LayerSpec, Network};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdadeltaConfig {
    pub rho: f64,
    pub eps: f64,
}

impl Default for AdadeltaConfig {
    fn default() -> Self {
        AdadeltaConfig {
            rho: 0.95,
            eps: 1e-6,
        }
    }
}

impl AdadeltaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!(
                "rho must be in (0, 1), got {}",
                self.rho
            )));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        Ok(())
    }
}

/// Running averages for one parameter matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdadeltaState {
    pub sq_grad: Matrix,
    pub sq_update: Matrix,
}

impl AdadeltaState {
    pub fn new(rows: usize, cols: usize) -> Self {
        AdadeltaState {
            sq_grad: Matrix::zeros(rows, cols),
            sq_update: Matrix::zeros(rows, cols),
        }
    }

    /// Applies one update to `params` in place.
    pub fn step(
        &mut self,
        config: &AdadeltaConfig,
        params: &mut Matrix,
        grads: &Matrix,
    ) -> Result<()> {
        if params.shape() != grads.shape() {
            return Err(Error::shape("adadelta", params.shape(), grads.shape()));
        }
        if self.sq_grad.shape() != params.shape() {
            return Err(Error::shape(
                "adadelta",
                self.sq_grad.shape(),
                params.shape(),
            ));
        }
        let AdadeltaConfig { rho, eps } = *config;
        let iter = params
            .as_mut_slice()
            .iter_mut()
            .zip(grads.as_slice())
            .zip(self.sq_grad.as_mut_slice())
            .zip(self.sq_update.as_mut_slice());
        for (((x, &g), eg2), edx2) in iter {
            *eg2 = rho * *eg2 + (1.0 - rho) * g * g;
            let dx = -((*edx2 + eps).sqrt() / (*eg2 + eps).sqrt()) * g;
            *edx2 = rho * *edx2 + (1.0 - rho) * dx * dx;
            *x += dx;
        }
        Ok(())
    }
}

/// ADADELTA over every dense layer of a network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adadelta {
    config: AdadeltaConfig,
    weights: Vec<AdadeltaState>,
    biases: Vec<AdadeltaState>,
}

impl Adadelta {
    pub fn new(config: AdadeltaConfig, network: &Network) -> Self {
        let (weights, biases) = network
            .layers()
            .iter()
            .filter_map(|l| match *l {
                LayerSpec::Dense { input, output } => Some((
                    AdadeltaState::new(input, output),
                    AdadeltaState::new(1, output),
                )),
                _ => None,
            })
            .unzip();
        Adadelta {
            config,
            weights,
            biases,
        }
    }

    pub(crate) fn from_parts(
        config: AdadeltaConfig,
        weights: Vec<AdadeltaState>,
        biases: Vec<AdadeltaState>,
    ) -> Self {
        Adadelta {
            config,
            weights,
            biases,
        }
    }

    pub fn config(&self) -> &AdadeltaConfig {
        &self.config
    }

    pub fn weight_states(&self) -> &[AdadeltaState] {
        &self.weights
    }

    pub fn bias_states(&self) -> &[AdadeltaState] {
        &self.biases
    }

    pub fn step(&mut self, network: &mut Network, grads: &Gradients) -> Result<()> {
        let params = network.params_mut();
        if params.len() != grads.dense.len() || params.len() != self.weights.len() {
            return Err(Error::contract(format!(
                "optimizer tracks {} layers, network has {}, gradients {}",
                self.weights.len(),
                params.len(),
                grads.dense.len()
            )));
        }
        for (((p, g), sw), sb) in params
            .iter_mut()
            .zip(&grads.dense)
            .zip(&mut self.weights)
            .zip(&mut self.biases)
        {
            sw.step(&self.config, &mut p.weights, &g.weights)?;
            sb.step(&self.config, &mut p.bias, &g.bias)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(v: f64) -> Matrix {
        Matrix::filled(1, 1, v)
    }

    #[test]
    fn zero_gradient_only_decays() {
        let cfg = AdadeltaConfig::default();
        let mut st = AdadeltaState {
            sq_grad: scalar(0.4),
            sq_update: scalar(0.2),
        };
        let mut x = scalar(1.5);
        st.step(&cfg, &mut x, &scalar(0.0)).unwrap();
        assert_eq!(x.get(0, 0), 1.5);
        assert!((st.sq_grad.get(0, 0) - 0.95 * 0.4).abs() < 1e-16);
        assert!((st.sq_update.get(0, 0) - 0.95 * 0.2).abs() < 1e-16);
    }

    #[test]
    fn first_step_matches_hand_arithmetic() {
        // E[g^2] = 0.05 after one step with g = 1; E[dx^2] = 0.
        let expected = -(1e-6f64).sqrt() / (0.05f64 + 1e-6).sqrt();
        let mut st = AdadeltaState::new(1, 1);
        let mut x = scalar(0.0);
        st.step(&AdadeltaConfig::default(), &mut x, &scalar(1.0))
            .unwrap();
        assert!((x.get(0, 0) - expected).abs() < 1e-15);
        assert!((x.get(0, 0) - -4.472091e-3).abs() < 1e-9);
    }

    #[test]
    fn first_step_nearly_scale_invariant() {
        let step = |g: f64| {
            let mut st = AdadeltaState::new(1, 1);
            let mut x = scalar(0.0);
            st.step(&AdadeltaConfig::default(), &mut x, &scalar(g))
                .unwrap();
            x.get(0, 0)
        };
        let (a, b) = (step(1.0), step(10.0));
        assert!(((b - a) / a).abs() < 0.01);
    }

    #[test]
    fn shape_mismatch() {
        let mut st = AdadeltaState::new(2, 2);
        let mut x = Matrix::zeros(2, 2);
        assert!(st
            .step(&AdadeltaConfig::default(), &mut x, &Matrix::zeros(2, 1))
            .is_err());
        let mut y = Matrix::zeros(1, 2);
        assert!(st
            .step(&AdadeltaConfig::default(), &mut y, &Matrix::zeros(1, 2))
            .is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AdadeltaConfig {
            rho: 1.0,
            eps: 1e-6
        }
        .validate()
        .is_err());
        assert!(AdadeltaConfig { rho: 0.9, eps: 0.0 }.validate().is_err());
        assert!(AdadeltaConfig::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn elementwise_and_finite(
            g in proptest::collection::vec(-1e6f64..1e6, 6),
            seed in 0usize..720,
        ) {
            let cfg = AdadeltaConfig::default();
            let mut perm: Vec<usize> = (0..6).collect();
            // a deterministic permutation indexed by `seed`
            let mut s = seed;
            for i in (1..6).rev() {
                perm.swap(i, s % (i + 1));
                s /= i + 1;
            }
            let gm = Matrix::from_vec(1, 6, g.clone()).unwrap();
            let gp = Matrix::from_vec(1, 6, perm.iter().map(|&i| g[i]).collect()).unwrap();
            let mut x = Matrix::zeros(1, 6);
            let mut xp = Matrix::zeros(1, 6);
            let mut st = AdadeltaState::new(1, 6);
            let mut stp = AdadeltaState::new(1, 6);
            for _ in 0..3 {
                st.step(&cfg, &mut x, &gm).unwrap();
                stp.step(&cfg, &mut xp, &gp).unwrap();
            }
            for (j, &i) in perm.iter().enumerate() {
                prop_assert_eq!(xp.get(0, j).to_bits(), x.get(0, i).to_bits());
            }
            prop_assert!(x.is_finite());
            prop_assert!(st.sq_grad.as_slice().iter().all(|&v| v >= 0.0));
            prop_assert!(st.sq_update.as_slice().iter().all(|&v| v >= 0.0));
        }
    }
}
