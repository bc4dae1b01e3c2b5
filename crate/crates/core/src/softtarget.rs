//! SoftTarget regularization.
//!
//! Training labels are replaced, once per time-step, by a convex blend of the
//! hard labels and an exponential moving average of the model's own past
//! predictions on the training set:
//!
//! ```text
//! Y_hat(t) = beta * Y_hat(t-1) + (1 - beta) * F(X)
//! Y_c(t)   = gamma * Y_hat(t) + (1 - gamma) * Y
//! ```
//!
//! A run starts with `burn_in` epochs on the hard labels, snapshots the
//! predictions as `Y_hat(0)`, then performs `floor((n - burn_in) / n_t)`
//! time-steps of `n_t` epochs each. Epochs that do not fill a whole
//! time-step are not run.
//!
//! `beta = 0` makes the targets the current predictions blended with the
//! labels (bootstrapping); `gamma = 0` is plain training.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Tolerance on row sums when accepting predictions.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftTargetConfig {
    /// EMA decay.
    pub beta: f64,
    /// Weight of the EMA in the blended targets.
    pub gamma: f64,
    /// Epochs on hard labels before the first snapshot.
    pub burn_in: usize,
    /// Epochs trained on each blended target matrix.
    pub epochs_per_step: usize,
    /// Total epoch budget, burn-in included.
    pub total_epochs: usize,
}

impl SoftTargetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!(
                "beta must be in [0, 1], got {}",
                self.beta
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "gamma must be in [0, 1], got {}",
                self.gamma
            )));
        }
        if self.epochs_per_step == 0 {
            return Err(Error::Config(
                "epochs per time-step must be at least 1".into(),
            ));
        }
        if self.total_epochs < self.burn_in {
            return Err(Error::Config(format!(
                "total epochs {} is less than burn-in {}",
                self.total_epochs, self.burn_in
            )));
        }
        Ok(())
    }

    pub fn time_steps(&self) -> usize {
        (self.total_epochs - self.burn_in) / self.epochs_per_step
    }

    /// Epochs actually trained: burn-in plus whole time-steps.
    pub fn trained_epochs(&self) -> usize {
        self.burn_in + self.time_steps() * self.epochs_per_step
    }
}

/// One stage of a SoftTarget run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// Train on hard labels.
    BurnIn { epochs: usize },
    /// Capture full-training-set predictions as the initial EMA.
    Snapshot,
    /// Refresh predictions, update the EMA, blend targets, then train.
    TimeStep { step: usize, epochs: usize },
}

/// Expands a configuration into its ordered phases.
///
/// The burn-in is omitted when empty, and the snapshot when no time-step
/// follows it.
pub fn schedule(config: &SoftTargetConfig) -> Result<Vec<Phase>> {
    config.validate()?;
    let steps = config.time_steps();
    let mut phases = Vec::with_capacity(steps + 2);
    if config.burn_in > 0 {
        phases.push(Phase::BurnIn {
            epochs: config.burn_in,
        });
    }
    if steps > 0 {
        phases.push(Phase::Snapshot);
    }
    phases.extend((1..=steps).map(|step| Phase::TimeStep {
        step,
        epochs: config.epochs_per_step,
    }));
    Ok(phases)
}

pub fn scheduled_epochs(phases: &[Phase]) -> usize {
    phases
        .iter()
        .map(|p| match *p {
            Phase::BurnIn { epochs } | Phase::TimeStep { epochs, .. } => epochs,
            Phase::Snapshot => 0,
        })
        .sum()
}

/// The moving average of past predictions and its time-step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftTargetState {
    y_hat: Matrix,
    step: usize,
    config: SoftTargetConfig,
}

impl SoftTargetState {
    /// Starts the average at `predictions`, taken after burn-in.
    pub fn new(predictions: Matrix, config: SoftTargetConfig) -> Result<Self> {
        config.validate()?;
        check_distributions("initial predictions", &predictions)?;
        Ok(SoftTargetState {
            y_hat: predictions,
            step: 0,
            config,
        })
    }

    pub fn y_hat(&self) -> &Matrix {
        &self.y_hat
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn config(&self) -> &SoftTargetConfig {
        &self.config
    }

    /// `y_hat <- beta * y_hat + (1 - beta) * predictions`, then advances the step.
    pub fn update_ema(&mut self, predictions: &Matrix) -> Result<()> {
        if predictions.shape() != self.y_hat.shape() {
            return Err(Error::shape(
                "update_ema",
                self.y_hat.shape(),
                predictions.shape(),
            ));
        }
        check_distributions("predictions", predictions)?;
        let beta = self.config.beta;
        // beta == 1 keeps y_hat bit-exact; beta == 0 copies predictions.
        if beta == 0.0 {
            self.y_hat
                .as_mut_slice()
                .copy_from_slice(predictions.as_slice());
        } else if beta < 1.0 {
            for (y, &p) in self
                .y_hat
                .as_mut_slice()
                .iter_mut()
                .zip(predictions.as_slice())
            {
                *y = beta * *y + (1.0 - beta) * p;
            }
        }
        self.step += 1;
        Ok(())
    }

    /// `gamma * y_hat + (1 - gamma) * y_hard`, as a new matrix.
    pub fn blend_targets(&self, y_hard: &Matrix) -> Result<Matrix> {
        if y_hard.shape() != self.y_hat.shape() {
            return Err(Error::shape(
                "blend_targets",
                self.y_hat.shape(),
                y_hard.shape(),
            ));
        }
        check_one_hot(y_hard)?;
        let gamma = self.config.gamma;
        if gamma == 0.0 {
            return Ok(y_hard.clone());
        }
        if gamma == 1.0 {
            return Ok(self.y_hat.clone());
        }
        self.y_hat
            .zip_map(y_hard, |s, h| gamma * s + (1.0 - gamma) * h)
    }
}

fn check_distributions(what: &str, m: &Matrix) -> Result<()> {
    for (i, row) in m.row_iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE || row.iter().any(|&v| v.is_nan() || v < 0.0) {
            return Err(Error::contract(format!(
                "{what}: row {i} is not a probability distribution (sum {sum})"
            )));
        }
    }
    Ok(())
}

fn check_one_hot(m: &Matrix) -> Result<()> {
    for (i, row) in m.row_iter().enumerate() {
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || ones + zeros != row.len() {
            return Err(Error::contract(format!(
                "hard labels: row {i} is not one-hot"
            )));
        }
    }
    Ok(())
}
