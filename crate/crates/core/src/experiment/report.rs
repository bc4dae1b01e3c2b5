use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpochPhase {
    BurnIn,
    SoftTarget,
    Vanilla,
}

impl fmt::Display for EpochPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EpochPhase::BurnIn => "BurnIn",
            EpochPhase::SoftTarget => "SoftTarget",
            EpochPhase::Vanilla => "Vanilla",
        })
    }
}

/// Metrics after one training epoch.
///
/// `train_loss` is measured against the targets actually optimized (the
/// blended targets during SoftTarget epochs); `train_loss_hard` against the
/// hard labels on the same forward passes. Test metrics use the hard test
/// labels in inference mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: EpochPhase,
    pub train_loss: f64,
    pub train_loss_hard: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub wall_ms: u64,
}

/// `(min test loss, final-epoch test loss, max test accuracy)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min_test_loss: f64,
    pub last_test_loss: f64,
    pub max_test_accuracy: f64,
}

impl Summary {
    /// How far the final loss sits above the best one.
    pub fn overfit_gap(&self) -> f64 {
        self.last_test_loss - self.min_test_loss
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.3}|{:.3}|{:.3}",
            self.min_test_loss, self.last_test_loss, self.max_test_accuracy
        )
    }
}

pub fn summarize(records: &[EpochRecord]) -> Result<Summary> {
    let last = records
        .last()
        .ok_or_else(|| Error::contract("cannot summarize an empty epoch series"))?;
    Ok(Summary {
        min_test_loss: records
            .iter()
            .map(|r| r.test_loss)
            .fold(f64::INFINITY, f64::min),
        last_test_loss: last.test_loss,
        max_test_accuracy: records
            .iter()
            .map(|r| r.test_accuracy)
            .fold(f64::NEG_INFINITY, f64::max),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub name: Option<String>,
    pub architecture: String,
    pub regime: String,
    pub dataset: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub epochs: Vec<EpochRecord>,
    pub summary: Summary,
}

impl TrainReport {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Per-epoch CSV. Wall-clock time is left out so that identical runs
    /// produce identical files.
    pub fn write_epochs_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "epoch",
            "phase",
            "train_loss",
            "train_loss_hard",
            "test_loss",
            "test_accuracy",
        ])?;
        for r in &self.epochs {
            w.write_record([
                r.epoch.to_string(),
                r.phase.to_string(),
                r.train_loss.to_string(),
                r.train_loss_hard.to_string(),
                r.test_loss.to_string(),
                r.test_accuracy.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}
