use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::ExperimentConfig;
use super::report::{summarize, EpochPhase, EpochRecord, TrainReport};
use crate::checkpoint::Checkpoint;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{accuracy, cross_entropy, cross_entropy_loss, Mode, Network};
use crate::optim::Adadelta;
use crate::softtarget::{schedule, Phase, SoftTargetState};
use crate::tensor::{Matrix, Rng};

/// Stream ids under the run seed.
pub const STREAM_INIT: u64 = 1;
pub const STREAM_SHUFFLE: u64 = 2;
pub const STREAM_DROPOUT: u64 = 3;

/// Rows per inference chunk when predicting on whole datasets.
const PREDICT_CHUNK: usize = 2048;

/// Passed to the observer after each time-step's targets are built.
pub struct TimeStep<'a> {
    pub step: usize,
    /// Epochs completed before this time-step trains.
    pub epochs_done: usize,
    pub y_hat: &'a Matrix,
    pub targets: &'a Matrix,
}

pub struct RunOutcome {
    pub report: TrainReport,
    pub network: Network,
    pub optimizer: Adadelta,
}

type Observer<'a> = Box<dyn FnMut(&TimeStep<'_>) + 'a>;
type EpochHook<'a> = Box<dyn FnMut(&EpochRecord) + 'a>;

/// One training run over in-memory datasets.
///
/// Only `train` feeds the parameters; `test` is read for evaluation after
/// every epoch.
pub struct Experiment<'a> {
    config: ExperimentConfig,
    train: &'a Dataset,
    test: &'a Dataset,
    observer: Option<Observer<'a>>,
    on_epoch: Option<EpochHook<'a>>,
}

impl<'a> Experiment<'a> {
    pub fn new(config: ExperimentConfig, train: &'a Dataset, test: &'a Dataset) -> Result<Self> {
        config.validate()?;
        if train.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        if train.features() != test.features() || train.classes() != test.classes() {
            return Err(Error::shape(
                "train/test datasets",
                (train.features(), train.classes()),
                (test.features(), test.classes()),
            ));
        }
        Ok(Experiment {
            config,
            train,
            test,
            observer: None,
            on_epoch: None,
        })
    }

    /// Sees the moving average and blended targets of every time-step.
    pub fn observe(mut self, f: impl FnMut(&TimeStep<'_>) + 'a) -> Self {
        self.observer = Some(Box::new(f));
        self
    }

    /// Called with each epoch's record as soon as it is complete.
    pub fn on_epoch(mut self, f: impl FnMut(&EpochRecord) + 'a) -> Self {
        self.on_epoch = Some(Box::new(f));
        self
    }

    pub fn run(mut self) -> Result<RunOutcome> {
        let cfg = self.config.clone();
        let specs =
            cfg.architecture
                .layers(self.train.features(), self.train.classes(), cfg.dropout);
        let mut net = Network::init(&specs, &mut Rng::with_stream(cfg.seed, STREAM_INIT))?;
        let optimizer = Adadelta::new(cfg.optimizer, &net);
        net.set_mode(Mode::Train);

        let mut state = LoopState {
            net,
            optimizer,
            shuffle: Rng::with_stream(cfg.seed, STREAM_SHUFFLE),
            dropout: Rng::with_stream(cfg.seed, STREAM_DROPOUT),
            records: Vec::with_capacity(cfg.epochs),
            hook: self.on_epoch.take(),
        };
        let out_dir = cfg.output_dir.clone();
        if let Some(dir) = &out_dir {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }

        match cfg.softtarget_config() {
            None => {
                for _ in 0..cfg.epochs {
                    self.epoch(&mut state, &self.train.y, EpochPhase::Vanilla)?;
                }
            }
            Some(st_cfg) => {
                let mut soft: Option<SoftTargetState> = None;
                for phase in schedule(&st_cfg)? {
                    match phase {
                        Phase::BurnIn { epochs } => {
                            for _ in 0..epochs {
                                self.epoch(&mut state, &self.train.y, EpochPhase::BurnIn)?;
                            }
                        }
                        Phase::Snapshot => {
                            let p = predict_all(&state.net, &self.train.x)?;
                            soft = Some(SoftTargetState::new(p, st_cfg)?);
                        }
                        Phase::TimeStep { step, epochs } => {
                            let soft = soft
                                .as_mut()
                                .ok_or_else(|| Error::contract("time-step before snapshot"))?;
                            let p = predict_all(&state.net, &self.train.x)?;
                            soft.update_ema(&p)?;
                            let targets = soft.blend_targets(&self.train.y)?;
                            if let Some(obs) = self.observer.as_mut() {
                                obs(&TimeStep {
                                    step,
                                    epochs_done: state.records.len(),
                                    y_hat: soft.y_hat(),
                                    targets: &targets,
                                });
                            }
                            if cfg.dump_soft_targets {
                                if let Some(dir) = &out_dir {
                                    write_matrix_csv(
                                        &dir.join(format!("yhat_{step}.csv")),
                                        soft.y_hat(),
                                    )?;
                                }
                            }
                            for _ in 0..epochs {
                                self.epoch(&mut state, &targets, EpochPhase::SoftTarget)?;
                            }
                        }
                    }
                }
            }
        }

        let LoopState {
            mut net,
            optimizer,
            records,
            ..
        } = state;
        net.set_mode(Mode::Infer);
        let summary = summarize(&records)?;
        let report = TrainReport {
            name: cfg.name.clone(),
            architecture: cfg.architecture.to_string(),
            regime: cfg.regime().to_string(),
            dataset: cfg.dataset.describe(),
            seed: cfg.seed,
            config: cfg,
            epochs: records,
            summary,
        };
        Ok(RunOutcome {
            report,
            network: net,
            optimizer,
        })
    }

    fn epoch(&self, s: &mut LoopState<'a>, targets: &Matrix, phase: EpochPhase) -> Result<()> {
        let started = Instant::now();
        let epoch = s.records.len() + 1;
        let n = self.train.len();
        let order = s.shuffle.permutation(n);
        let mut loss_sum = 0.0;
        let mut hard_sum = 0.0;
        for batch in order.chunks(self.config.batch_size) {
            let x = self.train.x.select_rows(batch);
            let t = targets.select_rows(batch);
            let (probs, trace) = s.net.forward(&x, &mut s.dropout)?;
            let (loss, grad) = cross_entropy(&probs, &t)?;
            let hard = if std::ptr::eq(targets, &self.train.y) {
                loss
            } else {
                cross_entropy_loss(&probs, &self.train.y.select_rows(batch))?
            };
            let grads = s.net.backward(&trace, &grad)?;
            s.optimizer.step(&mut s.net, &grads)?;
            loss_sum += loss * batch.len() as f64;
            hard_sum += hard * batch.len() as f64;
        }
        let train_loss = loss_sum / n as f64;
        if !train_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                quantity: "training loss",
            });
        }
        let (test_loss, test_accuracy) = evaluate(&s.net, self.test)?;
        if !test_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                quantity: "test loss",
            });
        }
        s.records.push(EpochRecord {
            epoch,
            phase,
            train_loss,
            train_loss_hard: hard_sum / n as f64,
            test_loss,
            test_accuracy,
            wall_ms: started.elapsed().as_millis() as u64,
        });
        if let (Some(hook), Some(last)) = (s.hook.as_mut(), s.records.last()) {
            hook(last);
        }
        if let Some(dir) = &self.config.output_dir {
            if self.config.checkpoint_epochs.contains(&epoch)
                || epoch == self.config.trained_epochs()
            {
                let mut net = s.net.clone();
                net.set_mode(Mode::Infer);
                Checkpoint {
                    epoch: epoch as u64,
                    network: net,
                    optimizer: Some(s.optimizer.clone()),
                }
                .save(&checkpoint_path(dir, epoch))?;
            }
        }
        Ok(())
    }
}

struct LoopState<'a> {
    net: Network,
    optimizer: Adadelta,
    shuffle: Rng,
    dropout: Rng,
    records: Vec<EpochRecord>,
    hook: Option<EpochHook<'a>>,
}

pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("checkpoint_{epoch}.bin"))
}

/// Inference-mode predictions over a whole dataset, in chunks.
pub fn predict_all(net: &Network, x: &Matrix) -> Result<Matrix> {
    let mut data = Vec::with_capacity(x.rows() * net.output_dim().unwrap_or(x.cols()));
    let mut cols = 0;
    let idx: Vec<usize> = (0..x.rows()).collect();
    for chunk in idx.chunks(PREDICT_CHUNK) {
        let p = net.predict(&x.select_rows(chunk))?;
        cols = p.cols();
        data.extend_from_slice(p.as_slice());
    }
    if x.rows() == 0 {
        cols = net.output_dim().unwrap_or(0);
    }
    Matrix::from_vec(x.rows(), cols, data)
}

/// Mean cross-entropy and accuracy against hard labels.
pub fn evaluate(net: &Network, data: &Dataset) -> Result<(f64, f64)> {
    let probs = predict_all(net, &data.x)?;
    Ok((
        cross_entropy_loss(&probs, &data.y)?,
        accuracy(&probs, &data.y)?,
    ))
}

fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Loads the data, trains, and writes `report.json`, `epochs.csv` and
/// checkpoints when the config names an output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<TrainReport> {
    config.validate()?;
    let (train, test) = config.dataset.load()?;
    let outcome = Experiment::new(config.clone(), &train, &test)?.run()?;
    if let Some(dir) = &config.output_dir {
        write_report(dir, &outcome.report)?;
    }
    Ok(outcome.report)
}

pub fn write_report(dir: &Path, report: &TrainReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    report.save_json(&dir.join("report.json"))?;
    report.write_epochs_csv(&dir.join("epochs.csv"))
}
