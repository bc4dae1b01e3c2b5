use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset, SynthParams};
use crate::error::{Error, Result};
use crate::nn::LayerSpec;
use crate::optim::AdadeltaConfig;
use crate::softtarget::SoftTargetConfig;
use crate::tensor::Rng;

pub const DEFAULT_BATCH_SIZE: usize = 128;

/// Environment variable that overrides the IDX data directory of a config.
pub const DATA_DIR_ENV: &str = "SOFTTARGET_DATA_DIR";

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Where the train and test sets come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// MNIST-layout IDX files in `dir`. Limits keep the first samples.
    Idx {
        dir: PathBuf,
        #[serde(default)]
        train_limit: Option<usize>,
        #[serde(default)]
        test_limit: Option<usize>,
    },
    /// Gaussian clusters; train and test share centers, drawn from `seed`.
    Synth {
        classes: usize,
        per_class: usize,
        test_per_class: usize,
        dim: usize,
        spread: f64,
        #[serde(default)]
        overlap_pairs: Vec<(usize, usize)>,
        #[serde(default)]
        seed: u64,
    },
}

impl DatasetSource {
    /// Loads `(train, test)`.
    pub fn load(&self) -> Result<(Dataset, Dataset)> {
        match self {
            DatasetSource::Idx {
                dir,
                train_limit,
                test_limit,
            } => {
                let train = data::load_idx(&dir.join(TRAIN_IMAGES), &dir.join(TRAIN_LABELS))?;
                let test = data::load_idx(&dir.join(TEST_IMAGES), &dir.join(TEST_LABELS))?;
                let train = match train_limit {
                    Some(n) => train.head(*n),
                    None => train,
                };
                let test = match test_limit {
                    Some(n) => test.head(*n),
                    None => test,
                };
                Ok((train, test))
            }
            DatasetSource::Synth {
                classes,
                per_class,
                test_per_class,
                dim,
                spread,
                overlap_pairs,
                seed,
            } => {
                let mut params = SynthParams {
                    classes: *classes,
                    per_class: *per_class,
                    dim: *dim,
                    spread: *spread,
                    overlap_pairs: overlap_pairs.clone(),
                };
                let mut rng = Rng::new(*seed);
                let train = data::synth_clusters(&params, &mut rng)?;
                params.per_class = *test_per_class;
                let test = data::synth_clusters(&params, &mut rng)?;
                Ok((train, test))
            }
        }
    }

    /// Stable description used to check that reports are comparable.
    pub fn describe(&self) -> String {
        match self {
            DatasetSource::Idx {
                dir,
                train_limit,
                test_limit,
            } => {
                let name = dir
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| dir.display().to_string());
                let lim = |l: &Option<usize>| l.map_or("all".to_string(), |n| n.to_string());
                format!("idx:{name}:train={}:test={}", lim(train_limit), lim(test_limit))
            }
            DatasetSource::Synth {
                classes,
                per_class,
                test_per_class,
                dim,
                spread,
                overlap_pairs,
                seed,
            } => format!(
                "synth:k={classes}:n={per_class}/{test_per_class}:d={dim}:s={spread}:o={overlap_pairs:?}:seed={seed}"
            ),
        }
    }
}

/// Fully connected ReLU stack: `hidden_layers` layers of `units` each.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub hidden_layers: usize,
    pub units: usize,
}

impl Architecture {
    /// Layer stack for the given input width, class count and dropout.
    /// Dropout follows every hidden activation, never the input.
    pub fn layers(&self, input: usize, classes: usize, dropout: f64) -> Vec<LayerSpec> {
        let mut specs = Vec::with_capacity(self.hidden_layers * 3 + 2);
        let mut width = input;
        for _ in 0..self.hidden_layers {
            specs.push(LayerSpec::Dense {
                input: width,
                output: self.units,
            });
            specs.push(LayerSpec::Relu);
            if dropout > 0.0 {
                specs.push(LayerSpec::Dropout { p: dropout });
            }
            width = self.units;
        }
        specs.push(LayerSpec::Dense {
            input: width,
            output: classes,
        });
        specs.push(LayerSpec::Softmax);
        specs
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.hidden_layers, self.units)
    }
}

impl FromStr for Architecture {
    type Err = Error;

    /// Parses `LAYERSxUNITS`, e.g. `3x256`.
    fn from_str(s: &str) -> Result<Self> {
        let (l, u) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::Config(format!("architecture {s:?} is not LAYERSxUNITS")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("architecture {s:?} is not LAYERSxUNITS")))
        };
        Ok(Architecture {
            hidden_layers: parse(l)?,
            units: parse(u)?,
        })
    }
}

/// SoftTarget hyper-parameters; the epoch budget comes from the experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoftTargetSettings {
    pub beta: f64,
    pub gamma: f64,
    pub burn_in: usize,
    pub epochs_per_step: usize,
}

impl Default for SoftTargetSettings {
    fn default() -> Self {
        SoftTargetSettings {
            beta: 0.7,
            gamma: 0.5,
            burn_in: 2,
            epochs_per_step: 2,
        }
    }
}

impl SoftTargetSettings {
    pub fn with_total(&self, total_epochs: usize) -> SoftTargetConfig {
        SoftTargetConfig {
            beta: self.beta,
            gamma: self.gamma,
            burn_in: self.burn_in,
            epochs_per_step: self.epochs_per_step,
            total_epochs,
        }
    }
}

/// Which regularizers a run uses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Regime {
    Vanilla,
    Dropout(f64),
    SoftTarget,
    SoftTargetDropout(f64),
}

impl Regime {
    /// Rewrites `config` to this regime; SoftTarget regimes keep the
    /// config's settings or fall back to `settings`.
    pub fn apply(&self, config: &mut ExperimentConfig, settings: SoftTargetSettings) {
        let st = config.softtarget.unwrap_or(settings);
        let (dropout, softtarget) = match *self {
            Regime::Vanilla => (0.0, None),
            Regime::Dropout(p) => (p, None),
            Regime::SoftTarget => (0.0, Some(st)),
            Regime::SoftTargetDropout(p) => (p, Some(st)),
        };
        config.dropout = dropout;
        config.softtarget = softtarget;
    }

    pub fn of(config: &ExperimentConfig) -> Regime {
        match (config.softtarget.is_some(), config.dropout > 0.0) {
            (false, false) => Regime::Vanilla,
            (false, true) => Regime::Dropout(config.dropout),
            (true, false) => Regime::SoftTarget,
            (true, true) => Regime::SoftTargetDropout(config.dropout),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Vanilla => write!(f, "vanilla"),
            Regime::Dropout(p) => write!(f, "dropout:{p}"),
            Regime::SoftTarget => write!(f, "softtarget"),
            Regime::SoftTargetDropout(p) => write!(f, "softtarget+dropout:{p}"),
        }
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown regime {s:?}"));
        let prob = |v: &str| -> Result<f64> {
            let p: f64 = v.parse().map_err(|_| bad())?;
            if (0.0..1.0).contains(&p) && p > 0.0 {
                Ok(p)
            } else {
                Err(Error::Config(format!("dropout {p} outside (0, 1)")))
            }
        };
        match s.trim() {
            "vanilla" => Ok(Regime::Vanilla),
            "softtarget" => Ok(Regime::SoftTarget),
            other => {
                if let Some(p) = other.strip_prefix("softtarget+dropout:") {
                    Ok(Regime::SoftTargetDropout(prob(p)?))
                } else if let Some(p) = other.strip_prefix("dropout:") {
                    Ok(Regime::Dropout(prob(p)?))
                } else {
                    Err(bad())
                }
            }
        }
    }
}

fn default_batch_size() -> usize {
    DEFAULT_BATCH_SIZE
}

/// Everything needed to reproduce one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub dataset: DatasetSource,
    pub architecture: Architecture,
    /// Dropout probability after each hidden layer; 0 disables.
    #[serde(default)]
    pub dropout: f64,
    /// `None` trains on hard labels throughout.
    #[serde(default)]
    pub softtarget: Option<SoftTargetSettings>,
    #[serde(default)]
    pub optimizer: AdadeltaConfig,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Epochs after which to write `checkpoint_<epoch>.bin`; the final
    /// epoch is always checkpointed when an output directory is set.
    #[serde(default)]
    pub checkpoint_epochs: Vec<usize>,
    /// Write the moving average of predictions at every time-step.
    #[serde(default)]
    pub dump_soft_targets: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Named starting points. `mnist-full` is 60k training images for 100
    /// epochs; `mnist-desk` the first 10k for 30 epochs. Both use a 3x256
    /// network and SoftTarget with beta 0.7, gamma 0.5, burn-in 2 and 2
    /// epochs per time-step.
    pub fn preset(name: &str) -> Result<Self> {
        let (train_limit, epochs) = match name {
            "mnist-full" => (None, 100),
            "mnist-desk" => (Some(10_000), 30),
            _ => {
                return Err(Error::Config(format!(
                    "unknown preset {name:?} (expected mnist-full or mnist-desk)"
                )))
            }
        };
        Ok(ExperimentConfig {
            name: Some(name.to_string()),
            dataset: DatasetSource::Idx {
                dir: PathBuf::from("data/mnist"),
                train_limit,
                test_limit: None,
            },
            architecture: Architecture {
                hidden_layers: 3,
                units: 256,
            },
            dropout: 0.0,
            softtarget: Some(SoftTargetSettings::default()),
            optimizer: AdadeltaConfig::default(),
            batch_size: DEFAULT_BATCH_SIZE,
            epochs,
            seed: 0,
            output_dir: None,
            checkpoint_epochs: Vec::new(),
            dump_soft_targets: false,
        })
    }

    /// Replaces the IDX directory with `$SOFTTARGET_DATA_DIR` when set.
    pub fn apply_env_overrides(&mut self) {
        if let Ok(dir) = std::env::var(DATA_DIR_ENV) {
            if !dir.is_empty() {
                self.set_data_dir(PathBuf::from(dir));
            }
        }
    }

    pub fn set_data_dir(&mut self, new_dir: PathBuf) {
        if let DatasetSource::Idx { dir, .. } = &mut self.dataset {
            *dir = new_dir;
        }
    }

    pub fn regime(&self) -> Regime {
        Regime::of(self)
    }

    pub fn softtarget_config(&self) -> Option<SoftTargetConfig> {
        self.softtarget.map(|s| s.with_total(self.epochs))
    }

    /// Epochs the run will actually train.
    pub fn trained_epochs(&self) -> usize {
        self.softtarget_config()
            .map_or(self.epochs, |c| c.trained_epochs())
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.architecture.hidden_layers > 0 && self.architecture.units == 0 {
            return Err(Error::Config("hidden layers need at least one unit".into()));
        }
        self.optimizer.validate()?;
        if let Some(st) = self.softtarget_config() {
            st.validate()?;
            if st.trained_epochs() == 0 {
                return Err(Error::Config("SoftTarget schedule trains no epochs".into()));
            }
        }
        if let Some(&e) = self
            .checkpoint_epochs
            .iter()
            .find(|&&e| e == 0 || e > self.epochs)
        {
            return Err(Error::Config(format!(
                "checkpoint epoch {e} outside 1..={}",
                self.epochs
            )));
        }
        Ok(())
    }
}
