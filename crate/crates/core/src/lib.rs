//! SoftTarget regularization for feed-forward classifiers.
//!
//! The crate trains dense ReLU networks with ADADELTA and replaces the hard
//! training labels, once per time-step, with a blend of those labels and an
//! exponential moving average of the network's own past predictions
//! ([`softtarget`]). It also computes the co-label covariance of a model's
//! predictions ([`analysis`]), which tracks how much class-similarity
//! structure a model keeps as it trains.
//!
//! All arithmetic is `f64`; all randomness flows from seeded [`Rng`]
//! streams, so runs are reproducible.

pub mod analysis;
pub mod checkpoint;
pub mod data;
mod error;
pub mod experiment;
pub mod nn;
pub mod optim;
pub mod softtarget;
pub mod tensor;

pub use error::{Error, IdxError, Result};
pub use tensor::{row_softmax, shuffle_rows, Matrix, Rng};
