//! Unsupervised anomaly detection on pre-extracted video features through
//! generative cooperative learning.
//!
//! An autoencoder (the generator) and a binary classifier (the
//! discriminator) are trained on unlabeled segment features. Each batch, the
//! generator's reconstruction errors are thresholded into pseudo-labels that
//! train the discriminator; the discriminator's thresholded probabilities then
//! decide which rows the generator should learn to reconstruct badly. Final
//! anomaly scores come from the discriminator.
//!
//! Modules:
//!
//! - [`nn`]: dense layers, losses, backpropagation, RMSprop
//! - [`data`]: feature files, manifests, shuffling, temporal cleaning, synthetic data
//! - [`gcl`]: pseudo-labelers, negative learning, pre-training, cooperative loop, checkpoints
//! - [`eval`]: frame-level AUC and score export

// `!(x >= 0.0)` style checks are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod eval;
pub mod gcl;
pub mod nn;

pub use data::{Batch, DatasetManifest, FeatureRecord, SynthConfig, SyntheticDataset, VideoLabel};
pub use error::{GclError, Result};
pub use eval::{compute_auc, AucReport, ScoreSeries};
pub use gcl::{GclConfig, GclModel, Mode, NlMode};
pub use nn::{Activation, Matrix, Network, RmspropState};
