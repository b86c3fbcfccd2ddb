//! Generative cooperative learning: an autoencoder generator and a
//! classifier discriminator that supervise each other through thresholded
//! pseudo-labels, with negative learning on the generator.

mod checkpoint;
mod config;
mod labels;
mod model;
mod score;
mod steps;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::{GclConfig, Mode, NlMode};
pub use labels::{
    discriminator_probs, discriminator_pseudo_labels, generator_pseudo_labels, generator_soft_labels,
    labels_from_probs, reconstruction_errors, reconstruction_errors_matrix, DiscBatchStats,
    GenBatchStats, LabelSource, PseudoLabelSet, ThresholdStats,
};
pub use model::{
    check_mode_requirements, derive_seed, discriminator_activations, generator_activations,
    pretrain_discriminator, pretrain_generator, pretrain_subset, supervision_mask,
    train_baseline_autoencoder, EpochMetrics, GclModel, PretrainReport, StepTrace,
};
pub use score::{expand_to_frames, frame_series, score_segments, segment_scores, ScoreSource};
pub use steps::{
    make_nl_targets, train_discriminator_on_labels, train_discriminator_step, train_generator_step,
    NlTargetBatch,
};
