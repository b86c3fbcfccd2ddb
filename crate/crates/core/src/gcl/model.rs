//! Generator/discriminator pair, pre-training and the cooperative loop.
//!
//! Each cooperative batch runs, in order:
//!
//! 1. generator pseudo-labels from the current generator,
//! 2. one discriminator step on them,
//! 3. discriminator pseudo-labels from the updated discriminator,
//! 4. negative-learning targets from those labels,
//! 5. one generator step.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{GclConfig, Mode, NlMode};
use super::labels::{
    discriminator_probs, generator_pseudo_labels, generator_soft_labels, labels_from_probs,
    reconstruction_errors_matrix, PseudoLabelSet,
};
use super::steps::{make_nl_targets, train_discriminator_on_labels, train_generator_step, NlTargetBatch};
use crate::data::{
    shuffle_subset, temporal_difference_indices, Batch, CleanerConfig, DatasetManifest, FeatureRecord,
    VideoLabel,
};
use crate::error::{GclError, Result};
use crate::nn::{Activation, Network, RmspropState};

/// Seed-derivation tags, so each consumer of randomness gets its own stream.
mod tag {
    pub const GEN_INIT: u64 = 1;
    pub const DISC_INIT: u64 = 2;
    pub const NL_RNG: u64 = 3;
    pub const WS_SELECT: u64 = 4;
    pub const PRETRAIN_GEN: u64 = 0x100;
    pub const PRETRAIN_DISC: u64 = 0x200;
    pub const COOP: u64 = 0x300;
}

/// SplitMix64 finalizer over `seed ^ tag`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn generator_activations(layers: usize) -> Vec<Activation> {
    let mut acts = vec![Activation::Relu; layers];
    acts[layers - 1] = Activation::Identity;
    acts
}

pub fn discriminator_activations(layers: usize) -> Vec<Activation> {
    let mut acts = vec![Activation::Relu; layers];
    acts[layers - 1] = Activation::Sigmoid;
    acts
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub batches: usize,
    /// Mean reconstruction error against the inputs, before each generator step.
    pub recon_loss: f64,
    pub disc_loss: f64,
    /// Mean generator loss against the negative-learning targets.
    pub gen_loss: f64,
    pub gen_label_rate: f64,
    pub disc_label_rate: f64,
    pub skipped_gen_steps: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    /// Records the generator was pre-trained on.
    pub gen_records: usize,
    pub gen_loss: f64,
    pub disc_loss: f64,
}

/// Both networks, their optimizer states and the training cursor.
#[derive(Debug, Clone)]
pub struct GclModel {
    pub cfg: GclConfig,
    pub gen: Network,
    pub disc: Network,
    pub gen_opt: RmspropState,
    pub disc_opt: RmspropState,
    /// Completed cooperative epochs.
    pub epoch: usize,
    pub pretrained: bool,
    /// Randomness for negative-learning targets.
    pub rng: ChaCha8Rng,
}

impl PartialEq for GclModel {
    fn eq(&self, other: &Self) -> bool {
        self.cfg == other.cfg
            && self.gen == other.gen
            && self.disc == other.disc
            && self.gen_opt == other.gen_opt
            && self.disc_opt == other.disc_opt
            && self.epoch == other.epoch
            && self.pretrained == other.pretrained
            && self.rng == other.rng
    }
}

impl GclModel {
    pub fn new(cfg: GclConfig, d: usize) -> Result<Self> {
        cfg.validate(d)?;
        let gen_dims = cfg.gen_dims_for(d);
        let disc_dims = cfg.disc_dims_for(d);
        let gen = Network::init(
            &gen_dims,
            &generator_activations(gen_dims.len() - 1),
            derive_seed(cfg.seed, tag::GEN_INIT),
        )?;
        let disc = Network::init(
            &disc_dims,
            &discriminator_activations(disc_dims.len() - 1),
            derive_seed(cfg.seed, tag::DISC_INIT),
        )?;
        let gen_opt = RmspropState::for_network(cfg.rmsprop(), &gen);
        let disc_opt = RmspropState::for_network(cfg.rmsprop(), &disc);
        let rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, tag::NL_RNG));
        Ok(Self {
            cfg,
            gen,
            disc,
            gen_opt,
            disc_opt,
            epoch: 0,
            pretrained: false,
            rng,
        })
    }

    pub fn d(&self) -> usize {
        self.gen.in_dim()
    }

    /// Runs the mode's pre-training: nothing for `gcl_b`; generator on the
    /// temporally cleaned set (`gcl_pt`, `gcl_ws`) or on normal-labeled videos
    /// (`gcl_occ`), then the discriminator on the generator's labels.
    pub fn pretrain(&mut self, records: &[FeatureRecord], manifest: &DatasetManifest) -> Result<PretrainReport> {
        if self.cfg.mode == Mode::GclB {
            self.pretrained = true;
            return Ok(PretrainReport::default());
        }
        let forced = supervision_mask(records, manifest, &self.cfg)?;
        let subset = pretrain_subset(records, manifest, &self.cfg)?;
        let gen_records = subset.len();
        let gen_loss = pretrain_generator(&mut self.gen, &mut self.gen_opt, records, subset, &self.cfg)?;
        let disc_loss = pretrain_discriminator(
            &self.gen,
            &mut self.disc,
            &mut self.disc_opt,
            records,
            &forced,
            &self.cfg,
        )?;
        self.pretrained = true;
        Ok(PretrainReport {
            gen_records,
            gen_loss,
            disc_loss,
        })
    }

    /// One pass over freshly shuffled batches of all records.
    pub fn cooperative_epoch(&mut self, records: &[FeatureRecord], forced_normal: &[bool]) -> Result<EpochMetrics> {
        if forced_normal.len() != records.len() {
            return Err(GclError::shape("supervision mask", records.len(), forced_normal.len()));
        }
        let seed = derive_seed(self.cfg.seed, tag::COOP + self.epoch as u64);
        let batches = shuffle_subset(records, (0..records.len()).collect(), self.cfg.batch_size, seed)?;
        let mut m = EpochMetrics {
            epoch: self.epoch + 1,
            ..EpochMetrics::default()
        };
        let mut gen_steps = 0usize;
        let mut rows = 0usize;
        for batch in &batches {
            let mask: Vec<bool> = batch.indices.iter().map(|&i| forced_normal[i]).collect();
            let step = self.cooperative_step(batch, &mask)?;
            m.batches += 1;
            m.recon_loss += step.recon_loss;
            m.disc_loss += step.disc_loss;
            m.gen_label_rate += step.gen_labels.positive_rate() * batch.len() as f64;
            m.disc_label_rate += step.disc_labels.positive_rate() * batch.len() as f64;
            rows += batch.len();
            match step.gen_loss {
                Some(l) => {
                    m.gen_loss += l;
                    gen_steps += 1;
                }
                None => m.skipped_gen_steps += 1,
            }
        }
        let nb = m.batches.max(1) as f64;
        m.recon_loss /= nb;
        m.disc_loss /= nb;
        m.gen_loss /= gen_steps.max(1) as f64;
        m.gen_label_rate /= rows.max(1) as f64;
        m.disc_label_rate /= rows.max(1) as f64;
        self.epoch += 1;
        Ok(m)
    }

    /// The five-stage update on one batch. `forced_normal[i]` pins row `i`'s
    /// pseudo-labels to normal.
    pub fn cooperative_step(&mut self, batch: &Batch, forced_normal: &[bool]) -> Result<StepTrace> {
        let input = &batch.matrix;
        let cfg = &self.cfg;

        let gen_stats = reconstruction_errors_matrix(&self.gen, input, cfg.k_g)?;
        let mut gen_labels = if cfg.soft_labels {
            generator_soft_labels(&gen_stats)
        } else {
            generator_pseudo_labels(&gen_stats)
        };
        gen_labels.force_normal(forced_normal);

        let disc_loss = train_discriminator_on_labels(&mut self.disc, &mut self.disc_opt, input, &gen_labels)?;

        let disc_stats = discriminator_probs(&self.disc, input, cfg.k_d)?;
        let mut disc_labels = labels_from_probs(&disc_stats);
        disc_labels.force_normal(forced_normal);

        let teacher = if cfg.self_labels { &gen_labels } else { &disc_labels };
        let targets = make_nl_targets(input, &teacher.labels, cfg.nl_mode, cfg.gaussian_sigma, &mut self.rng)?;
        let gen_loss = train_generator_step(&mut self.gen, &mut self.gen_opt, input, &targets, cfg.squared_norm)?;

        Ok(StepTrace {
            recon_loss: gen_stats.mean_error(),
            disc_loss,
            gen_loss,
            gen_labels,
            disc_labels,
            targets,
        })
    }

    /// Pre-training (if not done yet) followed by the remaining cooperative
    /// epochs. `on_epoch` sees the model after each epoch.
    pub fn fit<F>(&mut self, records: &[FeatureRecord], manifest: &DatasetManifest, mut on_epoch: F) -> Result<Vec<EpochMetrics>>
    where
        F: FnMut(&GclModel, &EpochMetrics) -> Result<()>,
    {
        if !self.pretrained {
            self.pretrain(records, manifest)?;
        }
        let forced = supervision_mask(records, manifest, &self.cfg)?;
        let mut history = Vec::new();
        while self.epoch < self.cfg.epochs {
            let m = self.cooperative_epoch(records, &forced)?;
            on_epoch(self, &m)?;
            history.push(m);
        }
        Ok(history)
    }
}

/// What one cooperative step produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub recon_loss: f64,
    pub disc_loss: f64,
    pub gen_loss: Option<f64>,
    pub gen_labels: PseudoLabelSet,
    pub disc_labels: PseudoLabelSet,
    pub targets: NlTargetBatch,
}

fn video_labels(records: &[FeatureRecord], manifest: &DatasetManifest) -> Result<Vec<Option<VideoLabel>>> {
    use std::collections::HashMap;
    let by_id: HashMap<&str, Option<VideoLabel>> =
        manifest.videos.iter().map(|v| (v.id.as_str(), v.label)).collect();
    records
        .iter()
        .map(|r| {
            by_id
                .get(r.video_id.as_str())
                .copied()
                .ok_or_else(|| GclError::Config(format!("video {} not in manifest", r.video_id)))
        })
        .collect()
}

/// Per-record flag: `true` when the record's pseudo-labels are pinned to
/// normal. Only `gcl_ws` pins anything: a seeded `ws_fraction` of videos are
/// treated as labeled, and the normal ones among them are pinned. The labeled
/// sets for increasing fractions are nested.
pub fn supervision_mask(records: &[FeatureRecord], manifest: &DatasetManifest, cfg: &GclConfig) -> Result<Vec<bool>> {
    if cfg.mode != Mode::GclWs {
        return Ok(vec![false; records.len()]);
    }
    if !manifest.has_video_labels() {
        return Err(GclError::Config("gcl_ws needs a video label for every manifest entry".into()));
    }
    let mut order: Vec<usize> = (0..manifest.videos.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, tag::WS_SELECT)));
    let n_labeled = (cfg.ws_fraction * manifest.videos.len() as f64).round() as usize;
    let pinned: std::collections::HashSet<&str> = order[..n_labeled]
        .iter()
        .map(|&v| &manifest.videos[v])
        .filter(|v| v.label == Some(VideoLabel::Normal))
        .map(|v| v.id.as_str())
        .collect();
    Ok(records.iter().map(|r| pinned.contains(r.video_id.as_str())).collect())
}

/// Record positions the generator is pre-trained on.
pub fn pretrain_subset(records: &[FeatureRecord], manifest: &DatasetManifest, cfg: &GclConfig) -> Result<Vec<usize>> {
    match cfg.mode {
        Mode::GclB => Ok(Vec::new()),
        Mode::GclPt | Mode::GclWs => {
            let kept = temporal_difference_indices(records, CleanerConfig { d_th: cfg.d_th });
            if kept.is_empty() {
                return Err(GclError::FilterEmpty { d_th: cfg.d_th });
            }
            Ok(kept)
        }
        Mode::GclOcc => {
            if !manifest.has_video_labels() {
                return Err(GclError::Config("gcl_occ needs a video label for every manifest entry".into()));
            }
            let labels = video_labels(records, manifest)?;
            let kept: Vec<usize> = (0..records.len())
                .filter(|&i| labels[i] == Some(VideoLabel::Normal))
                .collect();
            if kept.is_empty() {
                return Err(GclError::Config("gcl_occ: no normal-labeled videos".into()));
            }
            Ok(kept)
        }
    }
}

/// Plain reconstruction training of `gen` on `subset` for `cfg.pretrain_epochs`.
/// Returns the mean loss of the last epoch.
pub fn pretrain_generator(
    gen: &mut Network,
    opt: &mut RmspropState,
    records: &[FeatureRecord],
    subset: Vec<usize>,
    cfg: &GclConfig,
) -> Result<f64> {
    train_autoencoder(gen, opt, records, subset, cfg.pretrain_epochs, cfg, tag::PRETRAIN_GEN)
}

fn train_autoencoder(
    gen: &mut Network,
    opt: &mut RmspropState,
    records: &[FeatureRecord],
    subset: Vec<usize>,
    epochs: usize,
    cfg: &GclConfig,
    seed_tag: u64,
) -> Result<f64> {
    let mut last = 0.0;
    for epoch in 0..epochs {
        let seed = derive_seed(cfg.seed, seed_tag + epoch as u64);
        let batches = shuffle_subset(records, subset.clone(), cfg.batch_size, seed)?;
        let mut total = 0.0;
        for batch in &batches {
            let targets = NlTargetBatch {
                targets: batch.matrix.clone(),
                include: None,
            };
            total += train_generator_step(gen, opt, &batch.matrix, &targets, cfg.squared_norm)?
                .expect("plain reconstruction includes every row");
        }
        last = total / batches.len() as f64;
    }
    Ok(last)
}

/// Trains `disc` on the generator's pseudo-labels over all records for
/// `cfg.pretrain_epochs`. Returns the mean loss of the last epoch.
pub fn pretrain_discriminator(
    gen: &Network,
    disc: &mut Network,
    opt: &mut RmspropState,
    records: &[FeatureRecord],
    forced_normal: &[bool],
    cfg: &GclConfig,
) -> Result<f64> {
    let mut last = 0.0;
    for epoch in 0..cfg.pretrain_epochs {
        let seed = derive_seed(cfg.seed, tag::PRETRAIN_DISC + epoch as u64);
        let batches = shuffle_subset(records, (0..records.len()).collect(), cfg.batch_size, seed)?;
        let mut total = 0.0;
        for batch in &batches {
            let stats = reconstruction_errors_matrix(gen, &batch.matrix, cfg.k_g)?;
            let mut labels = if cfg.soft_labels {
                generator_soft_labels(&stats)
            } else {
                generator_pseudo_labels(&stats)
            };
            let mask: Vec<bool> = batch.indices.iter().map(|&i| forced_normal[i]).collect();
            labels.force_normal(&mask);
            total += train_discriminator_on_labels(disc, opt, &batch.matrix, &labels)?;
        }
        last = total / batches.len() as f64;
    }
    Ok(last)
}

/// An autoencoder trained on every record with the plain reconstruction loss
/// for `cfg.epochs`; the reconstruction-error baseline.
pub fn train_baseline_autoencoder(records: &[FeatureRecord], cfg: &GclConfig) -> Result<Network> {
    let d = records.first().ok_or(GclError::EmptyDataset)?.vector.len();
    cfg.validate(d)?;
    let dims = cfg.gen_dims_for(d);
    let mut gen = Network::init(&dims, &generator_activations(dims.len() - 1), derive_seed(cfg.seed, tag::GEN_INIT))?;
    let mut opt = RmspropState::for_network(cfg.rmsprop(), &gen);
    train_autoencoder(&mut gen, &mut opt, records, (0..records.len()).collect(), cfg.epochs, cfg, tag::PRETRAIN_GEN)?;
    Ok(gen)
}

/// Whether `mode` can run on `manifest`.
pub fn check_mode_requirements(cfg: &GclConfig, manifest: &DatasetManifest) -> Result<()> {
    if cfg.mode.needs_video_labels() && !manifest.has_video_labels() {
        return Err(GclError::Config(format!(
            "mode {:?} needs a video label for every manifest entry",
            cfg.mode
        )));
    }
    if cfg.nl_mode == NlMode::Gaussian && !(cfg.gaussian_sigma >= 0.0) {
        return Err(GclError::Config("gaussian negative learning needs sigma >= 0".into()));
    }
    Ok(())
}
