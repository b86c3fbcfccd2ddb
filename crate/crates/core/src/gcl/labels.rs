//! Batch statistics and the two thresholded pseudo-labelers.
//!
//! Both thresholds are `mean + k·std` over the current batch, with the
//! population standard deviation, and both comparisons are inclusive: a row
//! is labeled anomalous iff its statistic is `>=` the threshold. A batch of
//! identical statistics therefore labels every row anomalous.

use crate::data::Batch;
use crate::error::{GclError, Result};
use crate::nn::{loss, Matrix, Network};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdStats {
    pub mean: f64,
    pub std: f64,
    pub threshold: f64,
}

impl ThresholdStats {
    /// Population mean and standard deviation of `values`, threshold `mean + k·std`.
    pub fn from_values(values: &[f64], k: f64) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        Self {
            mean,
            std,
            threshold: mean + k * std,
        }
    }
}

/// Per-row reconstruction errors of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct GenBatchStats {
    pub per_row_error: Vec<f64>,
    pub stats: ThresholdStats,
}

impl GenBatchStats {
    /// Mean reconstruction error `L_r`.
    pub fn mean_error(&self) -> f64 {
        self.stats.mean
    }
}

/// Per-row anomaly probabilities of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscBatchStats {
    pub per_row_prob: Vec<f64>,
    pub stats: ThresholdStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    Generator,
    Discriminator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelSet {
    /// `true` = pseudo-anomalous.
    pub labels: Vec<bool>,
    /// Soft targets in `[0, 1]`, when soft labeling is on.
    pub soft: Option<Vec<f64>>,
    pub source: LabelSource,
    pub stats: ThresholdStats,
}

impl PseudoLabelSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positive_rate(&self) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        self.labels.iter().filter(|&&l| l).count() as f64 / self.labels.len() as f64
    }

    /// Regression targets for the discriminator: soft targets if present,
    /// otherwise the hard labels as 0/1.
    pub fn targets(&self) -> Vec<f64> {
        match &self.soft {
            Some(s) => s.clone(),
            None => self.labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Forces rows with `mask[i] == true` to normal (label 0, soft target 0).
    pub fn force_normal(&mut self, mask: &[bool]) {
        for (i, &forced) in mask.iter().enumerate() {
            if forced {
                self.labels[i] = false;
                if let Some(s) = &mut self.soft {
                    s[i] = 0.0;
                }
            }
        }
    }
}

fn threshold_labels(values: &[f64], threshold: f64) -> Vec<bool> {
    values.iter().map(|&v| v >= threshold).collect()
}

pub fn reconstruction_errors_matrix(gen: &Network, input: &Matrix, k_g: f64) -> Result<GenBatchStats> {
    let recon = gen.predict(input)?;
    let per_row_error = loss::row_norms(&recon, input, false)?;
    let stats = ThresholdStats::from_values(&per_row_error, k_g);
    Ok(GenBatchStats {
        per_row_error,
        stats,
    })
}

/// Euclidean reconstruction error of each row and the batch threshold.
pub fn reconstruction_errors(gen: &Network, batch: &Batch, k_g: f64) -> Result<GenBatchStats> {
    reconstruction_errors_matrix(gen, &batch.matrix, k_g)
}

/// Labels rows whose error is `>=` the threshold anomalous.
pub fn generator_pseudo_labels(stats: &GenBatchStats) -> PseudoLabelSet {
    PseudoLabelSet {
        labels: threshold_labels(&stats.per_row_error, stats.stats.threshold),
        soft: None,
        source: LabelSource::Generator,
        stats: stats.stats,
    }
}

/// Hard labels plus soft targets `min(1, error / threshold)`.
///
/// A zero threshold (every error zero) maps every soft target to 1, matching
/// the hard labels.
pub fn generator_soft_labels(stats: &GenBatchStats) -> PseudoLabelSet {
    let th = stats.stats.threshold;
    let soft = stats
        .per_row_error
        .iter()
        .map(|&e| if th > 0.0 { (e / th).min(1.0) } else { 1.0 })
        .collect();
    PseudoLabelSet {
        soft: Some(soft),
        ..generator_pseudo_labels(stats)
    }
}

pub fn discriminator_probs(disc: &Network, input: &Matrix, k_d: f64) -> Result<DiscBatchStats> {
    let out = disc.predict(input)?;
    if out.cols() != 1 {
        return Err(GclError::shape("discriminator output columns", 1, out.cols()));
    }
    let per_row_prob = out.into_vec();
    if per_row_prob.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(GclError::NonFinite("discriminator probabilities outside [0, 1]".into()));
    }
    let stats = ThresholdStats::from_values(&per_row_prob, k_d);
    Ok(DiscBatchStats { per_row_prob, stats })
}

pub fn labels_from_probs(stats: &DiscBatchStats) -> PseudoLabelSet {
    PseudoLabelSet {
        labels: threshold_labels(&stats.per_row_prob, stats.stats.threshold),
        soft: None,
        source: LabelSource::Discriminator,
        stats: stats.stats,
    }
}

/// Discriminator probabilities for the batch and the labels they induce.
pub fn discriminator_pseudo_labels(
    disc: &Network,
    batch: &Batch,
    k_d: f64,
) -> Result<(DiscBatchStats, PseudoLabelSet)> {
    let stats = discriminator_probs(disc, &batch.matrix, k_d)?;
    let labels = labels_from_probs(&stats);
    Ok((stats, labels))
}
