//! Feature ingestion, global shuffling into batches, temporal-difference
//! cleaning and synthetic anomaly streams.

mod format;
mod manifest;
mod synth;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GclError, Result};
use crate::nn::Matrix;

pub use format::{
    decode_feature_file, encode_feature_file, load_dataset, load_features, load_features_csv,
    read_feature_file, write_feature_file, write_features, write_features_csv, FeatureFile,
    FeatureFormat, FEATURE_MAGIC, FEATURE_VERSION,
};
pub(crate) use format::write_bytes;
pub use manifest::{DatasetManifest, VideoEntry, VideoLabel};
pub use synth::{generate_synthetic, generate_synthetic_split, SynthConfig, SyntheticDataset};

/// One segment's feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub video_id: String,
    pub segment_index: usize,
    pub vector: Vec<f32>,
}

/// A `b × d` block of feature vectors. `indices[i]` is the position in the
/// source record slice of row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub matrix: Matrix,
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn from_indices(records: &[FeatureRecord], indices: Vec<usize>) -> Result<Self> {
        let d = records.first().map_or(0, |r| r.vector.len());
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in &indices {
            let v = &records[i].vector;
            if v.len() != d {
                return Err(GclError::shape(format!("record {i} dimension"), d, v.len()));
            }
            data.extend(v.iter().map(|&x| f64::from(x)));
        }
        Ok(Self {
            matrix: Matrix::from_vec(indices.len(), d, data)?,
            indices,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// `(video_id, segment_index)` for each row.
    pub fn provenance<'r>(&self, records: &'r [FeatureRecord]) -> Vec<(&'r str, usize)> {
        self.indices
            .iter()
            .map(|&i| (records[i].video_id.as_str(), records[i].segment_index))
            .collect()
    }
}

/// A seeded permutation of every record, chunked into batches of `batch_size`.
/// The last batch keeps the remainder.
pub fn shuffle_batches(records: &[FeatureRecord], batch_size: usize, seed: u64) -> Result<Vec<Batch>> {
    shuffle_subset(records, (0..records.len()).collect(), batch_size, seed)
}

/// Like [`shuffle_batches`] but over a subset of record positions.
pub fn shuffle_subset(
    records: &[FeatureRecord],
    mut indices: Vec<usize>,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<Batch>> {
    if batch_size < 2 {
        return Err(GclError::Config(format!("batch size must be at least 2, got {batch_size}")));
    }
    if indices.is_empty() {
        return Err(GclError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    indices
        .chunks(batch_size)
        .map(|chunk| Batch::from_indices(records, chunk.to_vec()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CleanerConfig {
    pub d_th: f64,
}

impl Default for CleanerConfig {
    fn default() -> Self {
        Self { d_th: 0.70 }
    }
}

/// Positions of records kept by the temporal-difference cleaner.
///
/// The first segment of each video is always kept; a later segment is kept
/// iff its L2 distance to the segment immediately before it in the original
/// sequence is at most `d_th`. Records must be grouped per video in temporal
/// order.
pub fn temporal_difference_indices(records: &[FeatureRecord], cfg: CleanerConfig) -> Vec<usize> {
    let mut kept = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let keep = match i.checked_sub(1).map(|p| &records[p]) {
            Some(prev) if prev.video_id == r.video_id => l2_distance(&prev.vector, &r.vector) <= cfg.d_th,
            _ => true,
        };
        if keep {
            kept.push(i);
        }
    }
    kept
}

pub fn temporal_difference_filter(records: &[FeatureRecord], cfg: CleanerConfig) -> Vec<FeatureRecord> {
    temporal_difference_indices(records, cfg)
        .into_iter()
        .map(|i| records[i].clone())
        .collect()
}

pub fn l2_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let diff = f64::from(x) - f64::from(y);
            diff * diff
        })
        .sum::<f64>()
        .sqrt()
}

/// Multiplies every feature by `factor`.
pub fn scale_features(records: &mut [FeatureRecord], factor: f64) {
    for r in records {
        for v in &mut r.vector {
            *v = (f64::from(*v) * factor) as f32;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(video: &str, j: usize, v: Vec<f32>) -> FeatureRecord {
        FeatureRecord {
            video_id: video.into(),
            segment_index: j,
            vector: v,
        }
    }

    fn toy(n: usize) -> Vec<FeatureRecord> {
        (0..n).map(|i| rec("v", i, vec![i as f32, 1.0])).collect()
    }

    #[test]
    fn five_records_batch_two() {
        let batches = shuffle_batches(&toy(5), 2, 3).unwrap();
        assert_eq!(batches.iter().map(Batch::len).collect::<Vec<_>>(), vec![2, 2, 1]);
    }

    #[test]
    fn shuffle_rejects_bad_input() {
        assert!(shuffle_batches(&toy(5), 1, 0).is_err());
        assert!(matches!(shuffle_batches(&[], 4, 0), Err(GclError::EmptyDataset)));
    }

    #[test]
    fn batch_rows_match_records() {
        let records = toy(7);
        for batch in shuffle_batches(&records, 3, 9).unwrap() {
            for (row, &i) in batch.matrix.row_iter().zip(&batch.indices) {
                assert_eq!(row[0], i as f64);
            }
            let prov = batch.provenance(&records);
            assert!(prov.iter().zip(&batch.indices).all(|((_, j), &i)| *j == i));
        }
    }

    #[test]
    fn identical_segments_all_retained() {
        let records: Vec<_> = (0..4).map(|j| rec("a", j, vec![0.5, 0.5])).collect();
        assert_eq!(temporal_difference_indices(&records, CleanerConfig::default()), vec![0, 1, 2, 3]);
    }

    #[test]
    fn unit_jump_is_dropped_at_default_threshold() {
        let records = vec![rec("a", 0, vec![1.0, 0.0]), rec("a", 1, vec![2.0, 0.0])];
        assert_eq!(temporal_difference_indices(&records, CleanerConfig::default()), vec![0]);
    }

    #[test]
    fn comparison_uses_original_predecessor() {
        // 0 → 5 is a jump (dropped); 5 → 5.1 is small (kept) even though 5.1 is far from 0.
        let records = vec![
            rec("a", 0, vec![0.0]),
            rec("a", 1, vec![5.0]),
            rec("a", 2, vec![5.1]),
            rec("b", 0, vec![100.0]),
        ];
        assert_eq!(temporal_difference_indices(&records, CleanerConfig::default()), vec![0, 2, 3]);
    }

    #[test]
    fn huge_threshold_keeps_everything() {
        let records: Vec<_> = (0..6).map(|j| rec("a", j, vec![(j * j) as f32])).collect();
        let kept = temporal_difference_filter(&records, CleanerConfig { d_th: 1e30 });
        assert_eq!(kept, records);
    }
}
