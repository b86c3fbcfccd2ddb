//! Segment and frame anomaly scores.

use super::labels::reconstruction_errors_matrix;
use crate::data::{Batch, DatasetManifest, FeatureRecord};
use crate::error::{GclError, Result};
use crate::eval::ScoreSeries;
use crate::nn::Network;

const SCORE_CHUNK: usize = 8192;

/// Which network's output becomes the anomaly score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreSource {
    /// Discriminator probability.
    #[default]
    Discriminator,
    /// Generator reconstruction error.
    Generator,
}

/// One score per record, in record order.
pub fn segment_scores(net: &Network, records: &[FeatureRecord], source: ScoreSource) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(records.len());
    let positions: Vec<usize> = (0..records.len()).collect();
    for chunk in positions.chunks(SCORE_CHUNK) {
        let batch = Batch::from_indices(records, chunk.to_vec())?;
        match source {
            ScoreSource::Discriminator => out.extend(net.predict(&batch.matrix)?.into_vec()),
            ScoreSource::Generator => {
                out.extend(reconstruction_errors_matrix(net, &batch.matrix, 0.0)?.per_row_error)
            }
        }
    }
    Ok(out)
}

/// Repeats each segment score over its `p` frames and truncates to
/// `frames`. Frames past the last full segment take the last segment's score.
pub fn expand_to_frames(segment_scores: &[f64], p: usize, frames: usize) -> Vec<f64> {
    if segment_scores.is_empty() {
        return Vec::new();
    }
    let last = segment_scores.len() - 1;
    (0..frames).map(|f| segment_scores[(f / p).min(last)]).collect()
}

/// Frame-level series for every manifest video. `records` must hold each
/// video's segments contiguously and in order.
pub fn frame_series(
    scores: &[f64],
    records: &[FeatureRecord],
    manifest: &DatasetManifest,
) -> Result<Vec<ScoreSeries>> {
    if scores.len() != records.len() {
        return Err(GclError::shape("frame_series scores", records.len(), scores.len()));
    }
    let mut out = Vec::with_capacity(manifest.videos.len());
    let mut start = 0;
    while start < records.len() {
        let id = &records[start].video_id;
        let mut end = start;
        while end < records.len() && records[end].video_id == *id {
            end += 1;
        }
        let video = manifest
            .video(id)
            .ok_or_else(|| GclError::Config(format!("video {id} not in manifest")))?;
        if end - start != video.segments {
            return Err(GclError::Config(format!(
                "video {id}: {} scored segments, manifest lists {}",
                end - start,
                video.segments
            )));
        }
        out.push(ScoreSeries {
            video_id: id.clone(),
            frame_scores: expand_to_frames(&scores[start..end], manifest.p, manifest.frame_count(video)),
            frame_labels: None,
        });
        start = end;
    }
    Ok(out)
}

/// Discriminator scores expanded to frames, one series per video.
pub fn score_segments(disc: &Network, records: &[FeatureRecord], manifest: &DatasetManifest) -> Result<Vec<ScoreSeries>> {
    let scores = segment_scores(disc, records, ScoreSource::Discriminator)?;
    frame_series(&scores, records, manifest)
}
