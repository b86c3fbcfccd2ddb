//! Frame-level evaluation: ground-truth expansion, AUC and score export.

mod auc;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::DatasetManifest;
use crate::error::{GclError, Result};

pub use auc::{compute_auc, AucReport, VideoAuc};

/// Per-frame anomaly scores for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub video_id: String,
    pub frame_scores: Vec<f64>,
    /// Frame-level ground truth, when known.
    pub frame_labels: Option<Vec<bool>>,
}

/// Binary frame labels of `video_id`: `true` inside any `[start, end)` range.
pub fn frame_labels(manifest: &DatasetManifest, video_id: &str) -> Result<Vec<bool>> {
    let video = manifest
        .video(video_id)
        .ok_or_else(|| GclError::Config(format!("video {video_id} not in manifest")))?;
    let ranges = video
        .gt_ranges
        .as_ref()
        .ok_or_else(|| GclError::MissingGroundTruth(video_id.to_string()))?;
    let frames = manifest.frame_count(video);
    let mut labels = vec![false; frames];
    for &[start, end] in ranges {
        if start > end || end > frames {
            return Err(GclError::Config(format!(
                "video {video_id}: range [{start}, {end}) exceeds {frames} frames"
            )));
        }
        labels[start..end].fill(true);
    }
    Ok(labels)
}

/// Attaches ground truth from `manifest` to every series.
pub fn attach_labels(series: &mut [ScoreSeries], manifest: &DatasetManifest) -> Result<()> {
    for s in series.iter_mut() {
        let labels = frame_labels(manifest, &s.video_id)?;
        if labels.len() != s.frame_scores.len() {
            return Err(GclError::shape(
                format!("video {} frame labels", s.video_id),
                s.frame_scores.len(),
                labels.len(),
            ));
        }
        s.frame_labels = Some(labels);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AucPooling {
    /// One AUC over all frames of all videos.
    #[default]
    Pooled,
    /// Mean of per-video AUCs over videos that contain both classes.
    PerVideoMean,
}

/// AUC over labeled score series.
pub fn evaluate(series: &[ScoreSeries], pooling: AucPooling) -> Result<AucReport> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    let mut per_video = Vec::with_capacity(series.len());
    for s in series {
        let l = s
            .frame_labels
            .as_ref()
            .ok_or_else(|| GclError::MissingGroundTruth(s.video_id.clone()))?;
        if l.len() != s.frame_scores.len() {
            return Err(GclError::shape(format!("video {} labels", s.video_id), s.frame_scores.len(), l.len()));
        }
        scores.extend_from_slice(&s.frame_scores);
        labels.extend_from_slice(l);
        let positives = l.iter().filter(|&&x| x).count();
        per_video.push(VideoAuc {
            video_id: s.video_id.clone(),
            auc: compute_auc(&s.frame_scores, l).ok().map(|r| r.auc),
            positives,
            negatives: l.len() - positives,
        });
    }
    let mut report = compute_auc(&scores, &labels)?;
    if pooling == AucPooling::PerVideoMean {
        let defined: Vec<f64> = per_video.iter().filter_map(|v| v.auc).collect();
        if defined.is_empty() {
            return Err(GclError::Config("no video contains both classes".into()));
        }
        report.auc = defined.iter().sum::<f64>() / defined.len() as f64;
        report.per_video = Some(per_video);
    }
    Ok(report)
}

impl AucReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text).map_err(|e| GclError::io(path, e))
    }
}

/// CSV with header `video_id,frame,score[,label]`. The label column is
/// written only when every series carries labels.
pub fn export_scores(series: &[ScoreSeries], path: &Path) -> Result<()> {
    let with_labels = !series.is_empty() && series.iter().all(|s| s.frame_labels.is_some());
    let mut w = csv::Writer::from_path(path).map_err(|e| GclError::format(path, e.to_string()))?;
    if with_labels {
        w.write_record(["video_id", "frame", "score", "label"])?;
    } else {
        w.write_record(["video_id", "frame", "score"])?;
    }
    for s in series {
        for (f, score) in s.frame_scores.iter().enumerate() {
            // `{}` on f64 prints the shortest string that parses back to the same bits
            let (frame, score) = (f.to_string(), format!("{score}"));
            match (&s.frame_labels, with_labels) {
                (Some(l), true) => w.write_record([s.video_id.as_str(), &frame, &score, if l[f] { "1" } else { "0" }])?,
                _ => w.write_record([s.video_id.as_str(), &frame, &score])?,
            }
        }
    }
    w.flush().map_err(|e| GclError::io(path, e))
}

/// Reads a file written by [`export_scores`].
pub fn import_scores(path: &Path) -> Result<Vec<ScoreSeries>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| GclError::format(path, e.to_string()))?;
    let headers = r.headers()?.clone();
    let with_labels = match headers.len() {
        3 => false,
        4 => true,
        n => return Err(GclError::format(path, format!("expected 3 or 4 columns, found {n}"))),
    };
    let mut out: Vec<ScoreSeries> = Vec::new();
    for (line, row) in r.records().enumerate() {
        let row = row?;
        let bad = |msg: String| GclError::format(path, format!("row {}: {msg}", line + 2));
        let frame: usize = row[1].parse().map_err(|e| bad(format!("frame: {e}")))?;
        let score: f64 = row[2].parse().map_err(|e| bad(format!("score: {e}")))?;
        let label = if with_labels {
            Some(match &row[3] {
                "1" => true,
                "0" => false,
                other => return Err(bad(format!("label {other:?}"))),
            })
        } else {
            None
        };
        if out.last().is_none_or(|s| s.video_id != row[0]) {
            out.push(ScoreSeries {
                video_id: row[0].to_string(),
                frame_scores: Vec::new(),
                frame_labels: with_labels.then(Vec::new),
            });
        }
        let s = out.last_mut().expect("pushed above");
        if frame != s.frame_scores.len() {
            return Err(bad(format!("frame {frame} out of order")));
        }
        s.frame_scores.push(score);
        if let (Some(labels), Some(l)) = (&mut s.frame_labels, label) {
            labels.push(l);
        }
    }
    Ok(out)
}
