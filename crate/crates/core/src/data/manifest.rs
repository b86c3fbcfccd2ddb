//! Dataset manifests: per-video segment counts, optional video-level labels
//! and frame-level ground-truth ranges.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GclError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VideoLabel {
    Normal,
    Anomalous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub id: String,
    pub file: String,
    pub segments: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<VideoLabel>,
    /// Anomalous frame ranges, `[start, end)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_ranges: Option<Vec<[usize; 2]>>,
    /// True frame count; defaults to `segments × p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub d: usize,
    pub p: usize,
    pub videos: Vec<VideoEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| GclError::io(path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| GclError::format(path, format!("invalid manifest: {e}")))?;
        manifest
            .validate()
            .map_err(|e| GclError::format(path, e.to_string()))?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| GclError::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.p == 0 {
            return Err(GclError::Config(format!(
                "manifest d and p must be positive (d = {}, p = {})",
                self.d, self.p
            )));
        }
        let mut seen = HashSet::new();
        for v in &self.videos {
            if !seen.insert(v.id.as_str()) {
                return Err(GclError::Config(format!("duplicate video id {}", v.id)));
            }
            if v.segments == 0 {
                return Err(GclError::Config(format!("video {} has no segments", v.id)));
            }
            let frames = self.frame_count(v);
            // every segment must cover at least one frame
            if frames <= (v.segments - 1) * self.p {
                return Err(GclError::Config(format!(
                    "video {}: {frames} frames inconsistent with {} segments of {}",
                    v.id, v.segments, self.p
                )));
            }
            if frames > v.segments * self.p + (self.p - 1) {
                return Err(GclError::Config(format!(
                    "video {}: {frames} frames not covered by {} segments of {}",
                    v.id, v.segments, self.p
                )));
            }
            if let Some(ranges) = &v.gt_ranges {
                for r in ranges {
                    if r[0] > r[1] || r[1] > frames {
                        return Err(GclError::Config(format!(
                            "video {}: ground-truth range [{}, {}) outside {frames} frames",
                            v.id, r[0], r[1]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn frame_count(&self, video: &VideoEntry) -> usize {
        video.frames.unwrap_or(video.segments * self.p)
    }

    pub fn video(&self, id: &str) -> Option<&VideoEntry> {
        self.videos.iter().find(|v| v.id == id)
    }

    pub fn total_segments(&self) -> usize {
        self.videos.iter().map(|v| v.segments).sum()
    }

    pub fn has_video_labels(&self) -> bool {
        !self.videos.is_empty() && self.videos.iter().all(|v| v.label.is_some())
    }

    pub fn has_ground_truth(&self) -> bool {
        !self.videos.is_empty() && self.videos.iter().all(|v| v.gt_ranges.is_some())
    }
}
