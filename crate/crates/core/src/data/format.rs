//! Feature file formats.
//!
//! Binary (`.gclf`, one file per video), little-endian:
//!
//! ```text
//! magic   "GCLF"      4 bytes
//! version u32 = 1
//! d       u32
//! count   u32         segments in the file
//! data    f32 × count × d, row-major
//! ```
//!
//! CSV: one row per segment, `video_id,segment_index,v0,...,v{d-1}`, no header.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::manifest::DatasetManifest;
use super::FeatureRecord;
use crate::error::{GclError, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"GCLF";
pub const FEATURE_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureFormat {
    #[default]
    Gclf,
    Csv,
}

impl std::str::FromStr for FeatureFormat {
    type Err = GclError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gclf" => Ok(FeatureFormat::Gclf),
            "csv" => Ok(FeatureFormat::Csv),
            other => Err(GclError::Config(format!("unknown feature format {other:?}"))),
        }
    }
}

/// Contents of a single binary feature file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub d: usize,
    pub rows: Vec<Vec<f32>>,
}

pub fn encode_feature_file(d: usize, rows: &[Vec<f32>]) -> Result<Vec<u8>> {
    let d32 = u32::try_from(d).map_err(|_| GclError::Config(format!("d = {d} exceeds u32")))?;
    let n32 = u32::try_from(rows.len())
        .map_err(|_| GclError::Config(format!("{} segments exceed u32", rows.len())))?;
    let mut out = Vec::with_capacity(HEADER_LEN + rows.len() * d * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&d32.to_le_bytes());
    out.extend_from_slice(&n32.to_le_bytes());
    for (i, row) in rows.iter().enumerate() {
        if row.len() != d {
            return Err(GclError::shape(format!("feature row {i}"), d, row.len()));
        }
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_feature_file(path: &Path, bytes: &[u8]) -> Result<FeatureFile> {
    if bytes.len() < HEADER_LEN {
        return Err(GclError::format(path, "truncated header"));
    }
    if &bytes[0..4] != FEATURE_MAGIC {
        return Err(GclError::format(path, "bad magic, expected GCLF"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != FEATURE_VERSION {
        return Err(GclError::format(path, format!("unsupported version {version}")));
    }
    let d = word(8) as usize;
    let count = word(12) as usize;
    let expected = HEADER_LEN + count * d * 4;
    if bytes.len() < expected {
        return Err(GclError::format(
            path,
            format!("truncated: header declares {count} segments of d = {d} ({expected} bytes), file has {}", bytes.len()),
        ));
    }
    if bytes.len() > expected {
        return Err(GclError::format(path, "trailing bytes after feature data"));
    }
    let rows = bytes[HEADER_LEN..]
        .chunks_exact(4 * d.max(1))
        .take(count)
        .map(|chunk| {
            chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect()
        })
        .collect::<Vec<Vec<f32>>>();
    Ok(FeatureFile { d, rows })
}

pub fn read_feature_file(path: &Path) -> Result<FeatureFile> {
    let bytes = fs::read(path).map_err(|e| GclError::io(path, e))?;
    decode_feature_file(path, &bytes)
}

pub fn write_feature_file(path: &Path, d: usize, rows: &[Vec<f32>]) -> Result<()> {
    let bytes = encode_feature_file(d, rows)?;
    fs::write(path, bytes).map_err(|e| GclError::io(path, e))
}

/// Loads every video listed in `manifest` from `dir`, in manifest order.
pub fn load_features(dir: &Path, manifest: &DatasetManifest) -> Result<Vec<FeatureRecord>> {
    let per_video = manifest
        .videos
        .par_iter()
        .map(|video| {
            let path = dir.join(&video.file);
            if !path.exists() {
                return Err(GclError::format(&path, format!("missing feature file for video {}", video.id)));
            }
            let file = read_feature_file(&path)?;
            if file.d != manifest.d {
                return Err(GclError::format(
                    &path,
                    format!("d mismatch: manifest {} vs file {}", manifest.d, file.d),
                ));
            }
            if file.rows.len() < video.segments {
                return Err(GclError::format(
                    &path,
                    format!("truncated: manifest lists {} segments, file has {}", video.segments, file.rows.len()),
                ));
            }
            if file.rows.len() > video.segments {
                return Err(GclError::format(
                    &path,
                    format!("manifest lists {} segments, file has {}", video.segments, file.rows.len()),
                ));
            }
            Ok(file
                .rows
                .into_iter()
                .enumerate()
                .map(|(j, vector)| FeatureRecord {
                    video_id: video.id.clone(),
                    segment_index: j,
                    vector,
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_video.into_iter().flatten().collect())
}

/// Writes one binary file per video, named after each manifest entry's `file`.
pub fn write_features(dir: &Path, manifest: &DatasetManifest, records: &[FeatureRecord]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| GclError::io(dir, e))?;
    for (video, rows) in group_by_video(manifest, records)? {
        write_feature_file(&dir.join(&video.file), manifest.d, &rows)?;
    }
    Ok(())
}

pub fn load_features_csv(path: &Path, manifest: &DatasetManifest) -> Result<Vec<FeatureRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| GclError::format(path, e.to_string()))?;
    let mut records = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| GclError::format(path, e.to_string()))?;
        let bad = |msg: String| GclError::format(path, format!("row {}: {msg}", line + 1));
        if row.len() != manifest.d + 2 {
            return Err(bad(format!("expected {} columns, found {}", manifest.d + 2, row.len())));
        }
        let segment_index = row[1]
            .trim()
            .parse::<usize>()
            .map_err(|e| bad(format!("segment index: {e}")))?;
        let vector = (2..row.len())
            .map(|c| row[c].trim().parse::<f32>().map_err(|e| bad(format!("column {c}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        records.push(FeatureRecord {
            video_id: row[0].to_string(),
            segment_index,
            vector,
        });
    }
    order_by_manifest(path, manifest, records)
}

pub fn write_features_csv(path: &Path, records: &[FeatureRecord]) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| GclError::format(path, e.to_string()))?;
    for r in records {
        let mut row = Vec::with_capacity(r.vector.len() + 2);
        row.push(r.video_id.clone());
        row.push(r.segment_index.to_string());
        row.extend(r.vector.iter().map(|v| v.to_string()));
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|e| GclError::io(path, e))
}

/// Loads features in either format. `features` is a directory for
/// [`FeatureFormat::Gclf`] and a single file for [`FeatureFormat::Csv`].
pub fn load_dataset(
    features: &Path,
    manifest: &DatasetManifest,
    format: FeatureFormat,
) -> Result<Vec<FeatureRecord>> {
    match format {
        FeatureFormat::Gclf => load_features(features, manifest),
        FeatureFormat::Csv => load_features_csv(features, manifest),
    }
}

type VideoRows<'m> = (&'m crate::data::VideoEntry, Vec<Vec<f32>>);

fn group_by_video<'m>(manifest: &'m DatasetManifest, records: &[FeatureRecord]) -> Result<Vec<VideoRows<'m>>> {
    let mut out = Vec::with_capacity(manifest.videos.len());
    let mut cursor = 0;
    for video in &manifest.videos {
        let end = cursor + video.segments;
        let slice = records.get(cursor..end).ok_or_else(|| {
            GclError::Config(format!("records end before video {} is complete", video.id))
        })?;
        for (j, r) in slice.iter().enumerate() {
            if r.video_id != video.id || r.segment_index != j {
                return Err(GclError::Config(format!(
                    "record {} is ({}, {}), expected ({}, {j})",
                    cursor + j,
                    r.video_id,
                    r.segment_index,
                    video.id
                )));
            }
        }
        out.push((video, slice.iter().map(|r| r.vector.clone()).collect()));
        cursor = end;
    }
    if cursor != records.len() {
        return Err(GclError::Config(format!(
            "{} records not listed in the manifest",
            records.len() - cursor
        )));
    }
    Ok(out)
}

fn order_by_manifest(
    path: &Path,
    manifest: &DatasetManifest,
    records: Vec<FeatureRecord>,
) -> Result<Vec<FeatureRecord>> {
    use std::collections::HashMap;

    let mut by_video: HashMap<String, Vec<FeatureRecord>> = HashMap::new();
    for r in records {
        by_video.entry(r.video_id.clone()).or_default().push(r);
    }
    let mut out = Vec::with_capacity(manifest.total_segments());
    for video in &manifest.videos {
        let mut rows = by_video.remove(&video.id).ok_or_else(|| {
            GclError::format(path, format!("missing video {}", video.id))
        })?;
        rows.sort_by_key(|r| r.segment_index);
        if rows.len() < video.segments {
            return Err(GclError::format(
                path,
                format!("truncated: video {} has {} of {} segments", video.id, rows.len(), video.segments),
            ));
        }
        if rows.iter().enumerate().any(|(j, r)| r.segment_index != j) || rows.len() != video.segments {
            return Err(GclError::format(
                path,
                format!("video {}: segment indices are not 0..{}", video.id, video.segments),
            ));
        }
        out.extend(rows);
    }
    if let Some(extra) = by_video.keys().next() {
        return Err(GclError::format(path, format!("video {extra} not in manifest")));
    }
    Ok(out)
}

/// Writes `bytes` atomically enough for a single-process CLI: temp file then rename.
pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(|e| GclError::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| GclError::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| GclError::io(path, e))
}
