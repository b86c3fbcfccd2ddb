//! Synthetic anomaly streams for desk-scale verification.
//!
//! Normal segments follow a smooth AR(1) trajectory on a rank-`latent_rank`
//! linear manifold plus isotropic noise. Anomalous segments add a per-video
//! shift of length `anomaly_shift`, split between the manifold's span (a
//! share `anomaly_manifold_share` of its squared length) and an
//! `anomaly_rank` subspace orthogonal to the manifold, plus fresh
//! per-segment variation of scale `anomaly_spread` inside that orthogonal
//! subspace, which makes anomalous runs jumpier than normal ones. Anomalies
//! only occur inside anomaly-flagged videos, as one contiguous run.
//!
//! The manifold and anomaly subspace (the "world") are drawn from `seed`, so a
//! train and a test split of the same config share them.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, VideoEntry, VideoLabel};
use super::{write_features, FeatureRecord};
use crate::error::{GclError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_videos: usize,
    pub segments_per_video: usize,
    pub d: usize,
    /// Frames per segment, used for the manifest's frame-level ground truth.
    pub p: usize,
    pub anomaly_video_fraction: f64,
    pub anomaly_segment_fraction: f64,
    pub latent_rank: usize,
    /// Per-coordinate standard deviation of the on-manifold signal.
    pub mixing_scale: f64,
    /// AR(1) coefficient of the latent trajectory; closer to 1 is smoother.
    pub smoothness: f64,
    pub noise_std: f64,
    /// Constant added to every coordinate, so features sit around
    /// `offset · 1` instead of the origin.
    pub offset: f64,
    pub anomaly_rank: usize,
    /// Number of distinct anomaly shift directions videos draw from.
    pub anomaly_types: usize,
    pub anomaly_shift: f64,
    /// Share of each anomaly direction's squared length that lies inside the
    /// normal manifold's span; the rest is off-manifold.
    pub anomaly_manifold_share: f64,
    pub anomaly_spread: f64,
    /// Fail when the draw contains no anomalous segment.
    pub require_anomalies: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_videos: 200,
            segments_per_video: 60,
            d: 32,
            p: 16,
            anomaly_video_fraction: 0.15,
            anomaly_segment_fraction: 0.30,
            latent_rank: 3,
            mixing_scale: 0.3,
            smoothness: 0.98,
            noise_std: 0.02,
            offset: 0.0,
            anomaly_rank: 1,
            anomaly_types: 1,
            anomaly_shift: 5.0,
            anomaly_manifold_share: 0.99,
            anomaly_spread: 1.0,
            require_anomalies: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GclError::Config(msg));
        for (name, f) in [
            ("anomaly_video_fraction", self.anomaly_video_fraction),
            ("anomaly_segment_fraction", self.anomaly_segment_fraction),
            ("anomaly_manifold_share", self.anomaly_manifold_share),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return bad(format!("{name} must be in [0, 1], got {f}"));
            }
        }
        if self.n_videos == 0 || self.segments_per_video == 0 || self.d == 0 || self.p == 0 {
            return bad("n_videos, segments_per_video, d and p must be positive".into());
        }
        if self.latent_rank == 0 || self.latent_rank >= self.d {
            return bad(format!("latent_rank must be in 1..{}, got {}", self.d, self.latent_rank));
        }
        if self.anomaly_rank == 0 || self.latent_rank + self.anomaly_rank > self.d {
            return bad(format!(
                "anomaly_rank must be in 1..={}, got {}",
                self.d - self.latent_rank,
                self.anomaly_rank
            ));
        }
        if self.anomaly_types == 0 {
            return bad("anomaly_types must be positive".into());
        }
        if !(0.0..1.0).contains(&self.smoothness) {
            return bad(format!("smoothness must be in [0, 1), got {}", self.smoothness));
        }
        Ok(())
    }
}

/// Records plus a manifest with video labels and frame-level ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub records: Vec<FeatureRecord>,
    pub manifest: DatasetManifest,
    /// Ground truth per record, aligned with `records`.
    pub segment_labels: Vec<bool>,
}

impl SyntheticDataset {
    pub fn anomaly_rate(&self) -> f64 {
        let n = self.segment_labels.len().max(1);
        self.segment_labels.iter().filter(|&&a| a).count() as f64 / n as f64
    }

    /// Writes `<dir>/<video>.gclf` files and `<dir>/manifest.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_features(dir, &self.manifest, &self.records)?;
        self.manifest.save(&dir.join("manifest.json"))
    }
}

/// Manifold and anomaly subspaces as lists of `d`-dimensional columns.
struct World {
    manifold: Vec<Vec<f64>>,
    anomaly_basis: Vec<Vec<f64>>,
    /// One `d`-dimensional shift of length `anomaly_shift` per anomaly type.
    anomaly_shifts: Vec<Vec<f64>>,
}

impl World {
    fn new(cfg: &SynthConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let gaussian = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
        };
        let columns: Vec<Vec<f64>> = (0..cfg.latent_rank + cfg.anomaly_rank)
            .map(|_| gaussian(&mut rng, cfg.d))
            .collect();
        let basis = gram_schmidt(columns);
        let (unit_manifold, anomaly_basis) = basis.split_at(cfg.latent_rank);
        // Manifold columns scaled so each coordinate has std ≈ mixing_scale.
        let col_scale = cfg.mixing_scale * (cfg.d as f64 / cfg.latent_rank as f64).sqrt();
        let manifold = unit_manifold
            .iter()
            .map(|c| c.iter().map(|v| v * col_scale).collect())
            .collect();
        let (on, off) = (
            cfg.anomaly_manifold_share.sqrt(),
            (1.0 - cfg.anomaly_manifold_share).sqrt(),
        );
        let anomaly_shifts = (0..cfg.anomaly_types)
            .map(|_| {
                let a = combine(anomaly_basis, &unit(gaussian(&mut rng, cfg.anomaly_rank)), cfg.d);
                let m = combine(unit_manifold, &unit(gaussian(&mut rng, cfg.latent_rank)), cfg.d);
                a.iter()
                    .zip(&m)
                    .map(|(a, m)| cfg.anomaly_shift * (off * a + on * m))
                    .collect()
            })
            .collect();
        Self {
            manifold,
            anomaly_basis: anomaly_basis.to_vec(),
            anomaly_shifts,
        }
    }
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x / norm).collect()
}

/// `Σ coef[i] · columns[i]`.
fn combine(columns: &[Vec<f64>], coef: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    for (col, &c) in columns.iter().zip(coef) {
        for (o, v) in out.iter_mut().zip(col) {
            *o += c * v;
        }
    }
    out
}

fn gram_schmidt(mut columns: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    for i in 0..columns.len() {
        for j in 0..i {
            let dot: f64 = columns[i].iter().zip(&columns[j]).map(|(a, b)| a * b).sum();
            let prev = columns[j].clone();
            for (a, b) in columns[i].iter_mut().zip(&prev) {
                *a -= dot * b;
            }
        }
        let norm = columns[i].iter().map(|x| x * x).sum::<f64>().sqrt();
        columns[i].iter_mut().for_each(|x| *x /= norm);
    }
    columns
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let world = World::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    sample(cfg, &world, cfg.n_videos, "v", &mut rng)
}

/// A training split of `cfg.n_videos` videos and a test split of
/// `test_videos`, drawn from the same world.
pub fn generate_synthetic_split(
    cfg: &SynthConfig,
    test_videos: usize,
) -> Result<(SyntheticDataset, SyntheticDataset)> {
    let train = generate_synthetic(cfg)?;
    let world = World::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let test = sample(cfg, &world, test_videos, "t", &mut rng)?;
    Ok((train, test))
}

fn sample(
    cfg: &SynthConfig,
    world: &World,
    n_videos: usize,
    prefix: &str,
    rng: &mut ChaCha8Rng,
) -> Result<SyntheticDataset> {
    let m = cfg.segments_per_video;
    let n_anomalous_videos = (cfg.anomaly_video_fraction * n_videos as f64).round() as usize;
    let run_len = (cfg.anomaly_segment_fraction * m as f64).round() as usize;
    let mut order: Vec<usize> = (0..n_videos).collect();
    order.shuffle(rng);
    let mut anomalous = vec![false; n_videos];
    if run_len > 0 {
        for &v in &order[..n_anomalous_videos.min(n_videos)] {
            anomalous[v] = true;
        }
    }

    let innovation = (1.0 - cfg.smoothness * cfg.smoothness).sqrt();
    let mut records = Vec::with_capacity(n_videos * m);
    let mut segment_labels = Vec::with_capacity(n_videos * m);
    let mut videos = Vec::with_capacity(n_videos);
    for (v, &is_anomalous) in anomalous.iter().enumerate() {
        let id = format!("{prefix}{v:04}");
        let run = if is_anomalous {
            let start = rng.random_range(0..=m - run_len);
            Some(start..start + run_len)
        } else {
            None
        };
        let shift = &world.anomaly_shifts[rng.random_range(0..world.anomaly_shifts.len())];
        let mut z: Vec<f64> = (0..cfg.latent_rank).map(|_| rng.sample(StandardNormal)).collect();
        for j in 0..m {
            if j > 0 {
                for zi in &mut z {
                    *zi = cfg.smoothness * *zi + innovation * rng.sample::<f64, _>(StandardNormal);
                }
            }
            let mut x: Vec<f64> = (0..cfg.d)
                .map(|_| cfg.offset + cfg.noise_std * rng.sample::<f64, _>(StandardNormal))
                .collect();
            for (col, &zi) in world.manifold.iter().zip(&z) {
                for (xk, ck) in x.iter_mut().zip(col) {
                    *xk += zi * ck;
                }
            }
            let is_anomaly = run.as_ref().is_some_and(|r| r.contains(&j));
            if is_anomaly {
                for (xk, sk) in x.iter_mut().zip(shift) {
                    *xk += sk;
                }
                for col in &world.anomaly_basis {
                    let coef = cfg.anomaly_spread * rng.sample::<f64, _>(StandardNormal);
                    for (xk, ck) in x.iter_mut().zip(col) {
                        *xk += coef * ck;
                    }
                }
            }
            records.push(FeatureRecord {
                video_id: id.clone(),
                segment_index: j,
                vector: x.into_iter().map(|v| v as f32).collect(),
            });
            segment_labels.push(is_anomaly);
        }
        videos.push(VideoEntry {
            file: format!("{id}.gclf"),
            id,
            segments: m,
            label: Some(if is_anomalous {
                VideoLabel::Anomalous
            } else {
                VideoLabel::Normal
            }),
            gt_ranges: Some(
                run.map(|r| vec![[r.start * cfg.p, r.end * cfg.p]])
                    .unwrap_or_default(),
            ),
            frames: None,
        });
    }

    if cfg.require_anomalies && !segment_labels.iter().any(|&a| a) {
        return Err(GclError::Config(
            "synthetic fractions produce no anomalous segments, but evaluation needs them".into(),
        ));
    }
    Ok(SyntheticDataset {
        records,
        manifest: DatasetManifest {
            d: cfg.d,
            p: cfg.p,
            videos,
        },
        segment_labels,
    })
}

/// Squared distance of `x` from the span of the world's manifold.
#[cfg(test)]
fn manifold_residual(world: &World, x: &[f32]) -> f64 {
    let x: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
    let mut r = x.clone();
    for col in &world.manifold {
        let norm2: f64 = col.iter().map(|c| c * c).sum();
        let dot: f64 = col.iter().zip(&x).map(|(c, v)| c * v).sum();
        for (ri, ci) in r.iter_mut().zip(col) {
            *ri -= dot / norm2 * ci;
        }
    }
    r.iter().map(|v| v * v).sum()
}
