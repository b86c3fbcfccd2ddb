use serde::{Deserialize, Serialize};

use crate::error::{GclError, Result};
use crate::nn::RmspropConfig;

/// How a generator treats rows the discriminator pseudo-labels anomalous.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NlMode {
    /// Reconstruction target becomes the all-ones vector.
    #[default]
    Ones,
    /// Reconstruction target becomes a random pseudo-normal row of the batch.
    RandomNormal,
    /// Reconstruction target is the input plus `N(0, gaussian_sigma²)` noise.
    Gaussian,
    /// Pseudo-anomalous rows are left out of the generator loss.
    None,
}

impl std::str::FromStr for NlMode {
    type Err = GclError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ones" => Ok(NlMode::Ones),
            "random_normal" => Ok(NlMode::RandomNormal),
            "gaussian" => Ok(NlMode::Gaussian),
            "none" => Ok(NlMode::None),
            other => Err(GclError::Config(format!("unknown negative-learning mode {other:?}"))),
        }
    }
}

/// Supervision level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// No pre-training.
    #[default]
    GclB,
    /// Generator pre-trained on temporally cleaned data, discriminator on its labels.
    GclPt,
    /// Generator pre-trained on normal-labeled videos only.
    GclOcc,
    /// `GclPt` plus video-level labels for a `ws_fraction` of videos.
    GclWs,
}

impl std::str::FromStr for Mode {
    type Err = GclError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcl_b" => Ok(Mode::GclB),
            "gcl_pt" => Ok(Mode::GclPt),
            "gcl_occ" => Ok(Mode::GclOcc),
            "gcl_ws" => Ok(Mode::GclWs),
            other => Err(GclError::Config(format!("unknown mode {other:?}"))),
        }
    }
}

impl Mode {
    pub fn needs_video_labels(self) -> bool {
        matches!(self, Mode::GclOcc | Mode::GclWs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GclConfig {
    /// Generator widths including input and output; `None` scales the
    /// reference `[2048, 1024, 512, 256, 512, 1024, 2048]` to `d`.
    pub gen_dims: Option<Vec<usize>>,
    /// Discriminator widths; `None` scales `[2048, 512, 32, 1]` to `d`.
    pub disc_dims: Option<Vec<usize>>,
    pub lr: f64,
    pub momentum: f64,
    pub rms_smoothing: f64,
    pub rms_eps: f64,
    pub epochs: usize,
    pub pretrain_epochs: usize,
    pub batch_size: usize,
    pub k_g: f64,
    pub k_d: f64,
    pub nl_mode: NlMode,
    pub gaussian_sigma: f64,
    pub mode: Mode,
    pub ws_fraction: f64,
    pub d_th: f64,
    pub seed: u64,
    pub soft_labels: bool,
    pub self_labels: bool,
    /// Use `‖t − f̂‖²` instead of `‖t − f̂‖` in the generator losses.
    pub squared_norm: bool,
}

impl Default for GclConfig {
    fn default() -> Self {
        Self {
            gen_dims: None,
            disc_dims: None,
            lr: 2e-5,
            momentum: 0.60,
            rms_smoothing: 0.99,
            rms_eps: 1e-8,
            epochs: 15,
            pretrain_epochs: 15,
            batch_size: 8192,
            k_g: 1.0,
            k_d: 0.1,
            nl_mode: NlMode::Ones,
            gaussian_sigma: 1.5,
            mode: Mode::GclB,
            ws_fraction: 0.0,
            d_th: 0.70,
            seed: 0,
            soft_labels: false,
            self_labels: false,
            squared_norm: false,
        }
    }
}

const REFERENCE_D: usize = 2048;
const REFERENCE_GEN_HIDDEN: [usize; 5] = [1024, 512, 256, 512, 1024];
const REFERENCE_DISC_HIDDEN: [usize; 2] = [512, 32];
const MIN_SCALED_WIDTH: usize = 4;

fn scale_width(width: usize, d: usize) -> usize {
    ((width * d) as f64 / REFERENCE_D as f64).round().max(MIN_SCALED_WIDTH as f64) as usize
}

impl GclConfig {
    pub fn gen_dims_for(&self, d: usize) -> Vec<usize> {
        self.gen_dims.clone().unwrap_or_else(|| {
            let mut dims = vec![d];
            dims.extend(REFERENCE_GEN_HIDDEN.iter().map(|&w| scale_width(w, d)));
            dims.push(d);
            dims
        })
    }

    pub fn disc_dims_for(&self, d: usize) -> Vec<usize> {
        self.disc_dims.clone().unwrap_or_else(|| {
            let mut dims = vec![d];
            dims.extend(REFERENCE_DISC_HIDDEN.iter().map(|&w| scale_width(w, d)));
            dims.push(1);
            dims
        })
    }

    pub fn rmsprop(&self) -> RmspropConfig {
        RmspropConfig {
            lr: self.lr,
            momentum: self.momentum,
            smoothing: self.rms_smoothing,
            eps: self.rms_eps,
        }
    }

    /// Every violation, so a caller can report them all before doing any work.
    pub fn violations(&self, d: usize) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.k_g >= 0.0) {
            out.push(format!("k_g must be >= 0, got {}", self.k_g));
        }
        if !(self.k_d >= 0.0) {
            out.push(format!("k_d must be >= 0, got {}", self.k_d));
        }
        if !(0.0..=1.0).contains(&self.ws_fraction) {
            out.push(format!("ws_fraction must be in [0, 1], got {}", self.ws_fraction));
        }
        if self.batch_size < 2 {
            out.push(format!("batch_size must be >= 2, got {}", self.batch_size));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            out.push(format!("lr must be a finite non-negative number, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            out.push(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(0.0..1.0).contains(&self.rms_smoothing) {
            out.push(format!("rms_smoothing must be in [0, 1), got {}", self.rms_smoothing));
        }
        if !(self.rms_eps > 0.0) {
            out.push(format!("rms_eps must be > 0, got {}", self.rms_eps));
        }
        if !(self.d_th > 0.0) {
            out.push(format!("d_th must be > 0, got {}", self.d_th));
        }
        if !(self.gaussian_sigma >= 0.0) {
            out.push(format!("gaussian_sigma must be >= 0, got {}", self.gaussian_sigma));
        }
        let gen = self.gen_dims_for(d);
        if gen.len() < 2 || gen[0] != d || gen[gen.len() - 1] != d || gen.contains(&0) {
            out.push(format!("generator dims {gen:?} must start and end with d = {d}"));
        }
        let disc = self.disc_dims_for(d);
        if disc.len() < 2 || disc[0] != d || disc[disc.len() - 1] != 1 || disc.contains(&0) {
            out.push(format!("discriminator dims {disc:?} must start with d = {d} and end with 1"));
        }
        out
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let v = self.violations(d);
        if v.is_empty() {
            Ok(())
        } else {
            Err(GclError::Config(v.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_dims_at_2048() {
        let cfg = GclConfig::default();
        assert_eq!(cfg.gen_dims_for(2048), vec![2048, 1024, 512, 256, 512, 1024, 2048]);
        assert_eq!(cfg.disc_dims_for(2048), vec![2048, 512, 32, 1]);
    }

    #[test]
    fn scaled_dims_at_32() {
        let cfg = GclConfig::default();
        assert_eq!(cfg.gen_dims_for(32), vec![32, 16, 8, 4, 8, 16, 32]);
        assert_eq!(cfg.disc_dims_for(32), vec![32, 8, 4, 1]);
    }

    #[test]
    fn violations_are_enumerated() {
        let cfg = GclConfig {
            k_g: -1.0,
            ws_fraction: 2.0,
            batch_size: 1,
            gen_dims: Some(vec![8, 4, 9]),
            ..GclConfig::default()
        };
        assert_eq!(cfg.violations(8).len(), 4);
        assert!(GclConfig::default().validate(32).is_ok());
    }

    #[test]
    fn parses_cli_names() {
        assert_eq!("random_normal".parse::<NlMode>().unwrap(), NlMode::RandomNormal);
        assert_eq!("gcl_ws".parse::<Mode>().unwrap(), Mode::GclWs);
        assert!("bogus".parse::<Mode>().is_err());
    }
}
