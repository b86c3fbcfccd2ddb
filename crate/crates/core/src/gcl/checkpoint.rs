//! Binary checkpoints of a [`GclModel`].
//!
//! Little-endian layout:
//!
//! ```text
//! magic "GCLC" | version u32 = 1
//! config: u32 length + UTF-8 JSON
//! epoch u64 | pretrained u8
//! rng: seed [u8; 32] | stream u64 | word position u128
//! generator, discriminator:   layers u32, then per layer
//!                             in u32 | out u32 | activation u8 | weights f64* | bias f64*
//! generator optimizer, discriminator optimizer:
//!                             lr, momentum, smoothing, eps f64 | tensors u32, then per tensor
//!                             len u64 | square_avg f64* | momentum f64*
//! ```

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::GclModel;
use crate::data::write_bytes;
use crate::error::{GclError, Result};
use crate::nn::{Activation, DenseLayer, Matrix, Network, RmspropConfig, RmspropState};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GCLC";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
    fn len32(&mut self, n: usize) -> Result<()> {
        let n = u32::try_from(n).map_err(|_| GclError::Config(format!("{n} exceeds u32 in checkpoint")))?;
        self.u32(n);
        Ok(())
    }

    fn network(&mut self, net: &Network) -> Result<()> {
        self.len32(net.layers().len())?;
        for layer in net.layers() {
            self.len32(layer.in_dim())?;
            self.len32(layer.out_dim())?;
            self.u8(layer.activation.code());
            self.f64s(layer.weights.as_slice());
            self.f64s(&layer.bias);
        }
        Ok(())
    }

    fn optimizer(&mut self, opt: &RmspropState) -> Result<()> {
        let c = opt.config;
        self.f64s(&[c.lr, c.momentum, c.smoothing, c.eps]);
        self.len32(opt.square_avg.len())?;
        for (s, m) in opt.square_avg.iter().zip(&opt.momentum_buf) {
            self.u64(s.len() as u64);
            self.f64s(s);
            self.f64s(m);
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            GclError::Config(format!("checkpoint truncated at byte {}", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().expect("16 bytes")))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| GclError::Config("checkpoint length overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect())
    }

    fn network(&mut self) -> Result<Network> {
        let n = self.u32()? as usize;
        let mut layers = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            let (rows, cols) = (self.u32()? as usize, self.u32()? as usize);
            let code = self.u8()?;
            let activation = Activation::from_code(code)
                .ok_or_else(|| GclError::Config(format!("unknown activation code {code}")))?;
            let weights = Matrix::from_vec(rows, cols, self.f64s(rows * cols)?)?;
            let bias = self.f64s(cols)?;
            layers.push(DenseLayer::new(weights, bias, activation)?);
        }
        Network::from_layers(layers)
    }

    fn optimizer(&mut self) -> Result<RmspropState> {
        let c = self.f64s(4)?;
        let config = RmspropConfig {
            lr: c[0],
            momentum: c[1],
            smoothing: c[2],
            eps: c[3],
        };
        let n = self.u32()? as usize;
        let (mut square_avg, mut momentum_buf) = (Vec::new(), Vec::new());
        for _ in 0..n {
            let len = self.u64()? as usize;
            square_avg.push(self.f64s(len)?);
            momentum_buf.push(self.f64s(len)?);
        }
        Ok(RmspropState {
            config,
            square_avg,
            momentum_buf,
        })
    }
}

pub fn encode_checkpoint(model: &GclModel) -> Result<Vec<u8>> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    let cfg = serde_json::to_vec(&model.cfg)?;
    w.len32(cfg.len())?;
    w.0.extend_from_slice(&cfg);
    w.u64(model.epoch as u64);
    w.u8(u8::from(model.pretrained));
    w.0.extend_from_slice(&model.rng.get_seed());
    w.u64(model.rng.get_stream());
    w.u128(model.rng.get_word_pos());
    w.network(&model.gen)?;
    w.network(&model.disc)?;
    w.optimizer(&model.gen_opt)?;
    w.optimizer(&model.disc_opt)?;
    Ok(w.0)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<GclModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(GclError::Config("not a checkpoint (bad magic, expected GCLC)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(GclError::Config(format!("unsupported checkpoint version {version}")));
    }
    let cfg_len = r.u32()? as usize;
    let cfg = serde_json::from_slice(r.take(cfg_len)?)?;
    let epoch = r.u64()? as usize;
    let pretrained = r.u8()? != 0;
    let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    let stream = r.u64()?;
    let word_pos = r.u128()?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    let gen = r.network()?;
    let disc = r.network()?;
    let gen_opt = r.optimizer()?;
    let disc_opt = r.optimizer()?;
    if r.pos != bytes.len() {
        return Err(GclError::Config("trailing bytes after checkpoint".into()));
    }
    Ok(GclModel {
        cfg,
        gen,
        disc,
        gen_opt,
        disc_opt,
        epoch,
        pretrained,
        rng,
    })
}

pub fn save_checkpoint(model: &GclModel, path: &Path) -> Result<()> {
    write_bytes(path, &encode_checkpoint(model)?)
}

pub fn load_checkpoint(path: &Path) -> Result<GclModel> {
    let bytes = std::fs::read(path).map_err(|e| GclError::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| GclError::format(path, e.to_string()))
}
