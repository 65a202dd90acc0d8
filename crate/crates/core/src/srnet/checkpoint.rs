//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   "VSRC"                       4 bytes
//! version u32 = 1
//! frames, channels_per_frame  u32 x 2
//! shared_first_layer          u8
//! init_std                    f64
//! first layer spec            out u32, kernel u32, activation u8
//! tail layer count            u32
//! per tail layer              out u32, kernel u32, activation u8
//! parameters                  f32 x N
//! ```
//!
//! Parameters appear in declaration order: each frame-layer bank (weights
//! then bias), then each tail layer. Since the in-memory parameters are
//! `f32`, a save/load round trip is bit-exact.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::srnet::{Activation, ConvLayer, LayerSpec, NetConfig, SrNetwork};

const MAGIC: [u8; 4] = *b"VSRC";
const VERSION: u32 = 1;

struct Writer {
    bytes: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    fn u8(&mut self, v: u8) {
        self.bytes.push(v);
    }

    fn f64(&mut self, v: f64) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    fn f32s(&mut self, vs: &[f32]) {
        for v in vs {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn spec(&mut self, spec: &LayerSpec) {
        self.u32(spec.out_channels as u32);
        self.u32(spec.kernel_size as u32);
        self.u8(match spec.activation {
            Activation::Relu => 1,
            Activation::Linear => 0,
        });
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("unexpected end of file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(4 * n)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn spec(&mut self) -> Result<LayerSpec> {
        let out_channels = self.u32()? as usize;
        let kernel_size = self.u32()? as usize;
        let activation = match self.u8()? {
            0 => Activation::Linear,
            1 => Activation::Relu,
            other => {
                return Err(Error::Checkpoint(format!(
                    "unknown activation tag {other}"
                )))
            }
        };
        Ok(LayerSpec {
            out_channels,
            kernel_size,
            activation,
        })
    }
}

/// Serialize a network to a checkpoint file.
pub fn save_checkpoint(net: &SrNetwork, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let cfg = net.config();
    let mut w = Writer { bytes: Vec::new() };
    w.bytes.extend_from_slice(&MAGIC);
    w.u32(VERSION);
    w.u32(cfg.frames as u32);
    w.u32(cfg.channels_per_frame as u32);
    w.u8(u8::from(cfg.shared_first_layer));
    w.f64(cfg.init_std);
    w.spec(&cfg.first_layer);
    w.u32(cfg.tail_layers.len() as u32);
    for spec in &cfg.tail_layers {
        w.spec(spec);
    }
    for layer in net.frame_layers.iter().chain(net.tail_layers.iter()) {
        w.f32s(&layer.weights);
        w.f32s(&layer.bias);
    }
    fs::write(path, w.bytes).map_err(|e| Error::io(path, e))
}

/// Deserialize a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<SrNetwork> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version} (expected {VERSION})"
        )));
    }
    let frames = r.u32()? as usize;
    let channels_per_frame = r.u32()? as usize;
    let shared_first_layer = match r.u8()? {
        0 => false,
        1 => true,
        other => return Err(Error::Checkpoint(format!("bad shared flag {other}"))),
    };
    let init_std = r.f64()?;
    let first_layer = r.spec()?;
    let tail_count = r.u32()? as usize;
    let tail_layers = (0..tail_count)
        .map(|_| r.spec())
        .collect::<Result<Vec<_>>>()?;
    let config = NetConfig {
        frames,
        channels_per_frame,
        shared_first_layer,
        init_std,
        first_layer,
        tail_layers,
    };
    config
        .validate()
        .map_err(|e| Error::Checkpoint(format!("invalid topology: {e}")))?;

    let mut read_layer = |in_channels: usize, spec: &LayerSpec| -> Result<ConvLayer> {
        let k = spec.kernel_size;
        let count = spec.out_channels * in_channels * k * k;
        Ok(ConvLayer {
            in_channels,
            out_channels: spec.out_channels,
            kernel_size: k,
            activation: spec.activation,
            weights: r.f32s(count)?,
            bias: r.f32s(spec.out_channels)?,
        })
    };

    let banks = if config.shared_first_layer {
        1
    } else {
        config.frames
    };
    let mut frame_layers = Vec::with_capacity(banks);
    for _ in 0..banks {
        frame_layers.push(read_layer(config.channels_per_frame, &config.first_layer)?);
    }
    let mut tails = Vec::with_capacity(config.tail_layers.len());
    let mut in_ch = config.frames * config.first_layer.out_channels;
    for spec in config.tail_layers.clone() {
        tails.push(read_layer(in_ch, &spec)?);
        in_ch = spec.out_channels;
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    SrNetwork::from_parts(config, frame_layers, tails)
}
