//! Small trainable early-fusion super-resolution network.
//!
//! Per-frame first-layer convolutions (shared or separate), feature
//! concatenation after layer 1, shared tail layers, single-channel output.
//! All convolutions use valid padding; the resulting border shrinkage is
//! tracked explicitly. Parameters are stored as `f32` (so checkpoints are
//! bit-exact) while all accumulation runs in `f64`.

mod checkpoint;
mod loss;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use loss::{mse_loss, smoothness_loss, LossValue, SmoothnessValue};
pub use train::{
    learning_rate_at, train, InputMode, LrPolicy, SgdOptimizer, TraceRow, TrainConfig, TrainSample,
};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mcops::CompensatedStack;
use crate::rng::standard_normal;
use crate::tensor::{MultiChannelImage, Plane};

/// Per-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

/// Shape of one convolution layer (square kernel, valid padding).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub out_channels: usize,
    pub kernel_size: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(out_channels: usize, kernel_size: usize, activation: Activation) -> Self {
        LayerSpec {
            out_channels,
            kernel_size,
            activation,
        }
    }
}

/// Network topology plus initialization settings.
#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    /// Number of frame slots in the input stack (3 for triplets).
    pub frames: usize,
    /// Channels per frame slot (1 for plain frames, 3 for jubw stacks).
    pub channels_per_frame: usize,
    /// One first-layer filter bank shared by all frames, or one per frame.
    pub shared_first_layer: bool,
    /// Standard deviation of the zero-mean Gaussian weight init.
    pub init_std: f64,
    pub first_layer: LayerSpec,
    pub tail_layers: Vec<LayerSpec>,
}

impl NetConfig {
    /// The conventional topology: 9x9x64 per-frame encoding, 5x5x32 fusion,
    /// 5x5x1 linear reconstruction.
    pub fn vsr_default(channels_per_frame: usize) -> Self {
        NetConfig {
            frames: 3,
            channels_per_frame,
            shared_first_layer: false,
            init_std: 1e-3,
            first_layer: LayerSpec::new(64, 9, Activation::Relu),
            tail_layers: vec![
                LayerSpec::new(32, 5, Activation::Relu),
                LayerSpec::new(1, 5, Activation::Linear),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.channels_per_frame == 0 {
            return Err(Error::InvalidParameter(
                "network needs at least one frame and one channel".into(),
            ));
        }
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            return Err(Error::InvalidParameter("init_std must be positive".into()));
        }
        let last = self
            .tail_layers
            .last()
            .ok_or_else(|| Error::InvalidParameter("network needs a tail layer".into()))?;
        if last.out_channels != 1 {
            return Err(Error::InvalidParameter(
                "final layer must emit exactly one channel".into(),
            ));
        }
        for spec in std::iter::once(&self.first_layer).chain(self.tail_layers.iter()) {
            if spec.kernel_size % 2 == 0 || spec.kernel_size == 0 {
                return Err(Error::InvalidParameter(format!(
                    "kernel sizes must be odd, got {}",
                    spec.kernel_size
                )));
            }
            if spec.out_channels == 0 {
                return Err(Error::InvalidParameter("layer with zero channels".into()));
            }
        }
        Ok(())
    }

    /// Total valid-padding shrinkage per axis.
    pub fn shrinkage(&self) -> usize {
        (self.first_layer.kernel_size - 1)
            + self
                .tail_layers
                .iter()
                .map(|l| l.kernel_size - 1)
                .sum::<usize>()
    }

    /// Border lost on each side (shrinkage is symmetric for odd kernels).
    pub fn border(&self) -> usize {
        self.shrinkage() / 2
    }

    pub fn input_channels(&self) -> usize {
        self.frames * self.channels_per_frame
    }
}

/// One convolution layer with its parameters.
///
/// Weight layout is `[out][in][ky][kx]` row-major; parameters are `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub activation: Activation,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl ConvLayer {
    fn init(in_channels: usize, spec: LayerSpec, std: f64, rng: &mut impl Rng) -> Self {
        let count = spec.out_channels * in_channels * spec.kernel_size * spec.kernel_size;
        let weights = (0..count)
            .map(|_| (std * standard_normal(rng)) as f32)
            .collect();
        ConvLayer {
            in_channels,
            out_channels: spec.out_channels,
            kernel_size: spec.kernel_size,
            activation: spec.activation,
            weights,
            bias: vec![0.0; spec.out_channels],
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    #[inline]
    fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        let k = self.kernel_size;
        f64::from(self.weights[((o * self.in_channels + i) * k + ky) * k + kx])
    }
}

/// Per-layer gradient buffers, same layout as the layer's parameters.
#[derive(Debug, Clone)]
pub struct LayerGradients {
    pub d_weights: Vec<f64>,
    pub d_bias: Vec<f64>,
}

impl LayerGradients {
    fn zeros_like(layer: &ConvLayer) -> Self {
        LayerGradients {
            d_weights: vec![0.0; layer.weights.len()],
            d_bias: vec![0.0; layer.bias.len()],
        }
    }

    fn add_scaled(&mut self, other: &LayerGradients, scale: f64) {
        for (a, b) in self.d_weights.iter_mut().zip(&other.d_weights) {
            *a += scale * b;
        }
        for (a, b) in self.d_bias.iter_mut().zip(&other.d_bias) {
            *a += scale * b;
        }
    }
}

/// Reverse-mode gradients for every parameter plus the input stack.
#[derive(Debug, Clone)]
pub struct NetGradients {
    pub frame_layers: Vec<LayerGradients>,
    pub tail_layers: Vec<LayerGradients>,
    /// d loss / d input stack, channel order matching the stack.
    pub d_input: MultiChannelImage,
}

impl NetGradients {
    pub fn zeros_like(net: &SrNetwork) -> Self {
        NetGradients {
            frame_layers: net.frame_layers.iter().map(LayerGradients::zeros_like).collect(),
            tail_layers: net.tail_layers.iter().map(LayerGradients::zeros_like).collect(),
            d_input: MultiChannelImage::from_plane(Plane::new(1, 1)),
        }
    }

    pub fn accumulate(&mut self, other: &NetGradients, scale: f64) {
        for (a, b) in self.frame_layers.iter_mut().zip(&other.frame_layers) {
            a.add_scaled(b, scale);
        }
        for (a, b) in self.tail_layers.iter_mut().zip(&other.tail_layers) {
            a.add_scaled(b, scale);
        }
    }
}

/// Intermediate activations recorded by [`SrNetwork::forward_traced`],
/// needed to run [`SrNetwork::backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    frame_inputs: Vec<Vec<Plane>>,
    frame_preacts: Vec<Vec<Plane>>,
    tail_inputs: Vec<Vec<Plane>>,
    tail_preacts: Vec<Vec<Plane>>,
}

/// The early-fusion network.
#[derive(Debug, Clone, PartialEq)]
pub struct SrNetwork {
    config: NetConfig,
    /// One entry when `shared_first_layer`, otherwise one per frame.
    pub frame_layers: Vec<ConvLayer>,
    pub tail_layers: Vec<ConvLayer>,
}

impl SrNetwork {
    /// Random Gaussian init (biases zero), deterministic for a given seed.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let banks = if config.shared_first_layer {
            1
        } else {
            config.frames
        };
        let frame_layers = (0..banks)
            .map(|_| {
                ConvLayer::init(
                    config.channels_per_frame,
                    config.first_layer,
                    config.init_std,
                    &mut rng,
                )
            })
            .collect();
        let mut tail_layers = Vec::with_capacity(config.tail_layers.len());
        let mut in_ch = config.frames * config.first_layer.out_channels;
        for spec in &config.tail_layers {
            tail_layers.push(ConvLayer::init(in_ch, *spec, config.init_std, &mut rng));
            in_ch = spec.out_channels;
        }
        Ok(SrNetwork {
            config,
            frame_layers,
            tail_layers,
        })
    }

    pub fn from_parts(
        config: NetConfig,
        frame_layers: Vec<ConvLayer>,
        tail_layers: Vec<ConvLayer>,
    ) -> Result<Self> {
        config.validate()?;
        Ok(SrNetwork {
            config,
            frame_layers,
            tail_layers,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn border(&self) -> usize {
        self.config.border()
    }

    pub fn shrinkage(&self) -> usize {
        self.config.shrinkage()
    }

    pub fn parameter_count(&self) -> usize {
        self.frame_layers
            .iter()
            .chain(self.tail_layers.iter())
            .map(ConvLayer::parameter_count)
            .sum()
    }

    fn frame_layer(&self, frame: usize) -> &ConvLayer {
        if self.config.shared_first_layer {
            &self.frame_layers[0]
        } else {
            &self.frame_layers[frame]
        }
    }

    fn check_input(&self, image: &MultiChannelImage) -> Result<()> {
        if image.channel_count() != self.config.input_channels() {
            return Err(Error::DimensionMismatch(format!(
                "stack has {} channels, network expects {}",
                image.channel_count(),
                self.config.input_channels()
            )));
        }
        let (w, h) = image.dims();
        let s = self.config.shrinkage();
        if w <= s || h <= s {
            return Err(Error::DimensionMismatch(format!(
                "{w}x{h} input too small for {s} pixels of valid-convolution shrinkage"
            )));
        }
        Ok(())
    }

    /// Run the network on a compensated stack; the HR estimate has the
    /// stack's dims minus [`Self::shrinkage`].
    pub fn forward(&self, stack: &CompensatedStack) -> Result<Plane> {
        Ok(self.forward_traced(&stack.image)?.0)
    }

    /// Forward pass recording the activations needed for [`Self::backward`].
    pub fn forward_traced(&self, image: &MultiChannelImage) -> Result<(Plane, ForwardTrace)> {
        self.check_input(image)?;
        let cpf = self.config.channels_per_frame;

        let mut frame_inputs = Vec::with_capacity(self.config.frames);
        let mut frame_preacts = Vec::with_capacity(self.config.frames);
        let mut fused = Vec::with_capacity(self.config.frames * self.config.first_layer.out_channels);
        for f in 0..self.config.frames {
            let input: Vec<Plane> = (0..cpf)
                .map(|c| image.channel(f * cpf + c).clone())
                .collect();
            let preact = conv_forward(self.frame_layer(f), &input);
            fused.extend(preact.iter().map(|p| activate(p, self.config.first_layer.activation)));
            frame_inputs.push(input);
            frame_preacts.push(preact);
        }

        let mut tail_inputs = Vec::with_capacity(self.tail_layers.len());
        let mut tail_preacts = Vec::with_capacity(self.tail_layers.len());
        let mut current = fused;
        for layer in &self.tail_layers {
            let preact = conv_forward(layer, &current);
            let post: Vec<Plane> = preact.iter().map(|p| activate(p, layer.activation)).collect();
            tail_inputs.push(current);
            tail_preacts.push(preact);
            current = post;
        }
        let estimate = current.pop().expect("final layer emits one plane");
        Ok((
            estimate,
            ForwardTrace {
                frame_inputs,
                frame_preacts,
                tail_inputs,
                tail_preacts,
            },
        ))
    }

    /// Exact reverse-mode gradients of [`Self::forward_traced`] given the
    /// cotangent of the estimate.
    pub fn backward(&self, trace: &ForwardTrace, upstream: &Plane) -> Result<NetGradients> {
        let last_pre = trace
            .tail_preacts
            .last()
            .and_then(|p| p.first())
            .ok_or_else(|| Error::InvalidParameter("empty forward trace".into()))?;
        if !upstream.same_dims(last_pre) {
            return Err(Error::DimensionMismatch(format!(
                "upstream {}x{} vs estimate {}x{}",
                upstream.width(),
                upstream.height(),
                last_pre.width(),
                last_pre.height()
            )));
        }

        let mut tail_grads: Vec<Option<LayerGradients>> = vec![None; self.tail_layers.len()];
        let mut d_out = vec![upstream.clone()];
        for (idx, layer) in self.tail_layers.iter().enumerate().rev() {
            let (grads, d_in) = conv_backward(
                layer,
                &trace.tail_inputs[idx],
                &trace.tail_preacts[idx],
                &d_out,
            );
            tail_grads[idx] = Some(grads);
            d_out = d_in;
        }

        // d_out now targets the fused feature map: split per frame.
        let feat = self.config.first_layer.out_channels;
        let mut frame_grads: Vec<LayerGradients> = self
            .frame_layers
            .iter()
            .map(LayerGradients::zeros_like)
            .collect();
        let mut d_channels = Vec::with_capacity(self.config.input_channels());
        for f in 0..self.config.frames {
            let slice = &d_out[f * feat..(f + 1) * feat];
            let layer = self.frame_layer(f);
            let (grads, d_in) = conv_backward(
                layer,
                &trace.frame_inputs[f],
                &trace.frame_preacts[f],
                slice,
            );
            let bank = if self.config.shared_first_layer { 0 } else { f };
            frame_grads[bank].add_scaled(&grads, 1.0);
            d_channels.extend(d_in);
        }

        Ok(NetGradients {
            frame_layers: frame_grads,
            tail_layers: tail_grads.into_iter().map(Option::unwrap).collect(),
            d_input: MultiChannelImage::from_channels(d_channels)?,
        })
    }
}

fn activate(pre: &Plane, activation: Activation) -> Plane {
    match activation {
        Activation::Linear => pre.clone(),
        Activation::Relu => pre.map(|v| v.max(0.0)),
    }
}

// Valid-padding cross-correlation; returns pre-activation planes.
fn conv_forward(layer: &ConvLayer, input: &[Plane]) -> Vec<Plane> {
    assert_eq!(input.len(), layer.in_channels);
    let (w, h) = input[0].dims();
    let k = layer.kernel_size;
    let (ow, oh) = (w - k + 1, h - k + 1);
    (0..layer.out_channels)
        .into_par_iter()
        .map(|o| {
            let mut out = Plane::new(ow, oh);
            let bias = f64::from(layer.bias[o]);
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = bias;
                    for (i, plane) in input.iter().enumerate() {
                        for ky in 0..k {
                            let row = plane.row(y + ky);
                            for kx in 0..k {
                                acc += layer.weight(o, i, ky, kx) * row[x + kx];
                            }
                        }
                    }
                    out.set(x, y, acc);
                }
            }
            out
        })
        .collect()
}

// Gradients of one conv layer. `d_out` is the cotangent of the
// post-activation output.
fn conv_backward(
    layer: &ConvLayer,
    input: &[Plane],
    preact: &[Plane],
    d_out: &[Plane],
) -> (LayerGradients, Vec<Plane>) {
    assert_eq!(d_out.len(), layer.out_channels);
    let k = layer.kernel_size;
    let (ow, oh) = preact[0].dims();
    let (w, h) = input[0].dims();

    // Cotangent of the pre-activation.
    let d_pre: Vec<Plane> = preact
        .iter()
        .zip(d_out)
        .map(|(pre, g)| match layer.activation {
            Activation::Linear => g.clone(),
            Activation::Relu => Plane::from_fn(ow, oh, |x, y| {
                if pre.get(x, y) > 0.0 {
                    g.get(x, y)
                } else {
                    0.0
                }
            }),
        })
        .collect();

    let per_out: Vec<(Vec<f64>, f64)> = (0..layer.out_channels)
        .into_par_iter()
        .map(|o| {
            let g = &d_pre[o];
            let mut dw = vec![0.0; layer.in_channels * k * k];
            let mut db = 0.0;
            for y in 0..oh {
                for x in 0..ow {
                    let gv = g.get(x, y);
                    if gv == 0.0 {
                        continue;
                    }
                    db += gv;
                    for (i, plane) in input.iter().enumerate() {
                        for ky in 0..k {
                            let row = plane.row(y + ky);
                            for kx in 0..k {
                                dw[(i * k + ky) * k + kx] += gv * row[x + kx];
                            }
                        }
                    }
                }
            }
            (dw, db)
        })
        .collect();

    let mut grads = LayerGradients::zeros_like(layer);
    for (o, (dw, db)) in per_out.into_iter().enumerate() {
        let base = o * layer.in_channels * k * k;
        grads.d_weights[base..base + dw.len()].copy_from_slice(&dw);
        grads.d_bias[o] = db;
    }

    let d_input: Vec<Plane> = (0..layer.in_channels)
        .into_par_iter()
        .map(|i| {
            Plane::from_fn(w, h, |xx, yy| {
                let mut acc = 0.0;
                for (o, g) in d_pre.iter().enumerate() {
                    let ky_lo = (yy + 1).saturating_sub(oh).min(k);
                    let ky_hi = (yy + 1).min(k);
                    let kx_lo = (xx + 1).saturating_sub(ow).min(k);
                    let kx_hi = (xx + 1).min(k);
                    for ky in ky_lo..ky_hi {
                        for kx in kx_lo..kx_hi {
                            acc += g.get(xx - kx, yy - ky) * layer.weight(o, i, ky, kx);
                        }
                    }
                }
                acc
            })
        })
        .collect();

    (grads, d_input)
}
