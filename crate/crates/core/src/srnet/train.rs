//! Momentum SGD with weight decay and a multistep learning-rate schedule.
//!
//! The update is the classical one:
//!
//! ```text
//! v <- momentum * v - lr * (grad + weight_decay * p)
//! p <- p + v
//! ```
//!
//! computed in `f64` and stored back into the `f32` parameters. Given a
//! seed, a config and a thread count, trajectories are bit-reproducible.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mcops::CompensatedStack;
use crate::srnet::loss::mse_loss;
use crate::srnet::{ConvLayer, LayerGradients, NetGradients, SrNetwork};
use crate::tensor::Plane;

/// Learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrPolicy {
    Fixed,
    /// Multiply the rate by `gamma` after every `step` iterations.
    Multistep { gamma: f64, step: usize },
}

/// Whether iterations draw random patches or whole images.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputMode {
    Image,
    /// Square input patches of this edge length.
    Patch { size: usize },
}

/// Trainer settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub lr_policy: LrPolicy,
    pub iterations: usize,
    pub input_mode: InputMode,
    /// Record a loss-trace row every this many iterations.
    pub log_every: usize,
}

impl TrainConfig {
    /// Patch-based settings: lr 1e-5, momentum 0.9, weight decay 5e-4,
    /// batch 240, fixed rate, 200k iterations on 36x36 inputs.
    pub fn patch_defaults() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 240,
            lr_policy: LrPolicy::Fixed,
            iterations: 200_000,
            input_mode: InputMode::Patch { size: 36 },
            log_every: 1000,
        }
    }

    /// Image-based settings: weight decay 4e-4, batch 2, rate halved every
    /// 50k iterations, 300k iterations on whole frames.
    pub fn image_defaults() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            momentum: 0.9,
            weight_decay: 4e-4,
            batch_size: 2,
            lr_policy: LrPolicy::Multistep {
                gamma: 0.5,
                step: 50_000,
            },
            iterations: 300_000,
            input_mode: InputMode::Image,
            log_every: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("momentum", self.momentum),
            ("weight_decay", self.weight_decay),
        ];
        for (name, v) in positive {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be >= 1".into()));
        }
        if self.log_every == 0 {
            return Err(Error::InvalidParameter("log_every must be >= 1".into()));
        }
        if let LrPolicy::Multistep { gamma, step } = self.lr_policy {
            if !(gamma > 0.0 && gamma <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "multistep gamma must be in (0, 1], got {gamma}"
                )));
            }
            if step == 0 {
                return Err(Error::InvalidParameter("multistep step must be >= 1".into()));
            }
        }
        if let InputMode::Patch { size } = self.input_mode {
            if size == 0 {
                return Err(Error::InvalidParameter("patch size must be >= 1".into()));
            }
        }
        Ok(())
    }
}

/// Learning rate in effect at a 1-based iteration index.
pub fn learning_rate_at(cfg: &TrainConfig, iteration: usize) -> f64 {
    match cfg.lr_policy {
        LrPolicy::Fixed => cfg.learning_rate,
        LrPolicy::Multistep { gamma, step } => {
            let drops = (iteration - 1) / step;
            cfg.learning_rate * gamma.powi(drops as i32)
        }
    }
}

/// One training example: a compensated stack and its full-size HR target
/// (the trainer crops the target to the estimate's valid region).
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub stack: CompensatedStack,
    pub target: Plane,
}

/// One row of the loss trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub lr: f64,
    pub loss: f64,
}

// Velocity buffers for one layer.
#[derive(Debug, Clone)]
struct LayerVelocity {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// Momentum-SGD state over a network's parameters.
#[derive(Debug, Clone)]
pub struct SgdOptimizer {
    momentum: f64,
    weight_decay: f64,
    frame: Vec<LayerVelocity>,
    tail: Vec<LayerVelocity>,
}

impl SgdOptimizer {
    pub fn new(net: &SrNetwork, momentum: f64, weight_decay: f64) -> Self {
        let zeros = |l: &ConvLayer| LayerVelocity {
            weights: vec![0.0; l.weights.len()],
            bias: vec![0.0; l.bias.len()],
        };
        SgdOptimizer {
            momentum,
            weight_decay,
            frame: net.frame_layers.iter().map(zeros).collect(),
            tail: net.tail_layers.iter().map(zeros).collect(),
        }
    }

    /// Apply one update with the given learning rate.
    pub fn step(&mut self, net: &mut SrNetwork, grads: &NetGradients, lr: f64) {
        for ((layer, vel), g) in net
            .frame_layers
            .iter_mut()
            .zip(&mut self.frame)
            .zip(&grads.frame_layers)
        {
            update_layer(layer, vel, g, lr, self.momentum, self.weight_decay);
        }
        for ((layer, vel), g) in net
            .tail_layers
            .iter_mut()
            .zip(&mut self.tail)
            .zip(&grads.tail_layers)
        {
            update_layer(layer, vel, g, lr, self.momentum, self.weight_decay);
        }
    }
}

/// The scalar update rule, exposed so its recurrence can be checked
/// directly: `v <- mu v - lr (g + wd p); p <- p + v`.
#[inline]
pub fn sgd_scalar_step(p: &mut f32, v: &mut f64, g: f64, lr: f64, momentum: f64, wd: f64) {
    *v = momentum * *v - lr * (g + wd * f64::from(*p));
    *p = (f64::from(*p) + *v) as f32;
}

fn update_layer(
    layer: &mut ConvLayer,
    vel: &mut LayerVelocity,
    grads: &LayerGradients,
    lr: f64,
    momentum: f64,
    wd: f64,
) {
    for ((p, v), &g) in layer
        .weights
        .iter_mut()
        .zip(&mut vel.weights)
        .zip(&grads.d_weights)
    {
        sgd_scalar_step(p, v, g, lr, momentum, wd);
    }
    for ((p, v), &g) in layer.bias.iter_mut().zip(&mut vel.bias).zip(&grads.d_bias) {
        sgd_scalar_step(p, v, g, lr, momentum, wd);
    }
}

// Crop the target so it matches the estimate produced from `stack` cropped
// at (ox, oy) with the given input size.
fn target_window(
    sample: &TrainSample,
    border: usize,
    ox: usize,
    oy: usize,
    est_w: usize,
    est_h: usize,
) -> Result<Plane> {
    sample.target.crop(ox + border, oy + border, est_w, est_h)
}

/// Train a network in place, returning the loss trace.
///
/// Each iteration draws `batch_size` examples (with replacement) from the
/// dataset, averages their gradients and applies one SGD step. A non-finite
/// batch loss aborts with a diagnostic. A fixed `(seed, config, thread
/// count)` triple reproduces the parameter trajectory bit-exactly.
pub fn train(
    net: &mut SrNetwork,
    dataset: &[TrainSample],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<TraceRow>> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let shrink = net.shrinkage();
    let border = net.border();
    for (i, s) in dataset.iter().enumerate() {
        if s.stack.image.dims() != s.target.dims() {
            return Err(Error::DimensionMismatch(format!(
                "sample {i}: stack {}x{} vs target {}x{}",
                s.stack.image.width(),
                s.stack.image.height(),
                s.target.width(),
                s.target.height()
            )));
        }
        if s.stack.image.channel_count() != net.config().input_channels() {
            return Err(Error::DimensionMismatch(format!(
                "sample {i}: {} channels, network expects {}",
                s.stack.image.channel_count(),
                net.config().input_channels()
            )));
        }
        if let InputMode::Patch { size } = cfg.input_mode {
            if size <= shrink || size > s.stack.image.width() || size > s.stack.image.height() {
                return Err(Error::InvalidParameter(format!(
                    "patch size {size} incompatible with sample {i} ({}x{}) and shrinkage {shrink}",
                    s.stack.image.width(),
                    s.stack.image.height()
                )));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = SgdOptimizer::new(net, cfg.momentum, cfg.weight_decay);
    let mut trace = Vec::new();

    for iter in 1..=cfg.iterations {
        let lr = learning_rate_at(cfg, iter);
        let mut batch_grads = NetGradients::zeros_like(net);
        let mut batch_loss = 0.0;
        let inv_batch = 1.0 / cfg.batch_size as f64;

        for _ in 0..cfg.batch_size {
            let sample = &dataset[rng.gen_range(0..dataset.len())];
            let (image, ox, oy) = match cfg.input_mode {
                InputMode::Image => (sample.stack.image.clone(), 0, 0),
                InputMode::Patch { size } => {
                    let (w, h) = sample.stack.image.dims();
                    let ox = rng.gen_range(0..=w - size);
                    let oy = rng.gen_range(0..=h - size);
                    (sample.stack.image.crop(ox, oy, size, size)?, ox, oy)
                }
            };
            let (estimate, trace_fwd) = net.forward_traced(&image)?;
            let (ew, eh) = estimate.dims();
            let target = target_window(sample, border, ox, oy, ew, eh)?;
            let loss = mse_loss(&estimate, &target, 0)?;
            batch_loss += loss.loss * inv_batch;
            let grads = net.backward(&trace_fwd, &loss.d_estimate)?;
            batch_grads.accumulate(&grads, inv_batch);
        }

        if !batch_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: iter,
                loss: batch_loss,
            });
        }
        opt.step(net, &batch_grads, lr);

        if iter == 1 || iter % cfg.log_every == 0 || iter == cfg.iterations {
            trace.push(TraceRow {
                iteration: iter,
                lr,
                loss: batch_loss,
            });
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcops::StackMode;
    use crate::srnet::{Activation, LayerSpec, NetConfig};
    use crate::tensor::MultiChannelImage;

    fn small_net(seed: u64) -> SrNetwork {
        SrNetwork::new(
            NetConfig {
                frames: 3,
                channels_per_frame: 1,
                shared_first_layer: false,
                init_std: 0.1,
                first_layer: LayerSpec::new(2, 3, Activation::Relu),
                tail_layers: vec![LayerSpec::new(1, 3, Activation::Linear)],
            },
            seed,
        )
        .unwrap()
    }

    fn dataset(n: usize) -> Vec<TrainSample> {
        (0..n)
            .map(|i| {
                let planes: Vec<Plane> = (0..3)
                    .map(|c| {
                        Plane::from_fn(16, 16, |x, y| {
                            0.1 * ((x * (c + 1) + y + i) % 7) as f64
                        })
                    })
                    .collect();
                let target = planes[1].map(|v| v * 0.9 + 0.01);
                TrainSample {
                    stack: CompensatedStack {
                        image: MultiChannelImage::from_channels(planes).unwrap(),
                        mode: StackMode::NoWarp,
                        channels_per_frame: 1,
                    },
                    target,
                }
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut net = small_net(7);
        let before = net.clone();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 2,
            lr_policy: LrPolicy::Fixed,
            iterations: 10,
            input_mode: InputMode::Image,
            log_every: 5,
        };
        train(&mut net, &dataset(2), &cfg, 3).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let mut net = small_net(7);
        let cfg = TrainConfig {
            iterations: 1,
            ..TrainConfig::image_defaults()
        };
        assert!(matches!(
            train(&mut net, &[], &cfg, 0),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 2,
            lr_policy: LrPolicy::Fixed,
            iterations: 25,
            input_mode: InputMode::Patch { size: 12 },
            log_every: 5,
        };
        let data = dataset(3);
        let mut a = small_net(1);
        let trace_a = train(&mut a, &data, &cfg, 99).unwrap();
        let mut b = small_net(1);
        let trace_b = train(&mut b, &data, &cfg, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(trace_a, trace_b);
        let mut c = small_net(1);
        let trace_c = train(&mut c, &data, &cfg, 100).unwrap();
        assert_ne!(trace_a, trace_c);
    }

    #[test]
    fn multistep_schedule_halves_exactly() {
        let cfg = TrainConfig {
            learning_rate: 8e-3,
            lr_policy: LrPolicy::Multistep {
                gamma: 0.5,
                step: 50,
            },
            ..TrainConfig::image_defaults()
        };
        assert_eq!(learning_rate_at(&cfg, 1), 8e-3);
        assert_eq!(learning_rate_at(&cfg, 50), 8e-3);
        assert_eq!(learning_rate_at(&cfg, 51), 4e-3);
        assert_eq!(learning_rate_at(&cfg, 100), 4e-3);
        assert_eq!(learning_rate_at(&cfg, 101), 2e-3);
        assert_eq!(learning_rate_at(&cfg, 151), 1e-3);
    }

    #[test]
    fn scalar_momentum_recurrence() {
        // Quadratic loss L = 0.5 c p^2 with dyadic constants: the f32
        // quantization is exact, so the hand recurrence matches bit for bit.
        let (c, lr, mu) = (0.5, 0.125, 0.5);
        let mut p: f32 = 1.0;
        let mut v: f64 = 0.0;
        let mut p_ref: f64 = 1.0;
        let mut v_ref: f64 = 0.0;
        for _ in 0..20 {
            sgd_scalar_step(&mut p, &mut v, c * f64::from(p), lr, mu, 0.0);
            v_ref = mu * v_ref - lr * (c * p_ref);
            p_ref += v_ref;
            assert_eq!(f64::from(p), p_ref);
        }
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut cfg = TrainConfig::image_defaults();
        cfg.batch_size = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::image_defaults();
        cfg.lr_policy = LrPolicy::Multistep { gamma: 1.5, step: 10 };
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::patch_defaults();
        cfg.learning_rate = f64::NAN;
        assert!(cfg.validate().is_err());
        assert!(TrainConfig::patch_defaults().validate().is_ok());
    }

    #[test]
    fn paper_default_settings() {
        let patch = TrainConfig::patch_defaults();
        assert_eq!(patch.learning_rate, 1e-5);
        assert_eq!(patch.momentum, 0.9);
        assert_eq!(patch.weight_decay, 5e-4);
        assert_eq!(patch.batch_size, 240);
        assert_eq!(patch.lr_policy, LrPolicy::Fixed);
        assert_eq!(patch.iterations, 200_000);
        assert_eq!(patch.input_mode, InputMode::Patch { size: 36 });

        let image = TrainConfig::image_defaults();
        assert_eq!(image.weight_decay, 4e-4);
        assert_eq!(image.batch_size, 2);
        assert_eq!(
            image.lr_policy,
            LrPolicy::Multistep {
                gamma: 0.5,
                step: 50_000
            }
        );
        assert_eq!(image.iterations, 300_000);
        assert_eq!(image.input_mode, InputMode::Image);
    }

    #[test]
    fn patch_mode_draws_are_in_bounds_and_loss_decreases() {
        let mut net = small_net(5);
        let cfg = TrainConfig {
            learning_rate: 5e-3,
            momentum: 0.9,
            weight_decay: 0.0,
            batch_size: 4,
            lr_policy: LrPolicy::Fixed,
            iterations: 200,
            input_mode: InputMode::Patch { size: 10 },
            log_every: 200,
        };
        let trace = train(&mut net, &dataset(4), &cfg, 11).unwrap();
        let first = trace.first().unwrap().loss;
        let last = trace.last().unwrap().loss;
        assert!(last < first, "loss {first} -> {last}");
    }
}
