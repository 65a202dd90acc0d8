//! End-to-end experiment helpers: triplet -> compensated stack -> network
//! estimate -> Y-channel PSNR against the HR target.

use crate::error::Result;
use crate::mcops::{stack_compensated, StackMode};
use crate::metrics::psnr_y_planes;
use crate::srnet::{SrNetwork, TrainSample};
use crate::tensor::{GridGeometry, Plane};

/// A triplet with its HR ground truth.
#[derive(Debug, Clone)]
pub struct EvalItem {
    pub triplet: crate::mcops::FrameTriplet,
    pub target: Plane,
}

/// The network estimate together with its placement inside the HR frame.
#[derive(Debug, Clone)]
pub struct SrEstimate {
    pub estimate: Plane,
    /// Offset of the estimate's top-left pixel in HR frame coordinates
    /// (the valid-convolution border).
    pub border: usize,
}

/// Compensate one triplet and run the network.
pub fn super_resolve(
    net: &SrNetwork,
    triplet: &crate::mcops::FrameTriplet,
    mode: StackMode,
    geom: GridGeometry,
) -> Result<SrEstimate> {
    let stack = stack_compensated(triplet, mode, geom)?;
    let estimate = net.forward(&stack)?;
    Ok(SrEstimate {
        estimate,
        border: net.border(),
    })
}

/// PSNR of an estimate against the full HR target.
///
/// The comparison region is the frame interior cropped by
/// `max(eval_crop, border)` on every side, so the conventional boundary
/// crop subsumes the network's own shrinkage.
pub fn psnr_against_target(sr: &SrEstimate, target: &Plane, eval_crop: usize) -> Result<f64> {
    let crop = eval_crop.max(sr.border);
    let extra = crop - sr.border;
    let est = sr.estimate.crop_border(extra)?;
    let (w, h) = est.dims();
    let tgt = target.crop(crop, crop, w, h)?;
    psnr_y_planes(&est, &tgt, 0)
}

/// Per-item and mean PSNR of one mode over a dataset.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub mode: StackMode,
    pub per_item: Vec<f64>,
    pub mean: f64,
}

/// Evaluate a trained network over a set of triplets.
pub fn evaluate(
    net: &SrNetwork,
    items: &[EvalItem],
    mode: StackMode,
    geom: GridGeometry,
    eval_crop: usize,
) -> Result<EvalReport> {
    let mut per_item = Vec::with_capacity(items.len());
    for item in items {
        let sr = super_resolve(net, &item.triplet, mode, geom)?;
        per_item.push(psnr_against_target(&sr, &item.target, eval_crop)?);
    }
    let mean = per_item.iter().sum::<f64>() / per_item.len().max(1) as f64;
    Ok(EvalReport {
        mode,
        per_item,
        mean,
    })
}

/// Build training samples (stack + HR target) for a mode.
pub fn build_training_set(
    items: &[EvalItem],
    mode: StackMode,
    geom: GridGeometry,
) -> Result<Vec<TrainSample>> {
    items
        .iter()
        .map(|item| {
            Ok(TrainSample {
                stack: stack_compensated(&item.triplet, mode, geom)?,
                target: item.target.clone(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::synth::{procedural_base, synthesize_triplet, SyntheticSceneSpec};
    use crate::srnet::{Activation, LayerSpec, NetConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn items(n: usize, alpha: u32) -> Vec<EvalItem> {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        (0..n)
            .map(|_| {
                let spec = SyntheticSceneSpec {
                    base: procedural_base(40, 40, &mut rng),
                    translations: [(2.0, 0.0), (0.0, 0.0), (-2.0, 0.0)],
                    alpha,
                    noise_sigma: 0.0,
                };
                let out = synthesize_triplet(&spec, &mut rng).unwrap();
                EvalItem {
                    triplet: out.triplet,
                    target: out.target,
                }
            })
            .collect()
    }

    #[test]
    fn evaluate_produces_finite_psnrs() {
        let net = SrNetwork::new(
            NetConfig {
                frames: 3,
                channels_per_frame: 3,
                shared_first_layer: false,
                init_std: 0.05,
                first_layer: LayerSpec::new(2, 3, Activation::Relu),
                tail_layers: vec![LayerSpec::new(1, 3, Activation::Linear)],
            },
            4,
        )
        .unwrap();
        let geom = GridGeometry::new(4).unwrap();
        let report = evaluate(&net, &items(2, 4), StackMode::Jubw, geom, 12).unwrap();
        assert_eq!(report.per_item.len(), 2);
        assert!(report.per_item.iter().all(|p| p.is_finite()));
    }

    #[test]
    fn training_set_matches_mode_channels() {
        let geom = GridGeometry::new(4).unwrap();
        let set = build_training_set(&items(1, 4), StackMode::Jubw, geom).unwrap();
        assert_eq!(set[0].stack.channel_count(), 9);
        assert_eq!(set[0].stack.image.dims(), set[0].target.dims());
        let set = build_training_set(&items(1, 4), StackMode::OnlyCenter, geom).unwrap();
        assert_eq!(set[0].stack.channel_count(), 3);
    }
}
