//! Synthetic frame triplets with ground-truth flow.
//!
//! A triplet is built from one HR base image: each frame is a globally
//! translated copy (bilinear shift), LR frames come from bicubic
//! downsampling, and the ground-truth flow from the center to a neighbor is
//! the constant negative relative translation on the HR grid. Gaussian
//! noise, when requested, is added to the LR frames only.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mcops::FrameTriplet;
use crate::resample::{backward_warp_bilinear, bicubic_downsample};
use crate::rng::standard_normal;
use crate::tensor::{FlowField, GridGeometry, Plane};

/// Recipe for one synthetic triplet.
#[derive(Debug, Clone)]
pub struct SyntheticSceneSpec {
    /// HR base image; dims must be divisible by `alpha`.
    pub base: Plane,
    /// Per-frame global translation (tx, ty) in HR pixels, ordered
    /// (previous, center, next). Frame k shows `base` shifted so that
    /// `frame(q) = base(q + t_k)`.
    pub translations: [(f64, f64); 3],
    pub alpha: u32,
    /// Standard deviation of the additive Gaussian noise on LR frames.
    pub noise_sigma: f64,
}

/// A synthesized triplet with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticTriplet {
    /// LR frames plus ground-truth HR flows (center to prev / next).
    pub triplet: FrameTriplet,
    /// The translated HR frames (previous, center, next), noise-free.
    pub hr_frames: [Plane; 3],
    /// Super-resolution target: the HR center frame.
    pub target: Plane,
}

fn shift_hr(base: &Plane, t: (f64, f64)) -> Result<Plane> {
    let (w, h) = base.dims();
    let flow = FlowField::constant(w, h, t.0, t.1)?;
    Ok(backward_warp_bilinear(base, &flow)?.0)
}

/// Build one triplet from a scene spec. The RNG is consumed only when
/// `noise_sigma > 0` (three LR frames' worth of draws, in frame order).
pub fn synthesize_triplet(
    spec: &SyntheticSceneSpec,
    rng: &mut impl Rng,
) -> Result<SyntheticTriplet> {
    let geom = GridGeometry::new(spec.alpha)?;
    let (w, h) = spec.base.dims();
    geom.lr_dims((w, h))?;
    if spec.noise_sigma < 0.0 {
        return Err(Error::InvalidParameter("noise sigma must be >= 0".into()));
    }
    for (tx, ty) in spec.translations {
        if tx.abs() >= w as f64 || ty.abs() >= h as f64 {
            return Err(Error::InvalidParameter(format!(
                "translation ({tx}, {ty}) exceeds the {w}x{h} image extent"
            )));
        }
    }

    let hr_frames = [
        shift_hr(&spec.base, spec.translations[0])?,
        shift_hr(&spec.base, spec.translations[1])?,
        shift_hr(&spec.base, spec.translations[2])?,
    ];

    let mut lr_frames = Vec::with_capacity(3);
    for hr in &hr_frames {
        let mut lr = bicubic_downsample(hr, spec.alpha)?;
        if spec.noise_sigma > 0.0 {
            for v in lr.as_mut_slice() {
                *v += spec.noise_sigma * standard_normal(rng);
            }
        }
        lr_frames.push(lr);
    }
    let lr_next = lr_frames.pop().unwrap();
    let lr_center = lr_frames.pop().unwrap();
    let lr_prev = lr_frames.pop().unwrap();

    // Backward-warping a neighbor onto the center geometry needs
    // flow = t_center - t_neighbor (constant across the grid).
    let (cx, cy) = spec.translations[1];
    let flow_to_prev = FlowField::constant(
        w,
        h,
        cx - spec.translations[0].0,
        cy - spec.translations[0].1,
    )?;
    let flow_to_next = FlowField::constant(
        w,
        h,
        cx - spec.translations[2].0,
        cy - spec.translations[2].1,
    )?;

    let target = hr_frames[1].clone();
    Ok(SyntheticTriplet {
        triplet: FrameTriplet::new(
            lr_prev,
            lr_center,
            lr_next,
            Some(flow_to_prev),
            Some(flow_to_next),
        )?,
        hr_frames,
        target,
    })
}

/// Band-limited random texture for synthetic scenes: a sum of oriented
/// sinusoidal gratings (frequencies up to ~0.35 cycles/pixel) normalized
/// into [0.1, 0.9]. High-frequency content is what makes the multi-frame
/// setting informative after downsampling.
pub fn procedural_base(width: usize, height: usize, rng: &mut impl Rng) -> Plane {
    const GRATINGS: usize = 8;
    let mut params = Vec::with_capacity(GRATINGS);
    for i in 0..GRATINGS {
        let freq = if i < 3 {
            rng.gen_range(0.02..0.10)
        } else {
            rng.gen_range(0.10..0.35)
        };
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let amplitude: f64 = rng.gen_range(0.3..1.0);
        params.push((
            std::f64::consts::TAU * freq * theta.cos(),
            std::f64::consts::TAU * freq * theta.sin(),
            phase,
            amplitude,
        ));
    }
    let raw = Plane::from_fn(width, height, |x, y| {
        params
            .iter()
            .map(|&(fx, fy, phase, amp)| amp * (fx * x as f64 + fy * y as f64 + phase).sin())
            .sum()
    });
    let peak = raw.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-9);
    raw.map(|v| 0.5 + 0.4 * v / peak)
}
