//! Joint upsampling + warping operators.
//!
//! Two ways to move a low-resolution frame onto the high-resolution grid of
//! a target frame in a single step:
//!
//! * [`jubw`] — backward gather with **no interpolation**: every HR pixel
//!   reads the nearest LR source pixel and additionally receives the
//!   sub-pixel x/y distances from the rounded source location, leaving the
//!   interpolation to the network.
//! * [`spmc_fw`] — forward splatting: every LR pixel is bilinearly splatted
//!   onto its continuous HR target position, colliding contributions are
//!   averaged by accumulated weight.
//!
//! [`stack_compensated`] assembles the per-frame outputs into the
//! channel-stacked network input for each ablation mode.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::resample::{backward_warp_bilinear, bicubic_upsample, WarpGradients};
use crate::tensor::{round_nearest, FlowField, GridGeometry, MultiChannelImage, Plane};

/// Output of [`jubw`]: all planes live on the HR grid.
#[derive(Debug, Clone)]
pub struct JubwOutput {
    /// Nearest-source gather of the LR image; 0 where invalid.
    pub warped: Plane,
    /// `round(x_s) - x_s` per pixel, in `[-0.5, 0.5]`; 0 where invalid.
    pub dist_x: Plane,
    /// `round(y_s) - y_s` per pixel, in `[-0.5, 0.5]`; 0 where invalid.
    pub dist_y: Plane,
    /// 1 where the rounded source lies inside the LR image, else 0.
    pub valid: Plane,
}

/// Output of [`spmc_fw`] on the HR grid.
#[derive(Debug, Clone)]
pub struct SpmcOutput {
    /// Weight-normalized splat accumulation; 0 where no source arrived.
    pub warped: Plane,
    /// Accumulated splat weights (>= 0); 0 marks holes.
    pub weight: Plane,
}

/// Upstream cotangents for [`jubw_grad`], one plane per forward output.
#[derive(Debug, Clone)]
pub struct JubwUpstream {
    pub d_warped: Plane,
    pub d_dist_x: Plane,
    pub d_dist_y: Plane,
}

/// Ordered (previous, center, next) LR frames plus the flows from the center
/// to each outer frame. Flows live on the **HR grid in HR pixel units**;
/// modes that need LR-grid flow derive it via [`flow_hr_to_lr`].
#[derive(Debug, Clone)]
pub struct FrameTriplet {
    pub prev: Plane,
    pub center: Plane,
    pub next: Plane,
    pub flow_to_prev: Option<FlowField>,
    pub flow_to_next: Option<FlowField>,
}

impl FrameTriplet {
    pub fn new(
        prev: Plane,
        center: Plane,
        next: Plane,
        flow_to_prev: Option<FlowField>,
        flow_to_next: Option<FlowField>,
    ) -> Result<Self> {
        if !prev.same_dims(&center) || !next.same_dims(&center) {
            return Err(Error::DimensionMismatch(
                "triplet frames must share dimensions".into(),
            ));
        }
        Ok(FrameTriplet {
            prev,
            center,
            next,
            flow_to_prev,
            flow_to_next,
        })
    }

    /// LR frame dimensions.
    pub fn dims(&self) -> (usize, usize) {
        self.center.dims()
    }
}

/// Motion-compensation mode of the network input stack, covering the
/// ablation grid: warped variants vs. temporal-information-free baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackMode {
    /// Duplicated bicubically upsampled center frame, zero flows.
    OnlyCenter,
    /// Bicubically upsampled frames, no alignment.
    NoWarp,
    /// Bicubic upsample then bilinear backward warp (the classical baseline).
    BackwardWarp,
    /// Joint upsampling and backward warping with distance channels.
    Jubw,
    /// As `Jubw` but distance channels zeroed; layout unchanged.
    JubwNoDist,
    /// Joint upsampling and forward splatting.
    SpmcFw,
}

impl StackMode {
    /// Channels contributed per frame slot.
    pub fn channels_per_frame(&self) -> usize {
        match self {
            StackMode::OnlyCenter | StackMode::NoWarp | StackMode::BackwardWarp => 1,
            StackMode::Jubw | StackMode::JubwNoDist => 3,
            StackMode::SpmcFw => 1,
        }
    }

    /// Does this mode consume the triplet's flow fields?
    pub fn needs_flow(&self) -> bool {
        matches!(
            self,
            StackMode::BackwardWarp | StackMode::Jubw | StackMode::JubwNoDist | StackMode::SpmcFw
        )
    }

    pub const ALL: [StackMode; 6] = [
        StackMode::OnlyCenter,
        StackMode::NoWarp,
        StackMode::BackwardWarp,
        StackMode::Jubw,
        StackMode::JubwNoDist,
        StackMode::SpmcFw,
    ];
}

impl fmt::Display for StackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StackMode::OnlyCenter => "only-center",
            StackMode::NoWarp => "no-warp",
            StackMode::BackwardWarp => "backward-warp",
            StackMode::Jubw => "jubw",
            StackMode::JubwNoDist => "jubw-no-dist",
            StackMode::SpmcFw => "spmc-fw",
        };
        f.write_str(s)
    }
}

impl FromStr for StackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "only-center" => Ok(StackMode::OnlyCenter),
            "no-warp" => Ok(StackMode::NoWarp),
            "backward-warp" => Ok(StackMode::BackwardWarp),
            "jubw" => Ok(StackMode::Jubw),
            "jubw-no-dist" => Ok(StackMode::JubwNoDist),
            "spmc-fw" => Ok(StackMode::SpmcFw),
            other => Err(Error::InvalidParameter(format!(
                "unknown stack mode `{other}` (expected one of only-center, no-warp, \
                 backward-warp, jubw, jubw-no-dist, spmc-fw)"
            ))),
        }
    }
}

/// Per-frame compensated images concatenated channel-wise in fixed order
/// `[prev..., center..., next...]`.
#[derive(Debug, Clone)]
pub struct CompensatedStack {
    pub image: MultiChannelImage,
    pub mode: StackMode,
    pub channels_per_frame: usize,
}

impl CompensatedStack {
    pub fn channel_count(&self) -> usize {
        self.image.channel_count()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }
}

fn check_jubw_dims(img: &Plane, flow: &FlowField, geom: GridGeometry) -> Result<()> {
    let hr = geom.hr_dims(img.dims());
    if flow.dims() != hr {
        return Err(Error::DimensionMismatch(format!(
            "flow {}x{} but scale {} of a {}x{} image needs {}x{}",
            flow.width(),
            flow.height(),
            geom.alpha(),
            img.width(),
            img.height(),
            hr.0,
            hr.1
        )));
    }
    Ok(())
}

/// Joint upsampling and backward warping.
///
/// For every HR pixel `p` the continuous LR source is
/// `x_s = (x + u(p) + 0.5) / alpha - 0.5` (same for y). If the rounded
/// source lies inside the LR image the output takes that pixel value —
/// no interpolation — plus the residual distances
/// `(round(x_s) - x_s, round(y_s) - y_s)`; otherwise all outputs are 0 and
/// the pixel is marked invalid.
pub fn jubw(img_lr: &Plane, flow_hr: &FlowField, geom: GridGeometry) -> Result<JubwOutput> {
    check_jubw_dims(img_lr, flow_hr, geom)?;
    let (lw, lh) = img_lr.dims();
    let (hw, hh) = flow_hr.dims();
    let mut warped = Plane::new(hw, hh);
    let mut dist_x = Plane::new(hw, hh);
    let mut dist_y = Plane::new(hw, hh);
    let mut valid = Plane::new(hw, hh);

    let rows: Vec<(usize, &mut [f64], &mut [f64], &mut [f64], &mut [f64])> = warped
        .as_mut_slice()
        .chunks_mut(hw)
        .zip(dist_x.as_mut_slice().chunks_mut(hw))
        .zip(dist_y.as_mut_slice().chunks_mut(hw))
        .zip(valid.as_mut_slice().chunks_mut(hw))
        .enumerate()
        .map(|(y, (((wr, dxr), dyr), vr))| (y, wr, dxr, dyr, vr))
        .collect();
    rows.into_par_iter().for_each(|(y, wr, dxr, dyr, vr)| {
        for x in 0..hw {
            let (u, v) = flow_hr.get(x, y);
            let (xs, ys) = geom.map_hr_to_lr(x as f64, y as f64, u, v);
            let xi = round_nearest(xs);
            let yi = round_nearest(ys);
            if xi >= 0 && xi < lw as i64 && yi >= 0 && yi < lh as i64 {
                wr[x] = img_lr.get(xi as usize, yi as usize);
                dxr[x] = xi as f64 - xs;
                dyr[x] = yi as f64 - ys;
                vr[x] = 1.0;
            }
        }
    });
    Ok(JubwOutput {
        warped,
        dist_x,
        dist_y,
        valid,
    })
}

/// Gradients of [`jubw`] with respect to the LR image and the HR flow.
///
/// The warped channel is a gather, so `d_image` is its exact adjoint: each
/// valid HR pixel's cotangent is added to the LR pixel it read. Rounding is
/// treated as locally constant, so the warped channel carries no flow
/// gradient and the distance channels contribute `-1/alpha` each.
pub fn jubw_grad(
    img_lr: &Plane,
    flow_hr: &FlowField,
    geom: GridGeometry,
    upstream: &JubwUpstream,
) -> Result<WarpGradients> {
    check_jubw_dims(img_lr, flow_hr, geom)?;
    let hr = flow_hr.dims();
    if upstream.d_warped.dims() != hr
        || upstream.d_dist_x.dims() != hr
        || upstream.d_dist_y.dims() != hr
    {
        return Err(Error::DimensionMismatch(
            "upstream planes must match the HR grid".into(),
        ));
    }
    let (lw, lh) = img_lr.dims();
    let (hw, hh) = hr;
    let inv_alpha = 1.0 / geom.alpha_f();
    let mut d_image = Plane::new(lw, lh);
    let mut d_u = Plane::new(hw, hh);
    let mut d_v = Plane::new(hw, hh);
    // Sequential: the d_image scatter must accumulate in a fixed order.
    for y in 0..hh {
        for x in 0..hw {
            let (u, v) = flow_hr.get(x, y);
            let (xs, ys) = geom.map_hr_to_lr(x as f64, y as f64, u, v);
            let xi = round_nearest(xs);
            let yi = round_nearest(ys);
            if xi >= 0 && xi < lw as i64 && yi >= 0 && yi < lh as i64 {
                let (xi, yi) = (xi as usize, yi as usize);
                d_image.set(xi, yi, d_image.get(xi, yi) + upstream.d_warped.get(x, y));
                d_u.set(x, y, -inv_alpha * upstream.d_dist_x.get(x, y));
                d_v.set(x, y, -inv_alpha * upstream.d_dist_y.get(x, y));
            }
        }
    }
    Ok(WarpGradients {
        d_image,
        d_flow: FlowField::new(d_u, d_v)?,
    })
}

/// Joint upsampling and forward (splatting) warping.
///
/// Each LR pixel `q` is mapped to the continuous HR position
/// `x = alpha * (x_q + u(q) + 0.5) - 0.5` (flow in LR pixel units) and its
/// value is bilinearly distributed over the four surrounding HR pixels.
/// Colliding contributions are averaged by accumulated weight; holes keep
/// weight 0 and value 0.
pub fn spmc_fw(img_lr: &Plane, flow_lr: &FlowField, geom: GridGeometry) -> Result<SpmcOutput> {
    if img_lr.dims() != flow_lr.dims() {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{} vs flow {}x{}",
            img_lr.width(),
            img_lr.height(),
            flow_lr.width(),
            flow_lr.height()
        )));
    }
    let (lw, lh) = img_lr.dims();
    let (hw, hh) = geom.hr_dims((lw, lh));
    let mut acc = Plane::new(hw, hh);
    let mut weight = Plane::new(hw, hh);
    // Scatter with collisions: sequential accumulation keeps runs bit-stable.
    for y in 0..lh {
        for x in 0..lw {
            let (u, v) = flow_lr.get(x, y);
            let hx = geom.map_lr_to_hr(x as f64, u);
            let hy = geom.map_lr_to_hr(y as f64, v);
            let x0f = hx.floor();
            let y0f = hy.floor();
            let fx = hx - x0f;
            let fy = hy - y0f;
            let x0 = x0f as i64;
            let y0 = y0f as i64;
            let value = img_lr.get(x, y);
            let mut splat = |tx: i64, ty: i64, w: f64| {
                if tx >= 0 && tx < hw as i64 && ty >= 0 && ty < hh as i64 {
                    let (tx, ty) = (tx as usize, ty as usize);
                    acc.set(tx, ty, acc.get(tx, ty) + w * value);
                    weight.set(tx, ty, weight.get(tx, ty) + w);
                }
            };
            splat(x0, y0, (1.0 - fx) * (1.0 - fy));
            splat(x0 + 1, y0, fx * (1.0 - fy));
            splat(x0, y0 + 1, (1.0 - fx) * fy);
            splat(x0 + 1, y0 + 1, fx * fy);
        }
    }
    let mut warped = Plane::new(hw, hh);
    for i in 0..hw * hh {
        let w = weight.as_slice()[i];
        if w > 0.0 {
            warped.as_mut_slice()[i] = acc.as_slice()[i] / w;
        }
    }
    Ok(SpmcOutput { warped, weight })
}

/// Resample an HR-grid flow (HR pixel units) onto the LR grid (LR pixel
/// units): each LR pixel bilinearly reads the flow at its aligned HR
/// position and divides by `alpha`.
pub fn flow_hr_to_lr(flow_hr: &FlowField, geom: GridGeometry) -> Result<FlowField> {
    let (lw, lh) = geom.lr_dims(flow_hr.dims())?;
    let a = geom.alpha_f();
    let sample = |plane: &Plane, x: usize, y: usize| -> f64 {
        let sx = geom.map_lr_to_hr(x as f64, 0.0);
        let sy = geom.map_lr_to_hr(y as f64, 0.0);
        let x0 = sx.floor();
        let y0 = sy.floor();
        let fx = sx - x0;
        let fy = sy - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        (1.0 - fy) * ((1.0 - fx) * plane.get_clamped(x0, y0) + fx * plane.get_clamped(x0 + 1, y0))
            + fy * ((1.0 - fx) * plane.get_clamped(x0, y0 + 1)
                + fx * plane.get_clamped(x0 + 1, y0 + 1))
    };
    let u = Plane::from_fn(lw, lh, |x, y| sample(flow_hr.u(), x, y) / a);
    let v = Plane::from_fn(lw, lh, |x, y| sample(flow_hr.v(), x, y) / a);
    FlowField::new(u, v)
}

fn require_flows<'a>(
    triplet: &'a FrameTriplet,
    mode: StackMode,
) -> Result<(&'a FlowField, &'a FlowField)> {
    match (&triplet.flow_to_prev, &triplet.flow_to_next) {
        (Some(p), Some(n)) => Ok((p, n)),
        _ => Err(Error::MissingFlow(mode.to_string())),
    }
}

/// Assemble the network input stack for a triplet under a compensation mode.
///
/// Channel layout is fixed: all channels of the previous frame slot, then
/// the center slot, then the next slot. The jubw modes contribute
/// `(warped, dist_x, dist_y)` per slot, with the center passed through the
/// same operator under zero flow so the channels stay homogeneous.
pub fn stack_compensated(
    triplet: &FrameTriplet,
    mode: StackMode,
    geom: GridGeometry,
) -> Result<CompensatedStack> {
    let lr_dims = triplet.dims();
    let (hw, hh) = geom.hr_dims(lr_dims);
    if mode.needs_flow() {
        let (fp, fn_) = require_flows(triplet, mode)?;
        if fp.dims() != (hw, hh) || fn_.dims() != (hw, hh) {
            return Err(Error::DimensionMismatch(format!(
                "triplet flows must live on the {}x{} HR grid",
                hw, hh
            )));
        }
    }

    let channels = match mode {
        StackMode::OnlyCenter => {
            let up = bicubic_upsample(&triplet.center, geom.alpha())?;
            vec![up.clone(), up.clone(), up]
        }
        StackMode::NoWarp => vec![
            bicubic_upsample(&triplet.prev, geom.alpha())?,
            bicubic_upsample(&triplet.center, geom.alpha())?,
            bicubic_upsample(&triplet.next, geom.alpha())?,
        ],
        StackMode::BackwardWarp => {
            let (fp, fn_) = require_flows(triplet, mode)?;
            let (wp, _) = backward_warp_bilinear(&bicubic_upsample(&triplet.prev, geom.alpha())?, fp)?;
            let wc = bicubic_upsample(&triplet.center, geom.alpha())?;
            let (wn, _) = backward_warp_bilinear(&bicubic_upsample(&triplet.next, geom.alpha())?, fn_)?;
            vec![wp, wc, wn]
        }
        StackMode::Jubw | StackMode::JubwNoDist => {
            let (fp, fn_) = require_flows(triplet, mode)?;
            let zero = FlowField::zeros(hw, hh);
            let mut channels = Vec::with_capacity(9);
            for (frame, flow) in [
                (&triplet.prev, fp),
                (&triplet.center, &zero),
                (&triplet.next, fn_),
            ] {
                let out = jubw(frame, flow, geom)?;
                channels.push(out.warped);
                if mode == StackMode::JubwNoDist {
                    channels.push(Plane::new(hw, hh));
                    channels.push(Plane::new(hw, hh));
                } else {
                    channels.push(out.dist_x);
                    channels.push(out.dist_y);
                }
            }
            channels
        }
        StackMode::SpmcFw => {
            let (fp, fn_) = require_flows(triplet, mode)?;
            let zero = FlowField::zeros(lr_dims.0, lr_dims.1);
            let mut channels = Vec::with_capacity(3);
            for (frame, flow_hr) in [
                (&triplet.prev, Some(fp)),
                (&triplet.center, None),
                (&triplet.next, Some(fn_)),
            ] {
                let flow_lr = match flow_hr {
                    Some(f) => flow_hr_to_lr(f, geom)?,
                    None => zero.clone(),
                };
                channels.push(spmc_fw(frame, &flow_lr, geom)?.warped);
            }
            channels
        }
    };

    Ok(CompensatedStack {
        image: MultiChannelImage::from_channels(channels)?,
        channels_per_frame: mode.channels_per_frame(),
        mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lr_ramp(w: usize, h: usize) -> Plane {
        Plane::from_fn(w, h, |x, y| (1 + x + w * y) as f64 * 0.05)
    }

    #[test]
    fn jubw_unit_scale_zero_flow_is_identity() {
        let img = lr_ramp(5, 4);
        let geom = GridGeometry::new(1).unwrap();
        let out = jubw(&img, &FlowField::zeros(5, 4), geom).unwrap();
        assert_eq!(out.warped, img);
        assert!(out.dist_x.as_slice().iter().all(|&d| d == 0.0));
        assert!(out.dist_y.as_slice().iter().all(|&d| d == 0.0));
        assert!(out.valid.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn jubw_zero_flow_alpha4_is_nearest_neighbor_with_block_distances() {
        let img = lr_ramp(3, 3);
        let geom = GridGeometry::new(4).unwrap();
        let out = jubw(&img, &FlowField::zeros(12, 12), geom).unwrap();
        // (0,0) samples LR (0,0) at distance +0.375 in both axes.
        assert_eq!(out.warped.get(0, 0), img.get(0, 0));
        assert_eq!(out.dist_x.get(0, 0), 0.375);
        assert_eq!(out.dist_y.get(0, 0), 0.375);
        let expected = [0.375, 0.125, -0.125, -0.375];
        for y in 0..12 {
            for x in 0..12 {
                assert_eq!(out.warped.get(x, y), img.get(x / 4, y / 4));
                assert_eq!(out.dist_x.get(x, y), expected[x % 4]);
                assert_eq!(out.dist_y.get(x, y), expected[y % 4]);
                assert_eq!(out.valid.get(x, y), 1.0);
            }
        }
    }

    #[test]
    fn jubw_integer_lr_shift_matches_shifted_zero_flow() {
        // u = +4 HR px with alpha = 4 shifts the source one LR pixel; the
        // last HR block has no source and must be invalid.
        let img = lr_ramp(4, 2);
        let geom = GridGeometry::new(4).unwrap();
        let zero = jubw(&img, &FlowField::zeros(16, 8), geom).unwrap();
        let flow = FlowField::constant(16, 8, 4.0, 0.0).unwrap();
        let out = jubw(&img, &flow, geom).unwrap();
        for y in 0..8 {
            for x in 0..16 {
                if x + 4 < 16 {
                    assert_eq!(out.warped.get(x, y), zero.warped.get(x + 4, y));
                    assert_eq!(out.dist_x.get(x, y), zero.dist_x.get(x + 4, y));
                    assert_eq!(out.valid.get(x, y), 1.0);
                } else {
                    assert_eq!(out.warped.get(x, y), 0.0);
                    assert_eq!(out.dist_x.get(x, y), 0.0);
                    assert_eq!(out.valid.get(x, y), 0.0);
                }
            }
        }
    }

    #[test]
    fn jubw_rejects_wrong_flow_dims() {
        let img = lr_ramp(4, 4);
        let geom = GridGeometry::new(4).unwrap();
        assert!(jubw(&img, &FlowField::zeros(15, 16), geom).is_err());
    }

    #[test]
    fn jubw_grad_distance_and_gather() {
        let img = lr_ramp(3, 3);
        let geom = GridGeometry::new(4).unwrap();
        let flow = FlowField::zeros(12, 12);
        let zero = Plane::new(12, 12);
        let mut d_dist_x = zero.clone();
        d_dist_x.set(5, 7, 1.0);
        let up = JubwUpstream {
            d_warped: zero.clone(),
            d_dist_x,
            d_dist_y: zero.clone(),
        };
        let g = jubw_grad(&img, &flow, geom, &up).unwrap();
        assert_eq!(g.d_flow.u().get(5, 7), -0.25);
        assert_eq!(g.d_flow.v().get(5, 7), 0.0);
        assert!(g.d_image.as_slice().iter().all(|&v| v == 0.0));

        let mut d_warped = zero.clone();
        // HR pixels (0..4, 0..4) all gather LR (0,0).
        d_warped.set(0, 0, 1.0);
        d_warped.set(3, 2, 2.0);
        let up = JubwUpstream {
            d_warped,
            d_dist_x: zero.clone(),
            d_dist_y: zero,
        };
        let g = jubw_grad(&img, &flow, geom, &up).unwrap();
        assert_eq!(g.d_image.get(0, 0), 3.0);
        assert!(g.d_flow.u().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spmc_unit_scale_zero_flow_is_identity() {
        let img = lr_ramp(4, 3);
        let geom = GridGeometry::new(1).unwrap();
        let out = spmc_fw(&img, &FlowField::zeros(4, 3), geom).unwrap();
        assert_eq!(out.warped, img);
        assert!(out.weight.as_slice().iter().all(|&w| w == 1.0));
    }

    #[test]
    fn spmc_zero_flow_alpha4_constant_fills_visited_sites() {
        let img = Plane::constant(3, 3, 0.6);
        let geom = GridGeometry::new(4).unwrap();
        let out = spmc_fw(&img, &FlowField::zeros(3, 3), geom).unwrap();
        // Each source lands at 4 q + 1.5: fractional, so it splits over the
        // four sites {1,2} x {1,2} within its block.
        let mut visited = 0;
        for i in 0..out.weight.as_slice().len() {
            let w = out.weight.as_slice()[i];
            if w > 0.0 {
                visited += 1;
                assert!((out.warped.as_slice()[i] - 0.6).abs() < 1e-12);
            } else {
                assert_eq!(out.warped.as_slice()[i], 0.0);
            }
        }
        assert_eq!(visited, 9 * 4);
    }

    #[test]
    fn spmc_collision_averages_by_weight() {
        // Two LR pixels splat onto the same integral HR site.
        let mut img = Plane::new(2, 1);
        img.set(0, 0, 1.0);
        img.set(1, 0, 3.0);
        let geom = GridGeometry::new(2).unwrap();
        // Source q = 0: HR x = 2 * (0 + u0 + 0.5) - 0.5 = 2 u0 + 0.5; pick
        // u0 = 0.75 -> 2.0. Source q = 1: 2 u1 + 2.5; pick u1 = -0.25 -> 2.0.
        // v = 0.25 makes HR y = 2 * 0.75 - 0.5 = 1.0 integral as well.
        let u = Plane::from_vec(2, 1, vec![0.75, -0.25]).unwrap();
        let v = Plane::constant(2, 1, 0.25);
        let flow = FlowField::new(u, v).unwrap();
        let out = spmc_fw(&img, &flow, geom).unwrap();
        assert!((out.weight.get(2, 1) - 2.0).abs() < 1e-12);
        assert!((out.warped.get(2, 1) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn spmc_weights_per_source_sum_to_one_inside() {
        let img = lr_ramp(4, 4);
        let geom = GridGeometry::new(4).unwrap();
        let flow = FlowField::constant(4, 4, 0.3, -0.2).unwrap();
        let out = spmc_fw(&img, &flow, geom).unwrap();
        let total: f64 = out.weight.as_slice().iter().sum();
        // All sources land fully inside here, so total weight = source count.
        assert!((total - 16.0).abs() < 1e-9);
    }

    #[test]
    fn flow_hr_to_lr_constant_is_exact() {
        let geom = GridGeometry::new(4).unwrap();
        let hr = FlowField::constant(16, 8, 6.0, -2.0).unwrap();
        let lr = flow_hr_to_lr(&hr, geom).unwrap();
        assert_eq!(lr.dims(), (4, 2));
        for y in 0..2 {
            for x in 0..4 {
                let (u, v) = lr.get(x, y);
                assert!((u - 1.5).abs() < 1e-12);
                assert!((v + 0.5).abs() < 1e-12);
            }
        }
    }

    fn triplet_with_flows(w: usize, h: usize, alpha: u32) -> FrameTriplet {
        let a = alpha as usize;
        FrameTriplet::new(
            lr_ramp(w, h),
            lr_ramp(w, h).map(|v| v + 1.0),
            lr_ramp(w, h).map(|v| v + 2.0),
            Some(FlowField::zeros(w * a, h * a)),
            Some(FlowField::zeros(w * a, h * a)),
        )
        .unwrap()
    }

    #[test]
    fn stack_only_center_duplicates_center() {
        let t = triplet_with_flows(3, 3, 4);
        let geom = GridGeometry::new(4).unwrap();
        let s = stack_compensated(&t, StackMode::OnlyCenter, geom).unwrap();
        assert_eq!(s.channel_count(), 3);
        assert_eq!(s.channels_per_frame, 1);
        assert_eq!(s.image.channel(0), s.image.channel(1));
        assert_eq!(s.image.channel(1), s.image.channel(2));
    }

    #[test]
    fn stack_channel_arithmetic() {
        let t = triplet_with_flows(3, 3, 4);
        let geom = GridGeometry::new(4).unwrap();
        assert_eq!(
            stack_compensated(&t, StackMode::Jubw, geom).unwrap().channel_count(),
            9
        );
        assert_eq!(
            stack_compensated(&t, StackMode::JubwNoDist, geom)
                .unwrap()
                .channel_count(),
            9
        );
        assert_eq!(
            stack_compensated(&t, StackMode::NoWarp, geom).unwrap().channel_count(),
            3
        );
        assert_eq!(
            stack_compensated(&t, StackMode::SpmcFw, geom).unwrap().channel_count(),
            3
        );
        let s = stack_compensated(&t, StackMode::Jubw, geom).unwrap();
        assert_eq!(s.dims(), (12, 12));
    }

    #[test]
    fn stack_jubw_no_dist_zeroes_distance_channels() {
        let t = triplet_with_flows(3, 3, 4);
        let geom = GridGeometry::new(4).unwrap();
        let with = stack_compensated(&t, StackMode::Jubw, geom).unwrap();
        let without = stack_compensated(&t, StackMode::JubwNoDist, geom).unwrap();
        for slot in 0..3 {
            assert_eq!(with.image.channel(slot * 3), without.image.channel(slot * 3));
            assert!(without.image.channel(slot * 3 + 1).as_slice().iter().all(|&v| v == 0.0));
            assert!(with.image.channel(1).as_slice().iter().any(|&v| v != 0.0));
        }
    }

    #[test]
    fn stack_missing_flow_errors() {
        let t = FrameTriplet::new(lr_ramp(3, 3), lr_ramp(3, 3), lr_ramp(3, 3), None, None).unwrap();
        let geom = GridGeometry::new(4).unwrap();
        assert!(matches!(
            stack_compensated(&t, StackMode::Jubw, geom),
            Err(Error::MissingFlow(_))
        ));
        assert!(stack_compensated(&t, StackMode::NoWarp, geom).is_ok());
    }

    #[test]
    fn mode_string_round_trip() {
        for mode in StackMode::ALL {
            assert_eq!(mode.to_string().parse::<StackMode>().unwrap(), mode);
        }
        assert!("nearest".parse::<StackMode>().is_err());
    }
}
