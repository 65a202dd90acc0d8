//! Classical interpolation: bicubic up/downsampling and bilinear backward
//! warping with analytic gradients.
//!
//! These implement the conventional "upsample, then warp" baseline. Both
//! resamplers follow the same half-pixel grid alignment as the joint
//! operators in [`crate::mcops`], so a zero-flow pipeline stays consistent
//! across all paths.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{FlowField, Plane};

/// Keys cubic convolution kernel.
///
/// `a` is the sharpness parameter; the default `-0.5` is the common choice
/// for image resampling. Any `a` keeps the partition-of-unity property
/// (weights over a sample position sum to 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BicubicKernel {
    a: f64,
}

impl Default for BicubicKernel {
    fn default() -> Self {
        BicubicKernel { a: -0.5 }
    }
}

impl BicubicKernel {
    pub fn new(a: f64) -> Self {
        BicubicKernel { a }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// Kernel weight at offset `t`; support is `|t| < 2`.
    #[inline]
    pub fn weight(&self, t: f64) -> f64 {
        let a = self.a;
        let t = t.abs();
        if t < 1.0 {
            ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0
        } else if t < 2.0 {
            ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a
        } else {
            0.0
        }
    }

    /// The four tap weights around continuous coordinate `s`, together with
    /// the integer index of the first tap.
    #[inline]
    fn taps(&self, s: f64) -> (i64, [f64; 4]) {
        let base = s.floor() as i64 - 1;
        let f = s - s.floor();
        (
            base,
            [
                self.weight(1.0 + f),
                self.weight(f),
                self.weight(1.0 - f),
                self.weight(2.0 - f),
            ],
        )
    }
}

/// Gradients of a warp with respect to its inputs.
#[derive(Debug, Clone)]
pub struct WarpGradients {
    /// d loss / d source-image, same dims as the source image.
    pub d_image: Plane,
    /// d loss / d flow, same dims as the flow.
    pub d_flow: FlowField,
}

// One resampling pass along x: maps a row of length `src_len` to `dst_len`
// where each destination index has precomputed taps.
struct TapTable {
    // (first source index, weights) per destination index
    taps: Vec<(i64, Vec<f64>)>,
}

impl TapTable {
    // Destination pixel i samples source coordinate (i + 0.5) / alpha - 0.5
    // with the unit-spaced kernel: the upsampling alignment.
    fn upsample(kernel: &BicubicKernel, dst_len: usize, alpha: u32) -> Self {
        let a = f64::from(alpha);
        let taps = (0..dst_len)
            .map(|i| {
                let s = (i as f64 + 0.5) / a - 0.5;
                let (base, w) = kernel.taps(s);
                (base, w.to_vec())
            })
            .collect();
        TapTable { taps }
    }

    // Destination pixel i samples source coordinate alpha * (i + 0.5) - 0.5
    // with the alpha-widened kernel w(t / alpha) / alpha: low-pass then
    // decimate in a single gather.
    fn downsample(kernel: &BicubicKernel, dst_len: usize, alpha: u32) -> Self {
        let a = f64::from(alpha);
        let taps = (0..dst_len)
            .map(|i| {
                let s = a * (i as f64 + 0.5) - 0.5;
                let first = (s - 2.0 * a).floor() as i64 + 1;
                let last = (s + 2.0 * a).ceil() as i64 - 1;
                let w = (first..=last)
                    .map(|j| kernel.weight((j as f64 - s) / a) / a)
                    .collect();
                (first, w)
            })
            .collect();
        TapTable { taps }
    }
}

// Apply a horizontal tap table to every row (edge-clamped), producing a
// plane of width `table.taps.len()`.
fn apply_horizontal(img: &Plane, table: &TapTable) -> Plane {
    let (w, h) = img.dims();
    let out_w = table.taps.len();
    let mut out = Plane::new(out_w, h);
    out.as_mut_slice()
        .par_chunks_mut(out_w)
        .enumerate()
        .for_each(|(y, row)| {
            let src = img.row(y);
            for (i, (base, weights)) in table.taps.iter().enumerate() {
                let mut acc = 0.0;
                for (k, &wt) in weights.iter().enumerate() {
                    let j = (base + k as i64).clamp(0, w as i64 - 1) as usize;
                    acc += wt * src[j];
                }
                row[i] = acc;
            }
        });
    out
}

// Same along y, by transposing the access pattern.
fn apply_vertical(img: &Plane, table: &TapTable) -> Plane {
    let (w, h) = img.dims();
    let out_h = table.taps.len();
    let mut out = Plane::new(w, out_h);
    out.as_mut_slice()
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(i, row)| {
            let (base, weights) = &table.taps[i];
            for x in 0..w {
                let mut acc = 0.0;
                for (k, &wt) in weights.iter().enumerate() {
                    let j = (base + k as i64).clamp(0, h as i64 - 1) as usize;
                    acc += wt * img.get(x, j);
                }
                row[x] = acc;
            }
        });
    out
}

/// Bicubic upsampling by an integer factor with the default Keys kernel.
///
/// Output dims are `alpha` times the input dims; sampling positions follow
/// the same half-pixel grid alignment as the joint warping operators.
/// Boundaries are edge-clamped. `alpha == 1` returns a bit-identical copy.
pub fn bicubic_upsample(img: &Plane, alpha: u32) -> Result<Plane> {
    bicubic_upsample_with(img, alpha, &BicubicKernel::default())
}

/// [`bicubic_upsample`] with an explicit kernel.
pub fn bicubic_upsample_with(img: &Plane, alpha: u32, kernel: &BicubicKernel) -> Result<Plane> {
    if alpha == 0 {
        return Err(Error::InvalidParameter("scale factor must be >= 1".into()));
    }
    if alpha == 1 {
        return Ok(img.clone());
    }
    let (w, h) = img.dims();
    let tx = TapTable::upsample(kernel, w * alpha as usize, alpha);
    let ty = TapTable::upsample(kernel, h * alpha as usize, alpha);
    Ok(apply_vertical(&apply_horizontal(img, &tx), &ty))
}

/// Bicubic downsampling by an integer factor (input dims must be divisible).
///
/// Implemented as convolution with the `alpha`-widened kernel followed by
/// decimation on the aligned grid; preserves constants exactly up to
/// rounding. `alpha == 1` returns a bit-identical copy.
pub fn bicubic_downsample(img: &Plane, alpha: u32) -> Result<Plane> {
    bicubic_downsample_with(img, alpha, &BicubicKernel::default())
}

/// [`bicubic_downsample`] with an explicit kernel.
pub fn bicubic_downsample_with(img: &Plane, alpha: u32, kernel: &BicubicKernel) -> Result<Plane> {
    if alpha == 0 {
        return Err(Error::InvalidParameter("scale factor must be >= 1".into()));
    }
    if alpha == 1 {
        return Ok(img.clone());
    }
    let (w, h) = img.dims();
    let a = alpha as usize;
    if w % a != 0 || h % a != 0 {
        return Err(Error::DimensionMismatch(format!(
            "{w}x{h} image not divisible by scale {a}"
        )));
    }
    let tx = TapTable::downsample(kernel, w / a, alpha);
    let ty = TapTable::downsample(kernel, h / a, alpha);
    Ok(apply_vertical(&apply_horizontal(img, &tx), &ty))
}

// Support classification for one bilinear sample at continuous coordinate s
// along an axis of length `len`: fully outside when the whole 2-tap support
// lies off the plane.
#[inline]
fn support_outside(s: f64, len: usize) -> bool {
    let i0 = s.floor();
    i0 < -1.0 || i0 >= len as f64
}

/// Bilinear backward warp at a single resolution.
///
/// `out(p) = img sampled at (x + u(p), y + v(p))`. Samples whose 2x2 support
/// falls fully outside the image yield 0 with `mask = 0`; partial support is
/// edge-clamped and `mask = 1`.
pub fn backward_warp_bilinear(img: &Plane, flow: &FlowField) -> Result<(Plane, Plane)> {
    if img.dims() != flow.dims() {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{} vs flow {}x{}",
            img.width(),
            img.height(),
            flow.width(),
            flow.height()
        )));
    }
    let (w, h) = img.dims();
    let mut out = Plane::new(w, h);
    let mut mask = Plane::new(w, h);
    let rows: Vec<(usize, &mut [f64], &mut [f64])> = out
        .as_mut_slice()
        .chunks_mut(w)
        .zip(mask.as_mut_slice().chunks_mut(w))
        .enumerate()
        .map(|(y, (o, m))| (y, o, m))
        .collect();
    rows.into_par_iter().for_each(|(y, orow, mrow)| {
        for x in 0..w {
            let (u, v) = flow.get(x, y);
            let sx = x as f64 + u;
            let sy = y as f64 + v;
            if support_outside(sx, w) || support_outside(sy, h) {
                orow[x] = 0.0;
                mrow[x] = 0.0;
                continue;
            }
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let x0 = x0 as i64;
            let y0 = y0 as i64;
            let v00 = img.get_clamped(x0, y0);
            let v10 = img.get_clamped(x0 + 1, y0);
            let v01 = img.get_clamped(x0, y0 + 1);
            let v11 = img.get_clamped(x0 + 1, y0 + 1);
            orow[x] = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10)
                + fy * ((1.0 - fx) * v01 + fx * v11);
            mrow[x] = 1.0;
        }
    });
    Ok((out, mask))
}

/// Analytic gradients of [`backward_warp_bilinear`].
///
/// `d_image` is the exact adjoint of the bilinear gather (weights scattered
/// into the edge-clamped sample locations). `d_flow` differentiates the
/// sampled value with respect to the sample coordinate; at exact lattice
/// points the floor-based weights give the right/down one-sided derivative.
pub fn backward_warp_bilinear_grad(
    img: &Plane,
    flow: &FlowField,
    upstream: &Plane,
) -> Result<WarpGradients> {
    if img.dims() != flow.dims() || img.dims() != upstream.dims() {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{}, flow {}x{}, upstream {}x{}",
            img.width(),
            img.height(),
            flow.width(),
            flow.height(),
            upstream.width(),
            upstream.height()
        )));
    }
    let (w, h) = img.dims();
    let mut d_image = Plane::new(w, h);
    let mut d_u = Plane::new(w, h);
    let mut d_v = Plane::new(w, h);
    // Scatter into d_image must stay sequential for deterministic
    // accumulation; the per-pixel flow gradient rides along.
    for y in 0..h {
        for x in 0..w {
            let g = upstream.get(x, y);
            let (u, v) = flow.get(x, y);
            let sx = x as f64 + u;
            let sy = y as f64 + v;
            if support_outside(sx, w) || support_outside(sy, h) {
                continue;
            }
            let x0f = sx.floor();
            let y0f = sy.floor();
            let fx = sx - x0f;
            let fy = sy - y0f;
            let x0 = x0f as i64;
            let y0 = y0f as i64;
            let xc0 = x0.clamp(0, w as i64 - 1) as usize;
            let xc1 = (x0 + 1).clamp(0, w as i64 - 1) as usize;
            let yc0 = y0.clamp(0, h as i64 - 1) as usize;
            let yc1 = (y0 + 1).clamp(0, h as i64 - 1) as usize;

            let v00 = img.get(xc0, yc0);
            let v10 = img.get(xc1, yc0);
            let v01 = img.get(xc0, yc1);
            let v11 = img.get(xc1, yc1);

            d_image.set(xc0, yc0, d_image.get(xc0, yc0) + g * (1.0 - fx) * (1.0 - fy));
            d_image.set(xc1, yc0, d_image.get(xc1, yc0) + g * fx * (1.0 - fy));
            d_image.set(xc0, yc1, d_image.get(xc0, yc1) + g * (1.0 - fx) * fy);
            d_image.set(xc1, yc1, d_image.get(xc1, yc1) + g * fx * fy);

            d_u.set(x, y, g * ((1.0 - fy) * (v10 - v00) + fy * (v11 - v01)));
            d_v.set(x, y, g * ((1.0 - fx) * (v01 - v00) + fx * (v11 - v10)));
        }
    }
    Ok(WarpGradients {
        d_image,
        d_flow: FlowField::new(d_u, d_v)?,
    })
}
