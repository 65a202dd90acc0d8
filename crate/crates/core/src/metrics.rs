//! Color conversion and the PSNR evaluation protocol.
//!
//! PSNR is computed on the Y channel (BT.601 full-range) after cropping a
//! boundary band from both images; estimator outputs are conventionally
//! cropped by 12 pixels.

use crate::error::{Error, Result};
use crate::tensor::{MultiChannelImage, Plane};

/// Default boundary crop (in pixels) applied to network outputs.
pub const DEFAULT_EVAL_CROP: usize = 12;

/// Y/Cb/Cr planes, nominal range [0, 1] with chroma offset 0.5.
#[derive(Debug, Clone)]
pub struct YcbcrImage {
    pub y: Plane,
    pub cb: Plane,
    pub cr: Plane,
}

/// BT.601 full-range RGB -> YCbCr. Expects exactly 3 channels (R, G, B).
pub fn rgb_to_ycbcr(img: &MultiChannelImage) -> Result<YcbcrImage> {
    if img.channel_count() != 3 {
        return Err(Error::DimensionMismatch(format!(
            "YCbCr conversion needs 3 channels, got {}",
            img.channel_count()
        )));
    }
    let (w, h) = img.dims();
    let (r, g, b) = (img.channel(0), img.channel(1), img.channel(2));
    let mut y = Plane::new(w, h);
    let mut cb = Plane::new(w, h);
    let mut cr = Plane::new(w, h);
    for i in 0..w * h {
        let (rv, gv, bv) = (r.as_slice()[i], g.as_slice()[i], b.as_slice()[i]);
        y.as_mut_slice()[i] = 0.299 * rv + 0.587 * gv + 0.114 * bv;
        cb.as_mut_slice()[i] = 0.5 - 0.168736 * rv - 0.331264 * gv + 0.5 * bv;
        cr.as_mut_slice()[i] = 0.5 + 0.5 * rv - 0.418688 * gv - 0.081312 * bv;
    }
    Ok(YcbcrImage { y, cb, cr })
}

/// Extract the luma plane: 1-channel images pass through, 3-channel images
/// go through [`rgb_to_ycbcr`].
pub fn luma(img: &MultiChannelImage) -> Result<Plane> {
    match img.channel_count() {
        1 => Ok(img.channel(0).clone()),
        3 => Ok(rgb_to_ycbcr(img)?.y),
        n => Err(Error::DimensionMismatch(format!(
            "luma needs 1 or 3 channels, got {n}"
        ))),
    }
}

/// Mean squared error between two equally-sized planes after cropping
/// `border` pixels on every side.
pub fn mse_cropped(a: &Plane, b: &Plane, border: usize) -> Result<f64> {
    if !a.same_dims(b) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let (w, h) = a.dims();
    if 2 * border >= w || 2 * border >= h {
        return Err(Error::InvalidParameter(format!(
            "border crop {border} leaves no pixels of a {w}x{h} image"
        )));
    }
    let mut acc = 0.0;
    for y in border..h - border {
        for x in border..w - border {
            let d = a.get(x, y) - b.get(x, y);
            acc += d * d;
        }
    }
    Ok(acc / ((w - 2 * border) * (h - 2 * border)) as f64)
}

/// PSNR in decibels on the Y channel: `10 log10(1 / MSE)` over the cropped
/// region, with peak 1.0 on normalized data. Identical inputs give
/// `f64::INFINITY`.
pub fn psnr_y(
    estimate: &MultiChannelImage,
    reference: &MultiChannelImage,
    border_crop: usize,
) -> Result<f64> {
    psnr_y_planes(&luma(estimate)?, &luma(reference)?, border_crop)
}

/// [`psnr_y`] for planes that are already luma.
pub fn psnr_y_planes(estimate: &Plane, reference: &Plane, border_crop: usize) -> Result<f64> {
    let mse = mse_cropped(estimate, reference, border_crop)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// Format a PSNR value the way result tables print it: two decimals, `inf`
/// for the identical-image case.
pub fn format_db(psnr: f64) -> String {
    if psnr.is_infinite() {
        "inf".to_string()
    } else {
        format!("{psnr:.2}")
    }
}
