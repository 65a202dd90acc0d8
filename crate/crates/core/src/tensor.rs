//! Pixel grids, flow fields and the coordinate convention tying the
//! low-resolution and high-resolution grids together.
//!
//! The origin sits at the top left corner of the first pixel, so the center
//! of pixel `(x, y)` is at continuous coordinate `(x, y)` and the grids of
//! two resolutions are related through the half-pixel offset mapping in
//! [`GridGeometry::map_hr_to_lr`].

use crate::error::{Error, Result};

/// Dense 2D scalar grid, row-major. The universal pixel container: image
/// planes, distance channels, feature maps, masks.
///
/// Values are `f64`; 8-bit image data is mapped to `[0, 1]` on ingest.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    /// All-zero plane. Panics if either dimension is zero.
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "plane dimensions must be >= 1");
        Plane {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    /// Constant-valued plane.
    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        let mut p = Plane::new(width, height);
        p.data.fill(value);
        p
    }

    /// Wrap an existing row-major buffer; checks `data.len() == width * height`.
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "plane dimensions must be >= 1, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "buffer of {} samples for a {}x{} plane",
                data.len(),
                width,
                height
            )));
        }
        Ok(Plane {
            width,
            height,
            data,
        })
    }

    /// Build a plane by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut p = Plane::new(width, height);
        for y in 0..height {
            for x in 0..width {
                p.data[y * width + x] = f(x, y);
            }
        }
        p
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `(width, height)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x] = value;
    }

    /// Sample with indices clamped to the plane extent.
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> f64 {
        let xc = x.clamp(0, self.width as i64 - 1) as usize;
        let yc = y.clamp(0, self.height as i64 - 1) as usize;
        self.data[yc * self.width + xc]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Same dimensions as `other`?
    pub fn same_dims(&self, other: &Plane) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Apply `f` to every sample, yielding a new plane.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Rectangle copy; `(x0, y0)` is the top-left corner of the crop.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Plane> {
        if width == 0 || height == 0 || x0 + width > self.width || y0 + height > self.height {
            return Err(Error::DimensionMismatch(format!(
                "crop {width}x{height}+{x0}+{y0} from a {}x{} plane",
                self.width, self.height
            )));
        }
        let mut out = Plane::new(width, height);
        for y in 0..height {
            let src = &self.data[(y0 + y) * self.width + x0..][..width];
            out.as_mut_slice()[y * width..(y + 1) * width].copy_from_slice(src);
        }
        Ok(out)
    }

    /// Symmetric border crop on all four sides.
    pub fn crop_border(&self, border: usize) -> Result<Plane> {
        if 2 * border >= self.width || 2 * border >= self.height {
            return Err(Error::DimensionMismatch(format!(
                "border crop {border} exceeds a {}x{} plane",
                self.width, self.height
            )));
        }
        self.crop(border, border, self.width - 2 * border, self.height - 2 * border)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Ordered list of equally-sized planes, the channel-stacked image type fed
/// to the network.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelImage {
    channels: Vec<Plane>,
}

impl MultiChannelImage {
    /// Checks that at least one channel is present and all share dimensions.
    pub fn from_channels(channels: Vec<Plane>) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::InvalidParameter("image needs at least one channel".into()))?;
        let dims = first.dims();
        if let Some(bad) = channels.iter().find(|c| c.dims() != dims) {
            return Err(Error::DimensionMismatch(format!(
                "channel of {}x{} in a {}x{} image",
                bad.width(),
                bad.height(),
                dims.0,
                dims.1
            )));
        }
        Ok(MultiChannelImage { channels })
    }

    pub fn from_plane(plane: Plane) -> Self {
        MultiChannelImage {
            channels: vec![plane],
        }
    }

    pub fn width(&self) -> usize {
        self.channels[0].width()
    }

    pub fn height(&self) -> usize {
        self.channels[0].height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.channels[0].dims()
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, i: usize) -> &Plane {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Plane] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Plane> {
        self.channels
    }

    /// Crop every channel to the same rectangle.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        let channels = self
            .channels
            .iter()
            .map(|c| c.crop(x0, y0, width, height))
            .collect::<Result<Vec<_>>>()?;
        MultiChannelImage::from_channels(channels)
    }
}

/// Per-pixel displacement field. `u` is the x component, `v` the y
/// component, both in pixels of the grid the flow is defined on.
///
/// Construction rejects non-finite samples, so downstream code never sees
/// NaN/Inf displacements.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    u: Plane,
    v: Plane,
}

impl FlowField {
    pub fn new(u: Plane, v: Plane) -> Result<Self> {
        if !u.same_dims(&v) {
            return Err(Error::DimensionMismatch(format!(
                "flow components {}x{} vs {}x{}",
                u.width(),
                u.height(),
                v.width(),
                v.height()
            )));
        }
        if !u.is_finite() || !v.is_finite() {
            return Err(Error::InvalidParameter(
                "flow field contains non-finite values".into(),
            ));
        }
        Ok(FlowField { u, v })
    }

    /// Zero displacement everywhere.
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            u: Plane::new(width, height),
            v: Plane::new(width, height),
        }
    }

    /// Constant displacement everywhere.
    pub fn constant(width: usize, height: usize, u: f64, v: f64) -> Result<Self> {
        FlowField::new(
            Plane::constant(width, height, u),
            Plane::constant(width, height, v),
        )
    }

    pub fn width(&self) -> usize {
        self.u.width()
    }

    pub fn height(&self) -> usize {
        self.u.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.u.dims()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f64, f64) {
        (self.u.get(x, y), self.v.get(x, y))
    }

    pub fn u(&self) -> &Plane {
        &self.u
    }

    pub fn v(&self) -> &Plane {
        &self.v
    }
}

/// Scale relation between the LR and HR grids.
///
/// The HR grid has exactly `alpha` times the LR dimensions and the origin of
/// both grids is the top left corner of the first pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridGeometry {
    alpha: u32,
}

impl Default for GridGeometry {
    fn default() -> Self {
        GridGeometry { alpha: 4 }
    }
}

impl GridGeometry {
    pub fn new(alpha: u32) -> Result<Self> {
        if alpha < 1 {
            return Err(Error::InvalidParameter("scale factor must be >= 1".into()));
        }
        Ok(GridGeometry { alpha })
    }

    pub fn alpha(&self) -> u32 {
        self.alpha
    }

    pub fn alpha_f(&self) -> f64 {
        f64::from(self.alpha)
    }

    /// HR dimensions corresponding to LR `(width, height)`.
    pub fn hr_dims(&self, lr: (usize, usize)) -> (usize, usize) {
        (lr.0 * self.alpha as usize, lr.1 * self.alpha as usize)
    }

    /// LR dimensions for HR `(width, height)`; errors unless `alpha` divides
    /// both.
    pub fn lr_dims(&self, hr: (usize, usize)) -> Result<(usize, usize)> {
        let a = self.alpha as usize;
        if hr.0 % a != 0 || hr.1 % a != 0 {
            return Err(Error::DimensionMismatch(format!(
                "HR dims {}x{} not divisible by scale {}",
                hr.0, hr.1, a
            )));
        }
        Ok((hr.0 / a, hr.1 / a))
    }

    /// Map an HR pixel coordinate plus HR-space flow to the continuous LR
    /// source coordinate:
    ///
    /// `x_s = (x + u + 0.5) / alpha - 0.5`, likewise for y.
    ///
    /// The half-pixel offsets place the origin at the top left corner of the
    /// first pixel on both grids; with `alpha == 1` and zero flow this is the
    /// identity.
    #[inline]
    pub fn map_hr_to_lr(&self, x: f64, y: f64, u: f64, v: f64) -> (f64, f64) {
        let a = self.alpha_f();
        ((x + u + 0.5) / a - 0.5, (y + v + 0.5) / a - 0.5)
    }

    /// Inverse of the zero-flow [`Self::map_hr_to_lr`]: the continuous HR
    /// coordinate of LR coordinate `c` (plus an LR-space displacement).
    #[inline]
    pub fn map_lr_to_hr(&self, c: f64, displacement: f64) -> f64 {
        self.alpha_f() * (c + displacement + 0.5) - 0.5
    }
}

/// Round to the nearest integer, halves away from zero.
///
/// The rule for exact halves is fixed (and matches `f64::round`) so results
/// are bit-stable across platforms.
#[inline]
pub fn round_nearest(c: f64) -> i64 {
    c.round() as i64
}
