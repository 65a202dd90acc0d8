//! Binary PGM (P5) and PPM (P6) images, 8- or 16-bit.
//!
//! Samples are normalized to `[0, 1]` by maxval on read and quantized back
//! on write; only maxval 255 and 65535 are accepted. 16-bit samples are
//! big-endian per the Netpbm convention.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{MultiChannelImage, Plane};

/// Output bit depth for [`write_image`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    fn maxval(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

struct HeaderParser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderParser<'a> {
    // Skips whitespace and `#` comments between header tokens.
    fn skip_separators(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self) -> Option<u64> {
        let tok = self.token()?;
        std::str::from_utf8(tok).ok()?.parse().ok()
    }
}

/// Read a PGM/PPM file into a 1- or 3-channel image normalized to `[0, 1]`.
pub fn read_image(path: impl AsRef<Path>) -> Result<MultiChannelImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let malformed = |reason: &str| Error::MalformedHeader {
        path: path.into(),
        reason: reason.to_string(),
    };

    let mut parser = HeaderParser {
        bytes: &bytes,
        pos: 0,
    };
    let channels = match parser.token() {
        Some(b"P5") => 1usize,
        Some(b"P6") => 3usize,
        _ => return Err(malformed("expected P5 or P6 magic")),
    };
    let width = parser.number().ok_or_else(|| malformed("missing width"))?;
    let height = parser.number().ok_or_else(|| malformed("missing height"))?;
    let maxval = parser.number().ok_or_else(|| malformed("missing maxval"))?;
    if width == 0 || height == 0 {
        return Err(Error::BadFileDimensions {
            path: path.into(),
            width: width as i64,
            height: height as i64,
        });
    }
    if maxval != 255 && maxval != 65535 {
        return Err(Error::UnsupportedMaxval {
            path: path.into(),
            maxval: maxval as u32,
        });
    }
    // Exactly one whitespace byte separates the header from the raster.
    if parser.pos >= bytes.len() || !bytes[parser.pos].is_ascii_whitespace() {
        return Err(malformed("missing raster separator"));
    }
    let raster = &bytes[parser.pos + 1..];

    let (w, h) = (width as usize, height as usize);
    let bytes_per_sample = if maxval == 255 { 1 } else { 2 };
    let expected = w * h * channels * bytes_per_sample;
    if raster.len() < expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            actual: raster.len(),
        });
    }
    let scale = 1.0 / maxval as f64;
    let mut planes: Vec<Plane> = (0..channels).map(|_| Plane::new(w, h)).collect();
    for i in 0..w * h {
        for (c, plane) in planes.iter_mut().enumerate() {
            let off = (i * channels + c) * bytes_per_sample;
            let raw = if bytes_per_sample == 1 {
                raster[off] as u32
            } else {
                u16::from_be_bytes([raster[off], raster[off + 1]]) as u32
            };
            plane.as_mut_slice()[i] = raw as f64 * scale;
        }
    }
    MultiChannelImage::from_channels(planes)
}

/// Write a 1-channel (P5) or 3-channel (P6) image. Samples are clamped to
/// `[0, 1]` and quantized to the requested depth.
pub fn write_image(img: &MultiChannelImage, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let channels = img.channel_count();
    let magic = match channels {
        1 => "P5",
        3 => "P6",
        n => {
            return Err(Error::InvalidParameter(format!(
                "PNM images have 1 or 3 channels, got {n}"
            )))
        }
    };
    let (w, h) = img.dims();
    let maxval = depth.maxval();
    let mut out = format!("{magic}\n{w} {h}\n{maxval}\n").into_bytes();
    let quantize = |v: f64| -> u32 {
        let q = (v.clamp(0.0, 1.0) * maxval as f64).round();
        (q as u32).min(maxval)
    };
    for i in 0..w * h {
        for c in 0..channels {
            let q = quantize(img.channel(c).as_slice()[i]);
            match depth {
                BitDepth::Eight => out.push(q as u8),
                BitDepth::Sixteen => out.extend_from_slice(&(q as u16).to_be_bytes()),
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Grayscale convenience wrappers.
pub fn write_plane(plane: &Plane, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    write_image(&MultiChannelImage::from_plane(plane.clone()), path, depth)
}

/// Read a PGM file, rejecting color images.
pub fn read_plane(path: impl AsRef<Path>) -> Result<Plane> {
    let path = path.as_ref();
    let img = read_image(path)?;
    if img.channel_count() != 1 {
        return Err(Error::InvalidParameter(format!(
            "{}: expected a grayscale (P5) image",
            path.display()
        )));
    }
    Ok(img.into_channels().pop().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("vsr-pnm-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn quantized(w: usize, h: usize, maxval: u32) -> Plane {
        Plane::from_fn(w, h, |x, y| {
            ((x * 37 + y * 11) % (maxval as usize + 1)) as f64 / maxval as f64
        })
    }

    #[test]
    fn gray_round_trip_8bit_bitwise() {
        let img = quantized(5, 4, 255);
        let path = tmp("gray8.pgm");
        write_plane(&img, &path, BitDepth::Eight).unwrap();
        let back = read_plane(&path).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn gray_round_trip_16bit_bitwise() {
        let img = quantized(4, 4, 65535);
        let path = tmp("gray16.pgm");
        write_plane(&img, &path, BitDepth::Sixteen).unwrap();
        let back = read_plane(&path).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn color_dispatches_to_p6() {
        let img = MultiChannelImage::from_channels(vec![
            quantized(3, 3, 255),
            quantized(3, 3, 255).map(|v| 1.0 - v),
            Plane::constant(3, 3, 64.0 / 255.0),
        ])
        .unwrap();
        let path = tmp("color.ppm");
        write_image(&img, &path, BitDepth::Eight).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P6"));
        let back = read_image(&path).unwrap();
        assert_eq!(back.channel_count(), 3);
        assert_eq!(back, img);
        assert!(read_plane(&path).is_err());
    }

    #[test]
    fn quantization_error_within_half_step() {
        let img = Plane::from_fn(6, 6, |x, y| (x as f64 + 0.123 * y as f64) / 7.0);
        let path = tmp("quant.pgm");
        write_plane(&img, &path, BitDepth::Eight).unwrap();
        let back = read_plane(&path).unwrap();
        for i in 0..36 {
            let err = (back.as_slice()[i] - img.as_slice()[i]).abs();
            assert!(err <= 0.5 / 255.0 + 1e-12, "error {err}");
        }
    }

    #[test]
    fn header_errors() {
        let path = tmp("badmagic.pgm");
        std::fs::write(&path, b"P2\n2 2\n255\n....").unwrap();
        assert!(matches!(
            read_image(&path),
            Err(Error::MalformedHeader { .. })
        ));

        let path = tmp("badmax.pgm");
        std::fs::write(&path, b"P5\n2 2\n4095\n\0\0\0\0\0\0\0\0").unwrap();
        assert!(matches!(
            read_image(&path),
            Err(Error::UnsupportedMaxval { maxval: 4095, .. })
        ));

        let path = tmp("short.pgm");
        std::fs::write(&path, b"P5\n4 4\n255\n\0\0").unwrap();
        assert!(matches!(read_image(&path), Err(Error::Truncated { .. })));

        let path = tmp("comment.pgm");
        std::fs::write(&path, b"P5 # gray\n# size\n2 1\n255\n\x07\x80").unwrap();
        let img = read_plane(&path).unwrap();
        assert_eq!(img.get(0, 0), 7.0 / 255.0);
        assert_eq!(img.get(1, 0), 128.0 / 255.0);
    }
}
