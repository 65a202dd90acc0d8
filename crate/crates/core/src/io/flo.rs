//! Middlebury `.flo` optical flow files.
//!
//! Layout: 4-byte magic `"PIEH"` (the little-endian encoding of the float
//! 202021.25, which doubles as an endianness check), `i32` width, `i32`
//! height, then `width * height` interleaved `(u, v)` little-endian `f32`
//! pairs in row-major order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{FlowField, Plane};

const MAGIC: [u8; 4] = *b"PIEH";

/// Values with magnitude above this are the "unknown flow" sentinel.
pub const UNKNOWN_FLOW_THRESHOLD: f32 = 1e9;

/// A parsed flow file: the field plus the number of sentinel samples that
/// were mapped to zero.
#[derive(Debug, Clone)]
pub struct FloData {
    pub flow: FlowField,
    /// Count of samples that exceeded [`UNKNOWN_FLOW_THRESHOLD`].
    pub unknown_count: usize,
}

/// Read a `.flo` file. Unknown-flow sentinels are mapped to 0 and counted.
pub fn read_flo(path: impl AsRef<Path>) -> Result<FloData> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 {
        return Err(Error::Truncated {
            path: path.into(),
            expected: 12,
            actual: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            found: magic,
        });
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if width <= 0 || height <= 0 {
        return Err(Error::BadFileDimensions {
            path: path.into(),
            width: width as i64,
            height: height as i64,
        });
    }
    let (w, h) = (width as usize, height as usize);
    let expected = 12 + w * h * 8;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            actual: bytes.len(),
        });
    }
    let mut u = Plane::new(w, h);
    let mut v = Plane::new(w, h);
    let mut unknown_count = 0;
    for i in 0..w * h {
        let off = 12 + i * 8;
        let mut uu = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        let mut vv = f32::from_le_bytes(bytes[off + 4..off + 8].try_into().unwrap());
        if !uu.is_finite() || uu.abs() > UNKNOWN_FLOW_THRESHOLD {
            uu = 0.0;
            unknown_count += 1;
        }
        if !vv.is_finite() || vv.abs() > UNKNOWN_FLOW_THRESHOLD {
            vv = 0.0;
            unknown_count += 1;
        }
        u.as_mut_slice()[i] = f64::from(uu);
        v.as_mut_slice()[i] = f64::from(vv);
    }
    Ok(FloData {
        flow: FlowField::new(u, v)?,
        unknown_count,
    })
}

/// Write a flow field as `.flo`. Samples are stored as `f32`; fields whose
/// entries are `f32`-representable round-trip bitwise.
pub fn write_flo(flow: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = flow.dims();
    let mut bytes = Vec::with_capacity(12 + w * h * 8);
    bytes.extend_from_slice(&MAGIC);
    bytes.extend_from_slice(&(w as i32).to_le_bytes());
    bytes.extend_from_slice(&(h as i32).to_le_bytes());
    for i in 0..w * h {
        bytes.extend_from_slice(&(flow.u().as_slice()[i] as f32).to_le_bytes());
        bytes.extend_from_slice(&(flow.v().as_slice()[i] as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
