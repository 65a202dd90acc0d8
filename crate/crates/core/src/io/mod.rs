//! File formats and synthetic dataset generation.

pub mod flo;
pub mod manifest;
pub mod pnm;
pub mod synth;
