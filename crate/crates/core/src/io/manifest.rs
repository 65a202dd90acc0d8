//! Line-oriented dataset manifests.
//!
//! Each non-comment line lists six whitespace-separated paths:
//!
//! ```text
//! prev center next flow_cp flow_cn target
//! ```
//!
//! Frames and targets are PGM, flows are `.flo` on the HR grid. Relative
//! paths are resolved against the manifest's directory when loading.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::flo::read_flo;
use crate::io::pnm::read_plane;
use crate::mcops::FrameTriplet;
use crate::tensor::Plane;

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub prev: PathBuf,
    pub center: PathBuf,
    pub next: PathBuf,
    pub flow_to_prev: PathBuf,
    pub flow_to_next: PathBuf,
    pub target: PathBuf,
}

/// A manifest entry with its files loaded.
#[derive(Debug, Clone)]
pub struct LoadedTriplet {
    pub triplet: FrameTriplet,
    pub target: Plane,
}

/// Parse a manifest file. Blank lines and lines starting with `#` are
/// skipped; anything else must have exactly six fields.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::Manifest {
                path: path.into(),
                line: lineno + 1,
                reason: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        entries.push(ManifestEntry {
            prev: fields[0].into(),
            center: fields[1].into(),
            next: fields[2].into(),
            flow_to_prev: fields[3].into(),
            flow_to_next: fields[4].into(),
            target: fields[5].into(),
        });
    }
    Ok(entries)
}

/// Write a manifest; paths are emitted as given.
pub fn write_manifest(entries: &[ManifestEntry], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for e in entries {
        text.push_str(&format!(
            "{} {} {} {} {} {}\n",
            e.prev.display(),
            e.center.display(),
            e.next.display(),
            e.flow_to_prev.display(),
            e.flow_to_next.display(),
            e.target.display()
        ));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Load one entry's files, resolving relative paths against `base_dir`.
pub fn load_entry(entry: &ManifestEntry, base_dir: &Path) -> Result<LoadedTriplet> {
    let prev = read_plane(resolve(base_dir, &entry.prev))?;
    let center = read_plane(resolve(base_dir, &entry.center))?;
    let next = read_plane(resolve(base_dir, &entry.next))?;
    let flow_to_prev = read_flo(resolve(base_dir, &entry.flow_to_prev))?.flow;
    let flow_to_next = read_flo(resolve(base_dir, &entry.flow_to_next))?.flow;
    let target = read_plane(resolve(base_dir, &entry.target))?;
    Ok(LoadedTriplet {
        triplet: FrameTriplet::new(prev, center, next, Some(flow_to_prev), Some(flow_to_next))?,
        target,
    })
}

/// Read a manifest and load every entry.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<LoadedTriplet>> {
    let path = path.as_ref();
    let base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    read_manifest(path)?
        .iter()
        .map(|e| load_entry(e, &base_dir))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip_and_comments() {
        let dir = std::env::temp_dir().join("vsr-manifest-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("set.txt");
        let entries = vec![ManifestEntry {
            prev: "a/p.pgm".into(),
            center: "a/c.pgm".into(),
            next: "a/n.pgm".into(),
            flow_to_prev: "a/cp.flo".into(),
            flow_to_next: "a/cn.flo".into(),
            target: "a/t.pgm".into(),
        }];
        write_manifest(&entries, &path).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.insert_str(0, "# a comment\n\n");
        std::fs::write(&path, text).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), entries);
    }

    #[test]
    fn manifest_rejects_short_lines() {
        let dir = std::env::temp_dir().join("vsr-manifest-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.txt");
        std::fs::write(&path, "one two three\n").unwrap();
        assert!(matches!(
            read_manifest(&path),
            Err(Error::Manifest { line: 1, .. })
        ));
    }
}
