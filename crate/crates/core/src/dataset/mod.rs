//! Paired samples: on-disk ingestion, PNG conversion, manifests, and the
//! synthetic generator used as ground truth for desk-scale experiments.
//!
//! Directory layout: `root/<id>/input.png`, `root/<id>/toon.png` and an
//! optional `root/<id>/field.atf`.

mod manifest;
mod png;
mod synth;

pub use manifest::{read_manifest, split, write_manifest, DatasetManifest, Split};
pub use png::{from_rgb8, load_png, save_png, to_rgb8};
pub use synth::{synth_dataset, FieldStyle, SynthConfig};

use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{load_field, save_field, CoarseField};
use crate::image::ImageBuffer;

pub const INPUT_FILE: &str = "input.png";
pub const TOON_FILE: &str = "toon.png";
pub const FIELD_FILE: &str = "field.atf";
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub id: String,
    pub x_in: ImageBuffer,
    pub x_toon: ImageBuffer,
    /// Ground-truth coarse field, when known.
    pub field: Option<CoarseField>,
}

impl PairedSample {
    pub fn new(
        id: impl Into<String>,
        x_in: ImageBuffer,
        x_toon: ImageBuffer,
        field: Option<CoarseField>,
    ) -> Result<Self> {
        let id = id.into();
        if x_in.dims() != x_toon.dims() {
            return Err(Error::Dataset {
                id,
                detail: format!("input is {:?} but toon is {:?}", x_in.dims(), x_toon.dims()),
            });
        }
        Ok(Self {
            id,
            x_in,
            x_toon,
            field,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.x_in.dims()
    }
}

/// Loads every sample directory under `root`, sorted by id, resizing images
/// to `resolution x resolution`.
pub fn load_dataset(root: impl AsRef<Path>, resolution: usize) -> Result<Vec<PairedSample>> {
    let ids = sample_ids(root.as_ref())?;
    ids.iter()
        .map(|id| load_sample(root.as_ref(), id, resolution))
        .collect()
}

pub(crate) fn sample_ids(root: &Path) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if entry.path().is_dir() {
            ids.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    ids.sort();
    Ok(ids)
}

pub fn load_sample(root: &Path, id: &str, resolution: usize) -> Result<PairedSample> {
    let dir = root.join(id);
    let read = |name: &str| -> Result<ImageBuffer> {
        let path = dir.join(name);
        if !path.is_file() {
            return Err(Error::Dataset {
                id: id.to_string(),
                detail: format!("missing {}", path.display()),
            });
        }
        load_png(&path)?.resize(resolution, resolution)
    };
    let x_in = read(INPUT_FILE)?;
    let x_toon = read(TOON_FILE)?;
    let field_path = dir.join(FIELD_FILE);
    let field = if field_path.is_file() {
        Some(load_field(&field_path).map_err(|e| Error::Dataset {
            id: id.to_string(),
            detail: e.to_string(),
        })?)
    } else {
        None
    };
    PairedSample::new(id, x_in, x_toon, field)
}

/// Writes one sample directory per entry plus a manifest listing every id.
pub fn write_dataset(root: impl AsRef<Path>, samples: &[PairedSample], split: Split) -> Result<()> {
    let root = root.as_ref();
    for s in samples {
        let dir = root.join(&s.id);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        save_png(&s.x_in, dir.join(INPUT_FILE))?;
        save_png(&s.x_toon, dir.join(TOON_FILE))?;
        if let Some(f) = &s.field {
            save_field(f, dir.join(FIELD_FILE))?;
        }
    }
    let manifest = DatasetManifest {
        root: root.to_path_buf(),
        ids: samples.iter().map(|s| s.id.clone()).collect(),
        split,
        resolution: samples.first().map_or(0, |s| s.dims().0),
    };
    write_manifest(root.join(MANIFEST_FILE), &[&manifest])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> Vec<PairedSample> {
        let cfg = SynthConfig {
            resolution: 40,
            grid: 5,
            magnitude: 2.0,
        };
        synth_dataset(seed, 2, FieldStyle::SmoothRandom, &cfg).unwrap()
    }

    #[test]
    fn empty_root_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_dataset(dir.path(), 32).unwrap().is_empty());
    }

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let samples = tiny(1);
        write_dataset(dir.path(), &samples, Split::Train).unwrap();
        let back = load_dataset(dir.path(), 40).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in samples.iter().zip(&back) {
            assert_eq!(a.id, b.id);
            // generator output is already on the 8-bit lattice
            assert_eq!(a.x_in, b.x_in);
            assert_eq!(a.field, b.field);
            assert!(a.x_toon.max_abs_diff(&b.x_toon).unwrap() <= 0.5 / 255.0 + 1e-12);
        }
        let manifest = read_manifest(dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(manifest.len(), 2);
    }

    #[test]
    fn resize_on_load() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &tiny(2)[..1], Split::Train).unwrap();
        let back = load_dataset(dir.path(), 20).unwrap();
        assert_eq!(back[0].dims(), (20, 20));
        assert_eq!(back[0].x_toon.dims(), (20, 20));
    }

    #[test]
    fn missing_toon_names_the_sample() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &tiny(3), Split::Train).unwrap();
        let id = &tiny(3)[1].id;
        std::fs::remove_file(dir.path().join(id).join(TOON_FILE)).unwrap();
        let err = load_dataset(dir.path(), 40).unwrap_err();
        assert_eq!(err.code(), "dataset");
        assert!(err.to_string().contains(id.as_str()));
    }

    #[test]
    fn mismatched_pair_is_rejected() {
        let a = ImageBuffer::zeros(4, 4).unwrap();
        let b = ImageBuffer::zeros(4, 5).unwrap();
        assert_eq!(
            PairedSample::new("x", a, b, None).unwrap_err().code(),
            "dataset"
        );
    }
}
