use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{load_sample, PairedSample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Format(format!("unknown split tag `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub ids: Vec<String>,
    pub split: Split,
    pub resolution: usize,
}

impl DatasetManifest {
    /// Every sample directory under `root`, tagged `train`.
    pub fn scan(root: impl Into<PathBuf>, resolution: usize) -> Result<Self> {
        let root = root.into();
        let ids = super::sample_ids(&root)?;
        Ok(Self {
            root,
            ids,
            split: Split::Train,
            resolution,
        })
    }

    pub fn load(&self) -> Result<Vec<PairedSample>> {
        self.ids
            .iter()
            .map(|id| load_sample(&self.root, id, self.resolution))
            .collect()
    }
}

/// Deterministic shuffled partition into `(train, val)`.
pub fn split(
    manifest: &DatasetManifest,
    train_fraction: f64,
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = manifest.ids.len();
    let n_train = (n as f64 * train_fraction).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidArgument(format!(
            "splitting {n} samples at {train_fraction} leaves one side empty"
        )));
    }
    let mut ids = manifest.ids.clone();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let val = ids.split_off(n_train);
    let with = |ids: Vec<String>, split| DatasetManifest {
        ids,
        split,
        ..manifest.clone()
    };
    Ok((with(ids, Split::Train), with(val, Split::Val)))
}

/// Plain-text listing, one `id,split` per line.
pub fn write_manifest(path: impl AsRef<Path>, manifests: &[&DatasetManifest]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for m in manifests {
        for id in &m.ids {
            out.push_str(&format!("{id},{}\n", m.split));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<(String, Split)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seen = std::collections::HashSet::new();
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (id, tag) = line.split_once(',').ok_or_else(|| {
            Error::Format(format!("manifest line {}: expected `id,split`", n + 1))
        })?;
        if !seen.insert(id.to_string()) {
            return Err(Error::Format(format!(
                "manifest line {}: duplicate id `{id}`",
                n + 1
            )));
        }
        rows.push((id.to_string(), tag.parse()?));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(n: usize) -> DatasetManifest {
        DatasetManifest {
            root: PathBuf::from("/data"),
            ids: (0..n).map(|i| format!("s{i:03}")).collect(),
            split: Split::Train,
            resolution: 256,
        }
    }

    #[test]
    fn ninety_eleven() {
        let (train, val) = split(&manifest(101), 90.0 / 101.0, 0).unwrap();
        assert_eq!((train.ids.len(), val.ids.len()), (90, 11));
        assert_eq!(val.split, Split::Val);
    }

    #[test]
    fn seed_determinism() {
        let m = manifest(30);
        assert_eq!(split(&m, 0.7, 9).unwrap(), split(&m, 0.7, 9).unwrap());
        assert_ne!(
            split(&m, 0.7, 9).unwrap().0.ids,
            split(&m, 0.7, 10).unwrap().0.ids
        );
    }

    #[test]
    fn split_is_a_partition() {
        let m = manifest(17);
        let (a, b) = split(&m, 0.5, 3).unwrap();
        let mut all: Vec<_> = a.ids.iter().chain(&b.ids).cloned().collect();
        all.sort();
        assert_eq!(all, m.ids);
        assert!(a.ids.iter().all(|id| !b.ids.contains(id)));
    }

    #[test]
    fn degenerate_splits() {
        assert!(split(&manifest(3), 0.1, 0).is_err());
        assert!(split(&manifest(3), 0.95, 0).is_err());
        assert!(split(&manifest(3), 1.0, 0).is_err());
        assert!(split(&manifest(3), 0.0, 0).is_err());
    }

    #[test]
    fn manifest_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.txt");
        let (a, b) = split(&manifest(5), 0.6, 1).unwrap();
        write_manifest(&p, &[&a, &b]).unwrap();
        let rows = read_manifest(&p).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows.iter().filter(|r| r.1 == Split::Val).count(), 2);

        std::fs::write(&p, "a,train\na,val\n").unwrap();
        assert_eq!(read_manifest(&p).unwrap_err().code(), "format");
        std::fs::write(&p, "a,holdout\n").unwrap();
        assert!(read_manifest(&p).is_err());
    }
}
