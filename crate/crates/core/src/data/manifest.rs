//! Cover/stego pair manifests: CSV schema, split assignment and the
//! pair-integrity rules (a cover and its stego always share a split).

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// One cover/stego pair. Paths are stored relative to the manifest file
/// (absolute paths pass through untouched).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: String,
    pub cover_path: String,
    pub stego_path: String,
    pub split: Split,
    pub source: String,
}

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    base_dir: PathBuf,
    pairs: Vec<PairRecord>,
}

impl DatasetManifest {
    pub fn new(base_dir: impl Into<PathBuf>, pairs: Vec<PairRecord>) -> Result<Self> {
        let ids: HashSet<&str> = pairs.iter().map(|p| p.id.as_str()).collect();
        if ids.len() != pairs.len() {
            return Err(Error::Manifest("duplicate pair ids".into()));
        }
        Ok(DatasetManifest {
            base_dir: base_dir.into(),
            pairs,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        let mut pairs = Vec::new();
        for row in reader.deserialize() {
            let rec: PairRecord =
                row.map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
            pairs.push(rec);
        }
        DatasetManifest::new(base_dir, pairs)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut writer = csv::Writer::from_path(path)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        for rec in &self.pairs {
            writer
                .serialize(rec)
                .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        }
        writer
            .flush()
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(())
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn pairs(&self) -> &[PairRecord] {
        &self.pairs
    }

    pub fn split_pairs(&self, split: Split) -> Vec<&PairRecord> {
        self.pairs.iter().filter(|p| p.split == split).collect()
    }

    /// Resolve a stored path against the manifest location.
    pub fn resolve(&self, stored: &str) -> PathBuf {
        let p = Path::new(stored);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn with_pairs(&self, pairs: Vec<PairRecord>) -> Result<Self> {
        DatasetManifest::new(self.base_dir.clone(), pairs)
    }
}

/// Assign splits: pairs from `train_only_sources` go straight to the train
/// split; the remaining (primary) pairs are shuffled by `seed`, 50% become
/// the test split, and the other half is carved into exactly `n_train_pairs`
/// train and `n_val_pairs` validation pairs. Record order is preserved.
pub fn make_splits(
    mut pairs: Vec<PairRecord>,
    seed: u64,
    n_train_pairs: usize,
    n_val_pairs: usize,
    train_only_sources: &[String],
) -> Result<Vec<PairRecord>> {
    let aux: HashSet<&str> = train_only_sources.iter().map(|s| s.as_str()).collect();
    let primary_idx: Vec<usize> = pairs
        .iter()
        .enumerate()
        .filter(|(_, p)| !aux.contains(p.source.as_str()))
        .map(|(i, _)| i)
        .collect();

    let n_primary = primary_idx.len();
    let pool_size = n_primary - n_primary / 2; // 50% to test, remainder is the train pool
    if pool_size < n_train_pairs + n_val_pairs {
        return Err(Error::InsufficientPairs {
            needed: 2 * (n_train_pairs + n_val_pairs),
            have: n_primary,
        });
    }
    if pool_size > n_train_pairs + n_val_pairs {
        return Err(Error::Manifest(format!(
            "train pool holds {pool_size} pairs but train+val consume only {}; \
             adjust --train-pairs/--val-pairs to use the pool exactly",
            n_train_pairs + n_val_pairs
        )));
    }

    let mut shuffled = primary_idx.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);

    for (rank, &idx) in shuffled.iter().enumerate() {
        pairs[idx].split = if rank < n_train_pairs {
            Split::Train
        } else if rank < n_train_pairs + n_val_pairs {
            Split::Val
        } else {
            Split::Test
        };
    }
    for p in pairs.iter_mut() {
        if aux.contains(p.source.as_str()) {
            p.split = Split::Train;
        }
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth_pairs(n: usize, source: &str) -> Vec<PairRecord> {
        (0..n)
            .map(|i| PairRecord {
                id: format!("{source}-{i:05}"),
                cover_path: format!("covers/{i:05}.pgm"),
                stego_path: format!("stego/{i:05}.pgm"),
                split: Split::Train,
                source: source.to_string(),
            })
            .collect()
    }

    #[test]
    fn reference_protocol_counts() {
        let pairs = make_splits(synth_pairs(10_000, "boss"), 1, 4000, 1000, &[]).unwrap();
        let count = |s: Split| pairs.iter().filter(|p| p.split == s).count();
        assert_eq!(count(Split::Train), 4000);
        assert_eq!(count(Split::Val), 1000);
        assert_eq!(count(Split::Test), 5000);
    }

    #[test]
    fn splits_partition_every_pair_exactly_once() {
        let pairs = make_splits(synth_pairs(100, "x"), 9, 30, 20, &[]).unwrap();
        assert_eq!(pairs.len(), 100);
        let ids: HashSet<&str> = pairs.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids.len(), 100);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = make_splits(synth_pairs(200, "x"), 5, 60, 40, &[]).unwrap();
        let b = make_splits(synth_pairs(200, "x"), 5, 60, 40, &[]).unwrap();
        let c = make_splits(synth_pairs(200, "x"), 6, 60, 40, &[]).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn train_only_sources_never_reach_val_or_test() {
        let mut pairs = synth_pairs(100, "boss");
        pairs.extend(synth_pairs(50, "bows2"));
        let out = make_splits(pairs, 3, 30, 20, &["bows2".to_string()]).unwrap();
        for p in &out {
            if p.source == "bows2" {
                assert_eq!(p.split, Split::Train);
            }
        }
        let primary_train = out
            .iter()
            .filter(|p| p.source == "boss" && p.split == Split::Train)
            .count();
        assert_eq!(primary_train, 30);
    }

    #[test]
    fn insufficient_pairs_rejected() {
        let err = make_splits(synth_pairs(10, "x"), 1, 4000, 1000, &[]).unwrap_err();
        assert!(matches!(err, Error::InsufficientPairs { .. }));
    }

    #[test]
    fn pool_leftovers_rejected() {
        let err = make_splits(synth_pairs(100, "x"), 1, 20, 10, &[]).unwrap_err();
        assert!(err.to_string().contains("pool"));
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        let manifest = DatasetManifest::new(dir.path(), synth_pairs(5, "synthetic")).unwrap();
        manifest.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("id,cover_path,stego_path,split,source\n"));
        let loaded = DatasetManifest::load(&path).unwrap();
        assert_eq!(loaded.pairs(), manifest.pairs());
        assert_eq!(loaded.base_dir(), dir.path());
    }

    #[test]
    fn resolve_joins_relative_paths_only() {
        let m = DatasetManifest::new("/data/set", vec![]).unwrap();
        assert_eq!(m.resolve("covers/1.pgm"), Path::new("/data/set/covers/1.pgm"));
        assert_eq!(m.resolve("/abs/x.pgm"), Path::new("/abs/x.pgm"));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut pairs = synth_pairs(2, "x");
        pairs[1].id = pairs[0].id.clone();
        assert!(DatasetManifest::new(".", pairs).is_err());
    }
}
