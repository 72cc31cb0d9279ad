//! Pair-constrained batch production.
//!
//! Every batch holds `batch_size/2` cover/stego pairs with the cover and
//! its own stego co-resident: covers fill the first half of the batch
//! (label 0), the matching stegos the second half (label 1). Pair order is
//! reshuffled per epoch from `(seed, epoch)` and the trailing partial batch
//! is dropped. Optional worker threads prefetch batches but always deliver
//! the single-threaded sequence.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::image::{load_pgm, GrayImage};
use super::manifest::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Cache of decoded images, shared across epochs and worker threads.
#[derive(Default)]
pub struct ImageStore {
    cache: Mutex<HashMap<PathBuf, Arc<GrayImage>>>,
}

impl ImageStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(&self, path: &PathBuf) -> Result<Arc<GrayImage>> {
        if let Some(img) = self.cache.lock().unwrap().get(path) {
            return Ok(img.clone());
        }
        let img = Arc::new(load_pgm(path)?);
        self.cache
            .lock()
            .unwrap()
            .entry(path.clone())
            .or_insert_with(|| img.clone());
        Ok(img)
    }
}

pub struct PairBatcher {
    pairs: Vec<(PathBuf, PathBuf)>,
    batch_size: usize,
    seed: u64,
}

impl PairBatcher {
    pub fn new(
        manifest: &DatasetManifest,
        split: Split,
        batch_size: usize,
        seed: u64,
    ) -> Result<Self> {
        if batch_size % 2 != 0 || batch_size == 0 {
            return Err(Error::InvalidArgument {
                op: "batch_pairs",
                msg: format!("batch size must be even and positive, got {batch_size}"),
            });
        }
        let pairs: Vec<(PathBuf, PathBuf)> = manifest
            .split_pairs(split)
            .iter()
            .map(|p| (manifest.resolve(&p.cover_path), manifest.resolve(&p.stego_path)))
            .collect();
        if pairs.is_empty() {
            return Err(Error::Manifest(format!("no pairs in split {split}")));
        }
        Ok(PairBatcher {
            pairs,
            batch_size,
            seed,
        })
    }

    pub fn pairs_per_batch(&self) -> usize {
        self.batch_size / 2
    }

    /// Complete batches per epoch; a trailing partial batch is dropped.
    pub fn num_batches(&self) -> usize {
        self.pairs.len() / self.pairs_per_batch()
    }

    /// Deterministic pair order for an epoch.
    pub fn epoch_order(&self, epoch: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch as u64 + 1);
        let mut order: Vec<usize> = (0..self.pairs.len()).collect();
        order.shuffle(&mut rng);
        order
    }

    /// Materialize batch `index` of the given epoch order: a
    /// `(batch,1,h,w)` tensor (covers first, then their stegos) and the
    /// 0/1 label vector.
    pub fn load_batch(
        &self,
        store: &ImageStore,
        order: &[usize],
        index: usize,
    ) -> Result<(Tensor<f32>, Vec<usize>)> {
        let ppb = self.pairs_per_batch();
        let slice = &order[index * ppb..(index + 1) * ppb];
        let mut images: Vec<Arc<GrayImage>> = Vec::with_capacity(self.batch_size);
        for &pi in slice {
            images.push(store.load(&self.pairs[pi].0)?);
        }
        for &pi in slice {
            images.push(store.load(&self.pairs[pi].1)?);
        }
        let (h, w) = (images[0].h(), images[0].w());
        if h < 32 || w < 32 {
            return Err(Error::InvalidArgument {
                op: "batch_pairs",
                msg: format!("image {h}x{w} below the 32-pixel minimum"),
            });
        }
        let mut batch = Tensor::<f32>::zeros(self.batch_size, 1, h, w);
        for (i, img) in images.iter().enumerate() {
            if img.h() != h || img.w() != w {
                return Err(Error::Manifest(format!(
                    "mixed image sizes in one batch: {h}x{w} vs {}x{}",
                    img.h(),
                    img.w()
                )));
            }
            img.write_plane(batch.map_mut(i, 0));
        }
        let mut labels = vec![0usize; ppb];
        labels.extend(std::iter::repeat_n(1usize, ppb));
        Ok((batch, labels))
    }

    /// Run `sink` over every batch of an epoch, in order. With
    /// `workers > 1`, loading is prefetched on that many threads; the
    /// delivered sequence is identical to the single-threaded one.
    pub fn for_each_batch(
        &self,
        store: &ImageStore,
        epoch: usize,
        workers: usize,
        mut sink: impl FnMut(usize, Tensor<f32>, Vec<usize>) -> Result<()>,
    ) -> Result<()> {
        let order = self.epoch_order(epoch);
        let n = self.num_batches();
        if workers <= 1 {
            for b in 0..n {
                let (batch, labels) = self.load_batch(store, &order, b)?;
                sink(b, batch, labels)?;
            }
            return Ok(());
        }

        let next = AtomicUsize::new(0);
        let (tx, rx) = std::sync::mpsc::sync_channel(workers * 2);
        std::thread::scope(|scope| -> Result<()> {
            for _ in 0..workers {
                let tx = tx.clone();
                let next = &next;
                let order = &order;
                scope.spawn(move || loop {
                    let b = next.fetch_add(1, Ordering::Relaxed);
                    if b >= n {
                        break;
                    }
                    let result = self.load_batch(store, order, b);
                    if tx.send((b, result)).is_err() {
                        break;
                    }
                });
            }
            drop(tx);

            let mut pending: BTreeMap<usize, Result<(Tensor<f32>, Vec<usize>)>> = BTreeMap::new();
            let mut want = 0usize;
            while want < n {
                while !pending.contains_key(&want) {
                    match rx.recv() {
                        Ok((b, res)) => {
                            pending.insert(b, res);
                        }
                        Err(_) => {
                            return Err(Error::Manifest(
                                "batch prefetch workers exited early".into(),
                            ))
                        }
                    }
                }
                let (batch, labels) = pending.remove(&want).unwrap()?;
                sink(want, batch, labels)?;
                want += 1;
            }
            Ok(())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::embed::{lsbm_embed, EmbedParams};
    use super::super::image::save_pgm;
    use super::super::manifest::PairRecord;
    use super::super::synth::textured_cover;
    use super::*;

    fn fixture_manifest(dir: &std::path::Path, n_pairs: usize) -> DatasetManifest {
        let params = EmbedParams::from_payload(1.0, 9).unwrap();
        let mut pairs = Vec::new();
        for i in 0..n_pairs {
            let cover = textured_cover(32, 32, 1000 + i as u64);
            let stego = lsbm_embed(&cover, &params);
            let cp = format!("c{i:03}.pgm");
            let sp = format!("s{i:03}.pgm");
            save_pgm(&cover, dir.join(&cp)).unwrap();
            save_pgm(&stego, dir.join(&sp)).unwrap();
            pairs.push(PairRecord {
                id: format!("p{i:03}"),
                cover_path: cp,
                stego_path: sp,
                split: Split::Train,
                source: "synthetic".into(),
            });
        }
        DatasetManifest::new(dir, pairs).unwrap()
    }

    #[test]
    fn batches_hold_cover_stego_pairs_with_balanced_labels() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = fixture_manifest(dir.path(), 19);
        let batcher = PairBatcher::new(&manifest, Split::Train, 16, 7).unwrap();
        assert_eq!(batcher.num_batches(), 2); // 19 pairs / 8 per batch, remainder dropped
        let store = ImageStore::new();
        let order = batcher.epoch_order(0);
        let (batch, labels) = batcher.load_batch(&store, &order, 0).unwrap();
        assert_eq!(batch.shape().n, 16);
        assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 8);
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 8);
        // stego i sits at slot i+8 and differs from its cover by at most 1
        for i in 0..8 {
            let cover = batch.map(i, 0);
            let stego = batch.map(i + 8, 0);
            let max_diff = cover
                .iter()
                .zip(stego)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f32, f32::max);
            assert!(max_diff <= 1.0 && max_diff > 0.0);
        }
    }

    #[test]
    fn epoch_orders_differ_but_reruns_match() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = fixture_manifest(dir.path(), 10);
        let batcher = PairBatcher::new(&manifest, Split::Train, 4, 42).unwrap();
        let e1 = batcher.epoch_order(1);
        let e2 = batcher.epoch_order(2);
        assert_ne!(e1, e2);
        assert_eq!(e1, batcher.epoch_order(1));
    }

    #[test]
    fn odd_batch_size_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = fixture_manifest(dir.path(), 4);
        assert!(PairBatcher::new(&manifest, Split::Train, 7, 0).is_err());
    }

    #[test]
    fn prefetch_workers_deliver_the_sequential_sequence() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = fixture_manifest(dir.path(), 12);
        let batcher = PairBatcher::new(&manifest, Split::Train, 4, 3).unwrap();
        let store = ImageStore::new();
        let collect = |workers: usize| {
            let mut seen: Vec<(usize, Vec<f32>, Vec<usize>)> = Vec::new();
            batcher
                .for_each_batch(&store, 2, workers, |b, t, l| {
                    seen.push((b, t.data().to_vec(), l));
                    Ok(())
                })
                .unwrap();
            seen
        };
        assert_eq!(collect(1), collect(4));
    }
}
