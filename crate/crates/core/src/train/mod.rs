//! SGD training loop: step learning-rate policy, pair-constrained batches,
//! per-epoch validation, trailing-window snapshot selection and metrics.

mod eval;
mod sgd;

pub use eval::{evaluate, evaluate_snapshots, EvalResult, SnapshotEval};
pub use sgd::{sgd_step_param, SgdState};

use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{DatasetManifest, ImageStore, PairBatcher, Split};
use crate::error::{Error, Result};
use crate::net::{save_checkpoint, NetworkGraph};
use crate::tensor::Mode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    /// Learning-rate decay factor of the step policy.
    pub gamma: f64,
    /// The learning rate drops every `step_fraction * max_epochs` epochs.
    pub step_fraction: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// The min/max-validation-loss snapshots are taken over this many
    /// trailing epochs.
    pub snapshot_window: usize,
    /// Stop when the validation loss has not improved for `patience`
    /// epochs.
    pub early_stop: bool,
    pub patience: usize,
    /// Data-loading worker threads; 1 loads synchronously. The batch
    /// sequence is identical either way.
    pub workers: usize,
    /// Record 0.0 instead of measured epoch wall time, making the metrics
    /// log bitwise reproducible.
    pub deterministic_timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 0.01,
            gamma: 0.1,
            step_fraction: 0.10,
            momentum: 0.95,
            weight_decay: 1e-4,
            batch_size: 16,
            max_epochs: 900,
            seed: 0,
            snapshot_window: 5,
            early_stop: false,
            patience: 50,
            workers: 1,
            deterministic_timing: false,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("train config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma {} outside (0,1)", self.gamma));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction <= 1.0) {
            return bad(format!("step_fraction {} outside (0,1]", self.step_fraction));
        }
        if self.batch_size == 0 || self.batch_size % 2 != 0 {
            return bad(format!("batch_size {} must be even", self.batch_size));
        }
        if self.snapshot_window == 0 {
            return bad("snapshot_window must be at least 1".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad(format!("lr0 {} must be positive", self.lr0));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0,1)", self.momentum));
        }
        if self.weight_decay < 0.0 {
            return bad(format!("weight_decay {} negative", self.weight_decay));
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        Ok(())
    }
}

/// Step policy: `lr0 * gamma^floor(epoch / (step_fraction*max_epochs))`.
pub fn lr_schedule(cfg: &TrainConfig, epoch: usize) -> f64 {
    let step = cfg.step_fraction * cfg.max_epochs as f64;
    let drops = (epoch as f64 / step).floor();
    cfg.lr0 * cfg.gamma.powf(drops)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub lr: f64,
    pub wall_time: f64,
}

/// Outcome of a run: the checkpoints with minimum and maximum validation
/// loss over the trailing snapshot window, and the per-epoch metrics.
pub struct TrainOutput {
    pub snapshot_min: Vec<u8>,
    pub snapshot_max: Vec<u8>,
    pub min_epoch: usize,
    pub max_epoch: usize,
    pub metrics: Vec<MetricsRecord>,
}

/// Full training run. Per epoch: one pass of shuffled pair-batches with
/// batch-norm in train mode, an SGD update per batch, then a validation
/// pass in eval mode. `on_epoch` fires after each epoch (the CLI streams
/// metrics through it). Runs are bit-deterministic for a given seed and
/// config.
pub fn train(
    graph: &mut NetworkGraph<f32>,
    manifest: &DatasetManifest,
    store: &ImageStore,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&MetricsRecord),
) -> Result<TrainOutput> {
    cfg.validate()?;
    let train_batcher = PairBatcher::new(manifest, Split::Train, cfg.batch_size, cfg.seed)?;
    if manifest.split_pairs(Split::Val).is_empty() {
        return Err(Error::Manifest("validation split is empty".into()));
    }

    let mut sgd = SgdState::new(graph);
    let mut metrics = Vec::new();
    let mut window: VecDeque<(usize, f64, Vec<u8>)> = VecDeque::new();
    let mut best_val = f64::INFINITY;
    let mut since_best = 0usize;

    for epoch in 0..cfg.max_epochs {
        let started = Instant::now();
        let lr = lr_schedule(cfg, epoch);
        graph.set_mode(Mode::Train);
        let mut loss_sum = 0.0f64;
        let mut batches = 0usize;
        train_batcher.for_each_batch(store, epoch, cfg.workers, |batch_idx, batch, labels| {
            graph.zero_grads();
            let (_, loss) = graph.forward(&batch, Some(&labels))?;
            let loss = loss.expect("labels given");
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            graph.backward(&labels)?;
            sgd.step(graph, cfg.momentum, cfg.weight_decay, lr);
            loss_sum += loss;
            batches += 1;
            Ok(())
        })?;
        let train_loss = loss_sum / batches.max(1) as f64;

        let (val_loss, val_accuracy) = validation_pass(graph, manifest, store, cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }

        window.push_back((epoch, val_loss, save_checkpoint(graph)));
        if window.len() > cfg.snapshot_window {
            window.pop_front();
        }

        let record = MetricsRecord {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
            lr,
            wall_time: if cfg.deterministic_timing {
                0.0
            } else {
                started.elapsed().as_secs_f64()
            },
        };
        on_epoch(&record);
        metrics.push(record);

        if val_loss < best_val {
            best_val = val_loss;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if cfg.early_stop && since_best >= cfg.patience {
            break;
        }
    }

    let min = window
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one epoch ran");
    let max = window
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one epoch ran");
    Ok(TrainOutput {
        snapshot_min: min.2.clone(),
        snapshot_max: max.2.clone(),
        min_epoch: min.0,
        max_epoch: max.0,
        metrics,
    })
}

/// Mean cross-entropy and accuracy over the validation split, eval mode,
/// deterministic manifest order (no augmentation, no shuffling).
fn validation_pass(
    graph: &mut NetworkGraph<f32>,
    manifest: &DatasetManifest,
    store: &ImageStore,
    batch_images: usize,
) -> Result<(f64, f64)> {
    use crate::net::argmax_rows;
    use crate::tensor::Tensor;

    let pairs = manifest.split_pairs(Split::Val);
    graph.set_mode(Mode::Eval);
    let chunk = (batch_images / 2).max(1);
    let mut loss_sum = 0.0f64;
    let mut correct = 0usize;
    let mut total = 0usize;
    for group in pairs.chunks(chunk) {
        let mut images = Vec::with_capacity(group.len() * 2);
        let mut labels = Vec::with_capacity(group.len() * 2);
        for rec in group {
            images.push(store.load(&manifest.resolve(&rec.cover_path))?);
            labels.push(0usize);
            images.push(store.load(&manifest.resolve(&rec.stego_path))?);
            labels.push(1usize);
        }
        let (h, w) = (images[0].h(), images[0].w());
        let mut batch = Tensor::<f32>::zeros(images.len(), 1, h, w);
        for (i, img) in images.iter().enumerate() {
            img.write_plane(batch.map_mut(i, 0));
        }
        let (probs, loss) = graph.forward(&batch, Some(&labels))?;
        loss_sum += loss.expect("labels given") * images.len() as f64;
        for (d, &l) in argmax_rows(&probs).iter().zip(&labels) {
            if *d == l {
                correct += 1;
            }
        }
        total += images.len();
    }
    Ok((loss_sum / total as f64, correct as f64 / total as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_schedule_drops_at_ten_percent() {
        let cfg = TrainConfig::default(); // max_epochs 900
        for epoch in 0..90 {
            assert!((lr_schedule(&cfg, epoch) - 0.01).abs() < 1e-15);
        }
        for epoch in 90..180 {
            assert!((lr_schedule(&cfg, epoch) - 0.001).abs() < 1e-15);
        }
        assert!((lr_schedule(&cfg, 0) - cfg.lr0).abs() < 1e-15);
    }

    #[test]
    fn schedule_scales_with_max_epochs() {
        let cfg = TrainConfig {
            max_epochs: 50,
            ..TrainConfig::default()
        };
        // floor(5/5) = 1 drop
        assert!((lr_schedule(&cfg, 5) - 0.001).abs() < 1e-15);
        assert!((lr_schedule(&cfg, 4) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        for (field, cfg) in [
            ("gamma", TrainConfig { gamma: 1.0, ..ok.clone() }),
            ("batch", TrainConfig { batch_size: 7, ..ok.clone() }),
            ("window", TrainConfig { snapshot_window: 0, ..ok.clone() }),
            ("step", TrainConfig { step_fraction: 0.0, ..ok.clone() }),
            ("momentum", TrainConfig { momentum: 1.0, ..ok.clone() }),
        ] {
            assert!(cfg.validate().is_err(), "{field} accepted");
        }
    }

    #[test]
    fn config_toml_roundtrip_and_unknown_keys() {
        let cfg = TrainConfig {
            max_epochs: 30,
            seed: 9,
            ..TrainConfig::default()
        };
        let text = cfg.to_toml();
        assert_eq!(TrainConfig::from_toml(&text).unwrap(), cfg);
        assert!(TrainConfig::from_toml("no_such_field = 1").is_err());
    }
}
