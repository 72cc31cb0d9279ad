//! Detection-error evaluation: false alarms on covers, missed detections on
//! stegos, and their equal-prior average P_E.

use serde::Serialize;

use crate::data::{DatasetManifest, ImageStore, Split};
use crate::error::{Error, Result};
use crate::net::{self, NetworkGraph};
use crate::tensor::{Mode, Tensor};

#[derive(Debug, Clone, Serialize)]
pub struct EvalResult {
    pub covers: usize,
    pub stegos: usize,
    pub false_alarms: usize,
    pub missed_detections: usize,
    pub p_fa: f64,
    pub p_md: f64,
    pub p_e: f64,
}

impl EvalResult {
    fn from_counts(covers: usize, stegos: usize, fa: usize, md: usize) -> Self {
        let p_fa = fa as f64 / covers as f64;
        let p_md = md as f64 / stegos as f64;
        EvalResult {
            covers,
            stegos,
            false_alarms: fa,
            missed_detections: md,
            p_fa,
            p_md,
            p_e: 0.5 * (p_fa + p_md),
        }
    }
}

/// Classify every image of the split in eval mode (argmax probability) and
/// report the error rates. Nothing in the graph is mutated persistently:
/// batch-norm uses its running statistics.
pub fn evaluate(
    graph: &mut NetworkGraph<f32>,
    manifest: &DatasetManifest,
    store: &ImageStore,
    split: Split,
    batch_images: usize,
) -> Result<EvalResult> {
    let pairs = manifest.split_pairs(split);
    if pairs.is_empty() {
        return Err(Error::Manifest(format!("split {split} is empty")));
    }
    let previous_mode = graph.mode();
    graph.set_mode(Mode::Eval);
    let mut fa = 0usize;
    let mut md = 0usize;
    let chunk = (batch_images / 2).max(1);
    for group in pairs.chunks(chunk) {
        let mut images = Vec::with_capacity(group.len() * 2);
        for rec in group {
            images.push((store.load(&manifest.resolve(&rec.cover_path))?, 0usize));
            images.push((store.load(&manifest.resolve(&rec.stego_path))?, 1usize));
        }
        let (h, w) = (images[0].0.h(), images[0].0.w());
        let mut batch = Tensor::<f32>::zeros(images.len(), 1, h, w);
        for (i, (img, _)) in images.iter().enumerate() {
            if img.h() != h || img.w() != w {
                return Err(Error::Manifest(format!(
                    "mixed image sizes in evaluation: {h}x{w} vs {}x{}",
                    img.h(),
                    img.w()
                )));
            }
            img.write_plane(batch.map_mut(i, 0));
        }
        let (probs, _) = graph.forward(&batch, None)?;
        let decisions = net::argmax_rows(&probs);
        for (decision, (_, label)) in decisions.iter().zip(&images) {
            match (label, decision) {
                (0, 1) => fa += 1,
                (1, 0) => md += 1,
                _ => {}
            }
        }
    }
    graph.set_mode(previous_mode);
    Ok(EvalResult::from_counts(pairs.len(), pairs.len(), fa, md))
}

/// Per-snapshot results plus their mean P_E.
#[derive(Debug, Clone, Serialize)]
pub struct SnapshotEval {
    pub snapshots: Vec<EvalResult>,
    pub mean_p_e: f64,
}

/// Evaluate each serialized checkpoint on the test split and average the
/// error probabilities.
pub fn evaluate_snapshots(
    checkpoints: &[Vec<u8>],
    manifest: &DatasetManifest,
    store: &ImageStore,
    batch_images: usize,
) -> Result<SnapshotEval> {
    if checkpoints.is_empty() {
        return Err(Error::InvalidArgument {
            op: "evaluate",
            msg: "at least one snapshot is required".into(),
        });
    }
    let mut snapshots = Vec::with_capacity(checkpoints.len());
    for bytes in checkpoints {
        let mut graph = net::load_checkpoint(bytes)?;
        snapshots.push(evaluate(
            &mut graph,
            manifest,
            store,
            Split::Test,
            batch_images,
        )?);
    }
    let mean_p_e = snapshots.iter().map(|s| s.p_e).sum::<f64>() / snapshots.len() as f64;
    Ok(SnapshotEval {
        snapshots,
        mean_p_e,
    })
}
