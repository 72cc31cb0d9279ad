//! Config-driven layer-graph builder for the steganalysis network, plus
//! parameter accounting, Xavier initialization and checkpoint round-trips.

mod checkpoint;
mod graph;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use graph::{argmax_rows, Layer, NetworkGraph, Node, ParamKind};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Scalar;

/// One layer in a network description. Parameters are bound when the graph
/// is built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    /// The fixed 30-kernel residual extraction; always first.
    Preproc,
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    Abs,
    Bn,
    Scale,
    Trunc {
        t: u32,
    },
    Relu,
    AvgPool {
        window: usize,
        stride: usize,
    },
    GlobalPool,
    Fc {
        neurons: usize,
    },
    /// Always last; produces the class distribution.
    Softmax,
}

/// Widths and hyperparameters of the five-block topology. All fields are
/// plain data so experiments can override any of them; the defaults satisfy
/// the 256-wide fully-connected input and the ~550k parameter budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct YedroudjConfig {
    /// Probe size used for build-time shape validation. The built network
    /// accepts any input of at least 32x32.
    pub input_size: usize,
    pub block_channels: [usize; 5],
    /// Truncation thresholds of blocks 1 and 2.
    pub trunc_t: [u32; 2],
    pub pool_window: usize,
    pub pool_stride: usize,
    pub fc_widths: [usize; 3],
    pub bn_eps: f64,
    pub bn_stat_momentum: f64,
}

impl Default for YedroudjConfig {
    fn default() -> Self {
        YedroudjConfig {
            input_size: 256,
            block_channels: [30, 30, 32, 64, 256],
            trunc_t: [3, 2],
            pool_window: 5,
            pool_stride: 2,
            fc_widths: [256, 1024, 2],
            bn_eps: 1e-5,
            bn_stat_momentum: 0.9,
        }
    }
}

impl YedroudjConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("network config: {e}")))
    }

    /// Canonical serialized form (embedded in checkpoints).
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The layer list of the five-block topology: residual extraction, two
    /// truncation blocks (abs only in the first, no pooling in the first),
    /// three ReLU blocks, global pooling, three fully connected layers and
    /// the softmax.
    pub fn layer_specs(&self) -> Vec<(String, LayerSpec)> {
        let c = &self.block_channels;
        let pool = LayerSpec::AvgPool {
            window: self.pool_window,
            stride: self.pool_stride,
        };
        let mut specs: Vec<(String, LayerSpec)> = vec![("preproc".into(), LayerSpec::Preproc)];
        let block = |i: usize, kernel: usize| -> Vec<(String, LayerSpec)> {
            let name = |part: &str| format!("block{}.{part}", i + 1);
            let mut v = vec![(
                name("conv"),
                LayerSpec::Conv {
                    out_channels: c[i],
                    kernel,
                    stride: 1,
                },
            )];
            if i == 0 {
                v.push((name("abs"), LayerSpec::Abs));
            }
            v.push((name("bn"), LayerSpec::Bn));
            v.push((name("scale"), LayerSpec::Scale));
            if i < 2 {
                v.push((name("trunc"), LayerSpec::Trunc { t: self.trunc_t[i] }));
            } else {
                v.push((name("relu"), LayerSpec::Relu));
            }
            v
        };
        specs.extend(block(0, 5)); // no pooling in block 1
        specs.extend(block(1, 5));
        specs.push(("block2.pool".into(), pool.clone()));
        specs.extend(block(2, 3));
        specs.push(("block3.pool".into(), pool.clone()));
        specs.extend(block(3, 3));
        specs.push(("block4.pool".into(), pool));
        specs.extend(block(4, 3));
        specs.push(("block5.pool".into(), LayerSpec::GlobalPool));
        for (j, &width) in self.fc_widths.iter().enumerate() {
            specs.push((format!("fc{}", j + 1), LayerSpec::Fc { neurons: width }));
            if j + 1 < self.fc_widths.len() {
                specs.push((format!("fc{}.relu", j + 1), LayerSpec::Relu));
            }
        }
        specs.push(("softmax".into(), LayerSpec::Softmax));
        specs
    }
}

/// Build the default five-block network from its config.
pub fn build_yedroudj<T: Scalar>(cfg: &YedroudjConfig) -> Result<NetworkGraph<T>> {
    NetworkGraph::build(cfg.clone())
}
