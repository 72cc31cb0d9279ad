//! Forward and backward implementations of every layer primitive the
//! network uses.

pub mod activations;
pub mod batch_norm;
pub mod conv;
pub mod linear;
pub mod pool;
pub mod scale;
pub mod softmax;

pub use activations::{
    abs_backward, abs_layer, relu, relu_backward, trunc, trunc_backward, TruncSpec,
};
pub use batch_norm::{batch_norm, batch_norm_backward, BnCache, BnState};
pub use conv::{conv2d, conv2d_backward, conv_out_dim, same_pad, ConvGrads, ConvParams};
pub use linear::{fully_connected, fully_connected_backward, FcGrads, FcParams};
pub use pool::{avg_pool, avg_pool_backward, global_avg_pool, global_avg_pool_backward, PoolSpec};
pub use scale::{scale, scale_backward, ScaleGrads, ScaleParams};
pub use softmax::{softmax_probs, softmax_xent, softmax_xent_backward, SoftmaxXent};
