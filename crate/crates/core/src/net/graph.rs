//! Runtime network graph: layers with bound parameters, forward/backward,
//! parameter visitors and Xavier initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{LayerSpec, YedroudjConfig};
use crate::error::{Error, Result};
use crate::ops::{
    self, BnCache, BnState, ConvParams, FcParams, PoolSpec, ScaleParams, TruncSpec,
};
use crate::srm;
use crate::tensor::{Mode, Scalar, Shape, Tensor};

/// Whether weight decay applies to a parameter (biases and offsets are
/// exempt).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

/// A named layer with its bound state.
pub struct Node<T: Scalar> {
    pub name: String,
    pub layer: Layer<T>,
}

pub enum Layer<T: Scalar> {
    Preproc {
        params: ConvParams<T>,
    },
    Conv {
        params: ConvParams<T>,
        /// False when no learnable parameter sits below this layer, in
        /// which case backward stops here.
        needs_input_grad: bool,
        cache: Option<Tensor<T>>,
    },
    Abs {
        cache: Option<Tensor<T>>,
    },
    Bn {
        state: BnState<T>,
        cache: Option<BnCache<T>>,
    },
    Scale {
        params: ScaleParams<T>,
        cache: Option<Tensor<T>>,
    },
    Trunc {
        spec: TruncSpec,
        cache: Option<Tensor<T>>,
    },
    Relu {
        cache: Option<Tensor<T>>,
    },
    AvgPool {
        spec: PoolSpec,
        cache: Option<Tensor<T>>,
    },
    GlobalPool {
        cache: Option<Shape>,
    },
    Fc {
        params: FcParams<T>,
        cache: Option<Tensor<T>>,
    },
    Softmax {
        /// Cached probabilities for the loss gradient.
        cache: Option<Tensor<T>>,
    },
}

/// Probe dimensions tracked during the build-time shape walk.
#[derive(Debug, Clone, Copy)]
struct Probe {
    c: usize,
    h: usize,
    w: usize,
}

pub struct NetworkGraph<T: Scalar> {
    config: YedroudjConfig,
    nodes: Vec<Node<T>>,
    mode: Mode,
}

impl<T: Scalar> std::fmt::Debug for NetworkGraph<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let names: Vec<&str> = self.nodes.iter().map(|n| n.name.as_str()).collect();
        f.debug_struct("NetworkGraph")
            .field("mode", &self.mode)
            .field("layers", &names)
            .finish()
    }
}

impl<T: Scalar> NetworkGraph<T> {
    /// Build and shape-validate the graph described by `cfg`. Weights are
    /// zero until [`NetworkGraph::init_xavier`] or a checkpoint load.
    pub fn build(cfg: YedroudjConfig) -> Result<NetworkGraph<T>> {
        let specs = cfg.layer_specs();
        Self::build_from_specs(cfg, &specs)
    }

    fn build_from_specs(
        cfg: YedroudjConfig,
        specs: &[(String, LayerSpec)],
    ) -> Result<NetworkGraph<T>> {
        let fail = |idx: usize, name: &str, msg: String| Error::Build {
            layer: idx,
            kind: name.to_string(),
            msg,
        };
        if cfg.input_size < 32 {
            return Err(Error::Config(format!(
                "input_size {} below the 32-pixel minimum",
                cfg.input_size
            )));
        }
        match specs.first() {
            Some((_, LayerSpec::Preproc)) => {}
            _ => {
                return Err(Error::Config(
                    "graph must start with the preproc layer".into(),
                ))
            }
        }
        match specs.last() {
            Some((_, LayerSpec::Softmax)) => {}
            _ => return Err(Error::Config("graph must end with softmax".into())),
        }

        let mut probe = Probe {
            c: 1,
            h: cfg.input_size,
            w: cfg.input_size,
        };
        let mut nodes: Vec<Node<T>> = Vec::with_capacity(specs.len());
        let mut learnable_seen = false;
        for (idx, (name, spec)) in specs.iter().enumerate() {
            let layer = match spec {
                LayerSpec::Preproc => {
                    if idx != 0 {
                        return Err(fail(idx, name, "preproc must be the first layer".into()));
                    }
                    if probe.c != 1 {
                        return Err(fail(
                            idx,
                            name,
                            format!("preproc needs 1 input channel, got {}", probe.c),
                        ));
                    }
                    probe.c = srm::BANK_SIZE;
                    Layer::Preproc {
                        params: srm::build_filter_bank().conv_params(),
                    }
                }
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                } => {
                    if !matches!(kernel, 3 | 5) {
                        return Err(fail(idx, name, format!("kernel {kernel} not in {{3,5}}")));
                    }
                    if *out_channels == 0 || *stride == 0 {
                        return Err(fail(idx, name, "zero width or stride".into()));
                    }
                    let pad = ops::same_pad(*kernel);
                    let weights = Tensor::zeros(*out_channels, probe.c, *kernel, *kernel);
                    probe.c = *out_channels;
                    probe.h = probe.h.div_ceil(*stride);
                    probe.w = probe.w.div_ceil(*stride);
                    let needs_input_grad = learnable_seen;
                    learnable_seen = true;
                    Layer::Conv {
                        params: ConvParams::new(weights, *stride, pad, true),
                        needs_input_grad,
                        cache: None,
                    }
                }
                LayerSpec::Abs => Layer::Abs { cache: None },
                LayerSpec::Bn => Layer::Bn {
                    state: BnState::new(probe.c, cfg.bn_eps, cfg.bn_stat_momentum),
                    cache: None,
                },
                LayerSpec::Scale => {
                    learnable_seen = true;
                    Layer::Scale {
                        params: ScaleParams::identity(probe.c),
                        cache: None,
                    }
                }
                LayerSpec::Trunc { t } => Layer::Trunc {
                    spec: TruncSpec::new(*t)
                        .map_err(|e| fail(idx, name, e.to_string()))?,
                    cache: None,
                },
                LayerSpec::Relu => Layer::Relu { cache: None },
                LayerSpec::AvgPool { window, stride } => {
                    let pad = ops::same_pad(*window);
                    if *window < 2 {
                        return Err(fail(idx, name, format!("window {window} below 2")));
                    }
                    if *window > probe.h + 2 * pad || *window > probe.w + 2 * pad {
                        return Err(fail(
                            idx,
                            name,
                            format!(
                                "window {} larger than padded {}x{}",
                                window,
                                probe.h + 2 * pad,
                                probe.w + 2 * pad
                            ),
                        ));
                    }
                    probe.h = probe.h.div_ceil(*stride);
                    probe.w = probe.w.div_ceil(*stride);
                    Layer::AvgPool {
                        spec: PoolSpec {
                            window: *window,
                            stride: *stride,
                            pad,
                        },
                        cache: None,
                    }
                }
                LayerSpec::GlobalPool => {
                    probe.h = 1;
                    probe.w = 1;
                    Layer::GlobalPool { cache: None }
                }
                LayerSpec::Fc { neurons } => {
                    if probe.h != 1 || probe.w != 1 {
                        return Err(fail(
                            idx,
                            name,
                            format!(
                                "fully connected layer needs 1x1 input, got {}x{}",
                                probe.h, probe.w
                            ),
                        ));
                    }
                    if *neurons == 0 {
                        return Err(fail(idx, name, "zero neurons".into()));
                    }
                    let in_dim = probe.c;
                    probe.c = *neurons;
                    learnable_seen = true;
                    Layer::Fc {
                        params: FcParams::zeros(in_dim, *neurons),
                        cache: None,
                    }
                }
                LayerSpec::Softmax => {
                    if idx + 1 != specs.len() {
                        return Err(fail(idx, name, "softmax must be the last layer".into()));
                    }
                    if probe.c != 2 {
                        return Err(fail(
                            idx,
                            name,
                            format!("classifier is binary: expected 2 logits, got {}", probe.c),
                        ));
                    }
                    Layer::Softmax { cache: None }
                }
            };
            nodes.push(Node {
                name: name.clone(),
                layer,
            });
        }
        Ok(NetworkGraph {
            config: cfg,
            nodes,
            mode: Mode::Train,
        })
    }

    pub fn config(&self) -> &YedroudjConfig {
        &self.config
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
        for node in &mut self.nodes {
            if let Layer::Bn { state, .. } = &mut node.layer {
                state.mode = mode;
            }
        }
    }

    fn validate_input(&self, batch: &Tensor<T>) -> Result<()> {
        let s = batch.shape();
        if s.c != 1 {
            return Err(Error::ShapeMismatch {
                op: "forward",
                dim: "channels",
                got: s.c,
                expected: 1,
            });
        }
        if s.h < 32 || s.w < 32 {
            return Err(Error::InvalidArgument {
                op: "forward",
                msg: format!("input {}x{} below the 32-pixel minimum", s.h, s.w),
            });
        }
        Ok(())
    }

    /// Run the graph on a `(n,1,h,w)` batch. Returns per-image class
    /// probabilities `(n,2,1,1)` and, when labels are given, the mean
    /// cross-entropy. Train mode retains the buffers backward needs.
    pub fn forward(
        &mut self,
        batch: &Tensor<T>,
        labels: Option<&[usize]>,
    ) -> Result<(Tensor<T>, Option<f64>)> {
        self.forward_inner(batch, labels, None)
            .map(|(probs, loss, _)| (probs, loss))
    }

    /// Like [`NetworkGraph::forward`], also returning each layer's output
    /// shape in graph order.
    pub fn forward_trace(
        &mut self,
        batch: &Tensor<T>,
        labels: Option<&[usize]>,
    ) -> Result<(Tensor<T>, Option<f64>, Vec<(String, Shape)>)> {
        self.forward_inner(batch, labels, Some(Vec::new()))
            .map(|(probs, loss, trace)| (probs, loss, trace.unwrap_or_default()))
    }

    #[allow(clippy::type_complexity)]
    fn forward_inner(
        &mut self,
        batch: &Tensor<T>,
        labels: Option<&[usize]>,
        mut trace: Option<Vec<(String, Shape)>>,
    ) -> Result<(Tensor<T>, Option<f64>, Option<Vec<(String, Shape)>>)> {
        self.validate_input(batch)?;
        let train = self.mode == Mode::Train;
        let mut x = batch.clone();
        let mut loss = None;
        for node in &mut self.nodes {
            x = match &mut node.layer {
                Layer::Preproc { params } => ops::conv2d(&x, params)?,
                Layer::Conv { params, cache, .. } => {
                    let out = ops::conv2d(&x, params)?;
                    if train {
                        *cache = Some(x);
                    }
                    out
                }
                Layer::Abs { cache } => {
                    let out = ops::abs_layer(&x);
                    if train {
                        *cache = Some(x);
                    }
                    out
                }
                Layer::Bn { state, cache } => {
                    let (out, c) = ops::batch_norm(&x, state)?;
                    if train {
                        *cache = Some(c);
                    }
                    out
                }
                Layer::Scale { params, cache } => {
                    let out = ops::scale(&x, params)?;
                    if train {
                        *cache = Some(x);
                    }
                    out
                }
                Layer::Trunc { spec, cache } => {
                    let out = ops::trunc(&x, *spec);
                    if train {
                        *cache = Some(x);
                    }
                    out
                }
                Layer::Relu { cache } => {
                    let out = ops::relu(&x);
                    if train {
                        *cache = Some(x);
                    }
                    out
                }
                Layer::AvgPool { spec, cache } => {
                    let out = ops::avg_pool(&x, *spec)?;
                    if train {
                        *cache = Some(x);
                    }
                    out
                }
                Layer::GlobalPool { cache } => {
                    let out = ops::global_avg_pool(&x);
                    if train {
                        *cache = Some(x.shape());
                    }
                    out
                }
                Layer::Fc { params, cache } => {
                    let out = ops::fully_connected(&x, params)?;
                    if train {
                        *cache = Some(x);
                    }
                    out
                }
                Layer::Softmax { cache } => {
                    let probs = ops::softmax::softmax_probs(&x)?;
                    if let Some(labels) = labels {
                        loss = Some(ops::softmax_xent(&x, labels)?.loss);
                    }
                    if train {
                        *cache = Some(probs.clone());
                    }
                    probs
                }
            };
            if let Some(t) = trace.as_mut() {
                t.push((node.name.clone(), x.shape()));
            }
        }
        Ok((x, loss, trace))
    }

    /// Backpropagate the cross-entropy gradient of the most recent
    /// train-mode forward, accumulating into parameter grad buffers.
    pub fn backward(&mut self, labels: &[usize]) -> Result<()> {
        let missing = |name: &str| Error::InvalidArgument {
            op: "backward",
            msg: format!("no cached activation for {name}; run a train-mode forward first"),
        };
        let mut grad: Option<Tensor<T>> = None;
        for node in self.nodes.iter_mut().rev() {
            match &mut node.layer {
                Layer::Softmax { cache } => {
                    let probs = cache.take().ok_or_else(|| missing(&node.name))?;
                    grad = Some(ops::softmax_xent_backward(&probs, labels));
                }
                Layer::Fc { params, cache } => {
                    let input = cache.take().ok_or_else(|| missing(&node.name))?;
                    let g = grad.as_ref().ok_or_else(|| missing(&node.name))?;
                    let grads = ops::fully_connected_backward(&input, params, g)?;
                    params.weights.accumulate_grad(grads.weights.data());
                    params.bias.accumulate_grad(grads.bias.data());
                    grad = Some(grads.input);
                }
                Layer::Relu { cache } => {
                    let input = cache.take().ok_or_else(|| missing(&node.name))?;
                    let g = grad.as_ref().ok_or_else(|| missing(&node.name))?;
                    grad = Some(ops::relu_backward(&input, g));
                }
                Layer::GlobalPool { cache } => {
                    let shape = cache.take().ok_or_else(|| missing(&node.name))?;
                    let g = grad.as_ref().ok_or_else(|| missing(&node.name))?;
                    grad = Some(ops::global_avg_pool_backward(shape, g));
                }
                Layer::AvgPool { spec, cache } => {
                    let input = cache.take().ok_or_else(|| missing(&node.name))?;
                    let g = grad.as_ref().ok_or_else(|| missing(&node.name))?;
                    grad = Some(ops::avg_pool_backward(&input, *spec, g)?);
                }
                Layer::Trunc { spec, cache } => {
                    let input = cache.take().ok_or_else(|| missing(&node.name))?;
                    let g = grad.as_ref().ok_or_else(|| missing(&node.name))?;
                    grad = Some(ops::trunc_backward(&input, *spec, g));
                }
                Layer::Scale { params, cache } => {
                    let input = cache.take().ok_or_else(|| missing(&node.name))?;
                    let g = grad.as_ref().ok_or_else(|| missing(&node.name))?;
                    let grads = ops::scale_backward(&input, params, g)?;
                    params.gamma.accumulate_grad(grads.gamma.data());
                    params.beta.accumulate_grad(grads.beta.data());
                    grad = Some(grads.input);
                }
                Layer::Bn { cache, .. } => {
                    let c = cache.take().ok_or_else(|| missing(&node.name))?;
                    let g = grad.as_ref().ok_or_else(|| missing(&node.name))?;
                    grad = Some(ops::batch_norm_backward(&c, g));
                }
                Layer::Abs { cache } => {
                    let input = cache.take().ok_or_else(|| missing(&node.name))?;
                    let g = grad.as_ref().ok_or_else(|| missing(&node.name))?;
                    grad = Some(ops::abs_backward(&input, g));
                }
                Layer::Conv {
                    params,
                    needs_input_grad,
                    cache,
                } => {
                    let input = cache.take().ok_or_else(|| missing(&node.name))?;
                    let g = grad.as_ref().ok_or_else(|| missing(&node.name))?;
                    let grads = ops::conv2d_backward(&input, params, g, *needs_input_grad, true)?;
                    params
                        .weights
                        .accumulate_grad(grads.weights.expect("requested").data());
                    match grads.input {
                        Some(gi) => grad = Some(gi),
                        // nothing learnable below this layer
                        None => return Ok(()),
                    }
                }
                Layer::Preproc { .. } => {
                    // fixed bank: no gradients, nothing below
                    return Ok(());
                }
            }
        }
        Ok(())
    }

    /// Visit every learnable parameter in graph order. The fixed preproc
    /// bank and batch-norm running statistics are not learnable.
    pub fn visit_learnable_mut(&mut self, mut f: impl FnMut(&str, ParamKind, &mut Tensor<T>)) {
        for node in &mut self.nodes {
            match &mut node.layer {
                Layer::Conv { params, .. } if params.learnable => {
                    f(
                        &format!("{}.weight", node.name),
                        ParamKind::Weight,
                        &mut params.weights,
                    );
                }
                Layer::Scale { params, .. } => {
                    f(
                        &format!("{}.gamma", node.name),
                        ParamKind::Weight,
                        &mut params.gamma,
                    );
                    f(
                        &format!("{}.beta", node.name),
                        ParamKind::Bias,
                        &mut params.beta,
                    );
                }
                Layer::Fc { params, .. } => {
                    f(
                        &format!("{}.weight", node.name),
                        ParamKind::Weight,
                        &mut params.weights,
                    );
                    f(
                        &format!("{}.bias", node.name),
                        ParamKind::Bias,
                        &mut params.bias,
                    );
                }
                _ => {}
            }
        }
    }

    pub fn zero_grads(&mut self) {
        self.visit_learnable_mut(|_, _, t| {
            t.ensure_grad();
            t.zero_grad();
        });
    }

    /// Parameter counts `(learnable excluding bn/scale, total learnable)`.
    /// The fixed preproc bank contributes to neither.
    pub fn parameter_count(&self) -> (usize, usize) {
        let mut excl = 0usize;
        let mut scale_params = 0usize;
        for node in &self.nodes {
            match &node.layer {
                Layer::Conv { params, .. } if params.learnable => {
                    excl += params.weights.numel();
                }
                Layer::Fc { params, .. } => {
                    excl += params.weights.numel() + params.bias.numel();
                }
                Layer::Scale { params, .. } => {
                    scale_params += params.gamma.numel() + params.beta.numel();
                }
                _ => {}
            }
        }
        (excl, excl + scale_params)
    }

    /// Gaussian init with variance `2/(fan_in+fan_out)` for conv and fc
    /// weights; gamma=1, beta=0, fc bias=0; batch-norm statistics reset.
    /// Bitwise deterministic for a given seed.
    pub fn init_xavier(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for node in &mut self.nodes {
            match &mut node.layer {
                Layer::Conv { params, .. } if params.learnable => {
                    let s = params.weights.shape();
                    let fan_in = s.c * s.h * s.w;
                    let fan_out = s.n * s.h * s.w;
                    sample_gaussian(&mut params.weights, fan_in, fan_out, &mut rng);
                }
                Layer::Fc { params, .. } => {
                    let (fan_in, fan_out) = (params.in_dim(), params.out_dim());
                    sample_gaussian(&mut params.weights, fan_in, fan_out, &mut rng);
                    params.bias.data_mut().fill(T::zero());
                }
                Layer::Scale { params, .. } => {
                    params.gamma.data_mut().fill(T::one());
                    params.beta.data_mut().fill(T::zero());
                }
                Layer::Bn { state, cache } => {
                    let channels = state.channels();
                    *state = BnState::new(channels, state.eps, state.stat_momentum);
                    state.mode = self.mode;
                    *cache = None;
                }
                _ => {}
            }
        }
    }

    /// Every persisted array: all parameters (including the fixed bank) and
    /// the batch-norm running statistics, with their logical dims.
    pub fn state_entries(&self) -> Vec<(String, Vec<u32>, Vec<T>)> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match &node.layer {
                Layer::Preproc { params } => {
                    let s = params.weights.shape();
                    out.push((
                        format!("{}.weight", node.name),
                        vec![s.n as u32, s.c as u32, s.h as u32, s.w as u32],
                        params.weights.data().to_vec(),
                    ));
                }
                Layer::Conv { params, .. } => {
                    let s = params.weights.shape();
                    out.push((
                        format!("{}.weight", node.name),
                        vec![s.n as u32, s.c as u32, s.h as u32, s.w as u32],
                        params.weights.data().to_vec(),
                    ));
                }
                Layer::Scale { params, .. } => {
                    let c = params.channels() as u32;
                    out.push((
                        format!("{}.gamma", node.name),
                        vec![c],
                        params.gamma.data().to_vec(),
                    ));
                    out.push((
                        format!("{}.beta", node.name),
                        vec![c],
                        params.beta.data().to_vec(),
                    ));
                }
                Layer::Bn { state, .. } => {
                    let c = state.channels() as u32;
                    out.push((
                        format!("{}.running_mean", node.name),
                        vec![c],
                        state.running_mean.clone(),
                    ));
                    out.push((
                        format!("{}.running_var", node.name),
                        vec![c],
                        state.running_var.clone(),
                    ));
                }
                Layer::Fc { params, .. } => {
                    out.push((
                        format!("{}.weight", node.name),
                        vec![params.out_dim() as u32, params.in_dim() as u32],
                        params.weights.data().to_vec(),
                    ));
                    out.push((
                        format!("{}.bias", node.name),
                        vec![params.out_dim() as u32],
                        params.bias.data().to_vec(),
                    ));
                }
                _ => {}
            }
        }
        out
    }

    /// Restore one persisted array by name, verifying its dims.
    pub fn restore_entry(&mut self, name: &str, dims: &[u32], data: Vec<T>) -> Result<()> {
        let shape_err = |expected: Vec<u32>| Error::CheckpointShape {
            name: name.to_string(),
            stored: dims.to_vec(),
            expected,
        };
        let (node_name, field) = name
            .rsplit_once('.')
            .ok_or_else(|| Error::CheckpointUnknownParam(name.to_string()))?;
        // bn running stats pair: node name is everything before the field
        for node in &mut self.nodes {
            if node.name != node_name {
                continue;
            }
            match (&mut node.layer, field) {
                (Layer::Preproc { params }, "weight") | (Layer::Conv { params, .. }, "weight") => {
                    let s = params.weights.shape();
                    let expected = vec![s.n as u32, s.c as u32, s.h as u32, s.w as u32];
                    if dims != expected || data.len() != params.weights.numel() {
                        return Err(shape_err(expected));
                    }
                    params.weights.data_mut().copy_from_slice(&data);
                    return Ok(());
                }
                (Layer::Scale { params, .. }, "gamma") => {
                    let expected = vec![params.channels() as u32];
                    if dims != expected {
                        return Err(shape_err(expected));
                    }
                    params.gamma.data_mut().copy_from_slice(&data);
                    return Ok(());
                }
                (Layer::Scale { params, .. }, "beta") => {
                    let expected = vec![params.channels() as u32];
                    if dims != expected {
                        return Err(shape_err(expected));
                    }
                    params.beta.data_mut().copy_from_slice(&data);
                    return Ok(());
                }
                (Layer::Bn { state, .. }, "running_mean") => {
                    let expected = vec![state.channels() as u32];
                    if dims != expected {
                        return Err(shape_err(expected));
                    }
                    let var = state.running_var.clone();
                    state.set_running(data, var);
                    return Ok(());
                }
                (Layer::Bn { state, .. }, "running_var") => {
                    let expected = vec![state.channels() as u32];
                    if dims != expected {
                        return Err(shape_err(expected));
                    }
                    let mean = state.running_mean.clone();
                    state.set_running(mean, data);
                    return Ok(());
                }
                (Layer::Fc { params, .. }, "weight") => {
                    let expected = vec![params.out_dim() as u32, params.in_dim() as u32];
                    if dims != expected {
                        return Err(shape_err(expected));
                    }
                    params.weights.data_mut().copy_from_slice(&data);
                    return Ok(());
                }
                (Layer::Fc { params, .. }, "bias") => {
                    let expected = vec![params.out_dim() as u32];
                    if dims != expected {
                        return Err(shape_err(expected));
                    }
                    params.bias.data_mut().copy_from_slice(&data);
                    return Ok(());
                }
                _ => return Err(Error::CheckpointUnknownParam(name.to_string())),
            }
        }
        Err(Error::CheckpointUnknownParam(name.to_string()))
    }
}

fn sample_gaussian<T: Scalar, R: rand::Rng>(
    tensor: &mut Tensor<T>,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) {
    let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
    let normal = Normal::new(0.0f64, std).expect("positive std");
    for v in tensor.data_mut() {
        *v = T::from_f64(normal.sample(rng));
    }
}

/// Index of the most probable class per batch row.
pub fn argmax_rows<T: Scalar>(probs: &Tensor<T>) -> Vec<usize> {
    let s = probs.shape();
    (0..s.n)
        .map(|n| {
            let row = probs.image(n);
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::build_yedroudj;
    use super::*;

    fn small_config() -> YedroudjConfig {
        YedroudjConfig {
            input_size: 32,
            block_channels: [8, 8, 8, 8, 16],
            ..YedroudjConfig::default()
        }
    }

    #[test]
    fn default_config_builds() {
        let g = build_yedroudj::<f32>(&YedroudjConfig::default()).unwrap();
        assert_eq!(g.nodes().len(), g.config().layer_specs().len());
    }

    #[test]
    fn abs_only_in_block1_trunc_only_in_blocks_1_2() {
        let g = build_yedroudj::<f32>(&YedroudjConfig::default()).unwrap();
        let abs_layers: Vec<&str> = g
            .nodes()
            .iter()
            .filter(|n| matches!(n.layer, Layer::Abs { .. }))
            .map(|n| n.name.as_str())
            .collect();
        assert_eq!(abs_layers, ["block1.abs"]);
        let trunc: Vec<(&str, u32)> = g
            .nodes()
            .iter()
            .filter_map(|n| match &n.layer {
                Layer::Trunc { spec, .. } => Some((n.name.as_str(), spec.t)),
                _ => None,
            })
            .collect();
        assert_eq!(trunc, [("block1.trunc", 3), ("block2.trunc", 2)]);
        let relu_blocks: Vec<&str> = g
            .nodes()
            .iter()
            .filter(|n| matches!(n.layer, Layer::Relu { .. }) && n.name.starts_with("block"))
            .map(|n| n.name.as_str())
            .collect();
        assert_eq!(relu_blocks, ["block3.relu", "block4.relu", "block5.relu"]);
    }

    #[test]
    fn default_parameter_count_matches_width_plan() {
        let g = build_yedroudj::<f32>(&YedroudjConfig::default()).unwrap();
        let (excl, total) = g.parameter_count();
        // conv: 22500+22500+8640+18432+147456, fc: 65792+263168+2050
        assert_eq!(excl, 550_538);
        // plus 2 per channel for each scale layer
        assert_eq!(total, 550_538 + 2 * (30 + 30 + 32 + 64 + 256));
    }

    #[test]
    fn zero_fc3_gives_uniform_probabilities() {
        let mut g = build_yedroudj::<f32>(&small_config()).unwrap();
        g.init_xavier(7);
        // zero the last fully connected layer: logits collapse to 0
        g.visit_learnable_mut(|name, _, t| {
            if name.starts_with("fc3") {
                t.data_mut().fill(0.0);
            }
        });
        let batch = Tensor::<f32>::full(2, 1, 32, 32, 128.0);
        g.forward(&batch, None).unwrap(); // train-mode pass seeds bn stats
        g.set_mode(Mode::Eval);
        let (probs, _) = g.forward(&batch, None).unwrap();
        for &p in probs.data() {
            assert!((p - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn probabilities_sum_to_one_with_random_weights() {
        let mut g = build_yedroudj::<f32>(&small_config()).unwrap();
        g.init_xavier(3);
        let batch = Tensor::<f32>::random_uniform(
            4,
            1,
            32,
            32,
            0.0,
            255.0,
            &mut ChaCha8Rng::seed_from_u64(1),
        );
        let (probs, loss) = g.forward(&batch, Some(&[0, 1, 0, 1])).unwrap();
        for n in 0..4 {
            let sum: f64 = probs.image(n).iter().map(|v| *v as f64).sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
        assert!(loss.unwrap().is_finite());
    }

    #[test]
    fn eval_forward_is_bitwise_deterministic() {
        let mut g = build_yedroudj::<f32>(&small_config()).unwrap();
        g.init_xavier(11);
        let batch = Tensor::<f32>::random_uniform(
            2,
            1,
            32,
            32,
            0.0,
            255.0,
            &mut ChaCha8Rng::seed_from_u64(2),
        );
        g.forward(&batch, None).unwrap(); // train-mode pass seeds bn stats
        g.set_mode(Mode::Eval);
        let (a, _) = g.forward(&batch, None).unwrap();
        let (b, _) = g.forward(&batch, None).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn too_small_input_rejected() {
        let mut g = build_yedroudj::<f32>(&small_config()).unwrap();
        g.init_xavier(5);
        let batch = Tensor::<f32>::zeros(1, 1, 16, 16);
        assert!(g.forward(&batch, None).is_err());
    }

    #[test]
    fn backward_without_forward_is_an_error() {
        let mut g = build_yedroudj::<f32>(&small_config()).unwrap();
        g.init_xavier(5);
        assert!(g.backward(&[0]).is_err());
    }

    #[test]
    fn same_seed_gives_bitwise_identical_weights() {
        let mut a = build_yedroudj::<f32>(&small_config()).unwrap();
        let mut b = build_yedroudj::<f32>(&small_config()).unwrap();
        a.init_xavier(42);
        b.init_xavier(42);
        let sa = a.state_entries();
        let sb = b.state_entries();
        assert_eq!(sa.len(), sb.len());
        for ((na, da, va), (nb, db, vb)) in sa.iter().zip(&sb) {
            assert_eq!(na, nb);
            assert_eq!(da, db);
            assert_eq!(va, vb);
        }
    }

    #[test]
    fn xavier_variance_matches_fan_formula() {
        let mut g = build_yedroudj::<f32>(&YedroudjConfig::default()).unwrap();
        g.init_xavier(1234);
        // block5.conv: 64 -> 256 channels, 3x3 kernel, 147456 weights
        let mut found = false;
        g.visit_learnable_mut(|name, _, t| {
            if name == "block5.conv.weight" {
                found = true;
                assert_eq!(t.numel(), 147_456);
                let fan_in = (64 * 9) as f64;
                let fan_out = (256 * 9) as f64;
                let target = 2.0 / (fan_in + fan_out);
                let mean: f64 = t.iter().map(|&v| v as f64).sum::<f64>() / t.numel() as f64;
                let var: f64 =
                    t.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / t.numel() as f64;
                assert!(
                    (var - target).abs() / target < 0.1,
                    "var {var} vs target {target}"
                );
            }
        });
        assert!(found);
    }

    #[test]
    fn no_conv_bias_exists_and_scale_owns_2c_params() {
        let g = build_yedroudj::<f32>(&YedroudjConfig::default()).unwrap();
        for node in g.nodes() {
            if let Layer::Scale { params, .. } = &node.layer {
                assert_eq!(
                    params.gamma.numel() + params.beta.numel(),
                    2 * params.channels()
                );
            }
        }
        // parameter names: conv layers expose exactly one tensor (weights)
        let mut g = build_yedroudj::<f32>(&YedroudjConfig::default()).unwrap();
        let mut conv_params = 0;
        g.visit_learnable_mut(|name, _, _| {
            if name.contains(".conv.") {
                assert!(name.ends_with(".weight"), "unexpected conv param {name}");
                conv_params += 1;
            }
        });
        assert_eq!(conv_params, 5);
    }

    #[test]
    fn doubling_block5_width_doubles_its_conv_and_fc1_share() {
        let base = build_yedroudj::<f32>(&YedroudjConfig::default())
            .unwrap()
            .parameter_count()
            .0;
        let cfg2 = YedroudjConfig {
            block_channels: [30, 30, 32, 64, 512],
            ..YedroudjConfig::default()
        };
        let g2 = build_yedroudj::<f32>(&cfg2).unwrap();
        // only block5's conv (64*c*9) and fc1's weight matrix (c*256) scale with c
        let expected = base - 147_456 - 256 * 256 + 2 * 147_456 + 512 * 256;
        assert_eq!(g2.parameter_count().0, expected);
    }
}
