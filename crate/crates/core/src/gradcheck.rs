//! Central-difference gradient checking for every layer primitive.
//!
//! All checks run in `f64` with step 1e-5 on inputs scaled to O(1). For a
//! non-scalar op the scalar objective is `sum(r ⊙ f(x))` with a fixed random
//! `r`, whose analytic gradient is exactly `backward(r)`. Elements lying
//! within `10·step` of a subdifferential breakpoint (trunc/relu/abs) are
//! skipped rather than compared.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ops::{self, PoolSpec, TruncSpec};
use crate::tensor::{Mode, Tensor};

pub const STEP: f64 = 1e-5;
const WORST_KEPT: usize = 5;

#[derive(Debug, Clone)]
pub struct Offender {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

/// Result for one parameter group (input, weights, ...).
#[derive(Debug, Clone)]
pub struct GroupReport {
    pub group: String,
    pub max_rel_err: f64,
    pub checked: usize,
    pub skipped: usize,
    pub worst: Vec<Offender>,
}

#[derive(Debug, Clone)]
pub struct OpReport {
    pub op: String,
    pub groups: Vec<GroupReport>,
}

impl OpReport {
    pub fn max_rel_err(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.max_rel_err)
            .fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err() <= tol
    }
}

impl std::fmt::Display for OpReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: max_rel_err={:.3e}", self.op, self.max_rel_err())?;
        for g in &self.groups {
            write!(
                f,
                "  [{} {:.3e} ({} checked, {} skipped)]",
                g.group, g.max_rel_err, g.checked, g.skipped
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub tol: f64,
    pub reports: Vec<OpReport>,
}

impl SuiteReport {
    pub fn all_pass(&self) -> bool {
        self.reports.iter().all(|r| r.passes(self.tol))
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-3);
    (analytic - numeric).abs() / denom
}

/// Compare analytic gradients of `loss` against central differences, group
/// by group. `kink_dist(group, index, value)` returns the distance from that
/// element to the nearest non-differentiable point (`f64::INFINITY` for
/// smooth ops); elements closer than `10·STEP` are skipped.
pub fn central_diff_check(
    op: &str,
    mut values: Vec<Vec<f64>>,
    group_names: &[&str],
    analytic: &[Vec<f64>],
    loss: impl Fn(&[Vec<f64>]) -> f64,
    kink_dist: impl Fn(usize, usize, f64) -> f64,
) -> OpReport {
    assert_eq!(values.len(), group_names.len());
    assert_eq!(values.len(), analytic.len());
    let mut groups = Vec::with_capacity(values.len());
    for gi in 0..values.len() {
        let mut max_rel = 0.0f64;
        let mut checked = 0usize;
        let mut skipped = 0usize;
        let mut worst: Vec<Offender> = Vec::new();
        for idx in 0..values[gi].len() {
            let v0 = values[gi][idx];
            if kink_dist(gi, idx, v0) < 10.0 * STEP {
                skipped += 1;
                continue;
            }
            values[gi][idx] = v0 + STEP;
            let plus = loss(&values);
            values[gi][idx] = v0 - STEP;
            let minus = loss(&values);
            values[gi][idx] = v0;
            let numeric = (plus - minus) / (2.0 * STEP);
            let a = analytic[gi][idx];
            let err = rel_err(a, numeric);
            max_rel = max_rel.max(err);
            checked += 1;
            worst.push(Offender {
                index: idx,
                analytic: a,
                numeric,
                rel_err: err,
            });
            worst.sort_by(|x, y| y.rel_err.total_cmp(&x.rel_err));
            worst.truncate(WORST_KEPT);
        }
        groups.push(GroupReport {
            group: group_names[gi].to_string(),
            max_rel_err: max_rel,
            checked,
            skipped,
            worst,
        });
    }
    OpReport {
        op: op.to_string(),
        groups,
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, n: usize, c: usize, h: usize, w: usize, amp: f64) -> Tensor<f64> {
    Tensor::random_uniform(n, c, h, w, -amp, amp, rng)
}

fn smooth(_g: usize, _i: usize, _v: f64) -> f64 {
    f64::INFINITY
}

pub fn check_conv2d() -> OpReport {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let input = rand_tensor(&mut rng, 1, 2, 6, 6, 1.5);
    let weights = rand_tensor(&mut rng, 3, 2, 3, 3, 1.0);
    let params = ops::ConvParams::new(weights.clone(), 1, 1, true);
    let r = rand_tensor(&mut rng, 1, 3, 6, 6, 1.0);

    let grads = ops::conv2d_backward(&input, &params, &r, true, true).unwrap();
    let analytic = vec![
        grads.input.unwrap().data().to_vec(),
        grads.weights.unwrap().data().to_vec(),
    ];
    let (ishape, wshape) = (input.shape(), weights.shape());
    let loss = move |vals: &[Vec<f64>]| {
        let x = Tensor::from_vec(ishape.n, ishape.c, ishape.h, ishape.w, vals[0].clone()).unwrap();
        let w = Tensor::from_vec(wshape.n, wshape.c, wshape.h, wshape.w, vals[1].clone()).unwrap();
        let p = ops::ConvParams::new(w, 1, 1, true);
        let out = ops::conv2d(&x, &p).unwrap();
        dot(out.data(), r.data())
    };
    central_diff_check(
        "conv2d",
        vec![input.data().to_vec(), weights.data().to_vec()],
        &["input", "weights"],
        &analytic,
        loss,
        smooth,
    )
}

pub fn check_trunc() -> OpReport {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let spec = TruncSpec::new(2).unwrap();
    let input = rand_tensor(&mut rng, 1, 2, 5, 5, 4.0);
    let r = rand_tensor(&mut rng, 1, 2, 5, 5, 1.0);
    let analytic = vec![ops::trunc_backward(&input, spec, &r).data().to_vec()];
    let shape = input.shape();
    let r2 = r.clone();
    let loss = move |vals: &[Vec<f64>]| {
        let x = Tensor::from_vec(shape.n, shape.c, shape.h, shape.w, vals[0].clone()).unwrap();
        dot(ops::trunc(&x, spec).data(), r2.data())
    };
    let t = spec.t as f64;
    central_diff_check(
        "trunc",
        vec![input.data().to_vec()],
        &["input"],
        &analytic,
        loss,
        move |_, _, v| (v - t).abs().min((v + t).abs()),
    )
}

pub fn check_abs() -> OpReport {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let input = rand_tensor(&mut rng, 1, 2, 5, 5, 1.5);
    let r = rand_tensor(&mut rng, 1, 2, 5, 5, 1.0);
    let analytic = vec![ops::abs_backward(&input, &r).data().to_vec()];
    let shape = input.shape();
    let r2 = r.clone();
    let loss = move |vals: &[Vec<f64>]| {
        let x = Tensor::from_vec(shape.n, shape.c, shape.h, shape.w, vals[0].clone()).unwrap();
        dot(ops::abs_layer(&x).data(), r2.data())
    };
    central_diff_check(
        "abs",
        vec![input.data().to_vec()],
        &["input"],
        &analytic,
        loss,
        |_, _, v| v.abs(),
    )
}

pub fn check_relu() -> OpReport {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let input = rand_tensor(&mut rng, 1, 2, 5, 5, 1.5);
    let r = rand_tensor(&mut rng, 1, 2, 5, 5, 1.0);
    let analytic = vec![ops::relu_backward(&input, &r).data().to_vec()];
    let shape = input.shape();
    let r2 = r.clone();
    let loss = move |vals: &[Vec<f64>]| {
        let x = Tensor::from_vec(shape.n, shape.c, shape.h, shape.w, vals[0].clone()).unwrap();
        dot(ops::relu(&x).data(), r2.data())
    };
    central_diff_check(
        "relu",
        vec![input.data().to_vec()],
        &["input"],
        &analytic,
        loss,
        |_, _, v| v.abs(),
    )
}

/// Train-mode batch norm: the gradient must also flow through the batch
/// mean and variance, which the fresh-state loss closure exercises.
pub fn check_batch_norm() -> OpReport {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let input = rand_tensor(&mut rng, 4, 3, 3, 3, 1.5);
    let r = rand_tensor(&mut rng, 4, 3, 3, 3, 1.0);
    let mut state = ops::BnState::<f64>::new(3, 1e-5, 0.9);
    let (_, cache) = ops::batch_norm(&input, &mut state).unwrap();
    let analytic = vec![ops::batch_norm_backward(&cache, &r).data().to_vec()];
    let shape = input.shape();
    let r2 = r.clone();
    let loss = move |vals: &[Vec<f64>]| {
        let x = Tensor::from_vec(shape.n, shape.c, shape.h, shape.w, vals[0].clone()).unwrap();
        let mut st = ops::BnState::<f64>::new(3, 1e-5, 0.9);
        st.mode = Mode::Train;
        let (out, _) = ops::batch_norm(&x, &mut st).unwrap();
        dot(out.data(), r2.data())
    };
    central_diff_check(
        "batch_norm",
        vec![input.data().to_vec()],
        &["input"],
        &analytic,
        loss,
        smooth,
    )
}

pub fn check_scale() -> OpReport {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let input = rand_tensor(&mut rng, 2, 3, 3, 3, 1.5);
    let gamma = rand_tensor(&mut rng, 1, 3, 1, 1, 1.0);
    let beta = rand_tensor(&mut rng, 1, 3, 1, 1, 1.0);
    let r = rand_tensor(&mut rng, 2, 3, 3, 3, 1.0);
    let params = ops::ScaleParams {
        gamma: gamma.clone(),
        beta: beta.clone(),
    };
    let grads = ops::scale_backward(&input, &params, &r).unwrap();
    let analytic = vec![
        grads.input.data().to_vec(),
        grads.gamma.data().to_vec(),
        grads.beta.data().to_vec(),
    ];
    let shape = input.shape();
    let r2 = r.clone();
    let loss = move |vals: &[Vec<f64>]| {
        let x = Tensor::from_vec(shape.n, shape.c, shape.h, shape.w, vals[0].clone()).unwrap();
        let p = ops::ScaleParams {
            gamma: Tensor::from_vec(1, 3, 1, 1, vals[1].clone()).unwrap(),
            beta: Tensor::from_vec(1, 3, 1, 1, vals[2].clone()).unwrap(),
        };
        dot(ops::scale(&x, &p).unwrap().data(), r2.data())
    };
    central_diff_check(
        "scale",
        vec![
            input.data().to_vec(),
            gamma.data().to_vec(),
            beta.data().to_vec(),
        ],
        &["input", "gamma", "beta"],
        &analytic,
        loss,
        smooth,
    )
}

pub fn check_avg_pool() -> OpReport {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let spec = PoolSpec {
        window: 3,
        stride: 2,
        pad: 1,
    };
    let input = rand_tensor(&mut rng, 1, 2, 6, 6, 1.5);
    let out_shape = ops::avg_pool(&input, spec).unwrap().shape();
    let r = rand_tensor(&mut rng, out_shape.n, out_shape.c, out_shape.h, out_shape.w, 1.0);
    let analytic = vec![ops::avg_pool_backward(&input, spec, &r).unwrap().data().to_vec()];
    let shape = input.shape();
    let r2 = r.clone();
    let loss = move |vals: &[Vec<f64>]| {
        let x = Tensor::from_vec(shape.n, shape.c, shape.h, shape.w, vals[0].clone()).unwrap();
        dot(ops::avg_pool(&x, spec).unwrap().data(), r2.data())
    };
    central_diff_check(
        "avg_pool",
        vec![input.data().to_vec()],
        &["input"],
        &analytic,
        loss,
        smooth,
    )
}

pub fn check_global_avg_pool() -> OpReport {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let input = rand_tensor(&mut rng, 2, 3, 4, 4, 1.5);
    let r = rand_tensor(&mut rng, 2, 3, 1, 1, 1.0);
    let analytic = vec![ops::global_avg_pool_backward(input.shape(), &r).data().to_vec()];
    let shape = input.shape();
    let r2 = r.clone();
    let loss = move |vals: &[Vec<f64>]| {
        let x = Tensor::from_vec(shape.n, shape.c, shape.h, shape.w, vals[0].clone()).unwrap();
        dot(ops::global_avg_pool(&x).data(), r2.data())
    };
    central_diff_check(
        "global_avg_pool",
        vec![input.data().to_vec()],
        &["input"],
        &analytic,
        loss,
        smooth,
    )
}

pub fn check_fully_connected() -> OpReport {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let input = rand_tensor(&mut rng, 2, 10, 1, 1, 1.5);
    let weights = rand_tensor(&mut rng, 4, 10, 1, 1, 1.0);
    let bias = rand_tensor(&mut rng, 1, 4, 1, 1, 1.0);
    let r = rand_tensor(&mut rng, 2, 4, 1, 1, 1.0);
    let params = ops::FcParams {
        weights: weights.clone(),
        bias: bias.clone(),
    };
    let grads = ops::fully_connected_backward(&input, &params, &r).unwrap();
    let analytic = vec![
        grads.input.data().to_vec(),
        grads.weights.data().to_vec(),
        grads.bias.data().to_vec(),
    ];
    let r2 = r.clone();
    let loss = move |vals: &[Vec<f64>]| {
        let x = Tensor::from_vec(2, 10, 1, 1, vals[0].clone()).unwrap();
        let p = ops::FcParams {
            weights: Tensor::from_vec(4, 10, 1, 1, vals[1].clone()).unwrap(),
            bias: Tensor::from_vec(1, 4, 1, 1, vals[2].clone()).unwrap(),
        };
        dot(ops::fully_connected(&x, &p).unwrap().data(), r2.data())
    };
    central_diff_check(
        "fully_connected",
        vec![
            input.data().to_vec(),
            weights.data().to_vec(),
            bias.data().to_vec(),
        ],
        &["input", "weights", "bias"],
        &analytic,
        loss,
        smooth,
    )
}

pub fn check_softmax_xent() -> OpReport {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let logits = rand_tensor(&mut rng, 4, 2, 1, 1, 2.0);
    let labels = [0usize, 1, 1, 0];
    let out = ops::softmax_xent(&logits, &labels).unwrap();
    let analytic = vec![ops::softmax_xent_backward(&out.probabilities, &labels).data().to_vec()];
    let loss = move |vals: &[Vec<f64>]| {
        let x = Tensor::from_vec(4, 2, 1, 1, vals[0].clone()).unwrap();
        ops::softmax_xent(&x, &labels).unwrap().loss
    };
    central_diff_check(
        "softmax_xent",
        vec![logits.data().to_vec()],
        &["logits"],
        &analytic,
        loss,
        smooth,
    )
}

/// The full layer suite, in the order the network composes them.
pub fn run_suite(tol: f64) -> SuiteReport {
    let reports = vec![
        check_conv2d(),
        check_abs(),
        check_trunc(),
        check_relu(),
        check_batch_norm(),
        check_scale(),
        check_avg_pool(),
        check_global_avg_pool(),
        check_fully_connected(),
        check_softmax_xent(),
    ];
    SuiteReport { tol, reports }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_layer_checks_to_roundoff() {
        let report = check_fully_connected();
        assert!(
            report.max_rel_err() <= 1e-8,
            "fully_connected rel err {}",
            report.max_rel_err()
        );
    }

    #[test]
    fn conv_checks_to_1e4() {
        let report = check_conv2d();
        assert!(report.passes(1e-4), "{report}");
    }

    #[test]
    fn batch_norm_statistics_paths_check() {
        let report = check_batch_norm();
        assert!(report.passes(1e-4), "{report}");
    }
}
