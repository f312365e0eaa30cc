//! Central finite-difference checks for the autodiff tape.
//!
//! Each check builds a scalar loss `sum(op(inputs) ∘ R)` for a fixed random
//! `R`, so every output element contributes with a distinct weight. The
//! reported error is norm-wise: `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Graph, Tensor, Var};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-4;
pub const OP_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub name: String,
    pub max_rel_error: f64,
    pub passed: bool,
}

/// Norm-wise relative error, 0 when both vectors vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn weighted_loss<F>(
    inputs: &[Tensor<f64>],
    weights: &mut Option<Vec<f64>>,
    seed: u64,
    build: &F,
) -> Result<(Graph<f64>, Vec<Var>, Var)>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &vars)?;
    let dims = g.dims(out).to_vec();
    let w = weights.get_or_insert_with(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        (0..g.value(out).numel()).map(|_| rng.random_range(-1.0..1.0)).collect()
    });
    let loss = if dims.is_empty() {
        let r = g.input(Tensor::scalar(w[0]));
        g.mul(out, r)?
    } else {
        let r = g.input(Tensor::new(dims, w.clone())?);
        g.mul(out, r)?
    };
    let loss = g.sum(loss);
    Ok((g, vars, loss))
}

/// Compares analytic and numeric gradients of `build` at `inputs`.
pub fn check_op<F>(name: &str, inputs: &[Tensor<f64>], seed: u64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut weights = None;
    let (mut g, vars, loss) = weighted_loss(inputs, &mut weights, seed, &build)?;
    g.backward(loss)?;
    let mut worst = 0.0f64;
    for (i, v) in vars.iter().enumerate() {
        let analytic = g
            .grad(*v)
            .map(|t| t.to_f64_vec())
            .unwrap_or_else(|| vec![0.0; inputs[i].numel()]);
        let mut numeric = Vec::with_capacity(analytic.len());
        let mut probe = inputs.to_vec();
        for j in 0..inputs[i].numel() {
            let base = inputs[i].data()[j];
            probe[i].data_mut()[j] = base + FD_STEP;
            let up = eval_loss(&probe, &mut weights, seed, &build)?;
            probe[i].data_mut()[j] = base - FD_STEP;
            let down = eval_loss(&probe, &mut weights, seed, &build)?;
            probe[i].data_mut()[j] = base;
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    Ok(GradCheckReport {
        name: name.to_string(),
        max_rel_error: worst,
        passed: worst <= OP_TOLERANCE,
    })
}

fn eval_loss<F>(inputs: &[Tensor<f64>], weights: &mut Option<Vec<f64>>, seed: u64, build: &F) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let (g, _, loss) = weighted_loss(inputs, weights, seed, build)?;
    g.value(loss).item()
}

fn random(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor<f64> {
    let n = dims.iter().product();
    Tensor::new(dims.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Values at least 0.1 away from zero, so ReLU's kink is never straddled.
fn away_from_zero(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor<f64> {
    let n = dims.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.1..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(dims.to_vec(), data).unwrap()
}

/// Distinct values spaced 0.01 apart in shuffled order, so max-pool winners
/// are unambiguous under a 1e-4 perturbation.
fn distinct(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor<f64> {
    let n: usize = dims.iter().product();
    let mut data: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - 0.5).collect();
    for i in (1..n).rev() {
        data.swap(i, rng.random_range(0..=i));
    }
    Tensor::new(dims.to_vec(), data).unwrap()
}

/// Runs the finite-difference check over every differentiable op.
#[allow(clippy::vec_init_then_push)]
pub fn run_op_suite(seed: u64) -> Result<Vec<GradCheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let mut out = Vec::new();

    out.push(check_op(
        "matmul",
        &[random(r, &[3, 4]), random(r, &[4, 5])],
        seed,
        |g, v| g.matmul(v[0], v[1]),
    )?);
    out.push(check_op(
        "matmul_shared_rhs",
        &[random(r, &[2, 3, 4]), random(r, &[4, 2])],
        seed,
        |g, v| g.matmul(v[0], v[1]),
    )?);
    out.push(check_op(
        "matmul_batched",
        &[random(r, &[2, 3, 4]), random(r, &[2, 4, 2])],
        seed,
        |g, v| g.matmul(v[0], v[1]),
    )?);
    out.push(check_op(
        "add",
        &[random(r, &[2, 3]), random(r, &[2, 3])],
        seed,
        |g, v| g.add(v[0], v[1]),
    )?);
    out.push(check_op(
        "add_broadcast",
        &[random(r, &[2, 3, 4]), random(r, &[4])],
        seed,
        |g, v| g.add(v[0], v[1]),
    )?);
    out.push(check_op(
        "mul",
        &[random(r, &[2, 3]), random(r, &[2, 3])],
        seed,
        |g, v| g.mul(v[0], v[1]),
    )?);
    out.push(check_op(
        "mul_broadcast",
        &[random(r, &[3, 4]), random(r, &[4])],
        seed,
        |g, v| g.mul(v[0], v[1]),
    )?);
    out.push(check_op("relu", &[away_from_zero(r, &[4, 5])], seed, |g, v| {
        Ok(g.relu(v[0]))
    })?);
    out.push(check_op("scale", &[random(r, &[6])], seed, |g, v| {
        Ok(g.scale(v[0], -1.7))
    })?);
    let pos = Tensor::new(vec![5], (0..5).map(|_| r.random_range(0.2..2.0)).collect())?;
    out.push(check_op("ln", &[pos], seed, |g, v| g.ln(v[0], 1e-12))?);
    out.push(check_op("sum", &[random(r, &[3, 2])], seed, |g, v| Ok(g.sum(v[0])))?);
    out.push(check_op("mean", &[random(r, &[3, 2])], seed, |g, v| Ok(g.mean(v[0])))?);
    out.push(check_op("mean_axis", &[random(r, &[2, 3, 4])], seed, |g, v| {
        g.mean_axis(v[0], 1)
    })?);
    out.push(check_op(
        "conv2d",
        &[random(r, &[2, 2, 5, 5]), random(r, &[3, 2, 3, 3]), random(r, &[3])],
        seed,
        |g, v| g.conv2d(v[0], v[1], Some(v[2]), 1, 1),
    )?);
    out.push(check_op(
        "conv2d_strided",
        &[random(r, &[1, 2, 6, 5]), random(r, &[2, 2, 3, 2])],
        seed,
        |g, v| g.conv2d(v[0], v[1], None, 2, 0),
    )?);
    out.push(check_op("maxpool2d", &[distinct(r, &[2, 2, 4, 4])], seed, |g, v| {
        g.maxpool2d(v[0], 2, 2)
    })?);
    out.push(check_op(
        "avgpool_adaptive",
        &[random(r, &[1, 2, 5, 7])],
        seed,
        |g, v| g.avgpool_adaptive(v[0], 2, 3),
    )?);
    out.push(check_op(
        "layer_norm",
        &[random(r, &[3, 6]), random(r, &[6]), random(r, &[6])],
        seed,
        |g, v| g.layer_norm(v[0], v[1], v[2], 1e-5),
    )?);
    out.push(check_op("softmax_last", &[random(r, &[3, 5])], seed, |g, v| {
        g.softmax(v[0], 1)
    })?);
    out.push(check_op("softmax_first", &[random(r, &[4, 3])], seed, |g, v| {
        g.softmax(v[0], 0)
    })?);
    out.push(check_op("embedding_lookup", &[random(r, &[5, 3])], seed, |g, v| {
        g.embedding_lookup(v[0], &[4, 1, 1, 0])
    })?);
    out.push(check_op(
        "concat",
        &[random(r, &[2, 3]), random(r, &[2, 2])],
        seed,
        |g, v| g.concat(&[v[0], v[1]], 1),
    )?);
    out.push(check_op("reshape", &[random(r, &[2, 6])], seed, |g, v| {
        let y = g.reshape(v[0], &[3, 4])?;
        let w = g.input(Tensor::from_f64_slice(&[4], &[1.0, -2.0, 0.5, 3.0])?);
        g.mul(y, w)
    })?);
    out.push(check_op("transpose", &[random(r, &[2, 3, 4])], seed, |g, v| {
        g.transpose(v[0], 0, 2)
    })?);
    out.push(check_op("narrow", &[random(r, &[3, 5, 2])], seed, |g, v| {
        g.narrow(v[0], 1, 1, 3)
    })?);
    out.push(check_op("gather", &[random(r, &[3, 4])], seed, |g, v| {
        g.gather(v[0], &[2, 0, 3])
    })?);
    out.push(check_op(
        "scaled_dot_product_attention",
        &[random(r, &[2, 3, 4]), random(r, &[2, 5, 4]), random(r, &[2, 5, 4])],
        seed,
        |g, v| g.scaled_dot_product_attention(v[0], v[1], v[2], 2),
    )?);
    out.push(check_op("self_attention", &[random(r, &[1, 4, 6])], seed, |g, v| {
        g.scaled_dot_product_attention(v[0], v[0], v[0], 3)
    })?);
    Ok(out)
}
