use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::softmax_cross_entropy;
use super::{Dataset, FlError, Hyperparams, Network, ParamVector, Result};
use crate::numeric::{exact_sum, stream_rng};

const EVAL_CHUNK: usize = 512;

/// Outcome of one client's local update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub pre_loss: f64,
    pub post_loss: f64,
    pub samples: usize,
    pub steps: usize,
}

fn check_shapes(net: &Network, params: &ParamVector, data: &Dataset) -> Result<()> {
    net.check_params(params)?;
    if data.dim() != net.input_dim() || data.classes() != net.classes() {
        return Err(FlError::InvalidArgument(format!(
            "dataset is {}-dimensional with {} classes, model expects {} and {}",
            data.dim(),
            data.classes(),
            net.input_dim(),
            net.classes()
        )));
    }
    if data.is_empty() {
        return Err(FlError::InvalidArgument("dataset is empty".into()));
    }
    Ok(())
}

fn batch(data: &Dataset, rows: impl ExactSizeIterator<Item = usize>) -> Array2<f64> {
    let n = rows.len();
    let dim = data.dim();
    let mut x = Vec::with_capacity(n * dim);
    for i in rows {
        x.extend(data.row(i).iter().map(|&v| v as f64));
    }
    Array2::from_shape_vec((n, dim), x).expect("rows have the dataset dimension")
}

fn per_sample_losses(net: &Network, params: &[f64], data: &Dataset) -> Vec<f64> {
    let mut losses = Vec::with_capacity(data.len());
    for start in (0..data.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(data.len());
        let logits = net.logits(params, batch(data, start..end));
        losses.extend(softmax_cross_entropy(&logits, &data.labels()[start..end], false).0);
    }
    losses
}

/// Mean cross-entropy of the model over every sample, without updating it.
///
/// The sum is correctly rounded, so the result is bit-identical under any
/// reordering of the samples.
pub fn loss_pass(net: &Network, params: &ParamVector, data: &Dataset) -> Result<f64> {
    check_shapes(net, params, data)?;
    let losses = per_sample_losses(net, params.as_slice(), data);
    Ok(exact_sum(losses) / data.len() as f64)
}

/// Fraction of samples whose arg-max logit equals the label.
pub fn accuracy(net: &Network, params: &ParamVector, data: &Dataset) -> Result<f64> {
    check_shapes(net, params, data)?;
    let mut correct = 0usize;
    for start in (0..data.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(data.len());
        let logits = net.logits(params.as_slice(), batch(data, start..end));
        for (row, &y) in logits.outer_iter().zip(&data.labels()[start..end]) {
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            correct += (best == y as usize) as usize;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Mean loss over the selected rows and its gradient.
pub fn loss_and_gradient(
    net: &Network,
    params: &ParamVector,
    data: &Dataset,
    rows: &[usize],
) -> Result<(f64, Vec<f64>)> {
    check_shapes(net, params, data)?;
    if rows.is_empty() || rows.iter().any(|&r| r >= data.len()) {
        return Err(FlError::InvalidArgument("bad row selection".into()));
    }
    let labels: Vec<u8> = rows.iter().map(|&r| data.labels()[r]).collect();
    let mut grad = vec![0.0; net.param_count()];
    let loss = net.loss_grad(
        params.as_slice(),
        batch(data, rows.iter().copied()),
        &labels,
        &mut grad,
    );
    Ok((loss, grad))
}

/// Mini-batch SGD for `epochs * ceil(|D| / batch)` steps, reshuffling every
/// epoch from a stream seeded by `seed`. The input vector is left untouched.
pub fn local_train(
    net: &Network,
    params: &ParamVector,
    data: &Dataset,
    hyper: &Hyperparams,
    seed: u64,
) -> Result<(ParamVector, TrainReport)> {
    check_shapes(net, params, data)?;
    hyper.validate()?;
    let pre_loss = loss_pass(net, params, data)?;
    let mut w = params.clone();
    let mut rng = stream_rng(seed, &[0x7367_6400]);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0.0; net.param_count()];
    let mut labels = Vec::with_capacity(hyper.batch_size);
    let mut steps = 0;
    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(hyper.batch_size) {
            labels.clear();
            labels.extend(chunk.iter().map(|&r| data.labels()[r]));
            net.loss_grad(
                w.as_slice(),
                batch(data, chunk.iter().copied()),
                &labels,
                &mut grad,
            );
            for (p, g) in w.0.iter_mut().zip(&grad) {
                *p -= hyper.learning_rate * g;
            }
            steps += 1;
        }
    }
    let post_loss = loss_pass(net, &w, data)?;
    Ok((
        w,
        TrainReport {
            pre_loss,
            post_loss,
            samples: data.len(),
            steps,
        },
    ))
}
