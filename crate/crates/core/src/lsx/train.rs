use lsx_autodiff::{Graph, NodeId, Tensor};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::datasets::LabeledSet;
use crate::error::{Error, Result};
use crate::metrics::EVAL_CHUNK;
use crate::nets::{train_step, Classifier, Optimizer};

/// Everything one batch loss needs.
pub struct Batch<'a> {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    /// Row indices into the epoch's data set.
    pub rows: &'a [usize],
}

/// One pass over `(inputs, labels)` in an order drawn from `order_rng`.
/// `loss` records the batch objective given the bound (trainable)
/// parameters. Returns the mean pre-step batch loss.
pub fn run_epoch<M, F>(
    model: &mut M,
    inputs: &Tensor,
    labels: &[usize],
    optimizer: &mut Optimizer,
    order_rng: &mut ChaCha8Rng,
    batch_size: usize,
    mut loss: F,
) -> Result<f64>
where
    M: Classifier + ?Sized,
    F: FnMut(&mut Graph, &M, &[NodeId], &Batch<'_>) -> Result<NodeId>,
{
    if labels.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty set".into()));
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(order_rng);
    let mut total = 0.0;
    let mut batches = 0;
    for rows in order.chunks(batch_size) {
        let batch = Batch {
            inputs: inputs.select_rows(rows),
            labels: rows.iter().map(|&r| labels[r]).collect(),
            rows,
        };
        let mut g = Graph::new();
        let bound = model.params().bind(&mut g, true);
        let l = loss(&mut g, model, &bound, &batch)?;
        total += train_step(&mut g, l, &bound, model.params_mut(), optimizer)?;
        batches += 1;
    }
    Ok(total / batches as f64)
}

/// Cross-entropy of the model on a batch with constant inputs.
pub fn base_loss<M: Classifier + ?Sized>(g: &mut Graph, model: &M, params: &[NodeId], batch: &Batch<'_>) -> Result<NodeId> {
    let x = g.constant(batch.inputs.clone());
    let logits = model.forward(g, params, x)?;
    Ok(g.softmax_cross_entropy(logits, &batch.labels)?)
}

/// Plain cross-entropy training for `epochs` passes; returns per-epoch losses.
pub fn fit<M: Classifier + ?Sized>(
    model: &mut M,
    set: &LabeledSet,
    epochs: usize,
    optimizer: &mut Optimizer,
    order_rng: &mut ChaCha8Rng,
    batch_size: usize,
) -> Result<Vec<f64>> {
    (0..epochs)
        .map(|_| run_epoch(model, set.inputs(), set.labels(), optimizer, order_rng, batch_size, base_loss))
        .collect()
}

/// Mean cross-entropy over a whole set.
pub fn mean_loss(model: &dyn Classifier, set: &LabeledSet) -> Result<f64> {
    let logits = model.predict_batched(set.inputs(), EVAL_CHUNK)?;
    let k = logits.shape()[1];
    let total: f64 = logits
        .data()
        .chunks(k)
        .zip(set.labels())
        .map(|(row, &y)| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln() - row[y]
        })
        .sum();
    Ok(total / set.len() as f64)
}
