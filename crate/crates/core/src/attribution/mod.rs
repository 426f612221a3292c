//! Explanations of a classifier's true-class logit: input times gradient
//! for images, integrated gradients from a zero baseline for concepts.

mod dump;

use lsx_autodiff::{Graph, NodeId, Tensor};

use crate::error::{Error, Result};
use crate::nets::Classifier;

pub use dump::{write_csv, write_pgm, CsvRow};

/// Default number of midpoint steps for integrated gradients.
pub const IG_STEPS: usize = 50;
/// Default binarization threshold.
pub const DELTA: f64 = 0.2;

/// One explained sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMap {
    pub values: Tensor,
    pub sample_id: u64,
    /// The class whose logit was explained.
    pub class: usize,
    pub differentiable: bool,
}

/// Binary concept mask with the threshold that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarizedConceptMask {
    pub mask: Tensor,
    pub delta: f64,
}

fn check_labels(model: &dyn Classifier, n: usize, labels: &[usize]) -> Result<()> {
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} inputs, {} labels", labels.len())));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= model.num_classes()) {
        return Err(Error::InvalidArgument(format!("label {y} for {} classes", model.num_classes())));
    }
    Ok(())
}

/// Records `x ⊙ ∂f_y/∂x` for a batch node `x` and returns the explanation
/// node. `x` must be a differentiable leaf. With `build_graph` the result
/// can be differentiated again with respect to the bound parameters.
pub fn input_x_gradient_in(
    g: &mut Graph,
    model: &dyn Classifier,
    params: &[NodeId],
    x: NodeId,
    labels: &[usize],
    build_graph: bool,
) -> Result<NodeId> {
    check_labels(model, g.shape(x)[0], labels)?;
    let logits = model.forward(g, params, x)?;
    input_x_gradient_from_logits(g, logits, x, labels, build_graph)
}

/// Same as [`input_x_gradient_in`] for logits already recorded from `x`.
pub fn input_x_gradient_from_logits(
    g: &mut Graph,
    logits: NodeId,
    x: NodeId,
    labels: &[usize],
    build_graph: bool,
) -> Result<NodeId> {
    let picked = g.pick_last_axis(logits, labels)?;
    // Samples do not interact, so one backward of the summed logits yields
    // every per-sample gradient at once.
    let total = g.sum(picked)?;
    let grad = g.backward(total, &[x], build_graph)?[0];
    Ok(g.mul(x, grad)?)
}

/// Input-times-gradient values for a batch.
pub fn input_x_gradient(model: &dyn Classifier, batch: &Tensor, labels: &[usize]) -> Result<Tensor> {
    model.check_batch(batch)?;
    let mut g = Graph::new();
    let p = model.params().bind(&mut g, false);
    let x = g.param(batch.clone());
    let e = input_x_gradient_in(&mut g, model, &p, x, labels, false)?;
    Ok(g.value(e).clone())
}

/// Midpoint-rule integrated gradients from a zero baseline, recorded in `g`.
/// `z` is a constant batch; the result is differentiable in the parameters
/// when `build_graph` is set.
pub fn integrated_gradients_in(
    g: &mut Graph,
    model: &dyn Classifier,
    params: &[NodeId],
    z: &Tensor,
    labels: &[usize],
    steps: usize,
    build_graph: bool,
) -> Result<NodeId> {
    if steps == 0 {
        return Err(Error::InvalidArgument("integrated gradients need at least one step".into()));
    }
    let n = z.shape()[0];
    check_labels(model, n, labels)?;
    let per = z.numel();
    let mut path = Vec::with_capacity(per * steps);
    for j in 0..steps {
        let alpha = (j as f64 + 0.5) / steps as f64;
        path.extend(z.data().iter().map(|v| alpha * v));
    }
    let mut shape = z.shape().to_vec();
    shape[0] = n * steps;
    let xs = g.param(Tensor::new(shape, path)?);
    let logits = model.forward(g, params, xs)?;
    let rep: Vec<usize> = (0..steps).flat_map(|_| labels.iter().copied()).collect();
    let picked = g.pick_last_axis(logits, &rep)?;
    let total = g.sum(picked)?;
    let grads = g.backward(total, &[xs], build_graph)?[0];
    let grads = g.reshape(grads, vec![steps, per])?;
    let avg = g.constant(Tensor::full(vec![1, steps], 1.0 / steps as f64));
    let mean = g.matmul(avg, grads)?;
    let mean = g.reshape(mean, z.shape().to_vec())?;
    let zc = g.constant(z.clone());
    Ok(g.mul(zc, mean)?)
}

pub fn integrated_gradients(model: &dyn Classifier, z: &Tensor, labels: &[usize], steps: usize) -> Result<Tensor> {
    model.check_batch(z)?;
    let mut g = Graph::new();
    let p = model.params().bind(&mut g, false);
    let e = integrated_gradients_in(&mut g, model, &p, z, labels, steps, false)?;
    Ok(g.value(e).clone())
}

/// Per-sample max-abs normalisation of a `[N, ...]` batch; all-zero
/// samples stay zero.
pub fn normalize_max_abs(batch: &Tensor) -> Tensor {
    let n = batch.shape()[0];
    let per = batch.numel() / n;
    let mut out = batch.clone();
    for row in out.data_mut().chunks_mut(per) {
        let m = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if m > 0.0 {
            row.iter_mut().for_each(|v| *v /= m);
        }
    }
    out
}

/// Marks entries whose max-abs normalised attribution exceeds `delta`.
/// Negative attributions never pass.
pub fn binarize(attr: &Tensor, delta: f64) -> Result<BinarizedConceptMask> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidArgument(format!("delta {delta} outside [0,1]")));
    }
    let m = attr.max_abs();
    let mask = attr.map(|v| if m > 0.0 && v / m > delta { 1.0 } else { 0.0 });
    Ok(BinarizedConceptMask { mask, delta })
}

/// Splits a batch of attribution values into per-sample maps.
pub fn to_maps(values: &Tensor, ids: &[u64], classes: &[usize]) -> Vec<AttributionMap> {
    values
        .unstack()
        .into_iter()
        .zip(ids.iter().zip(classes))
        .map(|(values, (&sample_id, &class))| AttributionMap {
            values,
            sample_id,
            class,
            differentiable: false,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binarize_examples() {
        let a = Tensor::vector(vec![0.9, 0.1, -0.3]);
        assert_eq!(binarize(&a, 0.5).unwrap().mask.data(), &[1.0, 0.0, 0.0]);
        assert_eq!(binarize(&Tensor::zeros(vec![3]), 0.0).unwrap().mask.data(), &[0.0; 3]);
        assert_eq!(binarize(&a, 0.0).unwrap().mask.data(), &[1.0, 1.0, 0.0]);
        assert!(binarize(&a, 1.5).is_err());
    }

    #[test]
    fn normalization_is_per_sample() {
        let t = Tensor::new(vec![2, 2], vec![2.0, -4.0, 0.0, 0.0]).unwrap();
        assert_eq!(normalize_max_abs(&t).data(), &[0.5, -1.0, 0.0, 0.0]);
    }
}
