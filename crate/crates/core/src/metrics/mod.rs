//! Accuracy, explanation separability (ridge, IIES) and faithfulness
//! (comprehensiveness and sufficiency).

mod faithfulness;
mod linalg;
mod report;

use lsx_autodiff::Tensor;

use crate::datasets::{stratified_indices, LabeledSet};
use crate::error::{Error, Result};
use crate::nets::{argmax_rows, Classifier, CnnClassifier};
use crate::seed;

pub use faithfulness::{comp_suff_continuous, comp_suff_discrete, DEFAULT_B};
pub use report::{MetricReport, Variant};

/// Chunk size for batched evaluation.
pub const EVAL_CHUNK: usize = 256;

/// Percentage of `set` classified correctly.
pub fn accuracy(model: &dyn Classifier, set: &LabeledSet) -> Result<f64> {
    let logits = model.predict_batched(set.inputs(), EVAL_CHUNK)?;
    Ok(percent_correct(&argmax_rows(&logits), set.labels()))
}

pub fn percent_correct(pred: &[usize], labels: &[usize]) -> f64 {
    let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
    100.0 * hits as f64 / labels.len().max(1) as f64
}

fn flat(x: &Tensor) -> (usize, usize) {
    let n = x.shape()[0];
    (n, x.numel() / n)
}

/// One-vs-all ridge weights `[d,K]` solving `(XᵀX + αI) W = XᵀY`.
pub fn ridge_fit(x: &Tensor, labels: &[usize], classes: usize, alpha: f64) -> Result<Tensor> {
    if alpha <= 0.0 {
        return Err(Error::InvalidArgument(format!("ridge alpha {alpha} must be positive")));
    }
    let (n, d) = flat(x);
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} rows, {} labels", labels.len())));
    }
    let mut y = vec![0.0; n * classes];
    for (i, &l) in labels.iter().enumerate() {
        y[i * classes + l] = 1.0;
    }
    let mut gram = linalg::at_b(n, d, d, x.data(), x.data());
    for i in 0..d {
        gram[i * d + i] += alpha;
    }
    let rhs = linalg::at_b(n, d, classes, x.data(), &y);
    let w = linalg::cholesky_solve(d, classes, &gram, &rhs)
        .expect("XᵀX + αI is positive definite for α > 0");
    Ok(Tensor::new(vec![d, classes], w)?)
}

/// Held-out accuracy (%) of a one-vs-all ridge classifier on explanations.
pub fn ridge_separability(
    train: &Tensor,
    train_labels: &[usize],
    test: &Tensor,
    test_labels: &[usize],
    classes: usize,
    alpha: f64,
) -> Result<f64> {
    let w = ridge_fit(train, train_labels, classes, alpha)?;
    let (n, d) = flat(test);
    if d != w.shape()[0] {
        return Err(Error::Shape(format!("test width {d}, train width {}", w.shape()[0])));
    }
    let mut scores = vec![0.0; n * classes];
    for i in 0..n {
        let row = &test.data()[i * d..(i + 1) * d];
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 {
                let wr = &w.data()[j * classes..(j + 1) * classes];
                for k in 0..classes {
                    scores[i * classes + k] += v * wr[k];
                }
            }
        }
    }
    let pred = argmax_rows(&Tensor::new(vec![n, classes], scores)?);
    Ok(percent_correct(&pred, test_labels))
}

/// Ridge separability on a stratified 80/20 split of one explanation set.
pub fn ridge_separability_split(expl: &Tensor, labels: &[usize], classes: usize, alpha: f64, seed: u64) -> Result<f64> {
    let mut rng = seed::rng(seed, "ridge/split");
    let (train, test) = stratified_indices(labels, classes, 0.8, &mut rng);
    let pick = |rows: &[usize]| rows.iter().map(|&r| labels[r]).collect::<Vec<_>>();
    ridge_separability(
        &expl.select_rows(&train),
        &pick(&train),
        &expl.select_rows(&test),
        &pick(&test),
        classes,
        alpha,
    )
}

/// Denominator scaling of the inter-class term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IiesNorm {
    /// `1/K` over the `K−1` other classes.
    OverK,
    /// `1/(K−1)`: the plain mean over other classes.
    OverKMinus1,
}

/// Inter- vs intraclass explanation similarity of encodings `[N,D]`:
/// mean over classes of (mean distance to own class mean) divided by the
/// scaled sum of distances between class means. Lower is tighter.
pub fn iies(enc: &Tensor, labels: &[usize], classes: usize, norm: IiesNorm) -> Result<f64> {
    if classes < 2 {
        return Err(Error::InvalidArgument("IIES needs at least two classes".into()));
    }
    let (n, d) = flat(enc);
    let mut means = vec![0.0; classes * d];
    let mut counts = vec![0usize; classes];
    for i in 0..n {
        counts[labels[i]] += 1;
        for j in 0..d {
            means[labels[i] * d + j] += enc.data()[i * d + j];
        }
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::ClassAbsent(k));
    }
    for k in 0..classes {
        means[k * d..(k + 1) * d].iter_mut().for_each(|v| *v /= counts[k] as f64);
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let mut intra = vec![0.0; classes];
    for i in 0..n {
        let k = labels[i];
        intra[k] += dist(&enc.data()[i * d..(i + 1) * d], &means[k * d..(k + 1) * d]);
    }
    let scale = match norm {
        IiesNorm::OverK => 1.0 / classes as f64,
        IiesNorm::OverKMinus1 => 1.0 / (classes - 1) as f64,
    };
    let mut total = 0.0;
    for k in 0..classes {
        let within = intra[k] / counts[k] as f64;
        let between: f64 = (0..classes)
            .filter(|&j| j != k)
            .map(|j| dist(&means[j * d..(j + 1) * d], &means[k * d..(k + 1) * d]))
            .sum::<f64>()
            * scale;
        if between == 0.0 {
            return Err(Error::InvalidArgument(format!("class {k} mean coincides with all others")));
        }
        total += within / between;
    }
    Ok(total / classes as f64)
}

/// IIES of explanations encoded by the penultimate layer of a separately
/// trained network. Each explanation is max-abs normalised first.
pub fn iies_with_encoder(h: &CnnClassifier, expl: &Tensor, labels: &[usize], classes: usize, norm: IiesNorm) -> Result<f64> {
    let normed = crate::attribution::normalize_max_abs(expl);
    let n = normed.shape()[0];
    let parts = (0..n)
        .step_by(EVAL_CHUNK)
        .map(|s| h.features(&normed.slice_rows(s, (s + EVAL_CHUNK).min(n))))
        .collect::<Result<Vec<_>>>()?;
    let enc = Tensor::stack(&parts.iter().flat_map(Tensor::unstack).collect::<Vec<_>>())?;
    iies(&enc, labels, classes, norm)
}
