use lsx_autodiff::Tensor;
use rand::seq::SliceRandom;

use super::{percent_correct, EVAL_CHUNK};
use crate::error::{Error, Result};
use crate::nets::{argmax_rows, Classifier};
use crate::seed;

/// Percentages of features removed or kept.
pub const DEFAULT_B: [f64; 5] = [1.0, 5.0, 10.0, 20.0, 50.0];

fn check_b(b: &[f64]) -> Result<()> {
    if b.is_empty() {
        return Err(Error::InvalidArgument("empty percentage set".into()));
    }
    match b.iter().find(|&&q| !(q > 0.0 && q <= 100.0)) {
        Some(q) => Err(Error::InvalidArgument(format!("percentage {q} outside (0,100]"))),
        None => Ok(()),
    }
}

/// Number of entries in the top `q`% of `d`; never zero.
fn top_count(q: f64, d: usize) -> usize {
    ((q / 100.0 * d as f64).ceil() as usize).clamp(1, d)
}

/// Entry order by magnitude, largest first; equal magnitudes keep index order.
fn ranking(e: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..e.len()).collect();
    idx.sort_by(|&a, &b| e[b].abs().total_cmp(&e[a].abs()));
    idx
}

/// Like [`ranking`], but runs of equal magnitude are visited in a seeded
/// random order so a flat map selects an unbiased subset.
fn ranking_shuffled_ties(e: &[f64], rng: &mut impl rand::Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..e.len()).collect();
    idx.shuffle(rng);
    idx.sort_by(|&a, &b| e[b].abs().total_cmp(&e[a].abs()));
    idx
}

fn softmax_rows(logits: &Tensor) -> Vec<f64> {
    let k = logits.shape()[1];
    let mut out = Vec::with_capacity(logits.numel());
    for row in logits.data().chunks(k) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = row.iter().map(|v| (v - m).exp()).sum();
        out.extend(row.iter().map(|v| (v - m).exp() / total));
    }
    out
}

fn check_pair(inputs: &Tensor, expl: &Tensor) -> Result<(usize, usize)> {
    if inputs.shape() != expl.shape() {
        return Err(Error::Shape(format!(
            "inputs {:?} vs explanations {:?}",
            inputs.shape(),
            expl.shape()
        )));
    }
    let n = inputs.shape()[0];
    Ok((n, inputs.numel() / n))
}

/// Builds a modified copy of `inputs` where, per sample, the entries in
/// `chosen(i)` (or all others, when `keep`) are set to `fill`.
fn masked(inputs: &Tensor, d: usize, fill: f64, keep: bool, chosen: impl Fn(usize) -> Vec<usize>) -> Tensor {
    let mut out = inputs.clone();
    for (i, row) in out.data_mut().chunks_mut(d).enumerate() {
        let sel = chosen(i);
        if keep {
            let mut flag = vec![false; d];
            sel.iter().for_each(|&j| flag[j] = true);
            row.iter_mut().zip(flag).filter(|(_, f)| !f).for_each(|(v, _)| *v = fill);
        } else {
            sel.iter().for_each(|&j| row[j] = fill);
        }
    }
    out
}

/// Comprehensiveness and sufficiency on the predicted-class probability,
/// removing or keeping the top-q% entries by explanation magnitude
/// (removed entries are zeroed). Means over `b` and samples.
pub fn comp_suff_discrete(model: &dyn Classifier, inputs: &Tensor, expl: &Tensor, b: &[f64]) -> Result<(f64, f64)> {
    check_b(b)?;
    let (n, d) = check_pair(inputs, expl)?;
    let full = model.predict_batched(inputs, EVAL_CHUNK)?;
    let k = full.shape()[1];
    let pred = argmax_rows(&full);
    let p_full = softmax_rows(&full);
    let ranks: Vec<Vec<usize>> = expl.data().chunks(d).map(ranking).collect();
    let (mut comp, mut suff) = (0.0, 0.0);
    for &q in b {
        let t = top_count(q, d);
        let top = |i: usize| ranks[i][..t].to_vec();
        let removed = softmax_rows(&model.predict_batched(&masked(inputs, d, 0.0, false, top), EVAL_CHUNK)?);
        let kept = softmax_rows(&model.predict_batched(&masked(inputs, d, 0.0, true, top), EVAL_CHUNK)?);
        for i in 0..n {
            let c = i * k + pred[i];
            comp += p_full[c] - removed[c];
            suff += p_full[c] - kept[c];
        }
    }
    let total = (n * b.len()) as f64;
    Ok((comp / total, suff / total))
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Accuracy-based comprehensiveness and sufficiency (in points). Removed
/// entries take the median of all input values. Ties in magnitude are
/// ordered by a seeded shuffle rather than by index. Each score is measured
/// against a random selection of equal size:
/// `comp = acc(random removed) − acc(top removed)` and
/// `suff = acc(random kept) − acc(top kept)`, averaged over `b`.
pub fn comp_suff_continuous(
    model: &dyn Classifier,
    inputs: &Tensor,
    expl: &Tensor,
    labels: &[usize],
    b: &[f64],
    seed: u64,
) -> Result<(f64, f64)> {
    check_b(b)?;
    let (n, d) = check_pair(inputs, expl)?;
    let fill = median(inputs.data());
    let mut tie_rng = seed::rng(seed, "comp-suff/ties");
    let ranks: Vec<Vec<usize>> = expl
        .data()
        .chunks(d)
        .map(|e| ranking_shuffled_ties(e, &mut tie_rng))
        .collect();
    let mut rng = seed::rng(seed, "comp-suff/random");
    let acc = |x: Tensor| -> Result<f64> {
        Ok(percent_correct(&argmax_rows(&model.predict_batched(&x, EVAL_CHUNK)?), labels))
    };
    let (mut comp, mut suff) = (0.0, 0.0);
    for &q in b {
        let t = top_count(q, d);
        let random: Vec<Vec<usize>> = (0..n)
            .map(|_| {
                let mut idx: Vec<usize> = (0..d).collect();
                idx.partial_shuffle(&mut rng, t).0.to_vec()
            })
            .collect();
        let top = |i: usize| ranks[i][..t].to_vec();
        let rnd = |i: usize| random[i].clone();
        comp += acc(masked(inputs, d, fill, false, rnd))? - acc(masked(inputs, d, fill, false, top))?;
        suff += acc(masked(inputs, d, fill, true, rnd))? - acc(masked(inputs, d, fill, true, top))?;
    }
    Ok((comp / b.len() as f64, suff / b.len() as f64))
}
