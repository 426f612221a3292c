//! Neuro-symbolic instantiation: integrated-gradient masks over concept
//! matrices become candidate rules, a rule-based critic ranks them, and
//! the learner is pulled towards the winning rule's grounding.

use lsx_autodiff::{Graph, NodeId, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::{CriticMode, LsxConfig};
use super::train::{base_loss, run_epoch, Batch};
use crate::attribution::{binarize, integrated_gradients, integrated_gradients_in};
use crate::datasets::{ConceptSchema, LabeledSet};
use crate::error::{Error, Result};
use crate::logic::{ground_rule, propositionalize, score_candidates, select_best, CandidateSet, Rule, RuleScore};
use crate::nets::{Classifier, ConceptPredictor, Optimizer};

const IG_CHUNK: usize = 64;

#[derive(Debug, Clone)]
pub struct RuleFeedback {
    /// Selected rule per class.
    pub rules: Vec<Rule>,
    /// Full ρ tables; empty for the random critic.
    pub scores: Vec<Vec<RuleScore>>,
}

/// Integrated gradients of the true class over a whole set.
pub fn explain_values(learner: &ConceptPredictor, set: &LabeledSet, steps: usize) -> Result<Tensor> {
    let n = set.len();
    let mut data = Vec::with_capacity(set.inputs().numel());
    for start in (0..n).step_by(IG_CHUNK) {
        let rows: Vec<usize> = (start..(start + IG_CHUNK).min(n)).collect();
        let z = set.inputs().select_rows(&rows);
        let e = integrated_gradients(learner, &z, &set.labels()[start..start + rows.len()], steps)?;
        data.extend_from_slice(e.data());
    }
    Ok(Tensor::new(set.inputs().shape().to_vec(), data)?)
}

/// Candidate rules proposed by the learner's explanations on the critic set,
/// grouped by true class.
pub fn explain_nesy(learner: &ConceptPredictor, critic: &LabeledSet, schema: &ConceptSchema, cfg: &LsxConfig) -> Result<CandidateSet> {
    if critic.is_empty() {
        return Err(Error::EmptyCriticSet);
    }
    let values = explain_values(learner, critic, cfg.ig_steps)?;
    let mut cands = CandidateSet::new(learner.num_classes(), cfg.caps);
    for (i, e) in values.unstack().into_iter().enumerate() {
        let mask = binarize(&e, cfg.delta)?;
        cands.extend(propositionalize(mask.mask.data(), critic.labels()[i], schema, cfg.caps));
    }
    Ok(cands)
}

/// Ranks candidates on the critic set and keeps the best rule per class.
/// The random critic draws one candidate per class uniformly instead.
pub fn reflect_nesy(
    cands: &CandidateSet,
    critic: &LabeledSet,
    schema: &ConceptSchema,
    cfg: &LsxConfig,
    rng: &mut ChaCha8Rng,
) -> Result<RuleFeedback> {
    if critic.is_empty() {
        return Err(Error::EmptyCriticSet);
    }
    if cfg.critic_mode == CriticMode::Random {
        let rules = (0..cands.classes())
            .map(|k| {
                let n = cands.len(k);
                if n == 0 {
                    return Err(Error::EmptyCandidates(k));
                }
                Ok(cands.rules(k).nth(rng.gen_range(0..n)).unwrap().clone())
            })
            .collect::<Result<_>>()?;
        return Ok(RuleFeedback { rules, scores: Vec::new() });
    }
    let scores = score_candidates(cands, critic, schema, cfg.aggregation)?;
    let rules = select_best(&scores)?;
    Ok(RuleFeedback { rules, scores })
}

/// Grounded rule masks of each sample's own class.
pub fn rule_targets(set: &LabeledSet, rules: &[Rule], schema: &ConceptSchema) -> Result<Tensor> {
    let mut data = Vec::with_capacity(set.inputs().numel());
    for i in 0..set.len() {
        let rule = rules
            .get(set.labels()[i])
            .ok_or_else(|| Error::InvalidArgument(format!("no rule for class {}", set.labels()[i])))?;
        data.extend(ground_rule(rule, set.sample(i), schema));
    }
    Ok(Tensor::new(set.inputs().shape().to_vec(), data)?)
}

/// `CE + λ·MSE(IG/max|IG|, target)`. The normaliser is taken from the
/// forward values and held constant.
pub fn revise_loss(
    g: &mut Graph,
    model: &ConceptPredictor,
    params: &[NodeId],
    batch: &Batch<'_>,
    targets: &Tensor,
    lambda: f64,
    steps: usize,
) -> Result<NodeId> {
    let ce = base_loss(g, model, params, batch)?;
    if lambda == 0.0 {
        return Ok(ce);
    }
    let e = integrated_gradients_in(g, model, params, &batch.inputs, &batch.labels, steps, true)?;
    let per = batch.inputs.numel() / batch.labels.len();
    let mut inv = Vec::with_capacity(batch.inputs.numel());
    for row in g.value(e).data().chunks(per) {
        let m = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let s = if m > 0.0 { 1.0 / m } else { 0.0 };
        inv.extend(std::iter::repeat(s).take(per));
    }
    let inv = g.constant(Tensor::new(batch.inputs.shape().to_vec(), inv)?);
    let normed = g.mul(e, inv)?;
    let t = g.constant(targets.select_rows(batch.rows));
    let mse = g.mse(normed, t)?;
    let scaled = g.scale(mse, lambda)?;
    Ok(g.add(ce, scaled)?)
}

pub fn revise_nesy(
    learner: &mut ConceptPredictor,
    set: &LabeledSet,
    targets: &Tensor,
    cfg: &LsxConfig,
    optimizer: &mut Optimizer,
    order_rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let (lambda, steps) = (cfg.lambda, cfg.ig_steps);
    run_epoch(learner, set.inputs(), set.labels(), optimizer, order_rng, cfg.batch_size, |g, m, p, b| {
        revise_loss(g, m, p, b, targets, lambda, steps)
    })
}
