//! CNN instantiation: input-times-gradient explanations judged by a CNN
//! critic that learns to classify them.

use lsx_autodiff::{Graph, NodeId, Tensor};
use rand_chacha::ChaCha8Rng;

use super::config::{CriticMode, LsxConfig};
use super::train::{base_loss, run_epoch, Batch};
use crate::attribution::{input_x_gradient, input_x_gradient_from_logits};
use crate::error::{Error, Result};
use crate::metrics::EVAL_CHUNK;
use crate::nets::{argmax_rows, Classifier, CnnClassifier, Optimizer};
use crate::seed;

/// The critic handed from Reflect to Revise.
#[derive(Debug, Clone)]
pub enum Critic {
    Trained(CnnClassifier),
    /// Uniform logits; its loss is the constant ln K.
    Uniform { classes: usize },
}

#[derive(Debug, Clone)]
pub struct CriticFeedback {
    pub critic: Critic,
    /// Batch-averaged critic cross-entropy over the Reflect epoch(s).
    pub loss: f64,
    /// Critic accuracy (%) on the explanations it was trained on.
    pub accuracy: f64,
}

/// Input-times-gradient maps of the true class, in chunks.
pub fn explain_cnn(learner: &CnnClassifier, inputs: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::EmptyCriticSet);
    }
    let mut data = Vec::with_capacity(inputs.numel());
    for start in (0..n).step_by(EVAL_CHUNK) {
        let rows: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        let e = input_x_gradient(learner, &inputs.select_rows(&rows), &labels[start..start + rows.len()])?;
        data.extend_from_slice(e.data());
    }
    Ok(Tensor::new(inputs.shape().to_vec(), data)?)
}

/// Fresh critic for iteration `iteration`. With reinit every iteration
/// starts from the same draw.
pub fn critic_init(learner: &CnnClassifier, cfg: &LsxConfig) -> Result<CnnClassifier> {
    CnnClassifier::new(learner.spec().clone(), seed::derive(cfg.seed, "critic/init"))
}

/// Trains the critic on `(explanations, labels)` and reports its averaged loss.
pub fn reflect_cnn(
    previous: Option<CnnClassifier>,
    learner: &CnnClassifier,
    explanations: &Tensor,
    labels: &[usize],
    cfg: &LsxConfig,
    iteration: usize,
) -> Result<CriticFeedback> {
    if labels.is_empty() {
        return Err(Error::EmptyCriticSet);
    }
    let classes = learner.num_classes();
    if cfg.critic_mode == CriticMode::Random {
        return Ok(CriticFeedback {
            critic: Critic::Uniform { classes },
            loss: (classes as f64).ln(),
            accuracy: 100.0 / classes as f64,
        });
    }
    let mut critic = match previous {
        Some(c) if !cfg.critic_reinit => c,
        _ => critic_init(learner, cfg)?,
    };
    let mut opt = Optimizer::adam(cfg.critic_lr);
    let mut rng = seed::rng(cfg.seed, &format!("critic/order/{iteration}"));
    let mut loss = (classes as f64).ln();
    for _ in 0..cfg.critic_epochs {
        loss = run_epoch(
            &mut critic,
            explanations,
            labels,
            &mut opt,
            &mut rng,
            cfg.critic_batch_size,
            base_loss,
        )?;
    }
    let logits = critic.predict_batched(explanations, EVAL_CHUNK)?;
    let hits = argmax_rows(&logits).iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(CriticFeedback {
        critic: Critic::Trained(critic),
        loss,
        accuracy: 100.0 * hits as f64 / labels.len() as f64,
    })
}

/// `CE + λ·CE_critic(IxG(x), y)` with the critic frozen. The explanation is
/// recorded with a build graph so its gradient reaches the learner weights.
pub fn revise_loss(
    g: &mut Graph,
    model: &CnnClassifier,
    params: &[NodeId],
    batch: &Batch<'_>,
    critic: &Critic,
    lambda: f64,
) -> Result<NodeId> {
    if lambda == 0.0 {
        return base_loss(g, model, params, batch);
    }
    let x = g.param(batch.inputs.clone());
    let logits = model.forward(g, params, x)?;
    let ce = g.softmax_cross_entropy(logits, &batch.labels)?;
    let critic_ce = match critic {
        Critic::Trained(c) => {
            let e = input_x_gradient_from_logits(g, logits, x, &batch.labels, true)?;
            let cp = c.params().bind(g, false);
            let cl = c.forward(g, &cp, e)?;
            g.softmax_cross_entropy(cl, &batch.labels)?
        }
        Critic::Uniform { classes } => g.constant(Tensor::scalar((*classes as f64).ln())),
    };
    let scaled = g.scale(critic_ce, lambda)?;
    Ok(g.add(ce, scaled)?)
}

pub fn revise_cnn(
    learner: &mut CnnClassifier,
    inputs: &Tensor,
    labels: &[usize],
    critic: &Critic,
    cfg: &LsxConfig,
    optimizer: &mut Optimizer,
    order_rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let lambda = cfg.lambda;
    run_epoch(learner, inputs, labels, optimizer, order_rng, cfg.batch_size, |g, m, p, b| {
        revise_loss(g, m, p, b, critic, lambda)
    })
}

/// `CE + λ_ft·MSE(IxG(x), E*)` for one batch; `target` holds E* for the
/// whole learner set.
pub fn finetune_loss(
    g: &mut Graph,
    model: &CnnClassifier,
    params: &[NodeId],
    batch: &Batch<'_>,
    target: &Tensor,
    lambda_ft: f64,
) -> Result<NodeId> {
    if lambda_ft == 0.0 {
        return base_loss(g, model, params, batch);
    }
    let x = g.param(batch.inputs.clone());
    let logits = model.forward(g, params, x)?;
    let ce = g.softmax_cross_entropy(logits, &batch.labels)?;
    let e = input_x_gradient_from_logits(g, logits, x, &batch.labels, true)?;
    let t = g.constant(target.select_rows(batch.rows));
    let mse = g.mse(e, t)?;
    let scaled = g.scale(mse, lambda_ft)?;
    Ok(g.add(ce, scaled)?)
}

/// Freezes the current explanations as E* and trains for `epochs` epochs
/// while penalising drift from them. Returns per-epoch losses.
pub fn finetune_lock(
    learner: &mut CnnClassifier,
    inputs: &Tensor,
    labels: &[usize],
    cfg: &LsxConfig,
    optimizer: &mut Optimizer,
    order_rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let target = if cfg.lambda_ft == 0.0 {
        Tensor::zeros(vec![0])
    } else {
        explain_cnn(learner, inputs, labels)?
    };
    let lambda_ft = cfg.lambda_ft;
    (0..cfg.finetune_epochs)
        .map(|_| {
            run_epoch(learner, inputs, labels, optimizer, order_rng, cfg.batch_size, |g, m, p, b| {
                finetune_loss(g, m, p, b, &target, lambda_ft)
            })
        })
        .collect()
}
