use crate::datasets::{ConceptSchema, LabeledSet};
use crate::error::{Error, Result};
use crate::metrics::accuracy;
use crate::nets::{Classifier, CnnClassifier, ConceptPredictor, Optimizer, ParamSet};
use crate::seed;

use super::cnn::{explain_cnn, finetune_lock, reflect_cnn, revise_cnn, Critic};
use super::config::{Instantiation, LsxConfig};
use super::events::Event;
use super::nesy::{explain_nesy, reflect_nesy, revise_nesy, rule_targets};
use super::train::{fit, mean_loss};

/// Tag of the learner's data-order stream, shared by every learner epoch.
pub const ORDER_TAG: &str = "learner/order";

#[derive(Debug, Clone)]
pub struct LsxData {
    /// X̄: what the learner trains on.
    pub learner: LabeledSet,
    /// X̄_c: what gets explained and judged.
    pub critic: LabeledSet,
    /// Convergence is checked here; falls back to the learner set.
    pub validation: Option<LabeledSet>,
    /// Required by the NeSy path.
    pub schema: Option<ConceptSchema>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub critic_loss: Option<f64>,
    /// Critic accuracy on explanations (CNN) in %.
    pub critic_accuracy: Option<f64>,
    pub revise_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    /// Selected rules as text (NeSy).
    pub rules: Vec<String>,
    pub candidates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub events: Vec<Event>,
    pub fit_losses: Vec<f64>,
    pub fit_val_loss: f64,
    pub iterations: Vec<IterationRecord>,
    pub finetune_losses: Vec<f64>,
    /// Learner epochs actually run.
    pub epochs: usize,
    /// Learner parameters at the end of Fit.
    pub fit_params: ParamSet,
    /// Learner parameters at the end of the loop, before fine-tuning.
    pub loop_params: ParamSet,
}

fn at(iteration: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Iteration {
        iteration,
        source: Box::new(e),
    }
}

fn validation_of(data: &LsxData) -> &LabeledSet {
    data.validation.as_ref().unwrap_or(&data.learner)
}

struct Loop<'a> {
    cfg: &'a LsxConfig,
    report: RunReport,
    prev_val: f64,
}

impl<'a> Loop<'a> {
    fn start<M: Classifier>(cfg: &'a LsxConfig, model: &mut M, data: &LsxData, opt: &mut Optimizer, rng: &mut rand_chacha::ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        if data.critic.is_empty() {
            return Err(Error::EmptyCriticSet);
        }
        let fit_losses = fit(model, &data.learner, cfg.fit_epochs, opt, rng, cfg.batch_size).map_err(at(0))?;
        let fit_val_loss = mean_loss(model, validation_of(data)).map_err(at(0))?;
        Ok(Self {
            cfg,
            prev_val: fit_val_loss,
            report: RunReport {
                events: vec![Event::Fit { epochs: cfg.fit_epochs }],
                fit_losses,
                fit_val_loss,
                iterations: Vec::new(),
                finetune_losses: Vec::new(),
                epochs: cfg.fit_epochs,
                fit_params: model.params().clone(),
                loop_params: ParamSet::new(),
            },
        })
    }

    /// Records the iteration and tells whether the loop has converged.
    fn finish_iteration<M: Classifier>(&mut self, model: &M, data: &LsxData, mut rec: IterationRecord) -> Result<bool> {
        let t = rec.iteration;
        let val = validation_of(data);
        rec.val_loss = mean_loss(model, val).map_err(at(t))?;
        rec.val_accuracy = accuracy(model, val).map_err(at(t))?;
        self.report.events.push(Event::Revise {
            iteration: t,
            loss: rec.revise_loss,
        });
        self.report.epochs += self.cfg.revise_epochs;
        let converged = (rec.val_loss - self.prev_val).abs() < self.cfg.tolerance;
        self.prev_val = rec.val_loss;
        self.report.iterations.push(rec);
        if converged && t < self.cfg.iterations {
            self.report.events.push(Event::Converged { iteration: t });
            return Ok(true);
        }
        Ok(false)
    }
}

fn check_instantiation(cfg: &LsxConfig, want: Instantiation) -> Result<()> {
    if cfg.instantiation != want {
        return Err(Error::InvalidArgument(format!(
            "config is for the {} instantiation, not {}",
            cfg.instantiation.name(),
            want.name()
        )));
    }
    Ok(())
}

fn mean_or(losses: &[f64], default: f64) -> f64 {
    losses.last().copied().unwrap_or(default)
}

/// Fit, then Explain/Reflect/Revise until the budget is spent or the
/// validation loss settles, then fine-tune with explanations locked.
pub fn run_cnn(mut learner: CnnClassifier, data: &LsxData, cfg: &LsxConfig) -> Result<(CnnClassifier, RunReport)> {
    check_instantiation(cfg, Instantiation::Cnn)?;
    let mut opt = Optimizer::adam(cfg.lr);
    let mut rng = seed::rng(cfg.seed, ORDER_TAG);
    let mut lp = Loop::start(cfg, &mut learner, data, &mut opt, &mut rng)?;
    let mut critic: Option<CnnClassifier> = None;
    for t in 1..=cfg.iterations {
        let expl = explain_cnn(&learner, data.critic.inputs(), data.critic.labels()).map_err(at(t))?;
        lp.report.events.push(Event::Explain {
            iteration: t,
            samples: data.critic.len(),
        });
        let fb = reflect_cnn(critic.take(), &learner, &expl, data.critic.labels(), cfg, t).map_err(at(t))?;
        lp.report.events.push(Event::Reflect { iteration: t, loss: fb.loss });
        let mut losses = Vec::with_capacity(cfg.revise_epochs);
        for _ in 0..cfg.revise_epochs {
            losses.push(
                revise_cnn(&mut learner, data.learner.inputs(), data.learner.labels(), &fb.critic, cfg, &mut opt, &mut rng)
                    .map_err(at(t))?,
            );
        }
        let rec = IterationRecord {
            iteration: t,
            critic_loss: Some(fb.loss),
            critic_accuracy: Some(fb.accuracy),
            revise_loss: mean_or(&losses, f64::NAN),
            val_loss: 0.0,
            val_accuracy: 0.0,
            rules: Vec::new(),
            candidates: 0,
        };
        if let Critic::Trained(c) = fb.critic {
            critic = Some(c);
        }
        if lp.finish_iteration(&learner, data, rec)? {
            break;
        }
    }
    let mut report = lp.report;
    report.loop_params = learner.params().clone();
    let last = report.iterations.len();
    report.finetune_losses = finetune_lock(&mut learner, data.learner.inputs(), data.learner.labels(), cfg, &mut opt, &mut rng)
        .map_err(at(last))?;
    report.epochs += cfg.finetune_epochs;
    report.events.push(Event::Finetune {
        epochs: cfg.finetune_epochs,
    });
    Ok((learner, report))
}

/// NeSy loop: IG masks become candidate rules, the critic picks one per
/// class, and Revise pulls the explanations towards its grounding.
pub fn run_nesy(mut learner: ConceptPredictor, data: &LsxData, cfg: &LsxConfig) -> Result<(ConceptPredictor, RunReport)> {
    check_instantiation(cfg, Instantiation::Nesy)?;
    let schema = data
        .schema
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("the NeSy path needs a concept schema".into()))?;
    let mut opt = Optimizer::adam(cfg.lr);
    let mut rng = seed::rng(cfg.seed, ORDER_TAG);
    let mut critic_rng = seed::rng(cfg.seed, "critic/random");
    let mut lp = Loop::start(cfg, &mut learner, data, &mut opt, &mut rng)?;
    for t in 1..=cfg.iterations {
        let cands = explain_nesy(&learner, &data.critic, schema, cfg).map_err(at(t))?;
        lp.report.events.push(Event::Explain {
            iteration: t,
            samples: data.critic.len(),
        });
        let fb = reflect_nesy(&cands, &data.critic, schema, cfg, &mut critic_rng).map_err(at(t))?;
        let best: Vec<f64> = fb
            .scores
            .iter()
            .zip(&fb.rules)
            .map(|(list, r)| list.iter().find(|s| &s.rule == r).map_or(0.0, |s| s.rho))
            .collect();
        let reflect_loss = if best.is_empty() { 0.0 } else { -best.iter().sum::<f64>() / best.len() as f64 };
        lp.report.events.push(Event::Reflect {
            iteration: t,
            loss: reflect_loss,
        });
        let targets = rule_targets(&data.learner, &fb.rules, schema).map_err(at(t))?;
        let mut losses = Vec::with_capacity(cfg.revise_epochs);
        for _ in 0..cfg.revise_epochs {
            losses.push(revise_nesy(&mut learner, &data.learner, &targets, cfg, &mut opt, &mut rng).map_err(at(t))?);
        }
        let rec = IterationRecord {
            iteration: t,
            critic_loss: Some(reflect_loss),
            critic_accuracy: None,
            revise_loss: mean_or(&losses, f64::NAN),
            val_loss: 0.0,
            val_accuracy: 0.0,
            rules: fb.rules.iter().map(|r| r.to_text(schema)).collect(),
            candidates: cands.total(),
        };
        if lp.finish_iteration(&learner, data, rec)? {
            break;
        }
    }
    let mut report = lp.report;
    report.loop_params = learner.params().clone();
    Ok((learner, report))
}

/// Plain training with the same optimizer, order stream and batch size as
/// the LSX learner. Returns per-epoch losses.
pub fn run_vanilla<M: Classifier>(model: &mut M, set: &LabeledSet, cfg: &LsxConfig, epochs: usize) -> Result<Vec<f64>> {
    let mut opt = Optimizer::adam(cfg.lr);
    let mut rng = seed::rng(cfg.seed, ORDER_TAG);
    fit(model, set, epochs, &mut opt, &mut rng, cfg.batch_size)
}
