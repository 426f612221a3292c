use crate::error::{Error, Result};
use crate::logic::{Aggregation, Caps};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Instantiation {
    Cnn,
    Nesy,
}

impl Instantiation {
    pub fn name(self) -> &'static str {
        match self {
            Instantiation::Cnn => "cnn",
            Instantiation::Nesy => "nesy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cnn" => Some(Instantiation::Cnn),
            "nesy" => Some(Instantiation::Nesy),
            _ => None,
        }
    }
}

/// What the critic contributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticMode {
    /// Trained on the learner's explanations (the normal case).
    Trained,
    /// Ablation: uniform logits (CNN) or uniformly drawn rules (NeSy).
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsxConfig {
    pub instantiation: Instantiation,
    /// Explain/Reflect/Revise iterations.
    pub iterations: usize,
    pub lambda: f64,
    pub lambda_ft: f64,
    pub delta: f64,
    pub critic_reinit: bool,
    pub critic_epochs: usize,
    pub critic_mode: CriticMode,
    /// Stop once the validation base loss moves less than this.
    pub tolerance: f64,
    pub seed: u64,
    pub fit_epochs: usize,
    pub revise_epochs: usize,
    pub finetune_epochs: usize,
    pub batch_size: usize,
    pub critic_batch_size: usize,
    pub lr: f64,
    pub critic_lr: f64,
    pub ig_steps: usize,
    pub caps: Caps,
    pub aggregation: Aggregation,
}

impl LsxConfig {
    pub fn cnn(seed: u64) -> Self {
        Self {
            instantiation: Instantiation::Cnn,
            iterations: 3,
            lambda: 100.0,
            lambda_ft: 10.0,
            delta: crate::attribution::DELTA,
            critic_reinit: true,
            critic_epochs: 1,
            critic_mode: CriticMode::Trained,
            tolerance: 1e-4,
            seed,
            fit_epochs: 8,
            revise_epochs: 1,
            finetune_epochs: 1,
            batch_size: 64,
            critic_batch_size: 32,
            lr: 1e-3,
            critic_lr: 1e-3,
            ig_steps: crate::attribution::IG_STEPS,
            caps: Caps::default(),
            aggregation: Aggregation::Mean,
        }
    }

    pub fn nesy(seed: u64) -> Self {
        Self {
            instantiation: Instantiation::Nesy,
            iterations: 1,
            finetune_epochs: 0,
            fit_epochs: 20,
            revise_epochs: 5,
            batch_size: 32,
            lambda: 10.0,
            ..Self::cnn(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.iterations == 0 {
            return bad("T must be at least 1".into());
        }
        if !(self.lambda >= 0.0 && self.lambda_ft >= 0.0) {
            return bad(format!("negative loss scale: λ={} λ_ft={}", self.lambda, self.lambda_ft));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return bad(format!("δ={} outside [0,1]", self.delta));
        }
        if self.batch_size == 0 || self.critic_batch_size == 0 {
            return bad("batch sizes must be positive".into());
        }
        if self.ig_steps == 0 {
            return bad("integrated gradients need at least one step".into());
        }
        if self.caps.max_objects == 0 || self.caps.max_attrs == 0 {
            return bad("rule caps must be positive".into());
        }
        if !(self.lr >= 0.0 && self.critic_lr >= 0.0) {
            return bad("learning rates must be non-negative".into());
        }
        if self.tolerance < 0.0 {
            return bad("tolerance must be non-negative".into());
        }
        Ok(())
    }

    /// Optimizer epochs over the learner set when every iteration runs.
    pub fn total_epochs(&self) -> usize {
        self.fit_epochs + self.iterations * self.revise_epochs + self.finetune_epochs_for_path()
    }

    fn finetune_epochs_for_path(&self) -> usize {
        match self.instantiation {
            Instantiation::Cnn => self.finetune_epochs,
            Instantiation::Nesy => 0,
        }
    }
}
