//! The self-explaining loop: Fit, then Explain/Reflect/Revise, for the CNN
//! and the neuro-symbolic instantiation.

pub mod cnn;
mod config;
mod events;
pub mod nesy;
mod run;
mod train;

pub use cnn::{Critic, CriticFeedback};
pub use config::{CriticMode, Instantiation, LsxConfig};
pub use events::{check_sequence, Event};
pub use nesy::RuleFeedback;
pub use run::{run_cnn, run_nesy, run_vanilla, IterationRecord, LsxData, RunReport, ORDER_TAG};
pub use train::{base_loss, fit, mean_loss, run_epoch, Batch};

/// What Reflect hands to Revise.
#[derive(Debug, Clone)]
pub enum Feedback {
    Scalar(CriticFeedback),
    Rules(RuleFeedback),
}
