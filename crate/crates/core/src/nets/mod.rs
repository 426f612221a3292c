//! Learner, critic and predictor models plus their optimizers.

pub mod checkpoint;
mod models;
mod optim;
mod params;

pub use models::{argmax_rows, Classifier, CnnClassifier, CnnSpec, ConceptPredictor, MlpSpec};
pub use optim::{train_step, Optimizer, OptimizerKind};
pub use params::ParamSet;
