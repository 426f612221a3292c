//! Rule language, candidate generation and soft rule evaluation.

mod candidates;
mod eval;
mod rule;

pub use candidates::{propositionalize, score_candidates, select_best, Aggregation, CandidateSet, Caps, RuleScore};
pub use eval::{ground_rule, rule_validity};
pub use rule::Rule;
