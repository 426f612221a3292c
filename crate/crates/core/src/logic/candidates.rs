use std::collections::BTreeSet;

use rayon::prelude::*;

use super::eval::rule_validity;
use super::rule::Rule;
use crate::datasets::{ConceptSchema, Condition, LabeledSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Caps {
    pub max_objects: usize,
    pub max_attrs: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            max_objects: 4,
            max_attrs: 3,
        }
    }
}

/// Nonempty subsets of `items` with at most `cap` members, in
/// lexicographic index order.
fn subsets<T: Clone>(items: &[T], cap: usize) -> Vec<Vec<T>> {
    let mut out = Vec::new();
    let n = items.len();
    for bits in 1u64..(1u64 << n) {
        if bits.count_ones() as usize <= cap {
            out.push((0..n).filter(|i| bits & (1 << i) != 0).map(|i| items[i].clone()).collect());
        }
    }
    out
}

/// Every capped conjunction of marked objects and their marked attributes.
/// The presence column never becomes a condition; attribute subsets that
/// put two values of one group on an object are skipped.
pub fn propositionalize(mask: &[f64], class: usize, schema: &ConceptSchema, caps: Caps) -> Vec<Rule> {
    let a = schema.attributes();
    let marked: Vec<Vec<Condition>> = mask
        .chunks(a)
        .map(|row| {
            (0..a)
                .filter(|&c| row[c] != 0.0)
                .filter_map(|c| schema.condition_at(c))
                .collect::<Vec<_>>()
        })
        .filter(|conds| !conds.is_empty())
        .collect();
    let per_object: Vec<Vec<Vec<Condition>>> = marked
        .iter()
        .map(|conds| {
            subsets(conds, caps.max_attrs)
                .into_iter()
                .filter(|s| s.windows(2).all(|w| w[0].group != w[1].group))
                .collect()
        })
        .collect();
    let mut rules = BTreeSet::new();
    let indices: Vec<usize> = (0..marked.len()).collect();
    for chosen in subsets(&indices, caps.max_objects) {
        let mut partial: Vec<Vec<Vec<Condition>>> = vec![Vec::new()];
        for &o in &chosen {
            partial = partial
                .into_iter()
                .flat_map(|p| {
                    per_object[o].iter().map(move |s| {
                        let mut q = p.clone();
                        q.push(s.clone());
                        q
                    })
                })
                .collect();
        }
        for objects in partial {
            rules.insert(Rule::new(class, objects).expect("nonempty distinct-group conditions"));
        }
    }
    rules.into_iter().collect()
}

/// Deduplicated candidate rules per class.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidateSet {
    per_class: Vec<BTreeSet<Rule>>,
    pub caps: Caps,
}

impl CandidateSet {
    pub fn new(classes: usize, caps: Caps) -> Self {
        Self {
            per_class: vec![BTreeSet::new(); classes],
            caps,
        }
    }

    pub fn extend(&mut self, rules: impl IntoIterator<Item = Rule>) {
        for r in rules {
            self.per_class[r.class()].insert(r);
        }
    }

    pub fn classes(&self) -> usize {
        self.per_class.len()
    }

    /// Candidates of class `k` in canonical order.
    pub fn rules(&self, k: usize) -> impl Iterator<Item = &Rule> {
        self.per_class[k].iter()
    }

    pub fn len(&self, k: usize) -> usize {
        self.per_class[k].len()
    }

    pub fn total(&self) -> usize {
        self.per_class.iter().map(BTreeSet::len).sum()
    }
}

/// How validities of a sample group are pooled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Aggregation {
    Mean,
    /// Worst case: minimum over positives, maximum over negatives.
    Min,
    /// Smooth version of `Min` with the given temperature.
    SoftMin(f64),
}

impl Aggregation {
    fn pool_low(self, values: &[f64]) -> f64 {
        match self {
            Aggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Aggregation::Min => values.iter().cloned().fold(f64::INFINITY, f64::min),
            Aggregation::SoftMin(t) => {
                let m = values.iter().cloned().fold(f64::INFINITY, f64::min);
                let lse = values.iter().map(|v| (-(v - m) / t).exp()).sum::<f64>().ln();
                (m - t * lse + t * (values.len() as f64).ln()).clamp(0.0, 1.0)
            }
        }
    }

    fn positive(self, values: &[f64]) -> f64 {
        self.pool_low(values)
    }

    fn negative(self, values: &[f64]) -> f64 {
        match self {
            Aggregation::Mean => self.pool_low(values),
            _ => {
                let flipped: Vec<f64> = values.iter().map(|v| 1.0 - v).collect();
                1.0 - self.pool_low(&flipped)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleScore {
    pub rule: Rule,
    pub rho_pos: f64,
    pub rho_neg: f64,
    pub rho: f64,
}

/// Scores every candidate of class k on the critic set: ρ⁺ over class-k
/// samples, ρ⁻ over all others, ρ = ρ⁺ − ρ⁻.
pub fn score_candidates(
    candidates: &CandidateSet,
    critic: &LabeledSet,
    schema: &ConceptSchema,
    agg: Aggregation,
) -> Result<Vec<Vec<RuleScore>>> {
    let counts = critic.class_counts();
    if let Some(k) = (0..candidates.classes()).find(|&k| counts.get(k).copied().unwrap_or(0) == 0) {
        return Err(Error::ClassAbsent(k));
    }
    (0..candidates.classes())
        .map(|k| {
            let rules: Vec<&Rule> = candidates.rules(k).collect();
            Ok(rules
                .par_iter()
                .map(|rule| {
                    let mut pos = Vec::new();
                    let mut neg = Vec::new();
                    for i in 0..critic.len() {
                        let v = rule_validity(rule, critic.sample(i), schema);
                        if critic.labels()[i] == k {
                            pos.push(v);
                        } else {
                            neg.push(v);
                        }
                    }
                    let rho_pos = agg.positive(&pos);
                    let rho_neg = if neg.is_empty() { 0.0 } else { agg.negative(&neg) };
                    RuleScore {
                        rule: (*rule).clone(),
                        rho_pos,
                        rho_neg,
                        rho: rho_pos - rho_neg,
                    }
                })
                .collect())
        })
        .collect()
}

/// Highest ρ per class; ties go to fewer conditions, then canonical order.
pub fn select_best(scores: &[Vec<RuleScore>]) -> Result<Vec<Rule>> {
    scores
        .iter()
        .enumerate()
        .map(|(k, list)| {
            list.iter()
                .min_by(|a, b| {
                    b.rho
                        .total_cmp(&a.rho)
                        .then(a.rule.num_conditions().cmp(&b.rule.num_conditions()))
                        .then(a.rule.cmp(&b.rule))
                })
                .map(|s| s.rule.clone())
                .ok_or(Error::EmptyCandidates(k))
        })
        .collect()
}
