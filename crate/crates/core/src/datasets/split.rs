use std::collections::HashSet;

use rand::seq::SliceRandom;

use super::set::{balanced_indices, LabeledSet};
use crate::error::{Error, Result};
use crate::seed;

/// How the critic set relates to the learner set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticRelation {
    /// Critic samples are drawn from the learner set.
    Subset,
    /// Critic samples come from the same pool but never overlap the learner set.
    Disjoint,
    /// Critic samples come from a separate, unconfounded pool.
    DeconfoundedHeldout,
}

impl CriticRelation {
    pub fn name(self) -> &'static str {
        match self {
            CriticRelation::Subset => "subset",
            CriticRelation::Disjoint => "disjoint",
            CriticRelation::DeconfoundedHeldout => "deconfounded",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Subset, Self::Disjoint, Self::DeconfoundedHeldout]
            .into_iter()
            .find(|r| r.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitPolicy {
    pub learner_size: usize,
    pub critic_size: usize,
    pub relation: CriticRelation,
}

#[derive(Debug, Clone)]
pub struct Split {
    pub learner: LabeledSet,
    pub critic: LabeledSet,
}

impl SplitPolicy {
    /// Draws class-balanced learner and critic sets. `heldout` is the
    /// unconfounded pool and is required for the deconfounded relation.
    pub fn apply(&self, pool: &LabeledSet, heldout: Option<&LabeledSet>, seed: u64) -> Result<Split> {
        if self.learner_size == 0 || self.critic_size == 0 {
            return Err(Error::InvalidArgument("split sizes must be positive".into()));
        }
        let mut rng = seed::rng(seed, "split");
        let learner_rows = balanced_indices(pool, self.learner_size, &mut rng)?;
        let learner = pool.select(&learner_rows);
        let critic = match self.relation {
            CriticRelation::Subset => {
                if self.critic_size > self.learner_size {
                    return Err(Error::InvalidArgument(format!(
                        "subset critic set of {} exceeds learner set of {}",
                        self.critic_size, self.learner_size
                    )));
                }
                let rows = balanced_indices(&learner, self.critic_size, &mut rng)?;
                learner.select(&rows)
            }
            CriticRelation::Disjoint => {
                let taken: HashSet<usize> = learner_rows.iter().copied().collect();
                let rest: Vec<usize> = (0..pool.len()).filter(|i| !taken.contains(i)).collect();
                let remainder = pool.select(&rest);
                let rows = balanced_indices(&remainder, self.critic_size, &mut rng)?;
                remainder.select(&rows)
            }
            CriticRelation::DeconfoundedHeldout => {
                let heldout = heldout.ok_or_else(|| {
                    Error::InvalidArgument("deconfounded critic set needs a held-out pool".into())
                })?;
                if heldout.meta().confounded {
                    return Err(Error::InvalidArgument("held-out critic pool is confounded".into()));
                }
                let rows = balanced_indices(heldout, self.critic_size, &mut rng)?;
                heldout.select(&rows)
            }
        };
        let split = Split { learner, critic };
        split.check(self.relation)?;
        Ok(split)
    }
}

impl Split {
    /// Verifies the id relation between the two sets.
    pub fn check(&self, relation: CriticRelation) -> Result<()> {
        let learner: HashSet<u64> = self.learner.ids().iter().copied().collect();
        let ok = match relation {
            CriticRelation::Subset => self.critic.ids().iter().all(|id| learner.contains(id)),
            _ => self.critic.ids().iter().all(|id| !learner.contains(id)),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "critic set violates the {} relation",
                relation.name()
            )))
        }
    }

    /// Learner and critic sets joined, shuffled; the baseline for
    /// deconfounded comparisons trains on this.
    pub fn union(&self, seed: u64) -> Result<LabeledSet> {
        let joined = self.learner.concat(&self.critic)?;
        let mut rows: Vec<usize> = (0..joined.len()).collect();
        rows.shuffle(&mut seed::rng(seed, "split/union"));
        Ok(joined.select(&rows))
    }
}
