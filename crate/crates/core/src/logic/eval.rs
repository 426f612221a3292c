//! Soft rule semantics: product over conditions (times slot presence),
//! maximised over injective assignments of rule objects to slots.

use super::rule::Rule;
use crate::datasets::ConceptSchema;

/// `score[o][s]`: how well slot `s` realises rule object `o`.
fn object_scores(rule: &Rule, z: &[f64], schema: &ConceptSchema) -> Vec<Vec<f64>> {
    let a = schema.attributes();
    rule.objects()
        .iter()
        .map(|conds| {
            z.chunks(a)
                .map(|row| {
                    conds
                        .iter()
                        .fold(schema.presence_of(row), |acc, &c| acc * row[schema.column(c)])
                })
                .collect()
        })
        .collect()
}

/// Best assignment via a DP over slots and subsets of rule objects.
/// Returns the value and, per rule object, its slot.
fn best_assignment(scores: &[Vec<f64>], slots: usize) -> (f64, Vec<usize>) {
    let r = scores.len();
    let full = (1usize << r) - 1;
    if r > slots {
        return (0.0, Vec::new());
    }
    // dp[s][mask]: best product using slots < s covering rule objects `mask`.
    let mut dp = vec![vec![f64::NEG_INFINITY; full + 1]; slots + 1];
    let mut choice = vec![vec![usize::MAX; full + 1]; slots + 1];
    dp[0][0] = 1.0;
    for s in 0..slots {
        for mask in 0..=full {
            let cur = dp[s][mask];
            if cur == f64::NEG_INFINITY {
                continue;
            }
            // leave slot s unused
            if cur > dp[s + 1][mask] {
                dp[s + 1][mask] = cur;
                choice[s + 1][mask] = usize::MAX;
            }
            for (o, row) in scores.iter().enumerate() {
                if mask & (1 << o) != 0 {
                    continue;
                }
                let next = mask | (1 << o);
                let v = cur * row[s];
                if v > dp[s + 1][next] {
                    dp[s + 1][next] = v;
                    choice[s + 1][next] = o;
                }
            }
        }
    }
    let mut slots_of = vec![0; r];
    let mut mask = full;
    for s in (1..=slots).rev() {
        let o = choice[s][mask];
        if o != usize::MAX {
            slots_of[o] = s - 1;
            mask &= !(1 << o);
        }
    }
    (dp[slots][full].max(0.0), slots_of)
}

/// Validity of `rule` on one flattened `[O,A]` concept matrix.
pub fn rule_validity(rule: &Rule, z: &[f64], schema: &ConceptSchema) -> f64 {
    let scores = object_scores(rule, z, schema);
    best_assignment(&scores, schema.slots).0
}

/// Binary `[O,A]` target marking each condition at the slot its rule object
/// takes under the best assignment for this sample.
pub fn ground_rule(rule: &Rule, z: &[f64], schema: &ConceptSchema) -> Vec<f64> {
    let a = schema.attributes();
    let mut out = vec![0.0; schema.slots * a];
    let scores = object_scores(rule, z, schema);
    let (_, slots_of) = best_assignment(&scores, schema.slots);
    for (conds, &slot) in rule.objects().iter().zip(&slots_of) {
        for &c in conds {
            out[slot * a + schema.column(c)] = 1.0;
        }
    }
    out
}
