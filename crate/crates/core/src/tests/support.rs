

use crate::dataset::CLASSES;
use crate::model::Polarity;
use crate::prune::{PrunedClause, PRUNED_FORMAT, PRUNED_VERSION};
use crate::PrunedModel;
use proptest::prelude::*;

/// Assembles a pruned model; `classes[c]` lists `(index, literals)` pairs.
pub fn pruned(clauses_per_class: usize, classes: Vec<Vec<(usize, Vec<u8>)>>) -> PrunedModel {
    assert_eq!(classes.len(), CLASSES);
    let classes = classes
        .into_iter()
        .map(|bank| {
            bank.into_iter()
                .map(|(index, mut literals)| {
                    literals.sort_unstable();
                    literals.dedup();
                    PrunedClause {
                        index,
                        polarity: Polarity::for_position(index),
                        literals,
                    }
                })
                .collect()
        })
        .collect();
    let m = PrunedModel {
        format: PRUNED_FORMAT.to_string(),
        version: PRUNED_VERSION,
        clauses_per_class,
        threshold: 8,
        source_seed: 0,
        source_accuracy: None,
        classes,
    };
    m.validate().expect("valid test model");
    m
}

/// Random pruned models with up to `max_clauses` clauses per class, each
/// clause holding 1..=`max_literals` literals drawn from `literal_pool`.
pub fn arb_pruned(
    max_clauses: usize,
    max_literals: usize,
    literal_pool: Vec<u8>,
) -> impl Strategy<Value = PrunedModel> {
    let clause = proptest::sample::subsequence(literal_pool, 1..=max_literals);
    let bank = proptest::collection::vec(proptest::option::of(clause), max_clauses);
    proptest::collection::vec(bank, CLASSES).prop_map(move |banks| {
        let classes = banks
            .into_iter()
            .map(|bank| {
                bank.into_iter()
                    .enumerate()
                    .filter_map(|(j, c)| c.map(|lits| (j, lits)))
                    .collect()
            })
            .collect();
        pruned(max_clauses, classes)
    })
}

pub fn all_literals() -> Vec<u8> {
    (0..128u8).collect()
}
