//! Inference-only models: included literals of non-empty clauses.
//!
//! Empty clauses vote 0 at inference, so dropping them preserves every class
//! sum exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{BoolSample, CLASSES, LITERALS};
use crate::error::{Error, Result};
use crate::model::{argmax, ClassSums, Polarity, TmModel};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrunedClause {
    /// Position of the clause in its source bank.
    pub index: usize,
    pub polarity: Polarity,
    /// Strictly increasing literal indices in `[0, 128)`.
    pub literals: Vec<u8>,
}

impl PrunedClause {
    pub fn mask(&self) -> [u64; 2] {
        let mut m = [0u64; 2];
        for &k in &self.literals {
            m[k as usize / 64] |= 1 << (k % 64);
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunedModel {
    pub format: String,
    pub version: u32,
    pub clauses_per_class: usize,
    pub threshold: u8,
    pub source_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_accuracy: Option<f64>,
    pub classes: Vec<Vec<PrunedClause>>,
}

pub const PRUNED_FORMAT: &str = "flextm-pruned";
pub const PRUNED_VERSION: u32 = 1;

pub fn prune(model: &TmModel) -> PrunedModel {
    let classes = model
        .banks()
        .iter()
        .map(|bank| {
            bank.iter()
                .enumerate()
                .filter(|(_, c)| !c.is_empty())
                .map(|(j, c)| PrunedClause {
                    index: j,
                    polarity: c.polarity(),
                    literals: c.included_literals().map(|k| k as u8).collect(),
                })
                .collect()
        })
        .collect();
    PrunedModel {
        format: PRUNED_FORMAT.to_string(),
        version: PRUNED_VERSION,
        clauses_per_class: model.clauses_per_class,
        threshold: model.threshold,
        source_seed: model.seed,
        source_accuracy: None,
        classes,
    }
}

/// Total included literals over all clauses.
pub fn count_included(pruned: &PrunedModel) -> usize {
    pruned.clauses().map(|c| c.literals.len()).sum()
}

pub fn infer_pruned(pruned: &PrunedModel, sample: &BoolSample) -> u8 {
    argmax(&pruned.class_sums(sample)) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassComplexity {
    pub positive_clauses: usize,
    pub negative_clauses: usize,
    pub literals: usize,
    pub max_clause_literals: usize,
}

impl PrunedModel {
    /// A model with no clauses at all.
    pub fn empty(clauses_per_class: usize) -> Self {
        prune(&TmModel::empty(clauses_per_class))
    }

    pub fn clauses(&self) -> impl Iterator<Item = &PrunedClause> {
        self.classes.iter().flatten()
    }

    pub fn clause_count(&self) -> usize {
        self.clauses().count()
    }

    pub fn class_sums(&self, sample: &BoolSample) -> ClassSums {
        let lits = sample.literals();
        ClassSums(std::array::from_fn(|c| {
            self.classes[c]
                .iter()
                .filter(|cl| cl.literals.iter().all(|&k| lits.get(k as usize)))
                .map(|cl| cl.polarity.sign())
                .sum()
        }))
    }

    /// Largest number of clauses of one polarity in any class.
    pub fn max_clauses_per_polarity(&self) -> usize {
        self.classes
            .iter()
            .flat_map(|bank| {
                let pos = bank.iter().filter(|c| c.polarity == Polarity::Positive).count();
                [pos, bank.len() - pos]
            })
            .max()
            .unwrap_or(0)
    }

    pub fn complexity(&self) -> Vec<ClassComplexity> {
        self.classes
            .iter()
            .map(|bank| ClassComplexity {
                positive_clauses: bank.iter().filter(|c| c.polarity == Polarity::Positive).count(),
                negative_clauses: bank.iter().filter(|c| c.polarity == Polarity::Negative).count(),
                literals: bank.iter().map(|c| c.literals.len()).sum(),
                max_clause_literals: bank.iter().map(|c| c.literals.len()).max().unwrap_or(0),
            })
            .collect()
    }

    /// Histogram of clause sizes: entry `k` counts clauses with `k` literals.
    pub fn clause_size_histogram(&self) -> Vec<usize> {
        let mut h = Vec::new();
        for c in self.clauses() {
            let k = c.literals.len();
            if h.len() <= k {
                h.resize(k + 1, 0);
            }
            h[k] += 1;
        }
        h
    }

    /// Rebuilds a full automaton model: included literals sit one step on
    /// the INCLUDE side, everything else one step on the EXCLUDE side.
    pub fn to_model(&self, n_states: u16) -> TmModel {
        let mut m = TmModel::new(
            self.clauses_per_class,
            n_states,
            1,
            2.0,
            self.threshold,
            self.source_seed,
            n_states,
        );
        for (c, bank) in self.classes.iter().enumerate() {
            for cl in bank {
                for &k in &cl.literals {
                    m.bank_mut(c)[cl.index].set_state(k as usize, n_states + 1);
                }
            }
        }
        m
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Model(m));
        if self.format != PRUNED_FORMAT || self.version != PRUNED_VERSION {
            return fail(format!("unsupported pruned model {} v{}", self.format, self.version));
        }
        if self.classes.len() != CLASSES {
            return fail(format!("{} classes, expected {CLASSES}", self.classes.len()));
        }
        for (c, bank) in self.classes.iter().enumerate() {
            let mut last_index = None;
            for cl in bank {
                if cl.index >= self.clauses_per_class {
                    return fail(format!("class {c}: clause index {} out of range", cl.index));
                }
                if last_index.is_some_and(|l| cl.index <= l) {
                    return fail(format!("class {c}: clause indices not increasing"));
                }
                last_index = Some(cl.index);
                if cl.polarity != Polarity::for_position(cl.index) {
                    return fail(format!("class {c}: clause {} has the wrong polarity", cl.index));
                }
                if cl.literals.is_empty() {
                    return fail(format!("class {c}: clause {} is empty", cl.index));
                }
                if cl.literals.windows(2).any(|w| w[0] >= w[1]) {
                    return fail(format!("class {c}: clause {} literals not strictly increasing", cl.index));
                }
                if let Some(&k) = cl.literals.iter().find(|&&k| k as usize >= LITERALS) {
                    return fail(format!("class {c}: clause {} references literal {k}", cl.index));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("pruned model serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: PrunedModel = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
