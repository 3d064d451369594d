//! Tsetlin machine model and software inference.
//!
//! Each class owns a bank of clauses. A clause holds one Tsetlin automaton
//! per literal; the automaton's state decides whether that literal takes part
//! in the clause's conjunction. Clause outputs are evaluated on packed 64-bit
//! words, with an include mask kept in sync with the automaton states.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{BoolSample, Literals, CLASSES, DEFAULT_THRESHOLD, LITERALS};
use crate::error::{Error, Result};

/// Default states per action; automaton states lie in `[1, 2N]`.
pub const DEFAULT_STATES: u16 = 128;

/// Clause vote direction. Within a bank, even positions are positive and odd
/// positions are negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn for_position(j: usize) -> Self {
        if j.is_multiple_of(2) {
            Polarity::Positive
        } else {
            Polarity::Negative
        }
    }

    pub fn sign(self) -> i32 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }
}

/// Empty clauses output `true` while training and `false` at inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clause {
    polarity: Polarity,
    n_states: u16,
    states: Box<[u16; LITERALS]>,
    include: [u64; 2],
}

impl Clause {
    /// All automata start at `initial`, which must lie in `[1, 2N]`.
    pub fn new(polarity: Polarity, n_states: u16, initial: u16) -> Self {
        assert!((1..=u16::MAX / 2).contains(&n_states));
        assert!((1..=2 * n_states).contains(&initial));
        let mut c = Clause {
            polarity,
            n_states,
            states: Box::new([initial; LITERALS]),
            include: [0; 2],
        };
        c.rebuild_mask();
        c
    }

    pub fn from_states(polarity: Polarity, n_states: u16, states: &[u16]) -> Result<Self> {
        if states.len() != LITERALS {
            return Err(Error::Model(format!(
                "clause has {} automata, expected {LITERALS}",
                states.len()
            )));
        }
        if let Some(&bad) = states.iter().find(|&&s| s < 1 || s > 2 * n_states) {
            return Err(Error::Model(format!(
                "automaton state {bad} outside [1, {}]",
                2 * n_states
            )));
        }
        let mut c = Clause::new(polarity, n_states, 1);
        c.states.copy_from_slice(states);
        c.rebuild_mask();
        Ok(c)
    }

    fn rebuild_mask(&mut self) {
        self.include = [0; 2];
        for k in 0..LITERALS {
            if self.states[k] > self.n_states {
                self.include[k / 64] |= 1 << (k % 64);
            }
        }
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    pub fn n_states(&self) -> u16 {
        self.n_states
    }

    pub fn state(&self, k: usize) -> u16 {
        self.states[k]
    }

    pub fn states(&self) -> &[u16; LITERALS] {
        &self.states
    }

    pub fn is_included(&self, k: usize) -> bool {
        (self.include[k / 64] >> (k % 64)) & 1 == 1
    }

    pub fn include_mask(&self) -> [u64; 2] {
        self.include
    }

    pub fn is_empty(&self) -> bool {
        self.include == [0, 0]
    }

    pub fn included_count(&self) -> usize {
        (self.include[0].count_ones() + self.include[1].count_ones()) as usize
    }

    /// Included literal indices in increasing order.
    pub fn included_literals(&self) -> impl Iterator<Item = usize> + '_ {
        (0..LITERALS).filter(move |&k| self.is_included(k))
    }

    /// Moves automaton `k` one step towards INCLUDE, saturating at `2N`.
    #[inline]
    pub fn increment(&mut self, k: usize) {
        let s = &mut self.states[k];
        if *s < 2 * self.n_states {
            *s += 1;
            if *s == self.n_states + 1 {
                self.include[k / 64] |= 1 << (k % 64);
            }
        }
    }

    /// Moves automaton `k` one step towards EXCLUDE, saturating at `1`.
    #[inline]
    pub fn decrement(&mut self, k: usize) {
        let s = &mut self.states[k];
        if *s > 1 {
            *s -= 1;
            if *s == self.n_states {
                self.include[k / 64] &= !(1 << (k % 64));
            }
        }
    }

    /// Sets automaton `k` to an explicit state (clamped to `[1, 2N]`).
    pub fn set_state(&mut self, k: usize, state: u16) {
        self.states[k] = state.clamp(1, 2 * self.n_states);
        if self.states[k] > self.n_states {
            self.include[k / 64] |= 1 << (k % 64);
        } else {
            self.include[k / 64] &= !(1 << (k % 64));
        }
    }

    /// Conjunction of the included literals.
    #[inline]
    pub fn output(&self, literals: &Literals, mode: Mode) -> bool {
        if self.is_empty() {
            return mode == Mode::Train;
        }
        (literals.0[0] & self.include[0]) == self.include[0]
            && (literals.0[1] & self.include[1]) == self.include[1]
    }
}

/// Signed vote totals, one per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSums(pub [i32; CLASSES]);

/// Index of the largest sum; ties go to the lowest index.
pub fn argmax(sums: &ClassSums) -> usize {
    let mut best = 0;
    for c in 1..CLASSES {
        if sums.0[c] > sums.0[best] {
            best = c;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct TmModel {
    pub t: u32,
    pub s: f64,
    pub n_states: u16,
    pub clauses_per_class: usize,
    pub threshold: u8,
    pub seed: u64,
    banks: Vec<Vec<Clause>>,
}

impl TmModel {
    /// A model whose automata all sit at `initial`.
    pub fn new(
        clauses_per_class: usize,
        n_states: u16,
        t: u32,
        s: f64,
        threshold: u8,
        seed: u64,
        initial: u16,
    ) -> Self {
        let banks = (0..CLASSES)
            .map(|_| {
                (0..clauses_per_class)
                    .map(|j| Clause::new(Polarity::for_position(j), n_states, initial))
                    .collect()
            })
            .collect();
        TmModel {
            t,
            s,
            n_states,
            clauses_per_class,
            threshold,
            seed,
            banks,
        }
    }

    /// A model with every automaton on the EXCLUDE side (all clauses empty).
    pub fn empty(clauses_per_class: usize) -> Self {
        Self::new(
            clauses_per_class,
            DEFAULT_STATES,
            10,
            3.0,
            DEFAULT_THRESHOLD,
            0,
            DEFAULT_STATES,
        )
    }

    pub fn bank(&self, class: usize) -> &[Clause] {
        &self.banks[class]
    }

    pub fn bank_mut(&mut self, class: usize) -> &mut [Clause] {
        &mut self.banks[class]
    }

    pub fn banks(&self) -> &[Vec<Clause>] {
        &self.banks
    }

    /// Clauses per polarity within one bank.
    pub fn clauses_per_polarity(&self) -> usize {
        self.clauses_per_class.div_ceil(2)
    }

    pub fn class_sum(&self, class: usize, literals: &Literals, mode: Mode) -> i32 {
        self.banks[class]
            .iter()
            .filter(|c| c.output(literals, mode))
            .map(|c| c.polarity.sign())
            .sum()
    }

    pub fn class_sums(&self, literals: &Literals, mode: Mode) -> ClassSums {
        ClassSums(std::array::from_fn(|c| self.class_sum(c, literals, mode)))
    }

    pub fn infer(&self, sample: &BoolSample) -> u8 {
        argmax(&self.class_sums(&sample.literals(), Mode::Infer)) as u8
    }

    /// Total INCLUDE-action automata.
    pub fn included_count(&self) -> usize {
        self.banks.iter().flatten().map(Clause::included_count).sum()
    }

    /// Reorders the class banks: bank `c` of the result is bank `perm[c]`
    /// of `self`.
    pub fn permute_classes(&self, perm: &[usize; CLASSES]) -> TmModel {
        let mut out = self.clone();
        out.banks = perm.iter().map(|&p| self.banks[p].clone()).collect();
        out
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            config: ModelConfig {
                classes: CLASSES,
                clauses_per_class: self.clauses_per_class,
                literals: LITERALS,
                t: self.t,
                s: self.s,
                n_states: self.n_states,
                threshold: self.threshold,
                seed: self.seed,
                polarity_layout: POLARITY_LAYOUT.to_string(),
            },
            classes: self
                .banks
                .iter()
                .map(|bank| bank.iter().map(|c| c.states.to_vec()).collect())
                .collect(),
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        if file.format != MODEL_FORMAT {
            return Err(Error::Model(format!("unexpected format {:?}", file.format)));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::Model(format!("unsupported version {}", file.version)));
        }
        let cfg = file.config;
        if cfg.classes != CLASSES || cfg.literals != LITERALS {
            return Err(Error::Model(format!(
                "expected {CLASSES} classes over {LITERALS} literals"
            )));
        }
        if cfg.polarity_layout != POLARITY_LAYOUT {
            return Err(Error::Model(format!(
                "unsupported polarity layout {:?}",
                cfg.polarity_layout
            )));
        }
        if cfg.n_states == 0 || cfg.n_states > u16::MAX / 2 {
            return Err(Error::Model(format!("bad n_states {}", cfg.n_states)));
        }
        if file.classes.len() != CLASSES {
            return Err(Error::Model(format!("{} class banks", file.classes.len())));
        }
        let mut banks = Vec::with_capacity(CLASSES);
        for (c, bank) in file.classes.iter().enumerate() {
            if bank.len() != cfg.clauses_per_class {
                return Err(Error::Model(format!(
                    "class {c} has {} clauses, expected {}",
                    bank.len(),
                    cfg.clauses_per_class
                )));
            }
            let clauses = bank
                .iter()
                .enumerate()
                .map(|(j, states)| Clause::from_states(Polarity::for_position(j), cfg.n_states, states))
                .collect::<Result<Vec<_>>>()?;
            banks.push(clauses);
        }
        Ok(TmModel {
            t: cfg.t,
            s: cfg.s,
            n_states: cfg.n_states,
            clauses_per_class: cfg.clauses_per_class,
            threshold: cfg.threshold,
            seed: cfg.seed,
            banks,
        })
    }

    pub fn to_json(&self) -> String {
        // Serializing plain integers and one float cannot fail.
        serde_json::to_string(&self.to_file()).expect("model serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
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

pub const MODEL_FORMAT: &str = "flextm-model";
pub const MODEL_VERSION: u32 = 1;
const POLARITY_LAYOUT: &str = "even-positive";

/// On-disk model document.
///
/// `classes[c][j]` is the array of 128 automaton states of clause `j` in
/// class `c`; clause `j` is positive when `j` is even.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub classes: Vec<Vec<Vec<u16>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub classes: usize,
    pub clauses_per_class: usize,
    pub literals: usize,
    #[serde(rename = "T")]
    pub t: u32,
    pub s: f64,
    pub n_states: u16,
    pub threshold: u8,
    pub seed: u64,
    pub polarity_layout: String,
}

/// Per-literal evaluators that read automaton states directly. They share no
/// code with the packed fast path and serve as its oracle.
pub mod reference {
    use super::*;

    pub fn clause_output(clause: &Clause, literals: &[bool; LITERALS], mode: Mode) -> bool {
        let mut any = false;
        for (k, &lit) in literals.iter().enumerate() {
            if clause.state(k) > clause.n_states() {
                any = true;
                if !lit {
                    return false;
                }
            }
        }
        if any {
            true
        } else {
            mode == Mode::Train
        }
    }

    pub fn class_sum(model: &TmModel, class: usize, literals: &[bool; LITERALS], mode: Mode) -> i32 {
        let mut positive = 0;
        let mut negative = 0;
        for (j, clause) in model.bank(class).iter().enumerate() {
            if clause_output(clause, literals, mode) {
                if j % 2 == 0 {
                    positive += 1;
                } else {
                    negative += 1;
                }
            }
        }
        positive - negative
    }

    pub fn infer(model: &TmModel, literals: &[bool; LITERALS]) -> u8 {
        let mut best_class = 0;
        let mut best_sum = i32::MIN;
        for c in 0..CLASSES {
            let s = class_sum(model, c, literals, Mode::Infer);
            if s > best_sum {
                best_sum = s;
                best_class = c;
            }
        }
        best_class as u8
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::literal_vector;
    use proptest::prelude::*;

    fn clause_with(includes: &[usize], polarity: Polarity) -> Clause {
        let mut c = Clause::new(polarity, DEFAULT_STATES, DEFAULT_STATES);
        for &k in includes {
            c.increment(k);
        }
        c
    }

    #[test]
    fn empty_clause_conventions() {
        let c = Clause::new(Polarity::Positive, DEFAULT_STATES, DEFAULT_STATES);
        let lits = Literals::from_bits(0x1234);
        assert!(!c.output(&lits, Mode::Infer));
        assert!(c.output(&lits, Mode::Train));
    }

    #[test]
    fn conjunction_over_included_literals() {
        let c = clause_with(&[3, 70], Polarity::Positive);
        // literal 3 = x[3], literal 70 = !x[6]
        let mut bits = 1u64 << 3 | 1 << 6;
        assert!(!c.output(&Literals::from_bits(bits), Mode::Infer));
        bits &= !(1 << 6);
        assert!(c.output(&Literals::from_bits(bits), Mode::Infer));
        assert_eq!(c.included_literals().collect::<Vec<_>>(), vec![3, 70]);
    }

    #[test]
    fn automaton_saturates_and_tracks_mask() {
        let mut c = Clause::new(Polarity::Positive, 4, 8);
        c.increment(0);
        assert_eq!(c.state(0), 8);
        assert!(c.is_included(0));
        for _ in 0..10 {
            c.decrement(0);
        }
        assert_eq!(c.state(0), 1);
        assert!(!c.is_included(0));
        c.increment(0);
        c.increment(0);
        c.increment(0);
        assert_eq!(c.state(0), 4);
        assert!(!c.is_included(0));
        c.increment(0);
        assert!(c.is_included(0));
    }

    #[test]
    fn class_sum_counts_votes() {
        let mut m = TmModel::empty(8);
        assert_eq!(m.class_sum(2, &Literals::from_bits(0), Mode::Infer), 0);
        // positives at 0, 2, 4 fire; negative at 1 fires; negative at 3 does not
        for j in [0, 1, 2, 4] {
            m.bank_mut(2)[j].increment(64); // !x[0]
        }
        m.bank_mut(2)[3].increment(0); // x[0]
        assert_eq!(m.class_sum(2, &Literals::from_bits(0), Mode::Infer), 2);
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax(&ClassSums([0; 10])), 0);
        assert_eq!(argmax(&ClassSums([-5, 3, 3, 1, 0, 0, 0, 0, 0, 0])), 1);
        assert_eq!(argmax(&ClassSums([1, 9, 2, 0, 0, 0, 0, 0, 0, 0])), 1);
        assert_eq!(argmax(&ClassSums([-3; 10])), 0);
    }

    #[test]
    fn empty_model_predicts_zero() {
        let m = TmModel::empty(4);
        for bits in [0, u64::MAX, 0xdead_beef] {
            assert_eq!(m.infer(&BoolSample::new(bits, 3)), 0);
        }
    }

    #[test]
    fn json_round_trip_and_validation() {
        let mut m = TmModel::new(4, 16, 5, 1.8, 7, 42, 16);
        m.bank_mut(9)[3].increment(127);
        let text = m.to_json();
        let back = TmModel::from_json(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json(), text);

        let mut file = m.to_file();
        file.classes[0][0][0] = 33;
        assert!(TmModel::from_file(file).is_err());
        let mut file = m.to_file();
        file.version = 99;
        assert!(TmModel::from_file(file).is_err());
        let mut file = m.to_file();
        file.classes[1].pop();
        assert!(TmModel::from_file(file).is_err());
    }

    fn arb_model(clauses: usize) -> impl Strategy<Value = TmModel> {
        // states drawn from a small window around the action boundary so
        // that clauses carry a handful of includes
        proptest::collection::vec(
            proptest::collection::vec(
                prop_oneof![20 => Just(8u16), 1 => Just(9u16), 1 => 1u16..=16],
                LITERALS,
            ),
            CLASSES * clauses,
        )
        .prop_map(move |all| {
            let mut m = TmModel::new(clauses, 8, 10, 3.0, 8, 0, 8);
            for (i, states) in all.into_iter().enumerate() {
                let (c, j) = (i / clauses, i % clauses);
                m.bank_mut(c)[j] = Clause::from_states(Polarity::for_position(j), 8, &states).unwrap();
            }
            m
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn packed_matches_reference(m in arb_model(6), bits in proptest::collection::vec(any::<u64>(), 16)) {
            for b in bits {
                let s = BoolSample::new(b, 0);
                let lits = literal_vector(&s);
                for c in 0..CLASSES {
                    for mode in [Mode::Train, Mode::Infer] {
                        prop_assert_eq!(m.class_sum(c, &s.literals(), mode), reference::class_sum(&m, c, &lits, mode));
                    }
                }
                prop_assert_eq!(m.infer(&s), reference::infer(&m, &lits));
            }
        }

        #[test]
        fn class_sum_is_bounded(m in arb_model(6), b in any::<u64>()) {
            let lits = Literals::from_bits(b);
            for c in 0..CLASSES {
                prop_assert!(m.class_sum(c, &lits, Mode::Infer).unsigned_abs() as usize <= m.clauses_per_polarity());
            }
        }

        #[test]
        fn including_more_never_turns_output_on(m in arb_model(2), b in any::<u64>(), k in 0usize..LITERALS) {
            let lits = Literals::from_bits(b);
            let mut c = m.bank(0)[0].clone();
            if !c.is_empty() && !c.is_included(k) {
                let before = c.output(&lits, Mode::Infer);
                c.set_state(k, c.n_states() + 1);
                prop_assert!(before || !c.output(&lits, Mode::Infer));
            }
        }

        #[test]
        fn permuting_banks_permutes_winner(m in arb_model(4), b in any::<u64>(), shift in 0usize..CLASSES) {
            let perm: [usize; CLASSES] = std::array::from_fn(|c| (c + shift) % CLASSES);
            let permuted = m.permute_classes(&perm);
            let lits = Literals::from_bits(b);
            let sums = m.class_sums(&lits, Mode::Infer);
            let psums = permuted.class_sums(&lits, Mode::Infer);
            for (c, &p) in perm.iter().enumerate() {
                prop_assert_eq!(psums.0[c], sums.0[p]);
            }
            let w = argmax(&psums);
            prop_assert_eq!(psums.0[w], sums.0[argmax(&sums)]);
        }
    }
}
