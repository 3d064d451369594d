//! Stochastic Tsetlin machine training.
//!
//! One training step looks at the target class and one uniformly drawn
//! non-target class. Each clause of those two banks independently receives
//! feedback with a probability driven by the clamped class sum; which of the
//! two feedback types it gets depends on its polarity and on whether its
//! class is the target.
//!
//! All randomness comes from [`RandomStream`] (ChaCha8, seeded from a u64),
//! so a `(config, data)` pair always yields the same model.

use rand::distributions::{Bernoulli, Distribution};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{BoolSample, Dataset, Literals, CLASSES, DEFAULT_THRESHOLD, LITERALS};
use crate::error::{Error, Result};
use crate::model::{Clause, Mode, Polarity, TmModel, DEFAULT_STATES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(rename = "T")]
    pub t: u32,
    pub s: f64,
    pub epochs: u32,
    pub clauses_per_class: usize,
    #[serde(default = "default_states")]
    pub n_states: u16,
    #[serde(default = "default_threshold")]
    pub threshold: u8,
    #[serde(default)]
    pub seed: u64,
    /// Reinforce true literals of a firing clause on every Type I update
    /// instead of with probability `(s-1)/s`. Off by default.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub boost_true_positive: bool,
}

fn default_states() -> u16 {
    DEFAULT_STATES
}

fn default_threshold() -> u8 {
    DEFAULT_THRESHOLD
}

impl TrainConfig {
    /// 100 clauses per class, T = 10, s = 3.0, 100 epochs.
    pub fn full() -> Self {
        TrainConfig {
            t: 10,
            s: 3.0,
            epochs: 100,
            clauses_per_class: 100,
            n_states: DEFAULT_STATES,
            threshold: DEFAULT_THRESHOLD,
            seed: 0,
            boost_true_positive: false,
        }
    }

    /// 20 clauses per class, T = 5, s = 1.8, 100 epochs.
    pub fn compact() -> Self {
        TrainConfig {
            t: 5,
            s: 1.8,
            clauses_per_class: 20,
            ..Self::full()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        TrainConfig {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.t == 0 {
            return fail("T must be positive".into());
        }
        if self.s.is_nan() || self.s <= 1.0 || !self.s.is_finite() {
            return fail(format!("s must be a finite real > 1, got {}", self.s));
        }
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        if self.clauses_per_class == 0 {
            return fail("clauses_per_class must be positive".into());
        }
        if self.n_states == 0 || self.n_states > u16::MAX / 2 {
            return fail(format!("n_states out of range: {}", self.n_states));
        }
        if !(1..=crate::dataset::MAX_INTENSITY).contains(&self.threshold) {
            return fail(format!("threshold out of range: {}", self.threshold));
        }
        Ok(())
    }
}

/// Deterministic pseudo-random source: ChaCha with 8 rounds, seeded through
/// `rand_core`'s `seed_from_u64` (PCG32-expanded key).
#[derive(Debug, Clone)]
pub struct RandomStream(ChaCha8Rng);

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        RandomStream(ChaCha8Rng::seed_from_u64(seed))
    }

    #[inline]
    pub fn chance(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            false
        } else if p >= 1.0 {
            true
        } else {
            self.0.gen_bool(p)
        }
    }

    #[inline]
    pub fn sample(&mut self, d: &Bernoulli) -> bool {
        d.sample(&mut self.0)
    }

    /// Uniform integer in `[0, n)`.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        self.0.gen_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.0);
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.gen()
    }
}

/// Precomputed Bernoulli draws for the specificity `s`.
#[derive(Debug, Clone, Copy)]
pub struct Specificity {
    /// Probability `1/s`.
    pub forget: Bernoulli,
    /// Probability `(s-1)/s`.
    pub memorize: Bernoulli,
    /// Skip the `memorize` draw and always reinforce.
    pub boost: bool,
}

impl Specificity {
    pub fn new(s: f64) -> Result<Self> {
        if s.is_nan() || s <= 1.0 || !s.is_finite() {
            return Err(Error::Config(format!("s must be a finite real > 1, got {s}")));
        }
        let p = 1.0 / s;
        Ok(Specificity {
            forget: Bernoulli::new(p).expect("1/s in (0,1)"),
            memorize: Bernoulli::new(1.0 - p).expect("(s-1)/s in (0,1)"),
            boost: false,
        })
    }

    pub fn boosted(self, boost: bool) -> Self {
        Specificity { boost, ..self }
    }
}

/// Probability that a clause of the class receives feedback.
///
/// With `c = clamp(sum, -T, T)`: `(T - c) / 2T` for the target class,
/// `(T + c) / 2T` otherwise.
pub fn feedback_strength(class_sum: i32, t: u32, is_target: bool) -> f64 {
    let t = t as i64;
    let c = (class_sum as i64).clamp(-t, t);
    let num = if is_target { t - c } else { t + c };
    num as f64 / (2 * t) as f64
}

/// Type I feedback: reinforce the literals of a firing clause that are true,
/// erode everything else.
pub fn type_i_feedback(
    clause: &mut Clause,
    literals: &Literals,
    spec: &Specificity,
    rng: &mut RandomStream,
) {
    if clause.output(literals, Mode::Train) {
        for k in 0..LITERALS {
            if literals.get(k) {
                if spec.boost || rng.sample(&spec.memorize) {
                    clause.increment(k);
                }
            } else if rng.sample(&spec.forget) {
                clause.decrement(k);
            }
        }
    } else {
        for k in 0..LITERALS {
            if rng.sample(&spec.forget) {
                clause.decrement(k);
            }
        }
    }
}

/// Type II feedback: a firing clause pulls in excluded literals that are
/// false, so that it stops firing on this input.
pub fn type_ii_feedback(clause: &mut Clause, literals: &Literals) {
    if !clause.output(literals, Mode::Train) {
        return;
    }
    let mask = clause.include_mask();
    for (w, m) in mask.iter().enumerate() {
        let mut candidates = !literals.0[w] & !m;
        while candidates != 0 {
            let bit = candidates.trailing_zeros() as usize;
            candidates &= candidates - 1;
            clause.increment(w * 64 + bit);
        }
    }
}

fn bank_feedback(
    bank: &mut [Clause],
    literals: &Literals,
    probability: f64,
    is_target: bool,
    spec: &Specificity,
    rng: &mut RandomStream,
) {
    for clause in bank.iter_mut() {
        if !rng.chance(probability) {
            continue;
        }
        let reinforce = matches!(
            (clause.polarity(), is_target),
            (Polarity::Positive, true) | (Polarity::Negative, false)
        );
        if reinforce {
            type_i_feedback(clause, literals, spec, rng);
        } else {
            type_ii_feedback(clause, literals);
        }
    }
}

/// Updates `model` on one labelled sample.
pub fn train_step(
    model: &mut TmModel,
    literals: &Literals,
    label: usize,
    spec: &Specificity,
    rng: &mut RandomStream,
) {
    let mut other = rng.below(CLASSES - 1);
    if other >= label {
        other += 1;
    }
    let t = model.t;
    let target_sum = model.class_sum(label, literals, Mode::Train);
    let other_sum = model.class_sum(other, literals, Mode::Train);

    let p = feedback_strength(target_sum, t, true);
    bank_feedback(model.bank_mut(label), literals, p, true, spec, rng);
    let p = feedback_strength(other_sum, t, false);
    bank_feedback(model.bank_mut(other), literals, p, false, spec, rng);
}

/// Incremental trainer; owns the model exclusively while training.
pub struct Trainer {
    model: TmModel,
    spec: Specificity,
    rng: RandomStream,
    order: Vec<usize>,
    epochs_done: u32,
}

impl Trainer {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = TmModel::new(
            config.clauses_per_class,
            config.n_states,
            config.t,
            config.s,
            config.threshold,
            config.seed,
            config.n_states,
        );
        Ok(Trainer {
            model,
            spec: Specificity::new(config.s)?.boosted(config.boost_true_positive),
            rng: RandomStream::new(config.seed),
            order: Vec::new(),
            epochs_done: 0,
        })
    }

    /// One pass over `samples` in a freshly shuffled order.
    pub fn run_epoch(&mut self, samples: &[(Literals, usize)]) {
        if self.order.len() != samples.len() {
            self.order = (0..samples.len()).collect();
        }
        self.rng.shuffle(&mut self.order);
        for &i in &self.order {
            let (lits, label) = &samples[i];
            train_step(&mut self.model, lits, *label, &self.spec, &mut self.rng);
        }
        self.epochs_done += 1;
    }

    pub fn epochs_done(&self) -> u32 {
        self.epochs_done
    }

    pub fn model(&self) -> &TmModel {
        &self.model
    }

    pub fn into_model(self) -> TmModel {
        self.model
    }
}

fn prepare(samples: &[BoolSample]) -> Vec<(Literals, usize)> {
    samples
        .iter()
        .map(|s| (s.literals(), s.label as usize))
        .collect()
}

fn check_threshold(config: &TrainConfig, data: &Dataset) -> Result<()> {
    if config.threshold != data.threshold {
        return Err(Error::Config(format!(
            "config threshold {} differs from dataset threshold {}",
            config.threshold, data.threshold
        )));
    }
    Ok(())
}

/// Trains one model for `config.epochs` epochs over `data.train`.
pub fn train(config: &TrainConfig, data: &Dataset) -> Result<TmModel> {
    check_threshold(config, data)?;
    let samples = prepare(&data.train);
    let mut trainer = Trainer::new(config)?;
    for _ in 0..config.epochs {
        trainer.run_epoch(&samples);
    }
    Ok(trainer.into_model())
}

/// Fraction of samples classified correctly.
pub fn evaluate(model: &TmModel, samples: &[BoolSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let correct = samples
        .par_iter()
        .filter(|s| model.infer(s) == s.label)
        .count();
    Ok(correct as f64 / samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleEntry {
    pub seed: u64,
    pub test_accuracy: f64,
    pub included: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub config: TrainConfig,
    pub entries: Vec<EnsembleEntry>,
    pub best_seed: u64,
    pub mean_accuracy: f64,
    pub max_accuracy: f64,
    pub min_accuracy: f64,
}

impl EnsembleReport {
    fn from_entries(config: TrainConfig, mut entries: Vec<EnsembleEntry>) -> Self {
        entries.sort_by_key(|e| e.seed);
        let best = entries
            .iter()
            .fold(None::<&EnsembleEntry>, |best, e| match best {
                Some(b) if b.test_accuracy >= e.test_accuracy => Some(b),
                _ => Some(e),
            })
            .expect("non-empty ensemble");
        let n = entries.len() as f64;
        EnsembleReport {
            config,
            best_seed: best.seed,
            max_accuracy: best.test_accuracy,
            mean_accuracy: entries.iter().map(|e| e.test_accuracy).sum::<f64>() / n,
            min_accuracy: entries
                .iter()
                .map(|e| e.test_accuracy)
                .fold(f64::INFINITY, f64::min),
            entries,
        }
    }
}

/// Trains `n_models` models with seeds `base.seed .. base.seed + n_models`,
/// scores each on the test partition and returns the report together with
/// the best model (ties go to the lowest seed).
///
/// Models train in parallel; each model's training is sequential, so the
/// result does not depend on the worker count.
pub fn generate_ensemble(
    base: &TrainConfig,
    n_models: usize,
    data: &Dataset,
) -> Result<(EnsembleReport, TmModel)> {
    if n_models == 0 {
        return Err(Error::Config("ensemble needs at least one model".into()));
    }
    base.validate()?;
    check_threshold(base, data)?;
    let samples = prepare(&data.train);
    let results: Vec<(EnsembleEntry, TmModel)> = (0..n_models as u64)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let config = base.with_seed(base.seed.wrapping_add(i));
            let mut trainer = Trainer::new(&config)?;
            for _ in 0..config.epochs {
                trainer.run_epoch(&samples);
            }
            let model = trainer.into_model();
            let entry = EnsembleEntry {
                seed: config.seed,
                test_accuracy: evaluate(&model, &data.test)?,
                included: model.included_count(),
            };
            Ok((entry, model))
        })
        .collect::<Result<_>>()?;

    let report = EnsembleReport::from_entries(
        base.clone(),
        results.iter().map(|(e, _)| e.clone()).collect(),
    );
    let best = results
        .into_iter()
        .find(|(e, _)| e.seed == report.best_seed)
        .map(|(_, m)| m)
        .expect("best seed present");
    Ok((report, best))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotReport {
    /// Test accuracy after each epoch (index 0 = after epoch 1).
    pub curve: Vec<f64>,
    /// Smallest epoch count past which accuracy stopped improving, if the
    /// plateau criterion was met within the budget.
    pub selected_epochs: Option<u32>,
    pub window: u32,
    pub min_gain: f64,
}

/// Epoch-count pilot: trains one model, scoring it after every epoch, and
/// stops once the best accuracy gained less than `min_gain` over the last
/// `window` epochs. The selected epoch count is the start of that window.
pub fn pilot_epochs(
    config: &TrainConfig,
    data: &Dataset,
    max_epochs: u32,
    window: u32,
    min_gain: f64,
) -> Result<PilotReport> {
    check_threshold(config, data)?;
    let samples = prepare(&data.train);
    let mut trainer = Trainer::new(config)?;
    let mut curve = Vec::new();
    let mut best_so_far = Vec::new();
    let mut selected = None;
    for e in 1..=max_epochs {
        trainer.run_epoch(&samples);
        let acc = evaluate(trainer.model(), &data.test)?;
        curve.push(acc);
        let best = best_so_far.last().copied().unwrap_or(0.0f64).max(acc);
        best_so_far.push(best);
        if e > window {
            let earlier = best_so_far[(e - window - 1) as usize];
            if best - earlier < min_gain {
                selected = Some(e - window);
                break;
            }
        }
    }
    Ok(PilotReport {
        curve,
        selected_epochs: selected,
        window,
        min_gain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DEFAULT_STATES;

    #[test]
    fn feedback_strength_examples() {
        assert_eq!(feedback_strength(0, 10, true), 0.5);
        assert_eq!(feedback_strength(10, 10, true), 0.0);
        assert_eq!(feedback_strength(-25, 10, true), 1.0);
        assert_eq!(feedback_strength(-10, 10, false), 0.0);
        assert_eq!(feedback_strength(25, 10, false), 1.0);
        assert_eq!(feedback_strength(3, 5, false), 0.8);
    }

    #[test]
    fn type_i_clamps_at_top() {
        let spec = Specificity::new(3.0).unwrap();
        let mut rng = RandomStream::new(1);
        let mut c = Clause::new(Polarity::Positive, DEFAULT_STATES, DEFAULT_STATES);
        c.set_state(0, 2 * DEFAULT_STATES);
        // clause {x0} fires on x0 = 1 and keeps pushing x0 upwards
        for _ in 0..50 {
            type_i_feedback(&mut c, &Literals::from_bits(1), &spec, &mut rng);
            assert_eq!(c.state(0), 2 * DEFAULT_STATES);
        }
    }

    #[test]
    fn type_i_non_firing_decrement_rate_vanishes_with_large_s() {
        let spec = Specificity::new(1e9).unwrap();
        let mut rng = RandomStream::new(9);
        let mut c = Clause::new(Polarity::Positive, DEFAULT_STATES, DEFAULT_STATES);
        c.set_state(0, DEFAULT_STATES + 5);
        let before = c.clone();
        // x[0] = 0, so the clause {x0} does not fire
        for _ in 0..100 {
            type_i_feedback(&mut c, &Literals::from_bits(0), &spec, &mut rng);
        }
        assert_eq!(c, before);
    }

    #[test]
    fn type_ii_examples() {
        let lits = Literals::from_bits(0b1);
        let mut c = Clause::new(Polarity::Negative, DEFAULT_STATES, DEFAULT_STATES);
        c.set_state(1, DEFAULT_STATES + 1); // includes x[1], which is 0
        let before = c.clone();
        type_ii_feedback(&mut c, &lits);
        assert_eq!(c, before, "non-firing clause untouched");

        let mut c = Clause::new(Polarity::Negative, DEFAULT_STATES, DEFAULT_STATES);
        c.set_state(0, DEFAULT_STATES + 1);
        type_ii_feedback(&mut c, &lits);
        assert_eq!(c.state(1), DEFAULT_STATES + 1, "false literal steps to include");
        assert!(c.is_included(1));
        assert_eq!(c.state(64), DEFAULT_STATES + 1, "!x0 is false");
        assert_eq!(c.state(65), DEFAULT_STATES, "!x1 is true");
        assert_eq!(c.state(0), DEFAULT_STATES + 1, "included literal untouched");
    }

    #[test]
    fn type_ii_on_all_true_literals_is_identity() {
        // only false, excluded literals move
        let lits = Literals::from_bits(0xff);
        let mut c = Clause::new(Polarity::Positive, DEFAULT_STATES, DEFAULT_STATES);
        c.set_state(0, DEFAULT_STATES + 3);
        type_ii_feedback(&mut c, &lits);
        for k in 0..LITERALS {
            let expected = if k == 0 {
                DEFAULT_STATES + 3
            } else if lits.get(k) {
                DEFAULT_STATES
            } else {
                DEFAULT_STATES + 1
            };
            assert_eq!(c.state(k), expected, "k={k}");
        }
    }

    #[test]
    fn train_step_without_feedback_changes_nothing() {
        // a target bank with T positive firing clauses and every other bank
        // with T negative firing clauses: both feedback probabilities are 0
        let t = 10;
        let mut m = TmModel::new(2 * t, DEFAULT_STATES, t as u32, 3.0, 8, 0, DEFAULT_STATES);
        for c in 0..CLASSES {
            for j in 0..2 * t {
                let fire = if c == 4 { j % 2 == 0 } else { j % 2 == 1 };
                // include x[0] (true) to fire, x[1] (false) to stay silent
                let k = if fire { 0 } else { 1 };
                m.bank_mut(c)[j].set_state(k, DEFAULT_STATES + 10);
            }
        }
        let lits = Literals::from_bits(0b01);
        let spec = Specificity::new(3.0).unwrap();
        let before = m.clone();
        let mut rng = RandomStream::new(5);
        for _ in 0..20 {
            train_step(&mut m, &lits, 4, &spec, &mut rng);
        }
        assert_eq!(m, before);
    }

    #[test]
    fn train_step_is_deterministic() {
        let spec = Specificity::new(3.0).unwrap();
        let run = || {
            let mut m = TmModel::new(6, DEFAULT_STATES, 10, 3.0, 8, 0, DEFAULT_STATES);
            let mut rng = RandomStream::new(77);
            for i in 0..200u64 {
                let lits = Literals::from_bits(i.wrapping_mul(0x9e37_79b9_7f4a_7c15));
                train_step(&mut m, &lits, (i % 10) as usize, &spec, &mut rng);
            }
            m
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn toy_problem_is_learned() {
        // two classes decided by x[0]; x[1] is noise
        let mut samples = Vec::new();
        for i in 0..40u64 {
            let bits = (i & 1) | ((i >> 1) & 1) << 1;
            samples.push((Literals::from_bits(bits), (bits & 1) as usize));
        }
        let config = TrainConfig {
            t: 2,
            s: 3.0,
            epochs: 50,
            clauses_per_class: 2,
            n_states: 16,
            threshold: 8,
            seed: 3,
            boost_true_positive: false,
        };
        let mut trainer = Trainer::new(&config).unwrap();
        let mut reached = None;
        for e in 1..=50 {
            trainer.run_epoch(&samples);
            let m = trainer.model();
            let ok = samples.iter().all(|(l, y)| {
                let sums = m.class_sums(l, Mode::Infer);
                crate::model::argmax(&sums) == *y
            });
            if ok {
                reached = Some(e);
                break;
            }
        }
        assert!(reached.is_some(), "toy problem not learned in 50 epochs");
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::full().validate().is_ok());
        assert!(TrainConfig::compact().validate().is_ok());
        let mut c = TrainConfig::full();
        c.s = 1.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::full();
        c.epochs = 0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::full();
        c.t = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn evaluate_rejects_empty() {
        assert!(matches!(
            evaluate(&TmModel::empty(2), &[]),
            Err(Error::EmptySamples)
        ));
    }

    #[test]
    fn tie_everything_model_scores_label_zero_fraction() {
        let samples: Vec<_> = (0..30u64).map(|i| BoolSample::new(i, (i % 3) as u8)).collect();
        let acc = evaluate(&TmModel::empty(4), &samples).unwrap();
        assert_eq!(acc, 10.0 / 30.0);
    }
}
