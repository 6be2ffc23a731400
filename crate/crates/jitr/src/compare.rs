//! Development-strategy comparison: how long it takes to get a surrogate
//! and how good it is, for four ways of choosing and training one.

use std::time::Instant;

use jitr_core::learn::LabeledExample;
use jitr_core::zoo::{fine_tune, rank, FeatureCache, ModelStore, SearchSplit};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::JitrConfig;
use crate::gateway::SystemClock;

pub const BASELINE_MODEL: &str = "generic-base";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareSizes {
    pub search: usize,
    pub small_train: usize,
    pub large_train: usize,
    pub validation: usize,
    pub test: usize,
}

impl Default for CompareSizes {
    fn default() -> Self {
        CompareSizes { search: 500, small_train: 500, large_train: 5_000, validation: 500, test: 2_000 }
    }
}

impl CompareSizes {
    pub fn total(&self) -> usize {
        self.search + self.large_train + self.validation + self.test
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyResult {
    pub strategy: String,
    pub model_id: String,
    pub train_examples: usize,
    pub wall_time_s: f64,
    /// Accuracy against ground truth on the test split.
    pub test_accuracy: f64,
    /// Agreement with the teacher's labels on the validation split.
    pub validation_agreement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub teacher_accuracy: f64,
    pub sizes: CompareSizes,
    pub strategies: Vec<StrategyResult>,
}

impl CompareReport {
    pub fn get(&self, strategy: &str) -> Option<&StrategyResult> {
        self.strategies.iter().find(|s| s.strategy == strategy)
    }
}

/// Replaces each label by a wrong one with probability `1 - accuracy`,
/// as an imperfect teacher would.
pub fn teacher_labels(examples: &[LabeledExample], accuracy: f64, seed: u64) -> Vec<LabeledExample> {
    let mut labels: Vec<&str> = examples.iter().map(|e| e.label.as_str()).collect();
    labels.sort_unstable();
    labels.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    examples
        .iter()
        .map(|e| {
            let mut e = e.clone();
            if labels.len() > 1 && !rng.random_bool(accuracy.clamp(0.0, 1.0)) {
                let others: Vec<&&str> = labels.iter().filter(|l| **l != e.label).collect();
                e.label = others[rng.random_range(0..others.len())].to_string();
            }
            e
        })
        .collect()
}

fn accuracy(store: &ModelStore, model_id: &str, model: &jitr_core::learn::LinearModel, test: &[LabeledExample]) -> anyhow::Result<f64> {
    let card = store.card(model_id).ok_or_else(|| anyhow::anyhow!("unknown model {model_id}"))?;
    let f = store.featurizer(card)?;
    let hits = test.iter().filter(|e| model.predict_label(&f.featurize(&e.text)).0 == e.label).count();
    Ok(hits as f64 / test.len().max(1) as f64)
}

/// Runs the four strategies on `examples` (ground-truth labeled). Training
/// and search data carry teacher labels with the configured mock accuracy;
/// the test split keeps the ground truth.
pub fn compare_dev(store: &ModelStore, examples: &[LabeledExample], sizes: CompareSizes, config: &JitrConfig) -> anyhow::Result<CompareReport> {
    anyhow::ensure!(
        examples.len() >= sizes.total(),
        "need {} examples for the comparison, have {}",
        sizes.total(),
        examples.len()
    );
    anyhow::ensure!(sizes.small_train <= sizes.large_train, "small_train must not exceed large_train");
    let mut pool = examples.to_vec();
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(config.lifecycle.split_seed));
    let (test, rest) = pool.split_at(sizes.test);
    let taught = teacher_labels(rest, config.mock.accuracy, config.mock.seed);
    let (search, rest) = taught.split_at(sizes.search);
    let (validation, rest) = rest.split_at(sizes.validation);
    let large = &rest[..sizes.large_train];
    let small = &large[..sizes.small_train];

    let clock = SystemClock::default();
    let train_cfg = config.train;
    let mut strategies = Vec::new();
    let mut record = |strategy: &str, model_id: &str, n: usize, wall: f64, model: &jitr_core::learn::LinearModel, val: f64| -> anyhow::Result<()> {
        strategies.push(StrategyResult {
            strategy: strategy.into(),
            model_id: model_id.into(),
            train_examples: n,
            wall_time_s: wall,
            test_accuracy: accuracy(store, model_id, model, test)?,
            validation_agreement: val,
        });
        Ok(())
    };

    // Baseline: the generic card, no search.
    let t0 = Instant::now();
    let card = store.card(BASELINE_MODEL).ok_or_else(|| anyhow::anyhow!("zoo has no `{BASELINE_MODEL}` card"))?;
    let out = fine_tune(store, card, large, validation, &train_cfg, None)?;
    record("baseline", BASELINE_MODEL, large.len(), t0.elapsed().as_secs_f64(), &out.model, out.validation_accuracy)?;

    // Naive: fine-tune every card, keep the best on validation.
    let t0 = Instant::now();
    let mut best: Option<(String, jitr_core::learn::TrainOutcome)> = None;
    for card in &store.cards {
        let out = fine_tune(store, card, large, validation, &train_cfg, None)?;
        if best.as_ref().is_none_or(|(_, b)| out.validation_accuracy > b.validation_accuracy) {
            best = Some((card.model_id.clone(), out));
        }
    }
    let (naive_id, naive) = best.ok_or_else(|| anyhow::anyhow!("empty zoo"))?;
    record("S-naive", &naive_id, large.len(), t0.elapsed().as_secs_f64(), &naive.model, naive.validation_accuracy)?;

    // Search, then fine-tune the winner on the small or the large train set.
    for (name, train) in [("S-500", small), ("S-5000", large)] {
        let t0 = Instant::now();
        let split = SearchSplit::from_examples(search, config.lifecycle.search_fit_fraction);
        let mut cache = FeatureCache::default();
        let ranking = rank(store, &store.cards, &split, &config.search, &mut cache, &clock)?;
        let winner = &ranking[0].model_id;
        let card = store.card(winner).expect("ranked card is in the zoo");
        let out = fine_tune(store, card, train, validation, &train_cfg, None)?;
        record(name, winner, train.len(), t0.elapsed().as_secs_f64(), &out.model, out.validation_accuracy)?;
    }
    Ok(CompareReport { teacher_accuracy: config.mock.accuracy, sizes, strategies })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearningPoint {
    pub model_id: String,
    pub train_examples: usize,
    /// Agreement with teacher labels on the validation split.
    pub teacher_agreement: f64,
    /// Accuracy against ground truth on the test split.
    pub test_accuracy: f64,
}

/// Accuracy of the search winner against the number of teacher-labeled
/// training examples. Uses 2,000 ground-truth test and 500 validation
/// examples; the rest is the training pool.
pub fn learning_curve(store: &ModelStore, examples: &[LabeledExample], sizes: &[usize], config: &JitrConfig) -> anyhow::Result<Vec<LearningPoint>> {
    const TEST: usize = 2_000;
    const VALIDATION: usize = 500;
    let max = sizes.iter().copied().max().unwrap_or(0);
    anyhow::ensure!(
        examples.len() >= TEST + VALIDATION + max.max(2),
        "need {} examples for the learning curve, have {}",
        TEST + VALIDATION + max.max(2),
        examples.len()
    );
    let mut pool = examples.to_vec();
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(config.lifecycle.split_seed));
    let (test, rest) = pool.split_at(TEST);
    let taught = teacher_labels(rest, config.mock.accuracy, config.mock.seed);
    let (validation, train) = taught.split_at(VALIDATION);
    let search = &train[..train.len().min(500)];
    let split = SearchSplit::from_examples(search, config.lifecycle.search_fit_fraction);
    let ranking = rank(store, &store.cards, &split, &config.search, &mut FeatureCache::default(), &SystemClock::default())?;
    let card = store.card(&ranking[0].model_id).expect("ranked card is in the zoo");
    sizes
        .iter()
        .map(|&n| {
            let out = fine_tune(store, card, &train[..n], validation, &config.train, None)?;
            Ok(LearningPoint {
                model_id: card.model_id.clone(),
                train_examples: n,
                teacher_agreement: out.validation_accuracy,
                test_accuracy: accuracy(store, &card.model_id, &out.model, test)?,
            })
        })
        .collect()
}
