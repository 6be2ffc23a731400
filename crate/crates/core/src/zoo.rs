//! Model store and model search.
//!
//! A base model is a frozen featurizer described by a [`ModelCard`]. Search
//! narrows the store by metadata constraints, groups cards by family, scores
//! one representative per family with a cheap linear probe on reduced
//! precision features, and then probes every member of the best families at
//! full precision. The probe is a proxy for the accuracy the card would reach
//! after full fine-tuning; [`full_finetune_oracle`] computes the real thing.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::learn::{
    dataset_hash, evaluate, train, FeatureMatrix, Featurizer, FeaturizerConfig, LabelMap, LabeledExample,
    LinearModel, TrainConfig, TrainOutcome, VocabularyPrior,
};
use crate::miner::{InputType, TaskType};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCard {
    pub model_id: String,
    pub family: String,
    pub featurizer: FeaturizerConfig,
    pub modality: InputType,
    pub intended_task_types: Vec<TaskType>,
    pub parameter_count: u64,
    /// Estimated inference latency, milliseconds per item.
    pub est_latency_ms: f64,
    pub est_memory_mb: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    pub modality: Option<InputType>,
    pub max_latency_ms: Option<f64>,
    pub max_memory_mb: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub cards: Vec<ModelCard>,
    /// Set when constraints removed every card of a non-empty store.
    pub warning: Option<String>,
}

pub fn filter_candidates(constraints: &Constraints, cards: &[ModelCard]) -> FilterOutcome {
    let kept: Vec<ModelCard> = cards
        .iter()
        .filter(|c| constraints.modality.is_none_or(|m| c.modality == m))
        .filter(|c| constraints.max_latency_ms.is_none_or(|m| c.est_latency_ms <= m))
        .filter(|c| constraints.max_memory_mb.is_none_or(|m| c.est_memory_mb <= m))
        .cloned()
        .collect();
    let warning = (kept.is_empty() && !cards.is_empty())
        .then(|| alloc::format!("constraints excluded all {} candidate models", cards.len()));
    FilterOutcome { cards: kept, warning }
}

/// Cards plus the vocabulary priors they reference.
#[derive(Debug, Clone, Default)]
pub struct ModelStore {
    pub cards: Vec<ModelCard>,
    pub priors: BTreeMap<String, Arc<VocabularyPrior>>,
}

impl ModelStore {
    pub fn card(&self, model_id: &str) -> Option<&ModelCard> {
        self.cards.iter().find(|c| c.model_id == model_id)
    }

    pub fn featurizer(&self, card: &ModelCard) -> Result<Featurizer> {
        let prior = match &card.featurizer.prior {
            Some(name) => Some(
                self.priors
                    .get(name)
                    .cloned()
                    .ok_or_else(|| Error::InvalidConfig(alloc::format!("prior `{name}` missing from store")))?,
            ),
            None => None,
        };
        Featurizer::new(card.featurizer.clone(), prior)
    }
}

/// Featurized datasets keyed by (model id, dataset hash).
#[derive(Debug, Default)]
pub struct FeatureCache {
    entries: BTreeMap<(String, u64), Arc<FeatureMatrix>>,
    pub hits: u64,
    pub misses: u64,
}

impl FeatureCache {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn features(
        &mut self,
        store: &ModelStore,
        card: &ModelCard,
        examples: &[LabeledExample],
    ) -> Result<Arc<FeatureMatrix>> {
        let key = (card.model_id.clone(), dataset_hash(examples));
        if let Some(m) = self.entries.get(&key) {
            self.hits += 1;
            return Ok(m.clone());
        }
        self.misses += 1;
        let m = Arc::new(featurize(store, card, examples)?);
        self.entries.insert(key, m.clone());
        Ok(m)
    }
}

fn featurize(store: &ModelStore, card: &ModelCard, examples: &[LabeledExample]) -> Result<FeatureMatrix> {
    let f = store.featurizer(card)?;
    Ok(f.featurize_all(examples.iter().map(|e| e.text.as_str())))
}

fn features(
    cache: Option<&mut FeatureCache>,
    store: &ModelStore,
    card: &ModelCard,
    examples: &[LabeledExample],
) -> Result<Arc<FeatureMatrix>> {
    match cache {
        Some(c) => c.features(store, card, examples),
        None => featurize(store, card, examples).map(Arc::new),
    }
}

/// The search split of a task dataset, divided into a probe-training part
/// and a held-out part.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSplit {
    pub fit: Vec<LabeledExample>,
    pub holdout: Vec<LabeledExample>,
}

impl SearchSplit {
    /// First `fit_fraction` of the examples for fitting, the rest held out.
    pub fn from_examples(examples: &[LabeledExample], fit_fraction: f64) -> Self {
        let cut = libm::round(examples.len() as f64 * fit_fraction) as usize;
        let cut = cut.min(examples.len());
        SearchSplit { fit: examples[..cut].to_vec(), holdout: examples[cut..].to_vec() }
    }

    pub fn labels(&self) -> LabelMap {
        LabelMap::from_labels(self.fit.iter().chain(&self.holdout).map(|e| e.label.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStage {
    /// Not probed; carries its family representative's score.
    Filtered,
    /// Probed as its family's representative (possibly at reduced precision).
    Representative,
    /// Probed at full precision as a member of a finalist family.
    Finalist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub model_id: String,
    pub proxy_accuracy: f64,
    pub score_time_s: f64,
    pub stage: SearchStage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Probe training budget.
    pub proxy_epochs: usize,
    pub probe: TrainConfig,
    /// Probe representatives on 8-bit quantized features.
    pub reduced_precision: bool,
    /// Number of finalist families; `None` means half of them, rounded up.
    pub finalist_clusters: Option<usize>,
    pub use_cache: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            proxy_epochs: 3,
            probe: TrainConfig::default(),
            reduced_precision: true,
            finalist_clusters: None,
            use_cache: true,
        }
    }
}

fn targets(labels: &LabelMap, examples: &[LabeledExample]) -> Result<Vec<usize>> {
    examples.iter().map(|e| labels.index(&e.label)).collect()
}

fn probe(
    store: &ModelStore,
    card: &ModelCard,
    split: &SearchSplit,
    config: &SearchConfig,
    mut cache: Option<&mut FeatureCache>,
    quantized: bool,
) -> Result<f64> {
    let labels = split.labels();
    if labels.len() < 2 {
        return Err(Error::SingleClass(labels.len()));
    }
    let mut fit_x = features(cache.as_deref_mut(), store, card, &split.fit)?;
    let mut hold_x = features(cache, store, card, &split.holdout)?;
    if quantized {
        fit_x = Arc::new(fit_x.quantized());
        hold_x = Arc::new(hold_x.quantized());
    }
    let fit_y = targets(&labels, &split.fit)?;
    let hold_y = targets(&labels, &split.holdout)?;
    let empty = FeatureMatrix { dim: fit_x.dim, rows: Vec::new() };
    let cfg = TrainConfig { max_epochs: config.proxy_epochs.max(1), ..config.probe };
    let out = train(&labels, &fit_x, &fit_y, &empty, &[], &cfg)?;
    Ok(evaluate(&out.model, &hold_x, &hold_y))
}

/// Linear-probe accuracy of `card` on the held-out part of the search split.
pub fn proxy_score(
    store: &ModelStore,
    card: &ModelCard,
    split: &SearchSplit,
    config: &SearchConfig,
    cache: Option<&mut FeatureCache>,
    clock: &dyn Clock,
) -> Result<CandidateScore> {
    let t0 = clock.now_secs();
    let acc = probe(store, card, split, config, cache, false)?;
    Ok(CandidateScore {
        model_id: card.model_id.clone(),
        proxy_accuracy: acc,
        score_time_s: clock.now_secs() - t0,
        stage: SearchStage::Finalist,
    })
}

fn order_key<'a>(card: &'a ModelCard, score: f64) -> (core::cmp::Reverse<u64>, u64, &'a str) {
    // Accuracy descending, then latency, then id. Scores are in [0, 1].
    (
        core::cmp::Reverse((score * 1e12) as u64),
        (card.est_latency_ms.max(0.0) * 1e6) as u64,
        card.model_id.as_str(),
    )
}

/// Ranks `candidates` for the task behind `split`.
pub fn rank(
    store: &ModelStore,
    candidates: &[ModelCard],
    split: &SearchSplit,
    config: &SearchConfig,
    cache: &mut FeatureCache,
    clock: &dyn Clock,
) -> Result<Vec<CandidateScore>> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    let mut cards: Vec<&ModelCard> = candidates.iter().collect();
    cards.sort_by(|a, b| a.model_id.cmp(&b.model_id));
    let mut cache = config.use_cache.then_some(cache);

    if cards.len() == 1 {
        let s = proxy_score(store, cards[0], split, config, cache.as_deref_mut(), clock)?;
        return Ok(alloc::vec![s]);
    }

    let mut families: BTreeMap<&str, Vec<&ModelCard>> = BTreeMap::new();
    for c in &cards {
        families.entry(c.family.as_str()).or_default().push(c);
    }

    let mut scores: BTreeMap<String, CandidateScore> = BTreeMap::new();
    let mut reps: Vec<(&str, &ModelCard, f64)> = Vec::new();
    for (family, members) in &mut families {
        members.sort_by(|a, b| a.parameter_count.cmp(&b.parameter_count).then(a.model_id.cmp(&b.model_id)));
        let rep = members[(members.len() - 1) / 2];
        let t0 = clock.now_secs();
        let acc = probe(store, rep, split, config, cache.as_deref_mut(), config.reduced_precision)?;
        scores.insert(
            rep.model_id.clone(),
            CandidateScore {
                model_id: rep.model_id.clone(),
                proxy_accuracy: acc,
                score_time_s: clock.now_secs() - t0,
                stage: SearchStage::Representative,
            },
        );
        reps.push((family, rep, acc));
    }
    reps.sort_by(|a, b| order_key(a.1, a.2).cmp(&order_key(b.1, b.2)));
    let finalists = config.finalist_clusters.unwrap_or(reps.len().div_ceil(2)).clamp(1, reps.len());

    for (i, (family, rep, rep_acc)) in reps.iter().enumerate() {
        for &member in &families[family] {
            if i < finalists {
                let s = proxy_score(store, member, split, config, cache.as_deref_mut(), clock)?;
                scores.insert(member.model_id.clone(), s);
            } else if member.model_id != rep.model_id {
                scores.insert(
                    member.model_id.clone(),
                    CandidateScore {
                        model_id: member.model_id.clone(),
                        proxy_accuracy: *rep_acc,
                        score_time_s: 0.0,
                        stage: SearchStage::Filtered,
                    },
                );
            }
        }
    }

    let mut ranked: Vec<(&ModelCard, CandidateScore)> =
        cards.iter().map(|c| (*c, scores.remove(&c.model_id).expect("every card scored"))).collect();
    ranked.sort_by(|a, b| order_key(a.0, a.1.proxy_accuracy).cmp(&order_key(b.0, b.1.proxy_accuracy)));
    Ok(ranked.into_iter().map(|(_, s)| s).collect())
}

/// Trains a head on `card`'s features with early stopping on `validation`.
pub fn fine_tune(
    store: &ModelStore,
    card: &ModelCard,
    train_set: &[LabeledExample],
    validation: &[LabeledExample],
    config: &TrainConfig,
    cache: Option<&mut FeatureCache>,
) -> Result<TrainOutcome> {
    let labels = LabelMap::from_labels(train_set.iter().chain(validation).map(|e| e.label.clone()));
    if labels.len() < 2 {
        return Err(Error::SingleClass(labels.len()));
    }
    let (tx, vx) = match cache {
        Some(c) => (c.features(store, card, train_set)?, c.features(store, card, validation)?),
        None => (
            Arc::new(featurize(store, card, train_set)?),
            Arc::new(featurize(store, card, validation)?),
        ),
    };
    train(&labels, &tx, &targets(&labels, train_set)?, &vx, &targets(&labels, validation)?, config)
}

/// Validation accuracy of `card` after training to convergence. A zero epoch
/// budget evaluates the untrained head.
pub fn full_finetune_oracle(
    store: &ModelStore,
    card: &ModelCard,
    train_set: &[LabeledExample],
    validation: &[LabeledExample],
    config: &TrainConfig,
) -> Result<f64> {
    if train_set.is_empty() || validation.is_empty() {
        return Err(Error::NotEnoughData { have: train_set.len().min(validation.len()), need: 1 });
    }
    if config.max_epochs == 0 {
        let labels = LabelMap::from_labels(train_set.iter().chain(validation).map(|e| e.label.clone()));
        let vx = featurize(store, card, validation)?;
        let model = LinearModel::zeros(labels.clone(), vx.dim);
        return Ok(evaluate(&model, &vx, &targets(&labels, validation)?));
    }
    Ok(fine_tune(store, card, train_set, validation, config, None)?.validation_accuracy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::FrozenClock;
    use alloc::string::ToString;
    use alloc::vec;

    fn card(id: &str, family: &str, latency: f64, memory: f64, modality: InputType) -> ModelCard {
        ModelCard {
            model_id: id.to_string(),
            family: family.to_string(),
            featurizer: FeaturizerConfig { hash_bits: 10, ..Default::default() },
            modality,
            intended_task_types: vec![TaskType::SentimentClassification],
            parameter_count: 1000,
            est_latency_ms: latency,
            est_memory_mb: memory,
        }
    }

    fn text_cards() -> Vec<ModelCard> {
        vec![
            card("a", "f1", 1.0, 10.0, InputType::Text),
            card("b", "f1", 2.0, 20.0, InputType::Text),
            card("c", "f2", 3.0, 30.0, InputType::Text),
        ]
    }

    #[test]
    fn filtering() {
        let cards = text_cards();
        assert_eq!(filter_candidates(&Constraints::default(), &cards).cards.len(), 3);
        let img = Constraints { modality: Some(InputType::Image), ..Default::default() };
        assert!(filter_candidates(&img, &cards).cards.is_empty());
        let fast = Constraints { max_latency_ms: Some(0.5), ..Default::default() };
        let out = filter_candidates(&fast, &cards);
        assert!(out.cards.is_empty());
        assert!(out.warning.is_some());
        let mid = Constraints { max_latency_ms: Some(2.0), max_memory_mb: Some(15.0), ..Default::default() };
        let ids: Vec<_> = filter_candidates(&mid, &cards).cards.into_iter().map(|c| c.model_id).collect();
        assert_eq!(ids, ["a"]);
    }

    fn toy_split() -> SearchSplit {
        let mut ex = Vec::new();
        for i in 0..40 {
            let (t, l) = if i % 2 == 0 { ("great fun loved it", "pos") } else { ("awful boring hated it", "neg") };
            ex.push(LabeledExample::new(alloc::format!("{t} {i}"), l));
        }
        SearchSplit::from_examples(&ex, 0.5)
    }

    #[test]
    fn single_class_split_is_rejected() {
        let ex: Vec<_> = (0..10).map(|i| LabeledExample::new(alloc::format!("x {i}"), "pos")).collect();
        let split = SearchSplit::from_examples(&ex, 0.5);
        let store = ModelStore { cards: text_cards(), priors: BTreeMap::new() };
        let err = proxy_score(&store, &store.cards[0], &split, &SearchConfig::default(), None, &FrozenClock);
        assert_eq!(err.unwrap_err(), Error::SingleClass(1));
    }

    #[test]
    fn single_candidate_ranking() {
        let store = ModelStore { cards: text_cards(), priors: BTreeMap::new() };
        let mut cache = FeatureCache::default();
        let r = rank(&store, &store.cards[..1], &toy_split(), &SearchConfig::default(), &mut cache, &FrozenClock)
            .unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].proxy_accuracy, 1.0);
    }

    #[test]
    fn ranking_is_order_invariant_and_cache_neutral() {
        let store = ModelStore { cards: text_cards(), priors: BTreeMap::new() };
        let split = toy_split();
        let cfg = SearchConfig::default();
        let mut cache = FeatureCache::default();
        let r1 = rank(&store, &store.cards, &split, &cfg, &mut cache, &FrozenClock).unwrap();
        let mut rev = store.cards.clone();
        rev.reverse();
        let r2 = rank(&store, &rev, &split, &cfg, &mut cache, &FrozenClock).unwrap();
        assert_eq!(r1, r2);
        assert!(cache.hits > 0);
        let nocache = SearchConfig { use_cache: false, ..cfg };
        let r3 = rank(&store, &store.cards, &split, &nocache, &mut FeatureCache::default(), &FrozenClock).unwrap();
        assert_eq!(r1, r3);
    }

    #[test]
    fn zero_epoch_oracle_is_untrained_baseline() {
        let store = ModelStore { cards: text_cards(), priors: BTreeMap::new() };
        let split = toy_split();
        let cfg = TrainConfig { max_epochs: 0, ..Default::default() };
        let acc = full_finetune_oracle(&store, &store.cards[0], &split.fit, &split.holdout, &cfg).unwrap();
        // The zero head predicts the first label ("neg") everywhere.
        let neg = split.holdout.iter().filter(|e| e.label == "neg").count() as f64;
        assert_eq!(acc, neg / split.holdout.len() as f64);
    }
}
