//! Synthetic review corpus, request traces built from it, the bundled model
//! zoo, and a loader for IMDB-style review directories.
//!
//! Reviews mix neutral English filler with words from a large generated
//! sentiment lexicon. Lexicon words follow a Zipf distribution, so a model
//! that has to learn word polarity from data sees the frequent head quickly
//! but the long tail only slowly; a vocabulary prior that already encodes
//! polarity covers the tail from the start.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use jitr_core::learn::{FeaturizerConfig, LabeledExample, StopwordPolicy, TokenView, VocabularyPolicy, VocabularyPrior};
use jitr_core::miner::{InputType, TaskType};
use jitr_core::zoo::{ModelCard, ModelStore};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::trace::TraceLine;

const ONSETS: &[&str] = &[
    "b", "br", "c", "cl", "d", "dr", "f", "fl", "g", "gl", "gr", "h", "j", "k", "l", "m", "n", "p", "pl", "pr",
    "qu", "r", "s", "sc", "sh", "sl", "sp", "st", "t", "th", "tr", "v", "w", "z",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ea", "ee", "oo", "ou", "ie"];
const CODAS: &[&str] = &["", "", "n", "r", "l", "m", "s", "t", "nd", "st", "ck", "sh"];

/// Common words with no opinion attached.
const NEUTRAL: &[&str] = &[
    "the", "a", "an", "and", "but", "or", "so", "of", "in", "on", "at", "to", "for", "with", "about", "from",
    "this", "that", "it", "its", "he", "she", "they", "we", "i", "was", "is", "are", "were", "be", "been", "has",
    "had", "have", "film", "movie", "story", "plot", "scene", "scenes", "ending", "cast", "actor", "actress",
    "director", "script", "camera", "music", "score", "character", "characters", "dialogue", "sequel", "studio",
    "hour", "minutes", "night", "theater", "screen", "book", "version", "role", "lead", "villain", "hero",
    "family", "town", "city", "war", "love", "time", "year", "years", "day", "world", "house", "friend",
    "friends", "brother", "sister", "father", "mother", "end", "start", "middle", "part", "moment", "shot",
    "watched", "saw", "seen", "went", "came", "made", "makes", "plays", "played", "tells", "follows", "shows",
    "takes", "gets", "goes", "comes", "feels", "looks", "seems", "tries", "runs", "first", "second", "last",
    "new", "old", "long", "short", "early", "late", "again", "also", "just", "still", "even", "then", "there",
    "here", "when", "while", "after", "before", "during", "through", "over", "into", "out", "up", "down",
    "some", "most", "many", "few", "one", "two", "three", "every", "each", "another", "other", "same", "own",
];

const POSITIVE_HEAD: &[&str] = &[
    "great", "wonderful", "superb", "brilliant", "moving", "charming", "delightful", "gripping", "beautiful",
    "excellent", "touching", "witty", "stunning", "masterful", "memorable", "fun", "clever", "heartfelt",
];
const NEGATIVE_HEAD: &[&str] = &[
    "awful", "boring", "dull", "terrible", "tedious", "clumsy", "weak", "lifeless", "bland", "painful",
    "predictable", "forgettable", "messy", "silly", "pointless", "wooden", "bad", "dreadful",
];

const POSITIVE_SUFFIXES: &[&str] = &["ful", "ive", "ous", "ant", "ish"];
const NEGATIVE_SUFFIXES: &[&str] = &["less", "id", "y", "ous", "ic"];

fn pseudo_word(rng: &mut ChaCha8Rng, suffixes: &[&str]) -> String {
    let syllables = rng.random_range(1..=2);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS.choose(rng).unwrap());
        w.push_str(VOWELS.choose(rng).unwrap());
    }
    w.push_str(CODAS.choose(rng).unwrap());
    if !suffixes.is_empty() {
        w.push_str(suffixes.choose(rng).unwrap());
    }
    w
}

/// `count` distinct generated words not already in `taken`.
fn fresh_words(rng: &mut ChaCha8Rng, count: usize, suffixes: &[&str], taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let w = pseudo_word(rng, suffixes);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// Positive and negative opinion words, most frequent first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentLexicon {
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

impl SentimentLexicon {
    pub fn generate(size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut taken: BTreeSet<String> = NEUTRAL.iter().map(|s| s.to_string()).collect();
        taken.extend(POSITIVE_HEAD.iter().chain(NEGATIVE_HEAD).map(|s| s.to_string()));
        let mut build = |head: &[&str], suffixes: &[&str]| {
            let mut words: Vec<String> = head.iter().take(size).map(|s| s.to_string()).collect();
            let extra = size.saturating_sub(words.len());
            words.extend(fresh_words(&mut rng, extra, suffixes, &mut taken));
            words
        };
        let positive = build(POSITIVE_HEAD, POSITIVE_SUFFIXES);
        let negative = build(NEGATIVE_HEAD, NEGATIVE_SUFFIXES);
        SentimentLexicon { positive, negative }
    }

    pub fn words(&self) -> impl Iterator<Item = (&str, f32)> {
        self.positive.iter().map(|w| (w.as_str(), 1.0)).chain(self.negative.iter().map(|w| (w.as_str(), -1.0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusParams {
    /// Opinion words per polarity.
    pub lexicon_size: usize,
    pub zipf_exponent: f64,
    pub min_opinion_words: usize,
    pub max_opinion_words: usize,
    /// Probability that an opinion word matches the review's polarity.
    pub consistency: f64,
    pub min_neutral_words: usize,
    pub max_neutral_words: usize,
    pub positive_rate: f64,
    pub lexicon_seed: u64,
}

impl Default for CorpusParams {
    fn default() -> Self {
        CorpusParams {
            lexicon_size: 1500,
            zipf_exponent: 0.8,
            min_opinion_words: 3,
            max_opinion_words: 6,
            consistency: 0.88,
            min_neutral_words: 24,
            max_neutral_words: 34,
            positive_rate: 0.5,
            lexicon_seed: 0x5eed,
        }
    }
}

pub const POSITIVE: &str = "positive";
pub const NEGATIVE: &str = "negative";

#[derive(Debug, Clone)]
pub struct ReviewGenerator {
    pub lexicon: SentimentLexicon,
    pub params: CorpusParams,
    /// Cumulative Zipf weights over lexicon ranks.
    cdf: Vec<f64>,
}

impl ReviewGenerator {
    pub fn new(params: CorpusParams) -> Self {
        let lexicon = SentimentLexicon::generate(params.lexicon_size, params.lexicon_seed);
        let mut acc = 0.0;
        let cdf = (1..=params.lexicon_size)
            .map(|r| {
                acc += 1.0 / (r as f64).powf(params.zipf_exponent);
                acc
            })
            .collect();
        ReviewGenerator { lexicon, params, cdf }
    }

    fn opinion_word(&self, rng: &mut ChaCha8Rng, positive: bool) -> &str {
        let total = *self.cdf.last().expect("non-empty lexicon");
        let u = rng.random::<f64>() * total;
        let rank = self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1);
        if positive {
            &self.lexicon.positive[rank]
        } else {
            &self.lexicon.negative[rank]
        }
    }

    /// One review and its polarity label.
    pub fn review(&self, rng: &mut ChaCha8Rng) -> (String, &'static str) {
        let p = &self.params;
        let positive = rng.random_bool(p.positive_rate);
        let mut words: Vec<String> = (0..rng.random_range(p.min_neutral_words..=p.max_neutral_words))
            .map(|_| NEUTRAL.choose(rng).unwrap().to_string())
            .collect();
        for _ in 0..rng.random_range(p.min_opinion_words..=p.max_opinion_words) {
            let agrees = rng.random_bool(p.consistency);
            let w = self.opinion_word(rng, positive == agrees).to_string();
            let at = rng.random_range(0..=words.len());
            words.insert(at, w);
        }
        (sentences(rng, &words), if positive { POSITIVE } else { NEGATIVE })
    }

    pub fn examples(&self, n: usize, seed: u64) -> Vec<LabeledExample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let (text, label) = self.review(&mut rng);
                LabeledExample::new(text, label)
            })
            .collect()
    }
}

/// Groups words into capitalized sentences of 5-11 words.
fn sentences(rng: &mut ChaCha8Rng, words: &[String]) -> String {
    let mut out = String::new();
    let mut i = 0;
    while i < words.len() {
        let len = rng.random_range(5..=11).min(words.len() - i);
        if !out.is_empty() {
            out.push(' ');
        }
        for (k, w) in words[i..i + len].iter().enumerate() {
            if k == 0 {
                let mut c = w.chars();
                if let Some(f) = c.next() {
                    out.extend(f.to_uppercase());
                    out.push_str(c.as_str());
                }
            } else {
                out.push(' ');
                out.push_str(w);
            }
        }
        out.push(if rng.random_bool(0.1) { '!' } else { '.' });
        i += len;
    }
    out
}

pub const SENTIMENT_INSTRUCTIONS: &str = r#"You label film reviews for a review aggregation site.
Read the review at the end of this message and decide whether the writer liked the film overall.

Guidelines:
- Judge the overall verdict of the writer, not single scenes, actors or technical details.
- A review that lists flaws but still recommends the film counts as positive.
- A review that praises single elements but advises against watching counts as negative.
- Sarcasm counts by its intended meaning, not by its literal words.
- Ignore plot summaries; they carry no opinion.
- If a star rating is mentioned and the text disagrees with it, the text wins.
- Spelling mistakes, slang and missing punctuation do not change the verdict.
- When the review is balanced, pick the side the final sentences lean towards.
- Never answer "neutral" or "mixed"; only the two labels below are allowed.
- Do not let the length of the review influence the label.
- Reviews may quote other critics; only the writer's own opinion matters.
- Comparisons with other films only count when they say something about this one.
- Remarks about the cinema, the ticket price or the streaming service are not about the film.
- Treat every review on its own; earlier reviews in the queue do not matter.

Output format:
Answer with a JSON object and nothing else, using exactly one of
{"sentiment": "positive"}
{"sentiment": "negative"}
Do not add keys, comments, explanations or Markdown fences.

Review: "#;

pub fn sentiment_prompt(review: &str) -> String {
    format!("{SENTIMENT_INSTRUCTIONS}{review}")
}

pub const TRANSLATION_INSTRUCTIONS: &str = r#"You translate customer support messages for an online shop.
Translate the message below from English into German.
Keep product codes, order numbers, prices and personal names exactly as written.
Keep the tone polite and neutral, use the formal form of address, and do not add greetings that are not in the original.
Return a JSON object of the form {"translation": "..."} and nothing else.
Message: "#;

pub const EXTRACTION_INSTRUCTIONS: &str = r#"You extract shipping details from order notes written by warehouse staff.
Read the note below and find the recipient city and the requested delivery weekday.
If a value is missing, use null. Do not guess values that are not stated.
Return a JSON object of the form {"city": "...", "weekday": "..."} and nothing else.
Note: "#;

/// Request traces for simulation and mining experiments.
#[derive(Debug, Clone)]
pub struct TraceGenerator {
    pub reviews: ReviewGenerator,
    pub start_ms: u64,
    pub interval_ms: u64,
}

impl TraceGenerator {
    pub fn new(params: CorpusParams) -> Self {
        TraceGenerator { reviews: ReviewGenerator::new(params), start_ms: 1_754_000_000_000, interval_ms: 1_000 }
    }

    fn line(&self, i: usize, prompt: String, label: Option<&str>) -> TraceLine {
        TraceLine {
            timestamp: self.start_ms + i as u64 * self.interval_ms,
            prompt,
            ground_truth_label: label.map(str::to_string),
            model: None,
        }
    }

    /// Sentiment requests only, each with its ground-truth label.
    pub fn sentiment(&self, n: usize, seed: u64) -> Vec<TraceLine> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let (review, label) = self.reviews.review(&mut rng);
                self.line(i, sentiment_prompt(&review), Some(label))
            })
            .collect()
    }

    /// Three templated tasks in equal shares interleaved with free-form
    /// chatter at `chatter_rate`. Returns each line's task index (0-2) or
    /// `None` for chatter.
    pub fn mixed(&self, n: usize, chatter_rate: f64, seed: u64) -> (Vec<TraceLine>, Vec<Option<usize>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut taken = BTreeSet::new();
        let mut lines = Vec::with_capacity(n);
        let mut truth = Vec::with_capacity(n);
        for i in 0..n {
            if rng.random_bool(chatter_rate) {
                lines.push(self.line(i, chatter(&mut rng, &mut taken), None));
                truth.push(None);
                continue;
            }
            let task = rng.random_range(0..3);
            let prompt = match task {
                0 => {
                    let (review, _) = self.reviews.review(&mut rng);
                    sentiment_prompt(&review)
                }
                1 => format!("{TRANSLATION_INSTRUCTIONS}{}", support_message(&mut rng)),
                _ => format!("{EXTRACTION_INSTRUCTIONS}{}", order_note(&mut rng)),
            };
            lines.push(self.line(i, prompt, None));
            truth.push(Some(task));
        }
        (lines, truth)
    }
}

fn chatter(rng: &mut ChaCha8Rng, taken: &mut BTreeSet<String>) -> String {
    let n = rng.random_range(4..=14);
    let words = fresh_words(rng, n, &[], taken);
    let mut s = words.join(" ");
    s.push(if rng.random_bool(0.5) { '?' } else { '.' });
    s
}

const PRODUCTS: &[&str] = &["kettle", "lamp", "backpack", "charger", "blender", "jacket", "monitor", "chair"];
const ISSUES: &[&str] = &["arrived damaged", "is missing a part", "was charged twice", "has not shipped yet"];
const CITIES: &[&str] = &["Leipzig", "Porto", "Lyon", "Gdansk", "Bergen", "Utrecht", "Graz", "Turin"];
const DAYS: &[&str] = &["Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday"];

fn support_message(rng: &mut ChaCha8Rng) -> String {
    format!(
        "My {} (order {}) {}.",
        PRODUCTS.choose(rng).unwrap(),
        rng.random_range(10_000..99_999),
        ISSUES.choose(rng).unwrap()
    )
}

fn order_note(rng: &mut ChaCha8Rng) -> String {
    format!(
        "Box {} to {}, deliver {}.",
        rng.random_range(100..999),
        CITIES.choose(rng).unwrap(),
        DAYS.choose(rng).unwrap()
    )
}

/// Loads an IMDB-style directory with `pos/` and `neg/` text files.
/// `limit` caps the number of files per class.
pub fn load_imdb(dir: &Path, limit: Option<usize>) -> anyhow::Result<Vec<LabeledExample>> {
    let mut out = Vec::new();
    for (sub, label) in [("pos", POSITIVE), ("neg", NEGATIVE)] {
        let path = dir.join(sub);
        let mut files: Vec<PathBuf> = fs::read_dir(&path)
            .with_context(|| format!("reading {}", path.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        files.sort();
        files.truncate(limit.unwrap_or(usize::MAX));
        for f in files {
            let text = fs::read_to_string(&f).with_context(|| format!("reading {}", f.display()))?;
            out.push(LabeledExample::new(text.replace("<br />", " "), label));
        }
    }
    // Interleave classes deterministically.
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(0));
    Ok(out)
}

const PRIOR_DIM: usize = 16;

fn prior_vector(rng: &mut ChaCha8Rng, polarity: f32) -> Vec<f32> {
    let mut v: Vec<f32> = (0..PRIOR_DIM).map(|_| rng.random_range(-0.25f32..0.25)).collect();
    v[0] = polarity;
    v
}

fn sentiment_prior(name: &str, lexicon: &SentimentLexicon, coverage: f64, seed: u64) -> VocabularyPrior {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vectors = BTreeMap::new();
    for (w, polarity) in lexicon.words() {
        if rng.random_bool(coverage) {
            vectors.insert(w.to_string(), prior_vector(&mut rng, polarity));
        }
    }
    VocabularyPrior { name: name.into(), dim: PRIOR_DIM, vectors }
}

/// Broad vocabulary with only a faint, noisy trace of polarity, like a model
/// pretrained on general text.
fn generic_prior(name: &str, lexicon: &SentimentLexicon, signal: f32, seed: u64) -> VocabularyPrior {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vectors = BTreeMap::new();
    for (w, polarity) in lexicon.words() {
        let p = signal * polarity + rng.random_range(-0.25f32..0.25);
        vectors.insert(w.to_string(), prior_vector(&mut rng, p));
    }
    for w in NEUTRAL {
        let p = rng.random_range(-0.25f32..0.25);
        vectors.insert(w.to_string(), prior_vector(&mut rng, p));
    }
    VocabularyPrior { name: name.into(), dim: PRIOR_DIM, vectors }
}

/// Vocabulary of an unrelated domain plus a slice of opinion words whose
/// vectors carry no polarity.
fn domain_prior(name: &str, lexicon: &SentimentLexicon, overlap: f64, seed: u64) -> VocabularyPrior {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken: BTreeSet<String> = lexicon.words().map(|(w, _)| w.to_string()).collect();
    taken.extend(NEUTRAL.iter().map(|s| s.to_string()));
    let mut vectors = BTreeMap::new();
    for w in fresh_words(&mut rng, 600, &["ex", "ium", "ment", "on"], &mut taken) {
        vectors.insert(w, prior_vector(&mut rng, 0.0));
    }
    for (w, _) in lexicon.words() {
        if rng.random_bool(overlap) {
            let v = prior_vector(&mut rng, 0.0);
            vectors.insert(w.to_string(), v);
        }
    }
    VocabularyPrior { name: name.into(), dim: PRIOR_DIM, vectors }
}

#[allow(clippy::too_many_arguments)]
fn card(
    id: &str,
    family: &str,
    featurizer: FeaturizerConfig,
    tasks: &[TaskType],
    params: u64,
    latency: f64,
    memory: f64,
) -> ModelCard {
    ModelCard {
        model_id: id.into(),
        family: family.into(),
        featurizer,
        modality: InputType::Text,
        intended_task_types: tasks.to_vec(),
        parameter_count: params,
        est_latency_ms: latency,
        est_memory_mb: memory,
    }
}

/// The ten-card zoo: three sentiment-prior cards with decreasing lexicon
/// coverage, one generic card, and six off-domain cards.
pub fn bundled_zoo(params: &CorpusParams) -> ModelStore {
    let lexicon = SentimentLexicon::generate(params.lexicon_size, params.lexicon_seed);
    let seed = params.lexicon_seed;
    let priors = vec![
        sentiment_prior("sentiment-full", &lexicon, 1.0, seed ^ 0x11),
        sentiment_prior("sentiment-half", &lexicon, 0.5, seed ^ 0x12),
        sentiment_prior("sentiment-quarter", &lexicon, 0.25, seed ^ 0x13),
        generic_prior("general", &lexicon, 0.1, seed ^ 0x14),
        domain_prior("finance", &lexicon, 0.20, seed ^ 0x21),
        domain_prior("sports", &lexicon, 0.12, seed ^ 0x22),
        domain_prior("legal", &lexicon, 0.06, seed ^ 0x23),
        domain_prior("clinical", &lexicon, 0.0, seed ^ 0x24),
    ];
    let with_prior = |name: &str| FeaturizerConfig { prior: Some(name.into()), ..FeaturizerConfig::default() };
    let domain = |name: &str| FeaturizerConfig {
        prior: Some(name.into()),
        vocabulary: VocabularyPolicy::PriorOnly,
        ..FeaturizerConfig::default()
    };
    let sentiment = &[TaskType::SentimentClassification];
    let cards = vec![
        card("senti-large", "sentiment", with_prior("sentiment-full"), sentiment, 340_000_000, 4.0, 1300.0),
        card("senti-base", "sentiment", with_prior("sentiment-half"), sentiment, 110_000_000, 1.6, 440.0),
        card("senti-small", "sentiment", with_prior("sentiment-quarter"), sentiment, 66_000_000, 1.0, 260.0),
        card(
            "generic-base",
            "generic",
            with_prior("general"),
            &[TaskType::SentimentClassification, TaskType::TopicModeling, TaskType::Other],
            110_000_000,
            1.5,
            420.0,
        ),
        card("finance-base", "domain", domain("finance"), &[TaskType::InformationExtraction], 110_000_000, 1.5, 430.0),
        card("sports-base", "domain", domain("sports"), &[TaskType::TopicModeling], 90_000_000, 1.3, 360.0),
        card("legal-base", "domain", domain("legal"), &[TaskType::InformationExtraction], 125_000_000, 1.7, 480.0),
        card("clinical-base", "domain", domain("clinical"), &[TaskType::QuestionAnswering], 100_000_000, 1.4, 400.0),
        card(
            "shape-tagger",
            "shape",
            FeaturizerConfig { token_view: TokenView::Shape, ngram_orders: vec![1, 2, 3], ..Default::default() },
            &[TaskType::InformationExtraction],
            20_000_000,
            0.4,
            80.0,
        ),
        card(
            "function-words",
            "function",
            FeaturizerConfig { stopwords: StopwordPolicy::Only, ..Default::default() },
            &[TaskType::Other],
            15_000_000,
            0.3,
            60.0,
        ),
    ];
    ModelStore { cards, priors: priors.into_iter().map(|p| (p.name.clone(), Arc::new(p))).collect() }
}

/// On-disk zoo: card list plus prior file paths relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZooManifest {
    pub cards: Vec<ModelCard>,
    pub priors: BTreeMap<String, PathBuf>,
}

pub fn write_zoo(dir: &Path, store: &ModelStore) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut priors = BTreeMap::new();
    for (name, prior) in &store.priors {
        let file = PathBuf::from(format!("prior-{name}.json"));
        fs::write(dir.join(&file), serde_json::to_vec(prior.as_ref())?)?;
        priors.insert(name.clone(), file);
    }
    let manifest = ZooManifest { cards: store.cards.clone(), priors };
    let path = dir.join("zoo.json");
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?)?;
    Ok(path)
}

pub fn load_zoo(manifest_path: &Path) -> anyhow::Result<ModelStore> {
    let text = fs::read_to_string(manifest_path).with_context(|| format!("reading {}", manifest_path.display()))?;
    let manifest: ZooManifest = serde_json::from_str(&text)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut priors = BTreeMap::new();
    for (name, file) in manifest.priors {
        let path = base.join(&file);
        let bytes = fs::read(&path).with_context(|| format!("reading prior {}", path.display()))?;
        let prior: VocabularyPrior = serde_json::from_slice(&bytes)?;
        anyhow::ensure!(prior.name == name, "prior file {} declares name `{}`", path.display(), prior.name);
        priors.insert(name, Arc::new(prior));
    }
    for c in &manifest.cards {
        c.featurizer.validate()?;
        if let Some(p) = &c.featurizer.prior {
            anyhow::ensure!(priors.contains_key(p), "card {} references missing prior `{p}`", c.model_id);
        }
    }
    Ok(ModelStore { cards: manifest.cards, priors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let g = ReviewGenerator::new(CorpusParams::default());
        assert_eq!(g.examples(20, 3), g.examples(20, 3));
        assert_ne!(g.examples(20, 3), g.examples(20, 4));
        let t = TraceGenerator::new(CorpusParams::default());
        assert_eq!(t.sentiment(5, 1), t.sentiment(5, 1));
    }

    #[test]
    fn lexicon_is_disjoint_from_filler() {
        let lex = SentimentLexicon::generate(500, 1);
        let pos: BTreeSet<_> = lex.positive.iter().collect();
        assert_eq!(pos.len(), 500);
        assert!(lex.negative.iter().all(|w| !pos.contains(w) && !NEUTRAL.contains(&w.as_str())));
    }

    #[test]
    fn bundled_zoo_round_trips_through_disk() {
        let store = bundled_zoo(&CorpusParams::default());
        assert_eq!(store.cards.len(), 10);
        for c in &store.cards {
            store.featurizer(c).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = write_zoo(dir.path(), &store).unwrap();
        let loaded = load_zoo(&path).unwrap();
        assert_eq!(loaded.cards, store.cards);
        assert_eq!(loaded.priors.len(), store.priors.len());
    }

    #[test]
    fn mixed_trace_labels_tasks() {
        let t = TraceGenerator::new(CorpusParams::default());
        let (lines, truth) = t.mixed(200, 0.1, 9);
        assert_eq!(lines.len(), 200);
        let chatter = truth.iter().filter(|t| t.is_none()).count();
        assert!((5..40).contains(&chatter));
    }
}
