use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::text::{is_stopword, word_shape, words};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopwordPolicy {
    Keep,
    Drop,
    /// Keep nothing but stopwords.
    Only,
}

/// What a token looks like to the featurizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenView {
    Word,
    /// Character-class shape of each word (`Xxx`, `d`, ...).
    Shape,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabularyPolicy {
    /// Every token is hashed.
    Open,
    /// Tokens missing from the prior vocabulary collapse into one unknown token.
    PriorOnly,
}

/// Frozen featurizer description stored on a model card.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct FeaturizerConfig {
    pub ngram_orders: Vec<u8>,
    /// Hashed block has `2^hash_bits` buckets.
    pub hash_bits: u8,
    pub lowercase: bool,
    pub stopwords: StopwordPolicy,
    pub token_view: TokenView,
    pub vocabulary: VocabularyPolicy,
    /// Name of the pretrained vocabulary prior, if any.
    pub prior: Option<String>,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            ngram_orders: alloc::vec![1, 2],
            hash_bits: 18,
            lowercase: true,
            stopwords: StopwordPolicy::Keep,
            token_view: TokenView::Word,
            vocabulary: VocabularyPolicy::Open,
            prior: None,
        }
    }
}

impl FeaturizerConfig {
    pub fn hash_dim(&self) -> usize {
        1usize << self.hash_bits
    }

    pub fn validate(&self) -> Result<()> {
        if self.hash_bits == 0 || self.hash_bits > 24 {
            return Err(Error::InvalidConfig(alloc::format!(
                "hash_bits must be in 1..=24, got {}",
                self.hash_bits
            )));
        }
        if self.ngram_orders.is_empty() || self.ngram_orders.iter().any(|&n| n == 0) {
            return Err(Error::InvalidConfig("ngram orders must be non-empty and positive".into()));
        }
        if self.vocabulary == VocabularyPolicy::PriorOnly && self.prior.is_none() {
            return Err(Error::InvalidConfig("prior-only vocabulary requires a prior".into()));
        }
        Ok(())
    }
}

/// Pretrained word vectors: the "knowledge" a base model brings along.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabularyPrior {
    pub name: String,
    pub dim: usize,
    pub vectors: BTreeMap<String, Vec<f32>>,
}

impl VocabularyPrior {
    pub fn validate(&self) -> Result<()> {
        if let Some((w, v)) = self.vectors.iter().find(|(_, v)| v.len() != self.dim) {
            return Err(Error::InvalidConfig(alloc::format!(
                "prior `{}`: vector for `{w}` has {} dims, expected {}",
                self.name,
                v.len(),
                self.dim
            )));
        }
        Ok(())
    }
}

/// Sparse feature vector with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub indices: Vec<u32>,
    pub values: Vec<f32>,
}

impl SparseVector {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f32)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Symmetric 8-bit quantization against the largest magnitude.
    pub fn quantized(&self) -> SparseVector {
        let scale = self.values.iter().fold(0f32, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return self.clone();
        }
        let values = self
            .values
            .iter()
            .map(|v| libm::roundf(v / scale * 127.0) * scale / 127.0)
            .collect();
        SparseVector { indices: self.indices.clone(), values }
    }
}

/// Feature rows for one dataset under one featurizer.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub dim: usize,
    pub rows: Vec<SparseVector>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn quantized(&self) -> FeatureMatrix {
        FeatureMatrix { dim: self.dim, rows: self.rows.iter().map(SparseVector::quantized).collect() }
    }
}

const UNKNOWN_TOKEN: &str = "\u{0}unk";

/// A frozen text featurizer: hashed n-gram counts (L2-normalized) followed by
/// a dense block summing the prior vectors of known words.
#[derive(Debug, Clone)]
pub struct Featurizer {
    config: FeaturizerConfig,
    prior: Option<Arc<VocabularyPrior>>,
}

fn fnv1a(bytes: &[u8], mut h: u64) -> u64 {
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Featurizer {
    pub fn new(config: FeaturizerConfig, prior: Option<Arc<VocabularyPrior>>) -> Result<Self> {
        config.validate()?;
        match (&config.prior, &prior) {
            (Some(name), Some(p)) if *name == p.name => p.validate()?,
            (None, None) => {}
            (Some(name), _) => {
                return Err(Error::InvalidConfig(alloc::format!("prior `{name}` is not loaded")))
            }
            (None, Some(p)) => {
                return Err(Error::InvalidConfig(alloc::format!(
                    "prior `{}` supplied but the config names none",
                    p.name
                )))
            }
        }
        Ok(Featurizer { config, prior })
    }

    pub fn config(&self) -> &FeaturizerConfig {
        &self.config
    }

    pub fn prior_dim(&self) -> usize {
        self.prior.as_ref().map_or(0, |p| p.dim)
    }

    pub fn dim(&self) -> usize {
        self.config.hash_dim() + self.prior_dim()
    }

    fn tokens(&self, text: &str) -> Vec<String> {
        let cfg = &self.config;
        let mut out = Vec::new();
        for w in words(text) {
            let w: String = if cfg.lowercase { w.to_lowercase() } else { w.into() };
            let stop = is_stopword(&w.to_lowercase());
            let keep = match cfg.stopwords {
                StopwordPolicy::Keep => true,
                StopwordPolicy::Drop => !stop,
                StopwordPolicy::Only => stop,
            };
            if !keep {
                continue;
            }
            let tok = match cfg.token_view {
                TokenView::Word => w,
                TokenView::Shape => word_shape(&w),
            };
            let tok = match (cfg.vocabulary, &self.prior) {
                (VocabularyPolicy::PriorOnly, Some(p)) if !p.vectors.contains_key(&tok) => {
                    UNKNOWN_TOKEN.into()
                }
                _ => tok,
            };
            out.push(tok);
        }
        out
    }

    pub fn featurize(&self, text: &str) -> SparseVector {
        let tokens = self.tokens(text);
        let mask = (self.config.hash_dim() - 1) as u64;
        let mut counts: BTreeMap<u32, f32> = BTreeMap::new();
        for &n in &self.config.ngram_orders {
            let n = n as usize;
            if tokens.len() < n {
                continue;
            }
            for gram in tokens.windows(n) {
                let mut h = fnv1a(&[n as u8], 0xcbf2_9ce4_8422_2325);
                for t in gram {
                    h = fnv1a(t.as_bytes(), h);
                    h = fnv1a(&[0x1f], h);
                }
                *counts.entry((h & mask) as u32).or_default() += 1.0;
            }
        }
        let norm = libm::sqrtf(counts.values().map(|c| c * c).sum::<f32>());
        let mut v = SparseVector::default();
        for (i, c) in counts {
            v.indices.push(i);
            v.values.push(c / norm);
        }
        if let Some(prior) = &self.prior {
            let mut dense = alloc::vec![0f32; prior.dim];
            let mut matched = 0usize;
            for t in &tokens {
                if let Some(vec) = prior.vectors.get(t) {
                    matched += 1;
                    for (d, x) in dense.iter_mut().zip(vec) {
                        *d += x;
                    }
                }
            }
            if matched > 0 {
                let scale = 1.0 / libm::sqrtf(matched as f32);
                let base = self.config.hash_dim() as u32;
                for (k, d) in dense.into_iter().enumerate() {
                    if d != 0.0 {
                        v.indices.push(base + k as u32);
                        v.values.push(d * scale);
                    }
                }
            }
        }
        v
    }

    pub fn featurize_all<'a>(&self, texts: impl IntoIterator<Item = &'a str>) -> FeatureMatrix {
        FeatureMatrix { dim: self.dim(), rows: texts.into_iter().map(|t| self.featurize(t)).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn prior() -> Arc<VocabularyPrior> {
        let mut vectors = BTreeMap::new();
        vectors.insert("good".into(), vec![1.0]);
        vectors.insert("bad".into(), vec![-1.0]);
        Arc::new(VocabularyPrior { name: "polarity".into(), dim: 1, vectors })
    }

    #[test]
    fn hashed_block_is_unit_norm_and_sorted() {
        let f = Featurizer::new(FeaturizerConfig::default(), None).unwrap();
        let v = f.featurize("a good film, a good plot");
        assert!(v.indices.windows(2).all(|w| w[0] < w[1]));
        let norm: f32 = v.values.iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-5);
        assert!(f.featurize("").indices.is_empty());
        assert_eq!(f.dim(), 1 << 18);
    }

    #[test]
    fn prior_block_sums_known_words() {
        let cfg = FeaturizerConfig { prior: Some("polarity".into()), hash_bits: 4, ..Default::default() };
        let f = Featurizer::new(cfg, Some(prior())).unwrap();
        assert_eq!(f.dim(), 17);
        let v = f.featurize("good good bad film");
        let (&last_i, &last_v) = (v.indices.last().unwrap(), v.values.last().unwrap());
        assert_eq!(last_i, 16);
        // (1 + 1 - 1) / sqrt(3)
        assert!((last_v - 1.0 / 3f32.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn prior_only_vocabulary_collapses_unknown_words() {
        let cfg = FeaturizerConfig {
            prior: Some("polarity".into()),
            vocabulary: VocabularyPolicy::PriorOnly,
            ngram_orders: vec![1],
            ..Default::default()
        };
        let f = Featurizer::new(cfg, Some(prior())).unwrap();
        assert_eq!(f.featurize("plot acting"), f.featurize("music scenery"));
        assert_ne!(f.featurize("good"), f.featurize("bad"));
    }

    #[test]
    fn stopword_policies() {
        let only = FeaturizerConfig { stopwords: StopwordPolicy::Only, ..Default::default() };
        let f = Featurizer::new(only, None).unwrap();
        assert_eq!(f.featurize("great acting"), SparseVector::default());
        assert_ne!(f.featurize("the"), SparseVector::default());
    }

    #[test]
    fn config_validation() {
        let bad = FeaturizerConfig { hash_bits: 0, ..Default::default() };
        assert!(Featurizer::new(bad, None).is_err());
        let missing = FeaturizerConfig { prior: Some("x".into()), ..Default::default() };
        assert!(Featurizer::new(missing, None).is_err());
    }

    #[test]
    fn quantization_keeps_support_and_bounds_error() {
        let f = Featurizer::new(FeaturizerConfig::default(), None).unwrap();
        let v = f.featurize("one two three three four");
        let q = v.quantized();
        assert_eq!(q.indices, v.indices);
        for (a, b) in v.values.iter().zip(&q.values) {
            assert!((a - b).abs() <= 1.0 / 127.0);
        }
    }
}
