//! Surrogate artifacts: a JSON header followed by a little-endian f32 weight
//! block.
//!
//! Layout: `JITRART1`, header length (u32 LE), header JSON, then
//! `num_classes * dim` weights and `num_classes` biases as f32 LE.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use jitr_core::learn::{FeaturizerConfig, Featurizer, LabelMap, LinearModel, VocabularyPrior};
use jitr_core::miner::{PromptTemplate, TaskId};
use serde::{Deserialize, Serialize};

use crate::dataset::LabelSchema;

const MAGIC: &[u8; 8] = b"JITRART1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMetrics {
    /// Agreement with the teacher's labels on the validation split.
    pub teacher_agreement: f64,
    pub train_examples: usize,
    pub validation_examples: usize,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub artifact_id: String,
    pub task_id: TaskId,
    pub base_model: String,
    pub featurizer: FeaturizerConfig,
    /// The base model's vocabulary prior, embedded so the file stands alone.
    pub prior: Option<VocabularyPrior>,
    pub labels: Vec<String>,
    pub dim: usize,
    pub schema: LabelSchema,
    /// Template whose slot bindings form the model input.
    pub input_template: Option<PromptTemplate>,
    pub metrics: ArtifactMetrics,
    /// Hash of the training examples.
    pub trained_on: u64,
    pub created_at: u64,
}

/// Ledger-sized description of an artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactSummary {
    pub artifact_id: String,
    pub task_id: TaskId,
    pub base_model: String,
    pub labels: Vec<String>,
    pub metrics: ArtifactMetrics,
    pub trained_on: u64,
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateArtifact {
    pub header: ArtifactHeader,
    pub model: LinearModel,
}

impl SurrogateArtifact {
    pub fn summary(&self) -> ArtifactSummary {
        let h = &self.header;
        ArtifactSummary {
            artifact_id: h.artifact_id.clone(),
            task_id: h.task_id,
            base_model: h.base_model.clone(),
            labels: h.labels.clone(),
            metrics: h.metrics.clone(),
            trained_on: h.trained_on,
            created_at: h.created_at,
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> anyhow::Result<()> {
        let header = serde_json::to_vec(&self.header)?;
        w.write_all(MAGIC)?;
        w.write_all(&u32::try_from(header.len())?.to_le_bytes())?;
        w.write_all(&header)?;
        for v in self.model.weights.iter().chain(&self.model.bias) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> anyhow::Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).context("artifact too short")?;
        anyhow::ensure!(&magic == MAGIC, "not a surrogate artifact (bad magic)");
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut header).context("truncated artifact header")?;
        let header: ArtifactHeader = serde_json::from_slice(&header).context("artifact header")?;
        let classes = header.labels.len();
        let mut read_f32s = |n: usize| -> anyhow::Result<Vec<f32>> {
            let mut buf = vec![0u8; n * 4];
            r.read_exact(&mut buf).context("truncated weight block")?;
            Ok(buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
        };
        let weights = read_f32s(classes * header.dim)?;
        let bias = read_f32s(classes)?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        anyhow::ensure!(rest.is_empty(), "{} trailing bytes after weight block", rest.len());
        let model = LinearModel { labels: LabelMap::from_labels(header.labels.clone()), dim: header.dim, weights, bias };
        Ok(SurrogateArtifact { header, model })
    }

    pub fn save(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = artifact_path(dir, &self.header.artifact_id);
        let tmp = path.with_extension("tmp");
        self.write_to(std::io::BufWriter::new(std::fs::File::create(&tmp)?))?;
        std::fs::rename(&tmp, &path)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let f = std::fs::File::open(path).with_context(|| format!("opening artifact {}", path.display()))?;
        Self::read_from(std::io::BufReader::new(f)).with_context(|| format!("reading artifact {}", path.display()))
    }
}

pub fn artifact_path(dir: &Path, artifact_id: &str) -> PathBuf {
    dir.join(format!("{artifact_id}.jitr"))
}

/// A loaded artifact ready to answer requests.
#[derive(Debug)]
pub struct Surrogate {
    pub artifact: SurrogateArtifact,
    featurizer: Featurizer,
}

impl Surrogate {
    pub fn new(artifact: SurrogateArtifact) -> anyhow::Result<Self> {
        let h = &artifact.header;
        let prior = h.prior.clone().map(Arc::new);
        let featurizer = Featurizer::new(h.featurizer.clone(), prior)?;
        anyhow::ensure!(
            featurizer.dim() == h.dim && artifact.model.weights.len() == h.dim * h.labels.len(),
            "artifact {} dimensions do not match its featurizer",
            h.artifact_id
        );
        Ok(Surrogate { artifact, featurizer })
    }

    pub fn id(&self) -> &str {
        &self.artifact.header.artifact_id
    }

    /// Model input for a prompt: its slot bindings, or the prompt itself
    /// when it does not fit the template.
    pub fn input<'a>(&self, prompt: &'a str) -> std::borrow::Cow<'a, str> {
        model_input(self.artifact.header.input_template.as_ref(), prompt)
    }

    /// Label and confidence for a prompt.
    pub fn predict(&self, prompt: &str) -> (String, f32) {
        let x = self.featurizer.featurize(&self.input(prompt));
        let (label, conf) = self.artifact.model.predict_label(&x);
        (label.to_string(), conf)
    }

    /// Client-visible answer in the task's JSON shape.
    pub fn respond(&self, label: &str) -> String {
        self.artifact.header.schema.render(label)
    }
}

/// Slot bindings joined by newlines, or the whole prompt.
pub fn model_input<'a>(template: Option<&PromptTemplate>, prompt: &'a str) -> std::borrow::Cow<'a, str> {
    match template.and_then(|t| t.extract_bindings(prompt)) {
        Some(b) if !b.is_empty() => b.join("\n").into(),
        _ => prompt.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use jitr_core::miner::Segment;

    fn artifact() -> SurrogateArtifact {
        let labels = LabelMap::from_labels(["negative".to_string(), "positive".to_string()]);
        let cfg = FeaturizerConfig { hash_bits: 4, ..Default::default() };
        let dim = Featurizer::new(cfg.clone(), None).unwrap().dim();
        let mut model = LinearModel::zeros(labels.clone(), dim);
        for (i, w) in model.weights.iter_mut().enumerate() {
            *w = i as f32 * 0.25 - 3.0;
        }
        model.bias = vec![0.5, -0.5];
        SurrogateArtifact {
            header: ArtifactHeader {
                artifact_id: "art-0-1".into(),
                task_id: TaskId(0),
                base_model: "generic-base".into(),
                featurizer: cfg,
                prior: None,
                labels: labels.labels().to_vec(),
                dim,
                schema: LabelSchema { path: vec!["sentiment".into()] },
                input_template: Some(PromptTemplate::from_segments([Segment::Literal("Review: ".into()), Segment::Slot])),
                metrics: ArtifactMetrics {
                    teacher_agreement: 0.9,
                    train_examples: 400,
                    validation_examples: 50,
                    best_epoch: 3,
                    epochs_run: 6,
                },
                trained_on: 99,
                created_at: 5,
            },
            model,
        }
    }

    #[test]
    fn file_round_trip_is_exact() {
        let a = artifact();
        let dir = tempfile::tempdir().unwrap();
        let path = a.save(dir.path()).unwrap();
        let b = SurrogateArtifact::load(&path).unwrap();
        assert_eq!(a, b);
        let s1 = Surrogate::new(a).unwrap();
        let s2 = Surrogate::new(b).unwrap();
        assert_eq!(s1.predict("Review: dull plot"), s2.predict("Review: dull plot"));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let mut bytes = Vec::new();
        artifact().write_to(&mut bytes).unwrap();
        assert!(SurrogateArtifact::read_from(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(SurrogateArtifact::read_from(&extra[..]).is_err());
        bytes[0] = b'X';
        assert!(SurrogateArtifact::read_from(&bytes[..]).is_err());
    }

    #[test]
    fn input_uses_slot_bindings() {
        let s = Surrogate::new(artifact()).unwrap();
        assert_eq!(s.input("Review: fine film"), "fine film");
        assert_eq!(s.input("something else"), "something else");
        assert_eq!(s.respond("positive"), r#"{"sentiment":"positive"}"#);
    }
}
