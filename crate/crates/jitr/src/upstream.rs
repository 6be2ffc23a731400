//! Upstream LLM backends: a deterministic mock and an HTTP client for
//! chat-completions-style providers.

use std::collections::{HashMap, VecDeque};
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};
use std::time::{Duration, Instant};

use jitr_core::tokens::count_tokens;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{CorpusParams, SentimentLexicon, NEGATIVE, POSITIVE};
use crate::wire::{ChatRequest, WrapperTemplate};

#[derive(Debug, Clone, PartialEq)]
pub struct UpstreamReply {
    pub content: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("upstream error: {0}")]
pub struct UpstreamError(pub String);

pub trait Upstream: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<UpstreamReply, UpstreamError>;
}

impl<T: Upstream + ?Sized> Upstream for std::sync::Arc<T> {
    fn complete(&self, req: &ChatRequest) -> Result<UpstreamReply, UpstreamError> {
        (**self).complete(req)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockConfig {
    /// Probability that a sentiment answer matches the ground truth.
    pub accuracy: f64,
    pub seed: u64,
    /// Reported per-request latency.
    pub latency_ms: f64,
    /// Actually wait `latency_ms` before answering.
    pub sleep: bool,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig { accuracy: 0.93, seed: 7, latency_ms: 1000.0 / 13.0, sleep: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MockTask {
    Sentiment,
    Translation,
    Extraction,
    Other,
}

impl MockTask {
    fn name(self) -> &'static str {
        match self {
            MockTask::Sentiment => "sentiment classification",
            MockTask::Translation => "translation",
            MockTask::Extraction => "information extraction",
            MockTask::Other => "other",
        }
    }
}

fn detect_task(text: &str) -> MockTask {
    if text.contains("\"sentiment\"") {
        MockTask::Sentiment
    } else if text.contains("\"translation\"") {
        MockTask::Translation
    } else if text.contains("\"city\"") {
        MockTask::Extraction
    } else {
        MockTask::Other
    }
}

fn text_hash(seed: u64, text: &str) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    seed.hash(&mut h);
    text.hash(&mut h);
    h.finish()
}

/// Uniform in [0, 1) from a hash.
fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn flip(label: &str) -> &'static str {
    if label == POSITIVE {
        NEGATIVE
    } else {
        POSITIVE
    }
}

/// Deterministic stand-in LLM.
///
/// Sentiment prompts are answered from registered ground truth (or, without
/// it, from the bundled lexicon) and then corrupted with probability
/// `1 - accuracy`. The corruption depends only on the seed and the request
/// text, so repeated requests get repeated answers. Wrapped requests get a
/// wrapped JSON answer carrying the task signals.
pub struct MockLlm {
    config: MockConfig,
    wrapper: WrapperTemplate,
    lexicon: HashMap<String, f32>,
    truth: RwLock<HashMap<u64, String>>,
    /// Fraction of inputs whose true label is inverted (simulated drift).
    flip_fraction: AtomicU64,
    scripted: Mutex<VecDeque<Result<String, UpstreamError>>>,
    calls: AtomicU64,
}

impl MockLlm {
    pub fn new(config: MockConfig, wrapper: WrapperTemplate, corpus: &CorpusParams) -> Self {
        let lex = SentimentLexicon::generate(corpus.lexicon_size, corpus.lexicon_seed);
        MockLlm {
            config,
            wrapper,
            lexicon: lex.words().map(|(w, p)| (w.to_string(), p)).collect(),
            truth: RwLock::new(HashMap::new()),
            flip_fraction: AtomicU64::new(0f64.to_bits()),
            scripted: Mutex::new(VecDeque::new()),
            calls: AtomicU64::new(0),
        }
    }

    /// Registers the true label of a plain (unwrapped) prompt.
    pub fn set_truth(&self, prompt: &str, label: &str) {
        self.truth.write().unwrap().insert(text_hash(0, prompt), label.to_string());
    }

    pub fn set_flip_fraction(&self, fraction: f64) {
        self.flip_fraction.store(fraction.clamp(0.0, 1.0).to_bits(), Ordering::SeqCst);
    }

    /// Queues a raw reply (or failure) returned verbatim by the next call.
    pub fn script(&self, reply: Result<String, UpstreamError>) {
        self.scripted.lock().unwrap().push_back(reply);
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    fn lexicon_label(&self, text: &str) -> &'static str {
        let body = text.rsplit("Review:").next().unwrap_or(text);
        let score: f32 = jitr_core::learn::words(body)
            .iter()
            .filter_map(|w| self.lexicon.get(&w.to_lowercase()))
            .sum();
        match score.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => POSITIVE,
            Some(std::cmp::Ordering::Less) => NEGATIVE,
            _ if text_hash(self.config.seed ^ 0x7e, text) & 1 == 0 => POSITIVE,
            _ => NEGATIVE,
        }
    }

    /// The mock's sentiment answer for a plain prompt.
    pub fn sentiment_label(&self, prompt: &str) -> &'static str {
        let truth = self.truth.read().unwrap().get(&text_hash(0, prompt)).cloned();
        let mut label = match truth.as_deref() {
            Some(POSITIVE) => POSITIVE,
            Some(NEGATIVE) => NEGATIVE,
            _ => self.lexicon_label(prompt),
        };
        let flip_fraction = f64::from_bits(self.flip_fraction.load(Ordering::SeqCst));
        if unit(text_hash(self.config.seed ^ 0xd71f, prompt)) < flip_fraction {
            label = flip(label);
        }
        if unit(text_hash(self.config.seed, prompt)) >= self.config.accuracy {
            label = flip(label);
        }
        label
    }

    fn answer(&self, task: MockTask, prompt: &str) -> serde_json::Value {
        match task {
            MockTask::Sentiment => json!({ "sentiment": self.sentiment_label(prompt) }),
            MockTask::Translation => {
                let msg = prompt.rsplit("Message: ").next().unwrap_or(prompt);
                json!({ "translation": format!("[de] {msg}") })
            }
            MockTask::Extraction => {
                let note = prompt.rsplit("Note: ").next().unwrap_or(prompt);
                let after = |marker: &str| {
                    note.split(marker).nth(1).map(|s| s.trim_end_matches('.').split([',', ' ']).next().unwrap_or(""))
                };
                json!({ "city": after(" to "), "weekday": after("deliver ") })
            }
            MockTask::Other => json!({ "answer": format!("noted ({} words)", prompt.split_whitespace().count()) }),
        }
    }
}

/// Single-line JSON with a space after each separator, as chat models tend
/// to write it.
fn plain_json(v: &serde_json::Value) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SpacedFormatter);
    serde::Serialize::serialize(v, &mut ser).expect("JSON values serialize");
    String::from_utf8(out).expect("serde_json writes UTF-8")
}

struct SpacedFormatter;

impl serde_json::ser::Formatter for SpacedFormatter {
    fn begin_object_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        w.write_all(b": ")
    }

    fn begin_object_key<W: ?Sized + std::io::Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        if first { Ok(()) } else { w.write_all(b", ") }
    }
}

impl Upstream for MockLlm {
    fn complete(&self, req: &ChatRequest) -> Result<UpstreamReply, UpstreamError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let rendered = req.rendered();
        let scripted = self.scripted.lock().unwrap().pop_front();
        let content = match scripted {
            Some(reply) => reply?,
            None => match self.wrapper.extract(&rendered) {
                Some(inner) => {
                    let task = detect_task(inner);
                    let answer = self.answer(task, inner);
                    // Same layout as a typical wrapped completion.
                    format!(
                        "{{\n  \"input_type\": \"text\",\n  \"task_type\": \"{}\",\n  \"user_response\": {}\n}}",
                        task.name(),
                        plain_json(&answer)
                    )
                }
                None => plain_json(&self.answer(detect_task(&rendered), &rendered)),
            },
        };
        if self.config.sleep {
            std::thread::sleep(Duration::from_secs_f64(self.config.latency_ms / 1000.0));
        }
        Ok(UpstreamReply {
            prompt_tokens: count_tokens(&rendered),
            completion_tokens: count_tokens(&content),
            content,
            latency_ms: self.config.latency_ms,
        })
    }
}

/// Client for an OpenAI-compatible `/v1/chat/completions` endpoint.
pub struct HttpUpstream {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
}

impl HttpUpstream {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build();
        HttpUpstream {
            agent: agent.into(),
            url: format!("{}/v1/chat/completions", base_url.trim_end_matches('/')),
            api_key,
        }
    }
}

#[derive(Deserialize)]
struct WireChoiceMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireChoiceMessage,
}

#[derive(Deserialize, Default)]
struct WireUsage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

#[derive(Deserialize)]
struct WireCompletion {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

impl Upstream for HttpUpstream {
    fn complete(&self, req: &ChatRequest) -> Result<UpstreamReply, UpstreamError> {
        let body = json!({ "model": req.model, "messages": req.messages });
        let start = Instant::now();
        let mut call = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call.send_json(&body).map_err(|e| UpstreamError(e.to_string()))?;
        let status = resp.status();
        let text = resp.body_mut().read_to_string().map_err(|e| UpstreamError(e.to_string()))?;
        if !status.is_success() {
            return Err(UpstreamError(format!("status {status}: {text}")));
        }
        let parsed: WireCompletion =
            serde_json::from_str(&text).map_err(|e| UpstreamError(format!("malformed completion: {e}")))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| UpstreamError("completion has no choices".into()))?;
        let usage = parsed.usage.unwrap_or_default();
        Ok(UpstreamReply {
            prompt_tokens: usage.prompt_tokens.unwrap_or_else(|| count_tokens(&req.rendered())),
            completion_tokens: usage.completion_tokens.unwrap_or_else(|| count_tokens(&content)),
            content,
            latency_ms: start.elapsed().as_secs_f64() * 1000.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::sentiment_prompt;
    use crate::wire::{unwrap_response, Message};

    fn mock(accuracy: f64) -> MockLlm {
        MockLlm::new(MockConfig { accuracy, ..Default::default() }, WrapperTemplate::default(), &CorpusParams::default())
    }

    #[test]
    fn wrapped_and_plain_answers_agree() {
        let m = mock(0.93);
        let prompt = sentiment_prompt("A great and moving film.");
        m.set_truth(&prompt, POSITIVE);
        let plain = ChatRequest::new("gpt-4.1", vec![Message::user(prompt.clone())]);
        let wrapped = WrapperTemplate::default().wrap_request(&plain);
        let p = m.complete(&plain).unwrap();
        let w = m.complete(&wrapped).unwrap();
        let u = unwrap_response(&w.content).unwrap();
        assert_eq!(u.user_response(), p.content);
        assert_eq!(u.signals.task_type, jitr_core::miner::TaskType::SentimentClassification);
        assert!(w.prompt_tokens > p.prompt_tokens && w.completion_tokens > p.completion_tokens);
    }

    #[test]
    fn accuracy_is_close_to_configured() {
        let m = mock(0.93);
        let n = 4000;
        let correct = (0..n)
            .filter(|i| {
                let prompt = sentiment_prompt(&format!("review number {i}"));
                let truth = if i % 2 == 0 { POSITIVE } else { NEGATIVE };
                m.set_truth(&prompt, truth);
                m.sentiment_label(&prompt) == truth
            })
            .count();
        let acc = correct as f64 / n as f64;
        // 99% binomial interval around 0.93 for n = 4000 is about ±0.0104.
        assert!((acc - 0.93).abs() < 0.0105, "{acc}");
    }

    #[test]
    fn flip_fraction_inverts_labels() {
        let m = mock(1.0);
        let prompts: Vec<String> = (0..2000).map(|i| sentiment_prompt(&format!("text {i}"))).collect();
        for p in &prompts {
            m.set_truth(p, POSITIVE);
        }
        m.set_flip_fraction(0.3);
        let flipped = prompts.iter().filter(|p| m.sentiment_label(p) == NEGATIVE).count();
        assert!((500..700).contains(&flipped), "{flipped}");
    }

    #[test]
    fn scripted_replies_come_first() {
        let m = mock(1.0);
        m.script(Ok("negative".into()));
        m.script(Err(UpstreamError("down".into())));
        let req = ChatRequest::new("m", vec![Message::user("hi")]);
        assert_eq!(m.complete(&req).unwrap().content, "negative");
        assert!(m.complete(&req).is_err());
        assert!(m.complete(&req).is_ok());
        assert_eq!(m.calls(), 3);
    }
}
