use alloc::collections::BTreeMap;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use super::cluster::MinerConfig;
use super::template::PromptTemplate;
use crate::lifecycle::LifecycleState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub u64);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "task-{}", self.0)
    }
}

impl FromStr for TaskId {
    type Err = core::num::ParseIntError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix("task-").unwrap_or(s).parse().map(TaskId)
    }
}

macro_rules! closed_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }

            /// Maps any value outside the closed set to `Other`.
            pub fn parse_lenient(text: &str) -> Self {
                let t = text.trim();
                $(if t.eq_ignore_ascii_case($text) { return $name::$variant; })+
                $name::Other
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

closed_enum!(
    /// Kind of input the user supplied.
    InputType {
        Text => "text",
        Image => "image",
        Table => "table",
        Other => "other",
    }
);

closed_enum!(
    /// Kind of task the LLM was asked to perform.
    TaskType {
        SentimentClassification => "sentiment classification",
        Summarization => "summarization",
        Translation => "translation",
        QuestionAnswering => "question answering",
        InformationExtraction => "information extraction",
        TopicModeling => "topic modeling",
        Other => "other",
    }
);

/// Task metadata reported by the LLM alongside its answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSignals {
    pub input_type: InputType,
    pub task_type: TaskType,
    /// The inner answer, serialized as JSON text.
    pub user_response: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: u64,
    pub total_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

impl LatencyStats {
    pub fn record(&mut self, ms: f64) {
        if self.count == 0 {
            self.min_ms = ms;
            self.max_ms = ms;
        } else {
            self.min_ms = self.min_ms.min(ms);
            self.max_ms = self.max_ms.max(ms);
        }
        self.count += 1;
        self.total_ms += ms;
    }

    pub fn mean_ms(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.total_ms / self.count as f64
        }
    }
}

/// Token totals split by whether the wrapper prompt was applied.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStats {
    pub plain_requests: u64,
    pub plain_prompt_tokens: u64,
    pub plain_completion_tokens: u64,
    pub wrapped_requests: u64,
    pub wrapped_prompt_tokens: u64,
    pub wrapped_completion_tokens: u64,
    /// Estimated tokens of the same wrapped requests had they not been wrapped.
    pub wrapped_base_prompt_tokens: u64,
    pub wrapped_base_completion_tokens: u64,
    pub surrogate_requests: u64,
}

impl TokenStats {
    /// Mean unwrapped input/output tokens over every LLM-answered request.
    pub fn mean_base_tokens(&self) -> Option<(u64, u64)> {
        let n = self.plain_requests + self.wrapped_requests;
        if n == 0 {
            return None;
        }
        let input = self.plain_prompt_tokens + self.wrapped_base_prompt_tokens;
        let output = self.plain_completion_tokens + self.wrapped_base_completion_tokens;
        Some((div_round(input, n), div_round(output, n)))
    }

    /// Mean extra input/output tokens caused by wrapping.
    pub fn mean_wrapper_overhead(&self) -> Option<(u64, u64)> {
        let n = self.wrapped_requests;
        if n == 0 {
            return None;
        }
        let input = self.wrapped_prompt_tokens.saturating_sub(self.wrapped_base_prompt_tokens);
        let output = self.wrapped_completion_tokens.saturating_sub(self.wrapped_base_completion_tokens);
        Some((div_round(input, n), div_round(output, n)))
    }
}

fn div_round(a: u64, b: u64) -> u64 {
    (a + b / 2) / b
}

/// A detected recurring task and everything known about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: TaskId,
    pub template: Option<PromptTemplate>,
    pub input_type_votes: BTreeMap<InputType, u64>,
    pub task_type_votes: BTreeMap<TaskType, u64>,
    pub member_count: u64,
    pub first_seen_ms: u64,
    pub last_seen_ms: u64,
    pub latency: LatencyStats,
    pub tokens: TokenStats,
    /// Ledger offsets of the first and last member event.
    pub dataset_range: (u64, u64),
    pub labeled_count: u64,
    pub unparseable_count: u64,
    pub lifecycle_state: LifecycleState,
}

impl TaskRecord {
    pub fn new(task_id: TaskId, offset: u64, timestamp_ms: u64) -> Self {
        TaskRecord {
            task_id,
            template: None,
            input_type_votes: BTreeMap::new(),
            task_type_votes: BTreeMap::new(),
            member_count: 0,
            first_seen_ms: timestamp_ms,
            last_seen_ms: timestamp_ms,
            latency: LatencyStats::default(),
            tokens: TokenStats::default(),
            dataset_range: (offset, offset),
            labeled_count: 0,
            unparseable_count: 0,
            lifecycle_state: LifecycleState::Detecting,
        }
    }

    pub fn record_signals(&mut self, input_type: InputType, task_type: TaskType) {
        *self.input_type_votes.entry(input_type).or_default() += 1;
        *self.task_type_votes.entry(task_type).or_default() += 1;
    }

    /// Majority task type; ties go to the earlier variant in the closed set.
    pub fn task_type(&self) -> Option<TaskType> {
        majority(&self.task_type_votes)
    }

    pub fn input_type(&self) -> Option<InputType> {
        majority(&self.input_type_votes)
    }

    /// Requests per hour over the observed span.
    pub fn request_frequency(&self) -> f64 {
        let span_ms = self.last_seen_ms.saturating_sub(self.first_seen_ms);
        if span_ms == 0 {
            return 0.0;
        }
        self.member_count as f64 * 3_600_000.0 / span_ms as f64
    }
}

fn majority<K: Copy + Ord>(votes: &BTreeMap<K, u64>) -> Option<K> {
    let mut best: Option<(K, u64)> = None;
    for (&k, &v) in votes {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((k, v));
        }
    }
    best.map(|(k, _)| k)
}

/// A task is recurring once it has enough members and its majority task type
/// is a concrete one.
pub fn is_recurring(task: &TaskRecord, config: &MinerConfig) -> bool {
    task.member_count >= config.min_cluster_size
        && matches!(task.task_type(), Some(t) if t != TaskType::Other)
}
