//! Chat-completions wire types, the wrapper prompt and its response parser.

use jitr_core::miner::{InputType, TaskSignals, TaskType};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into() }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Message { role: Role::System, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    /// Assigned by the gateway when the client sends none.
    #[serde(default)]
    pub request_id: String,
    #[serde(default)]
    pub received_at: u64,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RequestError {
    #[error("request has no messages")]
    NoMessages,
    #[error("request has no model")]
    NoModel,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, messages: Vec<Message>) -> Self {
        ChatRequest { model: model.into(), messages, request_id: String::new(), received_at: 0 }
    }

    pub fn validate(&self) -> Result<(), RequestError> {
        if self.messages.is_empty() {
            return Err(RequestError::NoMessages);
        }
        if self.model.trim().is_empty() {
            return Err(RequestError::NoModel);
        }
        Ok(())
    }

    /// The request as one prompt string: message contents joined by newlines.
    pub fn rendered(&self) -> String {
        let parts: Vec<&str> = self.messages.iter().map(|m| m.content.as_str()).collect();
        parts.join("\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServedBy {
    Llm,
    LlmWrapped,
    Surrogate,
}

impl ServedBy {
    pub fn as_str(self) -> &'static str {
        match self {
            ServedBy::Llm => "llm",
            ServedBy::LlmWrapped => "llm_wrapped",
            ServedBy::Surrogate => "surrogate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub request_id: String,
    pub content: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub upstream_latency_ms: f64,
    pub served_by: ServedBy,
    #[serde(default)]
    pub task_id: Option<jitr_core::miner::TaskId>,
}

/// Marker replaced by the rendered user request.
pub const USER_REQUEST_SLOT: &str = "<USER REQUEST>";

pub const DEFAULT_WRAPPER: &str = r#"A gateway forwarded the request below. It holds a system prompt and a user message.
Do three things:

1. Decide what kind of input the user gave:
one of ["text", "image", "table", "other"]

2. Decide which task is being asked for, from:
["sentiment classification", "summarization", "translation", "question answering", "information extraction", "topic modeling", "other"]

3. Do the task and place your answer, as JSON, in a field named "user_response".

Reply with one JSON object with the keys "input_type", "task_type" and "user_response" (your JSON answer).

USER REQUEST: <USER REQUEST>"#;

/// A wrapper prompt with exactly one `<USER REQUEST>` marker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WrapperTemplate {
    prefix: String,
    suffix: String,
}

impl Default for WrapperTemplate {
    fn default() -> Self {
        WrapperTemplate::new(DEFAULT_WRAPPER).expect("default wrapper has one marker")
    }
}

impl WrapperTemplate {
    pub fn new(text: &str) -> anyhow::Result<Self> {
        let mut parts = text.split(USER_REQUEST_SLOT);
        let (Some(prefix), Some(suffix), None) = (parts.next(), parts.next(), parts.next()) else {
            anyhow::bail!("wrapper template must contain {USER_REQUEST_SLOT} exactly once");
        };
        Ok(WrapperTemplate { prefix: prefix.into(), suffix: suffix.into() })
    }

    pub fn text(&self) -> String {
        format!("{}{USER_REQUEST_SLOT}{}", self.prefix, self.suffix)
    }

    pub fn render(&self, user_request: &str) -> String {
        format!("{}{user_request}{}", self.prefix, self.suffix)
    }

    /// Embeds the rendered request in the wrapper as a single user message.
    pub fn wrap_request(&self, req: &ChatRequest) -> ChatRequest {
        ChatRequest {
            model: req.model.clone(),
            messages: vec![Message::user(self.render(&req.rendered()))],
            request_id: req.request_id.clone(),
            received_at: req.received_at,
        }
    }

    /// The `<USER REQUEST>` span of a wrapped prompt.
    pub fn extract<'a>(&self, wrapped: &'a str) -> Option<&'a str> {
        wrapped.strip_prefix(self.prefix.as_str())?.strip_suffix(self.suffix.as_str())
    }

    /// Input tokens the wrapper adds to a request.
    pub fn overhead_tokens(&self) -> u64 {
        jitr_core::tokens::count_tokens(&self.prefix) + jitr_core::tokens::count_tokens(&self.suffix)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unwrapped {
    pub signals: TaskSignals,
}

impl Unwrapped {
    pub fn user_response(&self) -> &str {
        &self.signals.user_response
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot unwrap response: {reason}")]
pub struct UnwrapFailure {
    pub raw: String,
    pub reason: String,
}

#[derive(Deserialize)]
struct WrappedWire<'a> {
    input_type: Option<serde_json::Value>,
    task_type: Option<serde_json::Value>,
    #[serde(borrow)]
    user_response: Option<&'a RawValue>,
}

/// Drops a surrounding Markdown code fence, which chat models like to add.
fn strip_fence(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else { return t };
    let rest = rest.strip_prefix("json").unwrap_or(rest);
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

/// Parses a wrapped completion. The inner `user_response` is kept byte for
/// byte; enum values outside the closed sets map to `other`.
pub fn unwrap_response(raw: &str) -> Result<Unwrapped, UnwrapFailure> {
    let fail = |reason: String| UnwrapFailure { raw: raw.to_string(), reason };
    let body = strip_fence(raw);
    let wire: WrappedWire<'_> = serde_json::from_str(body).map_err(|e| fail(e.to_string()))?;
    let text_field = |v: Option<serde_json::Value>, name: &str| match v {
        Some(serde_json::Value::String(s)) => Ok(s),
        Some(_) => Err(fail(format!("`{name}` is not a string"))),
        None => Err(fail(format!("missing `{name}`"))),
    };
    let input_type = text_field(wire.input_type, "input_type")?;
    let task_type = text_field(wire.task_type, "task_type")?;
    let user_response = wire.user_response.ok_or_else(|| fail("missing `user_response`".into()))?;
    Ok(Unwrapped {
        signals: TaskSignals {
            input_type: InputType::parse_lenient(&input_type),
            task_type: TaskType::parse_lenient(&task_type),
            user_response: user_response.get().to_string(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_embeds_request_verbatim() {
        let w = WrapperTemplate::default();
        let req = ChatRequest::new(
            "gpt-4.1",
            vec![Message::system("Classify the review."), Message::user("Review: fine")],
        );
        let wrapped = w.wrap_request(&req);
        assert_eq!(wrapped.messages.len(), 1);
        let text = &wrapped.messages[0].content;
        assert!(text.contains("1. ") && text.contains("2. ") && text.contains("3. "));
        assert!(text.contains("\"user_response\""));
        assert_eq!(w.extract(text), Some("Classify the review.\nReview: fine"));
        assert_eq!(w.text(), DEFAULT_WRAPPER);
    }

    #[test]
    fn empty_request_wraps_to_empty_span() {
        let w = WrapperTemplate::new("before <USER REQUEST> after").unwrap();
        assert_eq!(w.render(""), "before  after");
        assert_eq!(w.extract("before  after"), Some(""));
        assert!(WrapperTemplate::new("no marker").is_err());
        assert!(WrapperTemplate::new("<USER REQUEST><USER REQUEST>").is_err());
    }

    #[test]
    fn wrapped_response_fixture() {
        let raw = "{\n  \"input_type\": \"text\",\n  \"task_type\": \"sentiment classification\",\n  \"user_response\": {\"sentiment\": \"negative\"}\n}";
        let u = unwrap_response(raw).unwrap();
        assert_eq!(u.signals.input_type, InputType::Text);
        assert_eq!(u.signals.task_type, TaskType::SentimentClassification);
        assert_eq!(u.user_response(), "{\"sentiment\": \"negative\"}");
    }

    #[test]
    fn plain_text_is_a_parse_failure() {
        let e = unwrap_response("negative").unwrap_err();
        assert_eq!(e.raw, "negative");
    }

    #[test]
    fn unknown_task_type_maps_to_other() {
        let raw = r#"{"input_type": "text", "task_type": "poetry", "user_response": {"poem": "x"}}"#;
        let u = unwrap_response(raw).unwrap();
        assert_eq!(u.signals.task_type, TaskType::Other);
        assert_eq!(u.user_response(), r#"{"poem": "x"}"#);
    }

    #[test]
    fn missing_field_and_fences() {
        assert!(unwrap_response(r#"{"input_type": "text", "task_type": "other"}"#).is_err());
        let fenced = "```json\n{\"input_type\": \"video\", \"task_type\": \"translation\", \"user_response\": \"hola\"}\n```";
        let u = unwrap_response(fenced).unwrap();
        assert_eq!(u.signals.input_type, InputType::Other);
        assert_eq!(u.user_response(), "\"hola\"");
    }
}
