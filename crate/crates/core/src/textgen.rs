//! Prompt assembly for style adaptation, fusion and labeling, plus a
//! blocking chat-completion client.

use crate::evaluation::{format_labels, parse_labels, rule_label_structured, EvaluationError, TumorLabels};
use crate::organ::Organ;
use crate::report::{render_text, StructuredReport};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::time::Duration;
use thiserror::Error;

const STYLE_TEMPLATE: &str = include_str!("../templates/style.txt");
const FUSION_TEMPLATE: &str = include_str!("../templates/fusion.txt");
const LABEL_TEMPLATE: &str = include_str!("../templates/label.txt");

pub const START_MARKER: &str = "#start";
pub const END_MARKER: &str = "#end";

/// Most examples a style prompt carries.
pub const MAX_STYLE_EXAMPLES: usize = 10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("structured report is empty")]
    EmptyStructuredReport,
    #[error("{0} is empty")]
    EmptyInput(&'static str),
    #[error("style prompts need 1 to {max} examples, got {got}")]
    ExampleCount { got: usize, max: usize },
    #[error("template placeholder `{0}` left unfilled")]
    UnfilledPlaceholder(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Style,
    Fusion,
    Label,
}

/// A filled prompt. `system` is sent first when present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub kind: PromptKind,
    pub system: Option<String>,
    pub user: String,
}

impl PromptBundle {
    pub fn messages(&self) -> Vec<Value> {
        let mut m = Vec::new();
        if let Some(s) = &self.system {
            m.push(json!({"role": "system", "content": s}));
        }
        m.push(json!({"role": "user", "content": self.user}));
        m
    }
}

/// Substitutes `{key}` tokens in one pass, so braces inside the inserted
/// text are never treated as placeholders. Every token in the template
/// must have a value.
fn fill(template: &str, values: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len() + values.iter().map(|v| v.1.len()).sum::<usize>());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_key(&after[..close]) => {
                let key = &after[..close];
                let v = values
                    .iter()
                    .find(|(k, _)| *k == key)
                    .ok_or_else(|| PromptError::UnfilledPlaceholder(key.to_string()))?;
                out.push_str(v.1);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

fn is_key(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c == '_')
}

fn non_empty(s: &str, what: &'static str) -> Result<(), PromptError> {
    if s.trim().is_empty() {
        Err(PromptError::EmptyInput(what))
    } else {
        Ok(())
    }
}

/// Examples are numbered and separated by blank lines.
pub fn format_examples(examples: &[&str]) -> String {
    examples
        .iter()
        .enumerate()
        .map(|(i, e)| format!("\n\nExample Report {}:\n{}", i + 1, e.trim_end()))
        .collect()
}

pub fn build_style_prompt(structured: &str, examples: &[&str]) -> Result<PromptBundle, PromptError> {
    build_style_prompt_with(structured, examples, MAX_STYLE_EXAMPLES)
}

/// As [`build_style_prompt`] with a different example cap.
pub fn build_style_prompt_with(structured: &str, examples: &[&str], max_examples: usize) -> Result<PromptBundle, PromptError> {
    if structured.trim().is_empty() {
        return Err(PromptError::EmptyStructuredReport);
    }
    if examples.is_empty() || examples.len() > max_examples {
        return Err(PromptError::ExampleCount {
            got: examples.len(),
            max: max_examples,
        });
    }
    let n = examples.len().to_string();
    let ex = format_examples(examples);
    let structured = format!("\n\n{}", structured.trim_end());
    let user = fill(
        STYLE_TEMPLATE,
        &[("n", &n), ("examples", &ex), ("structured_report", &structured)],
    )?;
    Ok(PromptBundle {
        kind: PromptKind::Style,
        system: None,
        user,
    })
}

pub fn build_fusion_prompt(notes: &str, structured: &str) -> Result<PromptBundle, PromptError> {
    non_empty(notes, "clinical notes")?;
    if structured.trim().is_empty() {
        return Err(PromptError::EmptyStructuredReport);
    }
    let user = fill(
        FUSION_TEMPLATE,
        &[("clinical_info", notes.trim_end()), ("structured_report", structured.trim_end())],
    )?;
    Ok(PromptBundle {
        kind: PromptKind::Fusion,
        system: None,
        user,
    })
}

/// The instructions and rules go in the system message, so the prompt text
/// ends with the last rule; the report is the user message.
pub fn build_label_prompt(report_text: &str) -> Result<PromptBundle, PromptError> {
    non_empty(report_text, "report text")?;
    Ok(PromptBundle {
        kind: PromptKind::Label,
        system: Some(LABEL_TEMPLATE.to_string()),
        user: report_text.trim_end().to_string(),
    })
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("completion has no text between {START_MARKER} and {END_MARKER}")]
pub struct MarkersMissing;

/// Text strictly between the first `#start` and the next `#end`, trimmed.
pub fn extract_between_markers(completion: &str) -> Result<String, MarkersMissing> {
    let start = completion.find(START_MARKER).ok_or(MarkersMissing)? + START_MARKER.len();
    let len = completion[start..].find(END_MARKER).ok_or(MarkersMissing)?;
    Ok(completion[start..start + len].trim().to_string())
}

pub fn wrap_with_markers(body: &str) -> String {
    format!("{START_MARKER}\n{body}\n{END_MARKER}")
}

/// Report text with its precomputed labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledReport {
    pub id: String,
    pub text: String,
    pub labels: TumorLabels,
}

/// First `k` pool reports whose labels equal `target`, in pool order.
pub fn select_examples<'a>(pool: &'a [LabeledReport], target: &TumorLabels, k: usize) -> Vec<&'a LabeledReport> {
    pool.iter().filter(|r| r.labels == *target).take(k).collect()
}

fn default_timeout() -> f64 {
    60.0
}

fn default_retries() -> u32 {
    3
}

fn default_backoff() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatEndpoint {
    /// Server root; requests go to `<base_url>/chat/completions`.
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// First retry delay; doubles on each further retry.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default)]
    pub temperature: f64,
    /// Environment variable holding a bearer token, if the server needs one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
}

impl Default for ChatEndpoint {
    fn default() -> Self {
        ChatEndpoint {
            base_url: "http://localhost:8000/v1".into(),
            model: "meta-llama/Llama-3.1-70B-Instruct".into(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            backoff_ms: default_backoff(),
            temperature: 0.0,
            api_key_env: None,
        }
    }
}

impl ChatEndpoint {
    pub fn validate(&self) -> Result<(), ChatError> {
        let uri: ureq::http::Uri = self
            .base_url
            .parse()
            .map_err(|e| ChatError::InvalidEndpoint(format!("{}: {e}", self.base_url)))?;
        let scheme_ok = matches!(uri.scheme_str(), Some("http") | Some("https"));
        if !scheme_ok || uri.host().is_none() {
            return Err(ChatError::InvalidEndpoint(format!("{} is not an http(s) URL", self.base_url)));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(ChatError::InvalidEndpoint(format!("timeout must be positive, got {}", self.timeout_secs)));
        }
        if self.model.trim().is_empty() {
            return Err(ChatError::InvalidEndpoint("model name is empty".into()));
        }
        Ok(())
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChatError {
    #[error("invalid endpoint: {0}")]
    InvalidEndpoint(String),
    #[error("request timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("HTTP {status}: {body}")]
    HttpError { status: u16, body: String },
    #[error("transport error after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    /// Retries spent before success.
    pub retries: u32,
}

enum Attempt {
    Done(Result<String, ChatError>),
    Retry(ChatError),
}

/// Sends one prompt. Timeouts, transport failures and 5xx responses are
/// retried with exponential backoff up to `max_retries`; 4xx is returned at
/// once.
pub fn chat_complete(ep: &ChatEndpoint, p: &PromptBundle, case_id: &str) -> Result<Completion, ChatError> {
    ep.validate()?;
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs_f64(ep.timeout_secs)))
        .http_status_as_error(false)
        .build()
        .into();
    let body = json!({
        "model": ep.model,
        "messages": p.messages(),
        "temperature": ep.temperature,
    });
    let key = ep.api_key_env.as_ref().and_then(|v| std::env::var(v).ok());
    let mut retries = 0;
    loop {
        log::info!("case={case_id} kind={:?} attempt={} url={}", p.kind, retries + 1, ep.url());
        let mut req = agent.post(ep.url());
        if let Some(k) = &key {
            req = req.header("Authorization", format!("Bearer {k}"));
        }
        let attempt = match req.send_json(&body) {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                let text = resp.body_mut().read_to_string();
                match (status, text) {
                    (200..=299, Ok(t)) => Attempt::Done(parse_completion(&t)),
                    (200..=299, Err(e)) => Attempt::Done(Err(ChatError::MalformedResponse(e.to_string()))),
                    (500..=599, t) => Attempt::Retry(ChatError::HttpError {
                        status,
                        body: t.unwrap_or_default(),
                    }),
                    (_, t) => Attempt::Done(Err(ChatError::HttpError {
                        status,
                        body: t.unwrap_or_default(),
                    })),
                }
            }
            Err(ureq::Error::Timeout(_)) => Attempt::Retry(ChatError::Timeout { attempts: retries + 1 }),
            Err(ureq::Error::Io(e)) if e.kind() == std::io::ErrorKind::TimedOut => {
                Attempt::Retry(ChatError::Timeout { attempts: retries + 1 })
            }
            Err(e) => Attempt::Retry(ChatError::Transport {
                attempts: retries + 1,
                message: e.to_string(),
            }),
        };
        match attempt {
            Attempt::Done(r) => {
                let r = r.map(|text| Completion { text, retries });
                match &r {
                    Ok(c) => log::info!("case={case_id} kind={:?} ok chars={} retries={retries}", p.kind, c.text.len()),
                    Err(e) => log::warn!("case={case_id} kind={:?} failed: {e}", p.kind),
                }
                return r;
            }
            Attempt::Retry(e) if retries >= ep.max_retries => {
                log::warn!("case={case_id} kind={:?} giving up: {e}", p.kind);
                return Err(match e {
                    ChatError::Timeout { .. } => ChatError::Timeout { attempts: retries + 1 },
                    ChatError::Transport { message, .. } => ChatError::Transport {
                        attempts: retries + 1,
                        message,
                    },
                    other => other,
                });
            }
            Attempt::Retry(e) => {
                let delay = ep.backoff_ms.saturating_mul(1 << retries.min(16));
                log::warn!("case={case_id} kind={:?} retrying in {delay} ms: {e}", p.kind);
                std::thread::sleep(Duration::from_millis(delay));
                retries += 1;
            }
        }
    }
}

fn parse_completion(body: &str) -> Result<String, ChatError> {
    let v: Value = serde_json::from_str(body).map_err(|e| ChatError::MalformedResponse(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| ChatError::MalformedResponse("missing choices[0].message.content".into()))
}

/// Anything that turns a prompt into completion text. The HTTP client is
/// one; tests use closures.
pub trait Completer {
    fn complete(&self, p: &PromptBundle) -> Result<String, ChatError>;
}

impl<F: Fn(&PromptBundle) -> Result<String, ChatError>> Completer for F {
    fn complete(&self, p: &PromptBundle) -> Result<String, ChatError> {
        self(p)
    }
}

/// HTTP completer bound to one case id for logging.
pub struct EndpointCompleter<'a> {
    pub endpoint: &'a ChatEndpoint,
    pub case_id: &'a str,
}

impl Completer for EndpointCompleter<'_> {
    fn complete(&self, p: &PromptBundle) -> Result<String, ChatError> {
        chat_complete(self.endpoint, p, self.case_id).map(|c| c.text)
    }
}

#[derive(Debug, Error)]
pub enum NarrativeError {
    #[error("no style examples for label set `{}`", format_labels(.0))]
    NoExamples(TumorLabels),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Chat(#[from] ChatError),
    #[error(transparent)]
    Markers(#[from] MarkersMissing),
    #[error("labeler answer unreadable: {0}")]
    Labels(#[from] EvaluationError),
    #[error("narrative labels `{}` differ from the report's `{}`", format_labels(.got), format_labels(.expected))]
    Inconsistent { expected: TumorLabels, got: TumorLabels },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Narrative {
    pub text: String,
    /// Re-prompts used by the consistency check (0 or 1).
    pub reprompts: u32,
    pub examples: Vec<String>,
}

/// Style adaptation with the consistency check: the narrative is labeled
/// by `labeler` and must match the report's own labels. One re-prompt is
/// allowed.
pub fn generate_narrative(
    report: &StructuredReport,
    pool: &[LabeledReport],
    k: usize,
    writer: &dyn Completer,
    labeler: &dyn Completer,
) -> Result<Narrative, NarrativeError> {
    let expected = rule_label_structured(report);
    let examples = select_examples(pool, &expected, k);
    if examples.is_empty() {
        return Err(NarrativeError::NoExamples(expected));
    }
    let texts: Vec<&str> = examples.iter().map(|e| e.text.as_str()).collect();
    let prompt = build_style_prompt_with(&render_text(report), &texts, k.max(1))?;
    let mut current = prompt.clone();
    for attempt in 0..2 {
        let text = extract_between_markers(&writer.complete(&current)?)?;
        let answer = labeler.complete(&build_label_prompt(&text)?)?;
        let got = parse_labels(&answer)?;
        if got == expected {
            return Ok(Narrative {
                text,
                reprompts: attempt,
                examples: examples.iter().map(|e| e.id.clone()).collect(),
            });
        }
        if attempt == 1 {
            return Err(NarrativeError::Inconsistent { expected, got });
        }
        let changed: Vec<&str> = Organ::ALL
            .iter()
            .filter(|o| got.get(**o) != expected.get(**o))
            .map(|o| o.name())
            .collect();
        current.user = format!(
            "{}\n\n**Correction:** your previous paraphrase changed the tumor findings for: {}. Keep every finding of the structured report.",
            prompt.user,
            changed.join(", ")
        );
    }
    unreachable!("loop returns on its second pass")
}

/// Fusion of a structured report with clinical notes.
pub fn fuse_reports(notes: &str, structured: &str, writer: &dyn Completer) -> Result<String, NarrativeError> {
    let p = build_fusion_prompt(notes, structured)?;
    Ok(extract_between_markers(&writer.complete(&p)?)?)
}
