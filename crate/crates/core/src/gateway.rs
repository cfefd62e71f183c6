//! Chat-session abstraction over pluggable model backends, with token
//! metering and dollar-cost accounting.
//!
//! Two backends ship: an HTTP backend speaking the OpenAI-compatible
//! chat-completions wire format, and a replay backend driven by a scripted
//! transcript keyed by turn index. The replay backend makes every pipeline
//! test deterministic.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("replay script exhausted at turn {0}")]
    ReplayExhausted(usize),
    #[error("context overflow reported by backend: {0}")]
    ContextOverflow(String),
    #[error("unknown model in pricing table: {0}")]
    UnknownModel(String),
    #[error("session {0} is closed")]
    SessionClosed(String),
    #[error("illegal turn order: {0}")]
    IllegalTurn(String),
    #[error("replay script parse: {0}")]
    ScriptParse(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LLMConfig {
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u64,
    pub endpoint: String,
    pub api_key_env: String,
}

impl Default for LLMConfig {
    fn default() -> Self {
        LLMConfig {
            model_id: "gpt-4o".to_string(),
            temperature: 1.0,
            max_output_tokens: 4096,
            endpoint: "https://api.openai.com/v1/chat/completions".to_string(),
            api_key_env: "OPENAI_API_KEY".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl TokenUsage {
    pub fn add(&mut self, other: TokenUsage) {
        self.input_tokens += other.input_tokens;
        self.output_tokens += other.output_tokens;
    }

    pub fn sum(a: TokenUsage, b: TokenUsage) -> TokenUsage {
        TokenUsage {
            input_tokens: a.input_tokens + b.input_tokens,
            output_tokens: a.output_tokens + b.output_tokens,
        }
    }
}

/// Dollars-per-million-token rates by model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PricingTable {
    rates: std::collections::BTreeMap<String, (f64, f64)>,
}

impl Default for PricingTable {
    fn default() -> Self {
        let mut rates = std::collections::BTreeMap::new();
        rates.insert("gpt-4o".to_string(), (5.0, 15.0));
        rates.insert("gpt-4".to_string(), (30.0, 60.0));
        PricingTable { rates }
    }
}

impl PricingTable {
    pub fn with_rate(mut self, model_id: &str, input_rate: f64, output_rate: f64) -> Self {
        assert!(input_rate > 0.0 && output_rate > 0.0);
        self.rates
            .insert(model_id.to_string(), (input_rate, output_rate));
        self
    }

    pub fn rate(&self, model_id: &str) -> Option<(f64, f64)> {
        self.rates.get(model_id).copied()
    }
}

/// Dollar cost of a usage under a model's pricing:
/// tokens/1e6 × per-million rate, summed over input and output.
pub fn cost(usage: TokenUsage, model_id: &str, pricing: &PricingTable) -> Result<f64, GatewayError> {
    let (input_rate, output_rate) = pricing
        .rate(model_id)
        .ok_or_else(|| GatewayError::UnknownModel(model_id.to_string()))?;
    Ok(usage.input_tokens as f64 / 1e6 * input_rate
        + usage.output_tokens as f64 / 1e6 * output_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

/// One cost-ledger entry, written per send.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub session_id: String,
    pub model_id: String,
    pub usage: TokenUsage,
    pub cost: f64,
    /// True when the backend omitted usage counts and a local approximation
    /// was recorded instead.
    pub approximate: bool,
}

/// Single-owner conversation transcript with monotone usage accounting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatSession {
    pub session_id: String,
    pub messages: Vec<Message>,
    pub usage: TokenUsage,
    pub ledger: Vec<LedgerEntry>,
    pub open: bool,
}

impl ChatSession {
    fn push(&mut self, role: Role, content: String) -> Result<(), GatewayError> {
        if role == Role::Assistant {
            if let Some(last) = self.messages.last() {
                if last.role == Role::Assistant {
                    return Err(GatewayError::IllegalTurn(
                        "two consecutive assistant turns".to_string(),
                    ));
                }
            }
        }
        self.messages.push(Message { role, content });
        Ok(())
    }

    pub fn close(&mut self) {
        self.open = false;
    }
}

#[derive(Debug, Clone)]
pub struct BackendReply {
    pub content: String,
    /// Backend-reported usage; `None` triggers the local approximation.
    pub usage: Option<TokenUsage>,
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, config: &LLMConfig, messages: &[Message]) -> Result<BackendReply, GatewayError>;
}

/// Whitespace-token count × 1.3, rounded up. Used only when a backend
/// reports no usage; the ledger entry is flagged approximate.
pub fn approximate_tokens(text: &str) -> u64 {
    (text.split_whitespace().count() as f64 * 1.3).ceil() as u64
}

/// Uniform client: owns the backend handle, model config, and pricing.
pub struct LlmClient {
    backend: Arc<dyn ChatBackend>,
    pub config: LLMConfig,
    pub pricing: PricingTable,
    session_counter: AtomicU64,
}

impl LlmClient {
    pub fn new(backend: Arc<dyn ChatBackend>, config: LLMConfig, pricing: PricingTable) -> Self {
        LlmClient {
            backend,
            config,
            pricing,
            session_counter: AtomicU64::new(0),
        }
    }

    /// Fresh session holding one system turn and zero usage. Session ids are
    /// distinct within a client and deterministic across identical runs.
    pub fn open_session(&self, system_prompt: &str) -> ChatSession {
        let n = self.session_counter.fetch_add(1, Ordering::SeqCst);
        ChatSession {
            session_id: format!("s{n:04}"),
            messages: vec![Message {
                role: Role::System,
                content: system_prompt.to_string(),
            }],
            usage: TokenUsage::default(),
            ledger: Vec::new(),
            open: true,
        }
    }

    /// Append a user turn, obtain the assistant reply, update usage.
    pub fn send(&self, session: &mut ChatSession, message: &str) -> Result<String, GatewayError> {
        self.send_as(session, Role::User, message)
    }

    /// As [`send`](Self::send) but with an explicit request role (the agent
    /// loop feeds tool results back as tool turns).
    pub fn send_as(
        &self,
        session: &mut ChatSession,
        role: Role,
        message: &str,
    ) -> Result<String, GatewayError> {
        if !session.open {
            return Err(GatewayError::SessionClosed(session.session_id.clone()));
        }
        session.push(role, message.to_string())?;
        let reply = self.backend.complete(&self.config, &session.messages)?;
        let (usage, approximate) = match reply.usage {
            Some(u) => (u, false),
            None => {
                let input: u64 = session
                    .messages
                    .iter()
                    .map(|m| approximate_tokens(&m.content))
                    .sum();
                (
                    TokenUsage {
                        input_tokens: input,
                        output_tokens: approximate_tokens(&reply.content),
                    },
                    true,
                )
            }
        };
        session.push(Role::Assistant, reply.content.clone())?;
        session.usage.add(usage);
        let entry_cost = cost(usage, &self.config.model_id, &self.pricing).unwrap_or(0.0);
        session.ledger.push(LedgerEntry {
            session_id: session.session_id.clone(),
            model_id: self.config.model_id.clone(),
            usage,
            cost: entry_cost,
            approximate,
        });
        Ok(reply.content)
    }
}

/// One scripted assistant reply.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReplayEntry {
    Bare(String),
    WithUsage {
        content: String,
        #[serde(default)]
        input_tokens: Option<u64>,
        #[serde(default)]
        output_tokens: Option<u64>,
    },
}

/// Deterministic backend replaying a scripted reply list in send order.
/// The cursor is shared across all sessions opened against it.
pub struct ReplayBackend {
    entries: Vec<ReplayEntry>,
    cursor: Mutex<usize>,
}

impl ReplayBackend {
    pub fn new(entries: Vec<ReplayEntry>) -> Self {
        ReplayBackend {
            entries,
            cursor: Mutex::new(0),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, GatewayError> {
        let entries: Vec<ReplayEntry> =
            serde_json::from_str(text).map_err(|e| GatewayError::ScriptParse(e.to_string()))?;
        Ok(Self::new(entries))
    }

    pub fn from_replies<S: Into<String>>(replies: Vec<S>) -> Self {
        Self::new(replies.into_iter().map(|s| ReplayEntry::Bare(s.into())).collect())
    }

    pub fn remaining(&self) -> usize {
        self.entries.len() - *self.cursor.lock().unwrap()
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, _config: &LLMConfig, _messages: &[Message]) -> Result<BackendReply, GatewayError> {
        let mut cursor = self.cursor.lock().unwrap();
        let entry = self
            .entries
            .get(*cursor)
            .ok_or(GatewayError::ReplayExhausted(*cursor))?;
        *cursor += 1;
        Ok(match entry {
            ReplayEntry::Bare(content) => BackendReply {
                content: content.clone(),
                usage: None,
            },
            ReplayEntry::WithUsage {
                content,
                input_tokens,
                output_tokens,
            } => BackendReply {
                content: content.clone(),
                usage: match (input_tokens, output_tokens) {
                    (Some(i), Some(o)) => Some(TokenUsage {
                        input_tokens: *i,
                        output_tokens: *o,
                    }),
                    _ => None,
                },
            },
        })
    }
}

#[cfg(feature = "http-backend")]
pub use http::HttpBackend;

#[cfg(feature = "http-backend")]
mod http {
    use super::*;
    use serde_json::json;
    use std::time::Duration;

    /// OpenAI-compatible chat-completions backend. Transport failures retry
    /// 3 times with backoff (1s, 2s, 4s) before `BackendUnavailable`.
    pub struct HttpBackend {
        client: reqwest::blocking::Client,
        /// Overridable for tests.
        pub backoff: fn(u32) -> Duration,
    }

    impl Default for HttpBackend {
        fn default() -> Self {
            Self::new()
        }
    }

    impl HttpBackend {
        pub fn new() -> Self {
            HttpBackend {
                client: reqwest::blocking::Client::new(),
                backoff: |attempt| Duration::from_secs(1 << attempt),
            }
        }
    }

    impl ChatBackend for HttpBackend {
        fn complete(
            &self,
            config: &LLMConfig,
            messages: &[Message],
        ) -> Result<BackendReply, GatewayError> {
            let api_key = std::env::var(&config.api_key_env).unwrap_or_default();
            let body = json!({
                "model": config.model_id,
                "temperature": config.temperature,
                "max_tokens": config.max_output_tokens,
                "messages": messages.iter().map(|m| json!({
                    "role": match m.role {
                        Role::System => "system",
                        Role::User => "user",
                        Role::Assistant => "assistant",
                        Role::Tool => "user", // wire format without tool-call ids
                    },
                    "content": m.content,
                })).collect::<Vec<_>>(),
            });

            let mut last_err = String::new();
            for attempt in 0..3u32 {
                if attempt > 0 {
                    std::thread::sleep((self.backoff)(attempt - 1));
                }
                let resp = self
                    .client
                    .post(&config.endpoint)
                    .bearer_auth(&api_key)
                    .json(&body)
                    .send();
                match resp {
                    Ok(r) => {
                        let status = r.status();
                        let v: serde_json::Value = match r.json() {
                            Ok(v) => v,
                            Err(e) => {
                                last_err = e.to_string();
                                continue;
                            }
                        };
                        if status.as_u16() == 400 {
                            let msg = v["error"]["message"].as_str().unwrap_or("").to_string();
                            if msg.contains("context") || msg.contains("token") {
                                return Err(GatewayError::ContextOverflow(msg));
                            }
                        }
                        if !status.is_success() {
                            last_err = format!("http {status}");
                            continue;
                        }
                        let content = v["choices"][0]["message"]["content"]
                            .as_str()
                            .unwrap_or_default()
                            .to_string();
                        let usage = v.get("usage").and_then(|u| {
                            Some(TokenUsage {
                                input_tokens: u.get("prompt_tokens")?.as_u64()?,
                                output_tokens: u.get("completion_tokens")?.as_u64()?,
                            })
                        });
                        return Ok(BackendReply { content, usage });
                    }
                    Err(e) => last_err = e.to_string(),
                }
            }
            Err(GatewayError::BackendUnavailable(last_err))
        }
    }
}
