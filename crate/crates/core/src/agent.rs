//! Reasoning agent: embedding-based example retrieval plus a tool-calling
//! loop that distills supporting information for specification repair.
//!
//! The agent converses in a ReAct style: a reply consisting of a single JSON
//! line `{"tool": name, "args": {...}}` is a tool call, anything else is the
//! final answer. Tool results are fed back as tool turns.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::registry::{ToolHandler, ToolRegistry};
use crate::gateway::{ChatSession, GatewayError, LlmClient, Role};
use crate::model::FlawedSpecInfo;
use crate::spec_text;
use crate::templates::{self, TemplateError};

pub const EMBED_DIM: usize = 256;
pub const EMBEDDER_ID: &str = "fnv1a-bow-256-v1";
pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.6;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimilarityError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero vector has no direction")]
    ZeroVector,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("store parse at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("store header mismatch: {0}")]
    HeaderMismatch(String),
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Deterministic bag-of-words embedding: lowercase alphanumeric tokens are
/// hashed into `EMBED_DIM` buckets, counted, and L2-normalized. Text with no
/// tokens embeds to the zero vector (degenerate, excluded from retrieval).
pub fn embed(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; EMBED_DIM];
    for token in text
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        let lower = token.to_ascii_lowercase();
        v[(fnv1a(lower.as_bytes()) % EMBED_DIM as u64) as usize] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

pub fn is_zero_vector(v: &[f64]) -> bool {
    v.iter().all(|x| *x == 0.0)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, SimilarityError> {
    if a.len() != b.len() {
        return Err(SimilarityError::DimensionMismatch(a.len(), b.len()));
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}

/// One historical repair example: buggy code, its root cause, the fix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleTuple {
    pub example_id: String,
    pub buggy_code: String,
    pub root_cause: String,
    pub fix_code: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoreHeader {
    dim: usize,
    embedder_id: String,
    threshold: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredExample {
    #[serde(flatten)]
    tuple: ExampleTuple,
    embedding: Vec<f64>,
}

/// Embedded example store persisted as JSONL: one header record followed by
/// one record per example, each carrying its precomputed embedding.
pub struct ExampleStore {
    header: StoreHeader,
    records: Vec<StoredExample>,
}

impl ExampleStore {
    pub fn new() -> Self {
        ExampleStore {
            header: StoreHeader {
                dim: EMBED_DIM,
                embedder_id: EMBEDDER_ID.to_string(),
                threshold: DEFAULT_SIMILARITY_THRESHOLD,
            },
            records: Vec::new(),
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.header.threshold = threshold;
        self
    }

    pub fn threshold(&self) -> f64 {
        self.header.threshold
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Index an example under the embedding of its buggy code joined with its
    /// root cause, mirroring the retrieval query form.
    pub fn add(&mut self, tuple: ExampleTuple) {
        let key = format!("{}\n{}", tuple.buggy_code, tuple.root_cause);
        self.records.push(StoredExample {
            embedding: embed(&key),
            tuple,
        });
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let file = std::fs::File::open(path)?;
        let mut lines = std::io::BufReader::new(file).lines();
        let header_line = lines.next().transpose()?.unwrap_or_default();
        let header: StoreHeader =
            serde_json::from_str(&header_line).map_err(|e| StoreError::Parse {
                line: 1,
                message: e.to_string(),
            })?;
        if header.embedder_id != EMBEDDER_ID || header.dim != EMBED_DIM {
            return Err(StoreError::HeaderMismatch(format!(
                "store built with {}/{}, this build uses {}/{}",
                header.embedder_id, header.dim, EMBEDDER_ID, EMBED_DIM
            )));
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: StoredExample = serde_json::from_str(&line).map_err(|e| StoreError::Parse {
                line: i + 2,
                message: e.to_string(),
            })?;
            if rec.embedding.len() != header.dim {
                return Err(StoreError::Parse {
                    line: i + 2,
                    message: format!(
                        "embedding has {} dims, header says {}",
                        rec.embedding.len(),
                        header.dim
                    ),
                });
            }
            records.push(rec);
        }
        Ok(ExampleStore { header, records })
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let mut out = std::fs::File::create(path)?;
        writeln!(out, "{}", serde_json::to_string(&self.header).unwrap())?;
        for rec in &self.records {
            writeln!(out, "{}", serde_json::to_string(rec).unwrap())?;
        }
        Ok(())
    }
}

impl Default for ExampleStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Retrieve the most similar stored example for a query, or `None` when the
/// best similarity falls below the store threshold or the query is
/// degenerate. Ties keep the earliest record.
pub fn retrieve_example(store: &ExampleStore, query: &str) -> Option<(ExampleTuple, f64)> {
    let q = embed(query);
    if is_zero_vector(&q) {
        return None;
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, rec) in store.records.iter().enumerate() {
        let Ok(sim) = cosine_similarity(&q, &rec.embedding) else {
            continue;
        };
        if best.map(|(_, b)| sim > b).unwrap_or(true) {
            best = Some((i, sim));
        }
    }
    let (i, sim) = best?;
    if sim >= store.header.threshold {
        Some((store.records[i].tuple.clone(), sim))
    } else {
        None
    }
}

/// Wire an example store up as the `example_retrieval` tool handler. The
/// query is the buggy code joined with the diagnosed root cause.
pub fn retrieval_handler(store: std::sync::Arc<ExampleStore>) -> ToolHandler {
    Box::new(move |args: &Value| {
        let buggy = args.get("buggy_code").and_then(|v| v.as_str()).unwrap_or("");
        let cause = args.get("root_cause").and_then(|v| v.as_str()).unwrap_or("");
        let query = format!("{buggy}\n{cause}");
        Ok(match retrieve_example(&store, &query) {
            Some((tuple, sim)) => json!({
                "example": tuple,
                "similarity": sim,
            }),
            None => json!({ "example": null }),
        })
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentConfig {
    pub max_tool_calls: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig { max_tool_calls: 12 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolTraceEntry {
    pub step: usize,
    pub tool: String,
    pub args: Value,
    pub ok: bool,
    /// First 16 hex chars of the sha256 of the serialized result or error.
    pub result_digest: String,
}

/// Distilled output of an agent run, attached to the repair request.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepairSupportInfo {
    pub intended_behavior: String,
    pub root_cause: String,
    pub repair_suggestion: String,
    pub retrieved_example: Option<ExampleTuple>,
    pub tool_trace: Vec<ToolTraceEntry>,
    /// False when the run was cut short (tool budget, unlabeled answer) and
    /// best-effort excerpts were recorded.
    pub complete: bool,
}

/// Agent system prompt: the protocol template followed by the tool roster.
pub fn build_agent_system_prompt(
    templates_dir: &Path,
    registry: &ToolRegistry,
) -> Result<String, TemplateError> {
    let protocol = templates::load(templates_dir, "agent_prompt.txt")?;
    let roster = registry
        .names()
        .iter()
        .map(|n| format!("- {}", registry.describe(n).unwrap()))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(format!("{protocol}\n\nAvailable tools:\n{roster}"))
}

/// The agent's task message: flawed specification, buggy source, failing
/// tests.
pub fn render_agent_task(info: &FlawedSpecInfo, buggy_code: &str) -> String {
    let mut out = String::from("Flawed Specification:\n");
    for spec in &info.specifications {
        out.push_str(&spec_text::serialize_specification(spec));
        out.push('\n');
    }
    out.push_str(&format!("Buggy code:\n```\n{buggy_code}\n```\n"));
    if info.failing_tests.is_empty() {
        out.push_str("Failing Tests: no failing tests available\n");
    } else {
        out.push_str("Failing Tests:\n");
        for t in &info.failing_tests {
            out.push_str(&format!("- {}: {}\n", t.test_id, t.error_message));
        }
    }
    out
}

enum ReplyKind {
    Call { tool: String, args: Value },
    Malformed(String),
    Final,
}

fn classify_reply(reply: &str) -> ReplyKind {
    let t = reply.trim();
    if t.contains('\n') || !t.starts_with('{') || !t.ends_with('}') {
        return ReplyKind::Final;
    }
    match serde_json::from_str::<Value>(t) {
        Ok(v) => match v.get("tool").and_then(|x| x.as_str()) {
            Some(tool) => ReplyKind::Call {
                tool: tool.to_string(),
                args: v.get("args").cloned().unwrap_or_else(|| json!({})),
            },
            None => ReplyKind::Malformed("JSON object without a \"tool\" field".to_string()),
        },
        Err(e) => ReplyKind::Malformed(e.to_string()),
    }
}

fn digest(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    let hex = h
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect::<String>();
    hex[..16].to_string()
}

/// Multi-line labeled section: text from the label to the next label or end.
fn labeled_section(reply: &str, label: &str) -> Option<String> {
    const LABELS: [&str; 3] = ["Intended Behavior:", "Root Cause:", "Repair Suggestion:"];
    let lines: Vec<&str> = reply.lines().collect();
    let clean = |l: &str| l.trim().trim_start_matches(['#', '*']).trim_start().to_string();
    let start = lines.iter().position(|l| clean(l).starts_with(label))?;
    let mut parts = vec![clean(lines[start])[label.len()..].trim().to_string()];
    for line in &lines[start + 1..] {
        let c = clean(line);
        if LABELS.iter().any(|l| c.starts_with(l)) {
            break;
        }
        parts.push(line.trim().to_string());
    }
    let text = parts.join(" ").trim().to_string();
    if text.is_empty() {
        None
    } else {
        Some(text)
    }
}

fn excerpt(reply: &str) -> String {
    let flat: String = reply.split_whitespace().collect::<Vec<_>>().join(" ");
    if flat.len() > 400 {
        format!("{}…", &flat[..400])
    } else {
        flat
    }
}

pub struct AgentRun {
    pub support: RepairSupportInfo,
    pub session: ChatSession,
}

/// Run the ReAct loop to completion. Tool-call budget and one malformed-call
/// re-ask are enforced here; gateway failures propagate.
pub fn run_agent(
    client: &LlmClient,
    registry: &ToolRegistry,
    config: &AgentConfig,
    system_prompt: &str,
    task: &str,
) -> Result<AgentRun, AgentError> {
    let mut session = client.open_session(system_prompt);
    let mut reply = client.send(&mut session, task)?;

    let mut trace: Vec<ToolTraceEntry> = Vec::new();
    let mut retrieved: Option<ExampleTuple> = None;
    let mut malformed_reasked = false;
    let mut budget_notice_sent = false;
    let mut truncated = false;

    loop {
        match classify_reply(&reply) {
            ReplyKind::Call { tool, args } => {
                if trace.len() >= config.max_tool_calls {
                    if budget_notice_sent {
                        // still calling tools after the notice: cut the run
                        truncated = true;
                        break;
                    }
                    budget_notice_sent = true;
                    reply = client.send_as(
                        &mut session,
                        Role::Tool,
                        "Tool budget exhausted. Produce your final answer now \
                         with the three labeled sections.",
                    )?;
                    continue;
                }
                let result = registry.call(&tool, &args);
                let (ok, payload) = match &result {
                    Ok(v) => (true, v.to_string()),
                    Err(e) => (false, json!({ "error": e.to_string() }).to_string()),
                };
                trace.push(ToolTraceEntry {
                    step: trace.len() + 1,
                    tool: tool.clone(),
                    args: args.clone(),
                    ok,
                    result_digest: digest(&payload),
                });
                if ok && tool == "example_retrieval" {
                    if let Ok(v) = &result {
                        if let Some(ex) = v.get("example") {
                            if !ex.is_null() {
                                retrieved = serde_json::from_value(ex.clone()).ok();
                            }
                        }
                    }
                }
                reply = client.send_as(&mut session, Role::Tool, &payload)?;
            }
            ReplyKind::Malformed(msg) => {
                if malformed_reasked {
                    break; // treat as (badly formed) final answer
                }
                malformed_reasked = true;
                reply = client.send_as(
                    &mut session,
                    Role::Tool,
                    &format!(
                        "Your tool call was malformed ({msg}). Reply with a \
                         single JSON line {{\"tool\": name, \"args\": {{...}}}} \
                         or give your final answer."
                    ),
                )?;
            }
            ReplyKind::Final => break,
        }
    }

    let mut intended = labeled_section(&reply, "Intended Behavior:");
    let mut cause = labeled_section(&reply, "Root Cause:");
    let mut suggestion = labeled_section(&reply, "Repair Suggestion:");

    if !truncated && (intended.is_none() || cause.is_none() || suggestion.is_none()) {
        // one re-ask for the labeled form
        reply = client.send(
            &mut session,
            "Restate your final answer with the three labeled sections: \
             \"Intended Behavior:\", \"Root Cause:\", \"Repair Suggestion:\".",
        )?;
        intended = labeled_section(&reply, "Intended Behavior:");
        cause = labeled_section(&reply, "Root Cause:");
        suggestion = labeled_section(&reply, "Repair Suggestion:");
    }

    let complete =
        !truncated && intended.is_some() && cause.is_some() && suggestion.is_some();
    let support = RepairSupportInfo {
        intended_behavior: intended.unwrap_or_else(|| excerpt(&reply)),
        root_cause: cause.unwrap_or_else(|| excerpt(&reply)),
        repair_suggestion: suggestion.unwrap_or_else(|| excerpt(&reply)),
        retrieved_example: retrieved,
        tool_trace: trace,
        complete,
    };
    session.close();
    Ok(AgentRun { support, session })
}
