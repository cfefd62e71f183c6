//! Wiring from configuration to core components, plus the single-bug
//! commands (repair, transform, tool run, ingest).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use specfix_core::agent::{retrieval_handler, AgentConfig, ExampleStore, ExampleTuple};
use specfix_core::analysis::{build_index, LanguageProfile, ToolRegistry};
use specfix_core::gateway::{ChatBackend, LlmClient, PricingTable, ReplayBackend};
use specfix_core::model::BugInstance;
use specfix_core::orchestrator::{
    ledger, write_session, Clock, FixedClock, Orchestrator, RepairSession, SessionResult,
    WallClock,
};
use specfix_core::templates;
use specfix_core::transform::{build_transform_prompt, transform};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bug manifest ({path}): {message}")]
    Manifest { path: String, message: String },
    #[error("{0}")]
    Other(String),
}

fn other<E: std::fmt::Display>(e: E) -> RunError {
    RunError::Other(e.to_string())
}

pub fn load_bug(path: &Path) -> Result<BugInstance, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::Manifest {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut bug = BugInstance::from_manifest(&text).map_err(|e| RunError::Manifest {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    // workspace_root in a manifest is relative to the manifest file
    if bug.workspace_root.is_relative() {
        bug.workspace_root = path
            .parent()
            .unwrap_or(Path::new("."))
            .join(&bug.workspace_root);
    }
    Ok(bug)
}

/// A client for one bug: replay-backed when a script is configured,
/// HTTP otherwise.
pub fn make_client(config: &RunConfig, bug_id: &str) -> Result<LlmClient, RunError> {
    let backend: Arc<dyn ChatBackend> = match config.replay_script_for(bug_id) {
        Some(script) => {
            let text = std::fs::read_to_string(&script).map_err(|e| RunError::Manifest {
                path: script.display().to_string(),
                message: e.to_string(),
            })?;
            Arc::new(ReplayBackend::from_json(&text).map_err(other)?)
        }
        None => Arc::new(specfix_core::gateway::HttpBackend::new()),
    };
    Ok(LlmClient::new(
        backend,
        config.model.clone(),
        PricingTable::default(),
    ))
}

pub fn make_clock(config: &RunConfig) -> Box<dyn Clock> {
    if config.replay.is_some() {
        Box::new(FixedClock(0.0))
    } else {
        Box::new(WallClock)
    }
}

pub fn make_registry(
    config: &RunConfig,
    bug: &BugInstance,
) -> Result<Option<ToolRegistry>, RunError> {
    if config.strategy == specfix_core::orchestrator::ReasoningStrategy::None {
        return Ok(None);
    }
    let index = build_index(&bug.workspace_root, LanguageProfile::JavaSubset).map_err(other)?;
    let registry = match &config.example_store {
        Some(path) => {
            let store = ExampleStore::load(path).map_err(other)?;
            ToolRegistry::new(Arc::new(index), retrieval_handler(Arc::new(store)))
        }
        None => ToolRegistry::without_store(Arc::new(index)),
    };
    Ok(Some(registry))
}

pub fn effective_templates_dir(config: &RunConfig) -> Result<PathBuf, RunError> {
    match &config.templates_dir {
        Some(dir) => Ok(dir.clone()),
        None => {
            let dir = config.output_dir.join("templates");
            templates::materialize_defaults(&dir).map_err(other)?;
            Ok(dir)
        }
    }
}

/// Run one bug end to end and persist its session and (if plausible) patch.
pub fn cmd_repair(config: &RunConfig, manifest: &Path) -> Result<RepairSession, RunError> {
    config.validate()?;
    let bug = load_bug(manifest)?;
    let client = make_client(config, &bug.bug_id)?;
    let clock = make_clock(config);
    let registry = make_registry(config, &bug)?;
    let templates_dir = effective_templates_dir(config)?;
    let sandbox_parent = config.output_dir.join("sandboxes");

    let orch = Orchestrator {
        client: &client,
        templates_dir,
        adapter: config.adapter.clone().unwrap(),
        registry: registry.as_ref(),
        agent_config: AgentConfig {
            max_tool_calls: config.agent_max_tool_calls,
        },
        sandbox_parent,
        clock: clock.as_ref(),
    };
    let session = orch
        .repair_bug(&bug, config.budget, config.strategy)
        .map_err(other)?;

    let session_path = config
        .output_dir
        .join("sessions")
        .join(format!("{}.json", bug.bug_id));
    write_session(&session, &session_path).map_err(other)?;
    if let SessionResult::Plausible { patch } = &session.result {
        let patch_path = config
            .output_dir
            .join("patches")
            .join(format!("{}.json", bug.bug_id));
        std::fs::create_dir_all(patch_path.parent().unwrap())?;
        let mut text = serde_json::to_string_pretty(patch).map_err(other)?;
        text.push('\n');
        std::fs::write(&patch_path, text)?;
    }
    Ok(session)
}

/// Exit status distinguishing the three terminal session states.
pub fn exit_code(session: &RepairSession) -> i32 {
    match session.result {
        SessionResult::Plausible { .. } => 0,
        SessionResult::Exhausted => 2,
        SessionResult::Aborted { .. } => 3,
    }
}

pub fn summarize(session: &RepairSession) -> String {
    let l = ledger(session);
    let state = match &session.result {
        SessionResult::Plausible { patch } => format!(
            "plausible (attempt {}, round {})",
            patch.attempt_index, patch.round_index
        ),
        SessionResult::Exhausted => "exhausted".to_string(),
        SessionResult::Aborted { reason } => format!("aborted: {reason}"),
    };
    format!(
        "{}: {state} | generation calls {} | tool calls {} | tokens {}+{} | ${:.6}",
        session.bug_id,
        l.generation_calls,
        l.tool_calls,
        l.usage.input_tokens,
        l.usage.output_tokens,
        l.cost
    )
}

/// Transformation phase only; prints the flawed specification as JSON.
pub fn cmd_transform(config: &RunConfig, manifest: &Path) -> Result<String, RunError> {
    let bug = load_bug(manifest)?;
    bug.check_files().map_err(other)?;
    let client = make_client(config, &bug.bug_id)?;
    let templates_dir = effective_templates_dir(config)?;
    let prompt = build_transform_prompt(&templates_dir).map_err(other)?;

    let mut sources = Vec::new();
    for locus in &bug.target_functions {
        let text = std::fs::read_to_string(bug.workspace_root.join(&locus.file))?;
        let lines: Vec<&str> = text.lines().collect();
        if locus.span.0 == 0 || locus.span.1 > lines.len() {
            return Err(RunError::Other(format!(
                "locus {} span outside file",
                locus.function_name
            )));
        }
        sources.push(lines[locus.span.0 - 1..locus.span.1].join("\n"));
    }
    let mut session = client.open_session(&prompt.system_prompt());
    let info = transform(&bug, &sources, &client, &mut session, &prompt).map_err(other)?;
    serde_json::to_string_pretty(&info).map_err(other)
}

/// Build an example store from a JSON array of repair triples.
pub fn cmd_ingest(input: &Path, out: &Path) -> Result<usize, RunError> {
    let text = std::fs::read_to_string(input)?;
    let triples: Vec<ExampleTuple> = serde_json::from_str(&text).map_err(|e| {
        RunError::Manifest {
            path: input.display().to_string(),
            message: e.to_string(),
        }
    })?;
    let mut store = ExampleStore::new();
    let n = triples.len();
    for t in triples {
        store.add(t);
    }
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    store.save(out).map_err(other)?;
    Ok(n)
}

/// One analysis-tool invocation against a workspace; prints the JSON result.
pub fn cmd_tool_run(workspace: &Path, name: &str, args_json: &str) -> Result<String, RunError> {
    let args: serde_json::Value = serde_json::from_str(args_json).map_err(|e| {
        RunError::Other(format!("--args is not valid JSON: {e}"))
    })?;
    let index = build_index(workspace, LanguageProfile::JavaSubset).map_err(other)?;
    let registry = ToolRegistry::without_store(Arc::new(index));
    let out = registry.call(name, &args).map_err(other)?;
    serde_json::to_string_pretty(&out).map_err(other)
}
