//! Three-phase repair state machine: transform once, then attempt × round
//! loops with strategy-gated reasoning, hard budgets, and a full ledger.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    build_agent_system_prompt, render_agent_task, run_agent, AgentConfig, AgentError,
    RepairSupportInfo,
};
use crate::analysis::registry::ToolRegistry;
use crate::gateway::{cost, ChatSession, LlmClient, TokenUsage};
use crate::model::{BugInstance, ModelError, Patch};
use crate::pipeline::{
    apply_patch, generate_code, validate, PipelineError, TestAdapterConfig, ValidationReport,
};
use crate::repair::{
    build_repair_prompt, incorporate_feedback, repair_spec, RepairError, RepairOutcome,
};
use crate::templates::{self, TemplateError};
use crate::transform::{build_transform_prompt, transform};

#[derive(Debug, Error)]
pub enum OrchestrateError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("configuration: {0}")]
    Config(String),
}

/// Attempt/round budget. The patch space is their product.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BudgetConfig {
    pub max_attempts: usize,
    pub max_feedback_rounds: usize,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig {
            max_attempts: 5,
            max_feedback_rounds: 3,
        }
    }
}

impl BudgetConfig {
    pub fn check(&self) -> Result<(), OrchestrateError> {
        if self.max_attempts == 0 || self.max_feedback_rounds == 0 {
            return Err(OrchestrateError::Config(
                "budget values must be at least 1".to_string(),
            ));
        }
        Ok(())
    }

    pub fn patch_space(&self) -> usize {
        self.max_attempts * self.max_feedback_rounds
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReasoningStrategy {
    None,
    MiniR,
    MaxR,
}

/// Outcome of one completed attempt. An attempt consumed by a phase error
/// counts as fully failed: it produced no plausible patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptOutcome {
    Plausible,
    FullyFailed,
}

/// Whether the reasoning component runs for this attempt.
/// None: never. MaxR: always. MiniR: iff any prior attempt fully failed.
pub fn strategy_gate(
    strategy: ReasoningStrategy,
    _attempt_index: usize,
    prior_attempt_outcomes: &[AttemptOutcome],
) -> bool {
    match strategy {
        ReasoningStrategy::None => false,
        ReasoningStrategy::MaxR => true,
        ReasoningStrategy::MiniR => prior_attempt_outcomes
            .iter()
            .any(|o| *o == AttemptOutcome::FullyFailed),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_index: usize,
    pub generation_session: ChatSession,
    pub patch: Patch,
    pub report: ValidationReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub attempt_index: usize,
    pub reasoning_enabled: bool,
    pub outcome: AttemptOutcome,
    /// Present when a phase error consumed the attempt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_session: Option<ChatSession>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<RepairSupportInfo>,
    pub repair_session: ChatSession,
    /// One entry per repair/feedback call, in order.
    pub repair_outcomes: Vec<RepairOutcome>,
    pub rounds: Vec<RoundRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionResult {
    Plausible { patch: Patch },
    Exhausted,
    Aborted { reason: String },
}

/// Full record of one bug's repair run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepairSession {
    pub bug_id: String,
    pub strategy: ReasoningStrategy,
    pub transform_session: Option<ChatSession>,
    pub attempts: Vec<AttemptRecord>,
    pub total_usage: TokenUsage,
    pub total_cost: f64,
    pub wall_time: f64,
    pub result: SessionResult,
}

/// Time source; replay runs use [`FixedClock`] so session files are stable.
pub trait Clock: Send + Sync {
    fn now_seconds(&self) -> f64;
}

pub struct WallClock;

impl Clock for WallClock {
    fn now_seconds(&self) -> f64 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0)
    }
}

pub struct FixedClock(pub f64);

impl Clock for FixedClock {
    fn now_seconds(&self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct PhaseLedger {
    pub usage: TokenUsage,
    pub cost: f64,
}

impl PhaseLedger {
    fn absorb(&mut self, session: &ChatSession) {
        self.usage.add(session.usage);
        self.cost += session.ledger.iter().map(|e| e.cost).sum::<f64>();
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub generation_calls: usize,
    pub tool_calls: usize,
    pub usage: TokenUsage,
    pub cost: f64,
    pub wall_time: f64,
    pub transform: PhaseLedger,
    pub agent: PhaseLedger,
    pub repair: PhaseLedger,
    pub generation: PhaseLedger,
}

/// Per-phase breakdown of a session's calls, tokens, and dollars.
pub fn ledger(session: &RepairSession) -> LedgerSummary {
    let mut s = LedgerSummary {
        wall_time: session.wall_time,
        ..Default::default()
    };
    if let Some(t) = &session.transform_session {
        s.transform.absorb(t);
    }
    for attempt in &session.attempts {
        if let Some(a) = &attempt.agent_session {
            s.agent.absorb(a);
        }
        if let Some(sup) = &attempt.support {
            s.tool_calls += sup.tool_trace.len();
        }
        s.repair.absorb(&attempt.repair_session);
        for round in &attempt.rounds {
            s.generation.absorb(&round.generation_session);
            s.generation_calls += 1;
        }
    }
    for phase in [&s.transform, &s.agent, &s.repair, &s.generation] {
        s.usage.add(phase.usage);
        s.cost += phase.cost;
    }
    s
}

/// Everything a repair run needs besides the bug itself. All shared state is
/// immutable; one run is strictly sequential.
pub struct Orchestrator<'a> {
    pub client: &'a LlmClient,
    pub templates_dir: PathBuf,
    pub adapter: TestAdapterConfig,
    /// Required when the strategy can enable the reasoning component.
    pub registry: Option<&'a ToolRegistry>,
    pub agent_config: AgentConfig,
    pub sandbox_parent: PathBuf,
    pub clock: &'a dyn Clock,
}

fn locus_sources(bug: &BugInstance) -> Result<Vec<String>, OrchestrateError> {
    let mut out = Vec::new();
    for locus in &bug.target_functions {
        let text = std::fs::read_to_string(bug.workspace_root.join(&locus.file))?;
        let lines: Vec<&str> = text.lines().collect();
        let (start, end) = locus.span;
        if start == 0 || end > lines.len() {
            return Err(OrchestrateError::Config(format!(
                "locus {} span {:?} outside {} ({} lines)",
                locus.function_name,
                locus.span,
                locus.file,
                lines.len()
            )));
        }
        out.push(lines[start - 1..end].join("\n"));
    }
    Ok(out)
}

/// Control flow of one attempt.
enum AttemptEnd {
    /// Attempt finished (plausible patch or all rounds failed).
    Done(Option<Patch>),
    /// Unrecoverable backend or harness error: end the whole session.
    AbortSession(String),
}

impl<'a> Orchestrator<'a> {
    /// Run the full transform / repair / generate state machine for one bug.
    pub fn repair_bug(
        &self,
        bug: &BugInstance,
        budget: BudgetConfig,
        strategy: ReasoningStrategy,
    ) -> Result<RepairSession, OrchestrateError> {
        budget.check()?;
        bug.check()?;
        bug.check_files()?;
        if strategy != ReasoningStrategy::None && self.registry.is_none() {
            return Err(OrchestrateError::Config(
                "reasoning strategy requires a tool registry".to_string(),
            ));
        }
        let start = self.clock.now_seconds();

        let transform_prompt = build_transform_prompt(&self.templates_dir)
            .map_err(|e| OrchestrateError::Config(e.to_string()))?;
        let repair_prompt = build_repair_prompt(&self.templates_dir)
            .map_err(|e| OrchestrateError::Config(e.to_string()))?;
        let generation_task = templates::load(&self.templates_dir, "generation_task.txt")?;
        let agent_system = match self.registry {
            Some(reg) if strategy != ReasoningStrategy::None => {
                Some(build_agent_system_prompt(&self.templates_dir, reg)?)
            }
            _ => None,
        };
        let sources = locus_sources(bug)?;

        let mut session = RepairSession {
            bug_id: bug.bug_id.clone(),
            strategy,
            transform_session: None,
            attempts: Vec::new(),
            total_usage: TokenUsage::default(),
            total_cost: 0.0,
            wall_time: 0.0,
            result: SessionResult::Exhausted,
        };

        let mut tsession = self.client.open_session(&transform_prompt.system_prompt());
        let info = match transform(bug, &sources, self.client, &mut tsession, &transform_prompt) {
            Ok(info) => {
                tsession.close();
                session.transform_session = Some(tsession);
                info
            }
            Err(e) => {
                tsession.close();
                session.transform_session = Some(tsession);
                session.result = SessionResult::Aborted {
                    reason: format!("transformation failed: {e}"),
                };
                return Ok(self.finish(session, start));
            }
        };
        let buggy_code = sources.join("\n\n");

        for attempt_index in 1..=budget.max_attempts {
            let outcomes: Vec<AttemptOutcome> =
                session.attempts.iter().map(|a| a.outcome).collect();
            let enabled = strategy_gate(strategy, attempt_index, &outcomes);

            let mut record = AttemptRecord {
                attempt_index,
                reasoning_enabled: enabled,
                outcome: AttemptOutcome::FullyFailed,
                error: None,
                agent_session: None,
                support: None,
                repair_session: self.client.open_session(&repair_prompt.system_prompt()),
                repair_outcomes: Vec::new(),
                rounds: Vec::new(),
            };

            if enabled {
                let task = render_agent_task(&info, &buggy_code);
                match run_agent(
                    self.client,
                    self.registry.unwrap(),
                    &self.agent_config,
                    agent_system.as_ref().unwrap(),
                    &task,
                ) {
                    Ok(run) => {
                        record.agent_session = Some(run.session);
                        record.support = Some(run.support);
                    }
                    Err(AgentError::Template(e)) => return Err(e.into()),
                    Err(AgentError::Gateway(e)) => {
                        record.error = Some(format!("agent: {e}"));
                        session.attempts.push(record);
                        session.result = SessionResult::Aborted {
                            reason: format!("backend failure during agent run: {e}"),
                        };
                        return Ok(self.finish(session, start));
                    }
                }
            }

            let end = self.run_attempt(bug, &info, budget, &generation_task, &mut record);
            record.repair_session.close();
            match end {
                AttemptEnd::Done(Some(patch)) => {
                    record.outcome = AttemptOutcome::Plausible;
                    session.attempts.push(record);
                    session.result = SessionResult::Plausible { patch };
                    return Ok(self.finish(session, start));
                }
                AttemptEnd::Done(None) => {
                    session.attempts.push(record);
                }
                AttemptEnd::AbortSession(reason) => {
                    session.attempts.push(record);
                    session.result = SessionResult::Aborted { reason };
                    return Ok(self.finish(session, start));
                }
            }
        }

        session.result = SessionResult::Exhausted;
        Ok(self.finish(session, start))
    }

    /// Repair, then up to `max_feedback_rounds` generate/apply/validate
    /// rounds, feeding failures back into the same repair session.
    fn run_attempt(
        &self,
        bug: &BugInstance,
        info: &crate::model::FlawedSpecInfo,
        budget: BudgetConfig,
        generation_task: &str,
        record: &mut AttemptRecord,
    ) -> AttemptEnd {
        let mut outcome = match repair_spec(
            info,
            record.support.as_ref(),
            self.client,
            &mut record.repair_session,
        ) {
            Ok(o) => o,
            Err(RepairError::SpecParse(e)) => {
                record.error = Some(format!("repair: {e}"));
                return AttemptEnd::Done(None);
            }
            Err(e) => return AttemptEnd::AbortSession(format!("repair: {e}")),
        };
        record.repair_outcomes.push(outcome.clone());

        for round_index in 1..=budget.max_feedback_rounds {
            let mut gsession = self.client.open_session(generation_task);
            let replacements = match generate_code(
                &outcome.fixed_specs,
                &bug.target_functions,
                self.client,
                &mut gsession,
            ) {
                Ok(r) => r,
                Err(PipelineError::Gateway(e)) => {
                    return AttemptEnd::AbortSession(format!("generation: {e}"));
                }
                Err(e) => {
                    record.error = Some(format!("generation: {e}"));
                    return AttemptEnd::Done(None);
                }
            };
            gsession.close();

            let sandbox =
                match apply_patch(&bug.workspace_root, &replacements, &self.sandbox_parent) {
                    Ok(s) => s,
                    Err(PipelineError::Splice { file, reason }) => {
                        record.error = Some(format!("splice in {file}: {reason}"));
                        return AttemptEnd::Done(None);
                    }
                    Err(e) => return AttemptEnd::AbortSession(format!("apply: {e}")),
                };
            let report = match validate(&sandbox, &self.adapter) {
                Ok(r) => r,
                Err(e) => return AttemptEnd::AbortSession(format!("validate: {e}")),
            };

            let patch = Patch {
                replacements,
                attempt_index: record.attempt_index,
                round_index,
            };
            let passed = report.passed;
            record.rounds.push(RoundRecord {
                round_index,
                generation_session: gsession,
                patch: patch.clone(),
                report: report.clone(),
            });
            if passed {
                return AttemptEnd::Done(Some(patch));
            }
            if round_index < budget.max_feedback_rounds {
                outcome = match incorporate_feedback(
                    &report,
                    self.client,
                    &mut record.repair_session,
                    info.specifications.len(),
                ) {
                    Ok(o) => o,
                    Err(RepairError::SpecParse(e)) => {
                        record.error = Some(format!("feedback: {e}"));
                        return AttemptEnd::Done(None);
                    }
                    Err(e) => return AttemptEnd::AbortSession(format!("feedback: {e}")),
                };
                record.repair_outcomes.push(outcome.clone());
            }
        }
        AttemptEnd::Done(None)
    }

    fn finish(&self, mut session: RepairSession, start: f64) -> RepairSession {
        session.wall_time = self.clock.now_seconds() - start;
        let summary = ledger(&session);
        session.total_usage = summary.usage;
        session.total_cost = summary.cost;
        session
    }
}

/// Write a session record as pretty JSON; the serialization is deterministic
/// for replay-driven runs.
pub fn write_session(session: &RepairSession, path: &Path) -> Result<(), OrchestrateError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(session)
        .map_err(|e| OrchestrateError::Config(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Keep the per-phase cost consistent with the gateway pricing: recompute
/// from usage and compare. Used by report emission sanity checks.
pub fn cost_consistent(session: &RepairSession, client: &LlmClient) -> bool {
    let summary = ledger(session);
    let expect = cost(summary.usage, &client.config.model_id, &client.pricing).unwrap_or(0.0);
    (summary.cost - expect).abs() < 1e-9
}
