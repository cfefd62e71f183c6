//! Repair phase: chain-of-thought specification repair and feedback-round
//! continuation within an attempt.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::RepairSupportInfo;
use crate::gateway::{ChatSession, GatewayError, LlmClient};
use crate::model::{BehaviorSpecification, FlawedSpecInfo};
use crate::pipeline::{extract_feedback, ValidationReport};
use crate::spec_text;
use crate::templates::{self, TemplateError};

#[derive(Debug, Error)]
pub enum RepairError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("repaired specification parse failed after re-ask: {0}")]
    SpecParse(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// The three-step chain-of-thought repair prompt.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepairPrompt {
    pub role_designation: String,
    pub context_briefing: String,
    /// Exactly three steps: infer-intent, diagnose-and-direct, produce-spec.
    pub reasoning_steps: Vec<String>,
}

impl RepairPrompt {
    pub fn system_prompt(&self) -> String {
        let steps = self
            .reasoning_steps
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {s}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
        format!(
            "{}\n\n{}\n\nFollow these steps:\n{steps}",
            self.role_designation, self.context_briefing
        )
    }
}

const STEP_PREFIXES: [&str; 3] = [
    "Infer the correct intended behavior",
    "Diagnose the root cause and derive repair directions",
    "Produce the repaired specification",
];

/// Assemble the repair prompt; the steps template must enumerate exactly the
/// three reasoning steps in order.
pub fn build_repair_prompt(templates_dir: &Path) -> Result<RepairPrompt, RepairError> {
    let role_designation = templates::load(templates_dir, "repair_role.txt")?;
    let context_briefing = templates::load(templates_dir, "repair_context.txt")?;
    let steps_text = templates::load(templates_dir, "repair_steps.txt")?;

    let mut steps: Vec<String> = Vec::new();
    for line in steps_text.lines() {
        let t = line.trim();
        if let Some((n, rest)) = t.split_once('.') {
            if !n.is_empty() && n.chars().all(|c| c.is_ascii_digit()) {
                steps.push(rest.trim().to_string());
                continue;
            }
        }
        if let Some(last) = steps.last_mut() {
            last.push(' ');
            last.push_str(t);
        }
    }
    if steps.len() != 3 {
        return Err(TemplateError::MalformedTemplate {
            file: "repair_steps.txt".to_string(),
            reason: format!("expected 3 reasoning steps, found {}", steps.len()),
        }
        .into());
    }
    for (step, prefix) in steps.iter().zip(STEP_PREFIXES) {
        if !step.starts_with(prefix) {
            return Err(TemplateError::MalformedTemplate {
                file: "repair_steps.txt".to_string(),
                reason: format!("step out of order, expected `{prefix}...`"),
            }
            .into());
        }
    }
    Ok(RepairPrompt {
        role_designation,
        context_briefing,
        reasoning_steps: steps,
    })
}

/// One parsed repair reply: the fixed specification(s) plus the extracted
/// reasoning sections.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepairOutcome {
    pub fixed_specs: Vec<BehaviorSpecification>,
    pub inferred_intent: String,
    pub root_cause: String,
    /// False when the reply lacked labeled sections and whole-reply excerpts
    /// were recorded instead.
    pub sections_labeled: bool,
    pub raw_reply: String,
}

/// Render the user message for a repair call. Support information, when
/// present, sits between the flawed specification and the failing tests.
pub fn render_repair_request(
    info: &FlawedSpecInfo,
    support: Option<&RepairSupportInfo>,
) -> String {
    let mut out = String::from("Flawed Specification:\n");
    for spec in &info.specifications {
        out.push_str(&spec_text::serialize_specification(spec));
        out.push('\n');
    }
    if let Some(s) = support {
        out.push_str("Specification-Repair Supporting Information:\n");
        out.push_str(&format!("Intended Behavior: {}\n", s.intended_behavior));
        out.push_str(&format!("Root Cause: {}\n", s.root_cause));
        out.push_str(&format!("Repair Suggestion: {}\n", s.repair_suggestion));
        if let Some(ex) = &s.retrieved_example {
            out.push_str("Similar historical repair example:\n");
            out.push_str(&format!("Buggy code:\n{}\n", ex.buggy_code));
            out.push_str(&format!("Fixed code:\n{}\n", ex.fix_code));
            out.push_str(&format!("Its root cause: {}\n", ex.root_cause));
        }
        out.push('\n');
    }
    if info.failing_tests.is_empty() {
        out.push_str("Failing Tests: no failing tests available\n");
    } else {
        out.push_str("Failing Tests:\n");
        for t in &info.failing_tests {
            out.push_str(&format!("- {}: {}\n", t.test_id, t.error_message));
            if let Some(e) = &t.expected {
                out.push_str(&format!("  expected: {e}\n"));
            }
            if let Some(a) = &t.actual {
                out.push_str(&format!("  actual: {a}\n"));
            }
        }
    }
    out
}

fn extract_section(reply: &str, labels: &[&str]) -> Option<String> {
    for line in reply.lines() {
        let t = line.trim().trim_start_matches(['#', '*']).trim_start();
        for label in labels {
            if let Some(rest) = t.strip_prefix(label) {
                let rest = rest.trim_start_matches(['*', ':']).trim();
                if !rest.is_empty() {
                    return Some(rest.to_string());
                }
            }
        }
    }
    None
}

fn excerpt(reply: &str) -> String {
    let flat: String = reply.split_whitespace().collect::<Vec<_>>().join(" ");
    if flat.len() > 400 {
        format!("{}…", &flat[..400])
    } else {
        flat
    }
}

fn parse_repair_reply(reply: String, expected_parts: usize) -> Result<RepairOutcome, spec_text::SpecParseError> {
    let fixed_specs = spec_text::parse_last_specifications(&reply, expected_parts)?;
    for spec in &fixed_specs {
        if !spec.is_valid() {
            return Err(spec_text::SpecParseError::MissingHeaders(
                "empty field in repaired specification".to_string(),
            ));
        }
    }
    let intent = extract_section(&reply, &["Intended Behavior", "Inferred Intent"]);
    let cause = extract_section(&reply, &["Root Cause"]);
    let sections_labeled = intent.is_some() && cause.is_some();
    Ok(RepairOutcome {
        inferred_intent: intent.unwrap_or_else(|| excerpt(&reply)),
        root_cause: cause.unwrap_or_else(|| excerpt(&reply)),
        sections_labeled,
        fixed_specs,
        raw_reply: reply,
    })
}

fn ask_and_parse(
    client: &LlmClient,
    session: &mut ChatSession,
    message: &str,
    expected_parts: usize,
) -> Result<RepairOutcome, RepairError> {
    let reply = client.send(session, message)?;
    match parse_repair_reply(reply, expected_parts) {
        Ok(outcome) => Ok(outcome),
        Err(first_err) => {
            let corrective = format!(
                "Your previous reply did not contain {expected_parts} complete \
                 repaired specification(s) in the six-field template ({first_err}). \
                 Reply again, ending with the repaired specification(s)."
            );
            let reply = client.send(session, &corrective)?;
            parse_repair_reply(reply, expected_parts)
                .map_err(|e| RepairError::SpecParse(e.to_string()))
        }
    }
}

/// Default specification repair: serialize the flawed specification (plus
/// optional support block and failing tests), send, parse the repaired
/// specification out of the reply.
pub fn repair_spec(
    info: &FlawedSpecInfo,
    support: Option<&RepairSupportInfo>,
    client: &LlmClient,
    session: &mut ChatSession,
) -> Result<RepairOutcome, RepairError> {
    let message = render_repair_request(info, support);
    ask_and_parse(client, session, &message, info.specifications.len())
}

/// Continue the same attempt's session with validation failure feedback.
/// The flawed specification is not re-sent: the session history carries it.
pub fn incorporate_feedback(
    failure: &ValidationReport,
    client: &LlmClient,
    session: &mut ChatSession,
    expected_parts: usize,
) -> Result<RepairOutcome, RepairError> {
    let feedback = extract_feedback(failure);
    let message = format!(
        "The code generated from your repaired specification failed \
         validation.\n{feedback}\nRevisit the specification repair task under \
         the same steps and produce a revised specification."
    );
    ask_and_parse(client, session, &message, expected_parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{LLMConfig, PricingTable, ReplayBackend};
    use crate::model::{BehaviorStep, FailingTest};
    use crate::templates;
    use std::sync::Arc;

    fn templates_dir() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        templates::materialize_defaults(dir.path()).unwrap();
        dir
    }

    fn client(replies: Vec<&str>) -> LlmClient {
        LlmClient::new(
            Arc::new(ReplayBackend::from_replies(replies)),
            LLMConfig::default(),
            PricingTable::default(),
        )
    }

    fn flawed_info(with_tests: bool) -> FlawedSpecInfo {
        FlawedSpecInfo {
            specifications: vec![BehaviorSpecification {
                function_name: "f".to_string(),
                purpose: "does things".to_string(),
                signature: "int f(int x)".to_string(),
                input_desc: "x: input".to_string(),
                output_desc: "the result".to_string(),
                behavior_steps: vec![BehaviorStep {
                    index: 1,
                    description: "computes".to_string(),
                    bug_note: Some("wrong".to_string()),
                }],
            }],
            failing_tests: if with_tests {
                vec![FailingTest {
                    test_id: "t1".to_string(),
                    error_message: "assertion failed".to_string(),
                    expected: Some("2".to_string()),
                    actual: Some("3".to_string()),
                }]
            } else {
                vec![]
            },
        }
    }

    const REPAIR_REPLY: &str = "\
Intended Behavior: f must return x + 1.
Root Cause: the step computed x + 2.

Function: f
Purpose: adds one
Signature: int f(int x)
Input: x: input
Output: x + 1
Behavior:
1. return x + 1
";

    #[test]
    fn shipped_prompt_has_three_steps_in_order() {
        let dir = templates_dir();
        let p = build_repair_prompt(dir.path()).unwrap();
        assert_eq!(p.reasoning_steps.len(), 3);
        assert!(p.reasoning_steps[0].starts_with("Infer the correct intended behavior"));
        assert!(p.reasoning_steps[2].starts_with("Produce the repaired specification"));
        // deterministic assembly
        assert_eq!(
            p.system_prompt(),
            build_repair_prompt(dir.path()).unwrap().system_prompt()
        );
    }

    #[test]
    fn two_step_template_is_malformed() {
        let dir = templates_dir();
        let path = dir.path().join("repair_steps.txt");
        let text = std::fs::read_to_string(&path).unwrap();
        let cut = text.split("3.").next().unwrap().to_string();
        std::fs::write(&path, cut).unwrap();
        assert!(matches!(
            build_repair_prompt(dir.path()),
            Err(RepairError::Template(TemplateError::MalformedTemplate { .. }))
        ));
    }

    #[test]
    fn repair_parses_golden_reply() {
        let c = client(vec![REPAIR_REPLY]);
        let mut s = c.open_session("sys");
        let out = repair_spec(&flawed_info(true), None, &c, &mut s).unwrap();
        assert_eq!(out.fixed_specs.len(), 1);
        assert_eq!(out.fixed_specs[0].purpose, "adds one");
        assert!(out.sections_labeled);
        assert_eq!(out.inferred_intent, "f must return x + 1.");
        assert_eq!(out.root_cause, "the step computed x + 2.");
        // message count grows by exactly 2 per repair call
        assert_eq!(s.messages.len(), 3);
    }

    #[test]
    fn support_block_is_the_only_message_difference() {
        let info = flawed_info(true);
        let without = render_repair_request(&info, None);
        let support = RepairSupportInfo {
            intended_behavior: "add one".to_string(),
            root_cause: "off by one".to_string(),
            repair_suggestion: "change step 1".to_string(),
            retrieved_example: None,
            tool_trace: vec![],
            complete: true,
        };
        let with = render_repair_request(&info, Some(&support));
        assert_ne!(without, with);
        assert!(with.contains("Specification-Repair Supporting Information"));
        // removing the support block recovers the support-free message
        let start = with.find("Specification-Repair").unwrap();
        let end = with.find("Failing Tests:").unwrap();
        let stripped = format!("{}{}", &with[..start], &with[end..]);
        assert_eq!(stripped, without);
    }

    #[test]
    fn empty_failing_tests_marked_explicitly() {
        let msg = render_repair_request(&flawed_info(false), None);
        assert!(msg.contains("no failing tests available"));
    }

    #[test]
    fn feedback_round_produces_revised_spec() {
        let revised = REPAIR_REPLY.replace("adds one", "adds exactly one");
        let c = client(vec![REPAIR_REPLY, &revised]);
        let mut s = c.open_session("sys");
        let info = flawed_info(true);
        let first = repair_spec(&info, None, &c, &mut s).unwrap();
        let report = ValidationReport {
            compiled: true,
            compile_errors: String::new(),
            tests_total: 3,
            failures: vec![FailingTest {
                test_id: "t1".to_string(),
                error_message: "still wrong".to_string(),
                expected: None,
                actual: None,
            }],
            passed: false,
        };
        let second = incorporate_feedback(&report, &c, &mut s, 1).unwrap();
        assert_ne!(first.fixed_specs, second.fixed_specs);
        assert_eq!(s.messages.len(), 5);
    }

    #[test]
    fn compile_only_feedback_mentions_compile_errors() {
        let report = ValidationReport {
            compiled: false,
            compile_errors: "error: ';' expected".to_string(),
            tests_total: 0,
            failures: vec![],
            passed: false,
        };
        let text = extract_feedback(&report);
        assert!(text.contains("compilation error messages"));
        assert!(!text.contains("Failing tests"));
    }

    #[test]
    fn feedback_on_closed_session_is_lifecycle_error() {
        let c = client(vec![REPAIR_REPLY]);
        let mut s = c.open_session("sys");
        s.close();
        let report = ValidationReport {
            compiled: true,
            compile_errors: String::new(),
            tests_total: 1,
            failures: vec![],
            passed: true,
        };
        assert!(matches!(
            incorporate_feedback(&report, &c, &mut s, 1),
            Err(RepairError::Gateway(GatewayError::SessionClosed(_)))
        ));
    }

    #[test]
    fn unlabeled_reply_flagged_unstructured() {
        let reply = REPAIR_REPLY
            .replace("Intended Behavior:", "So,")
            .replace("Root Cause:", "And");
        let c = client(vec![&reply]);
        let mut s = c.open_session("sys");
        let out = repair_spec(&flawed_info(true), None, &c, &mut s).unwrap();
        assert!(!out.sections_labeled);
        assert!(!out.inferred_intent.is_empty());
    }
}
