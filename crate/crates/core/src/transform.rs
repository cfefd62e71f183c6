//! Transformation phase: buggy code in, flawed behavior specification out.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatSession, GatewayError, LlmClient};
use crate::model::{BehaviorSpecification, BugInstance, FlawedSpecInfo};
use crate::spec_text::{self, HEADERS};
use crate::templates::{self, TemplateError};

#[derive(Debug, Error)]
pub enum TransformError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("specification parse failed after re-ask: {0}")]
    SpecParse(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// The assembled zero-shot transformation prompt. No examples are embedded.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformPrompt {
    pub task_description: String,
    pub spec_definition: String,
    pub template_text: String,
}

impl TransformPrompt {
    pub fn system_prompt(&self) -> String {
        format!(
            "{}\n\n{}\n\nSpecification Template:\n{}",
            self.task_description, self.spec_definition, self.template_text
        )
    }
}

/// Assemble the transformation prompt from template files. The template text
/// must contain each of the six field headers exactly once.
pub fn build_transform_prompt(templates_dir: &Path) -> Result<TransformPrompt, TransformError> {
    let task_description = templates::load(templates_dir, "transform_task.txt")?;
    let spec_definition = templates::load(templates_dir, "transform_definition.txt")?;
    let template_text = templates::load(templates_dir, "transform_template.txt")?;
    for h in HEADERS {
        let needle = format!("{h}:");
        let count = template_text.matches(&needle).count();
        if count != 1 {
            return Err(TemplateError::MalformedTemplate {
                file: "transform_template.txt".to_string(),
                reason: format!("header `{needle}` appears {count} times, expected 1"),
            }
            .into());
        }
    }
    Ok(TransformPrompt {
        task_description,
        spec_definition,
        template_text,
    })
}

fn ask_for_spec(
    client: &LlmClient,
    session: &mut ChatSession,
    prompt: &TransformPrompt,
    message: &str,
) -> Result<BehaviorSpecification, TransformError> {
    let reply = client.send(session, message)?;
    match spec_text::parse_last_specifications(&reply, 1) {
        Ok(mut specs) => Ok(specs.remove(0)),
        Err(first_err) => {
            // one bounded re-ask restating the template
            let corrective = format!(
                "Your previous reply did not follow the specification template \
                 ({first_err}). Reply again with a complete specification using \
                 exactly this template:\n{}",
                prompt.template_text
            );
            let reply = client.send(session, &corrective)?;
            spec_text::parse_last_specifications(&reply, 1)
                .map(|mut s| s.remove(0))
                .map_err(|e| TransformError::SpecParse(e.to_string()))
        }
    }
}

/// Translate each target function of a bug into a behavior specification and
/// bundle the result with the bug's failing tests. Multi-function bugs are
/// transformed once per function within the same session, in target order.
///
/// The workspace is never touched: source text arrives pre-extracted, one
/// string per target locus.
pub fn transform(
    bug: &BugInstance,
    source_text_per_locus: &[String],
    client: &LlmClient,
    session: &mut ChatSession,
    prompt: &TransformPrompt,
) -> Result<FlawedSpecInfo, TransformError> {
    assert_eq!(source_text_per_locus.len(), bug.target_functions.len());
    let mut specifications = Vec::new();
    for (locus, source) in bug.target_functions.iter().zip(source_text_per_locus) {
        let message = format!(
            "Buggy function `{}` from file `{}`:\n```\n{}\n```\n\
             Produce its behavior specification.",
            locus.function_name, locus.file, source
        );
        specifications.push(ask_for_spec(client, session, prompt, &message)?);
    }
    Ok(FlawedSpecInfo {
        specifications,
        failing_tests: bug.failing_tests.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{LLMConfig, PricingTable, ReplayBackend};
    use crate::model::{FailingTest, FunctionLocus};
    use std::sync::Arc;

    fn templates_dir() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        templates::materialize_defaults(dir.path()).unwrap();
        dir
    }

    fn demo_bug() -> BugInstance {
        BugInstance {
            bug_id: "b1".to_string(),
            project_id: "p".to_string(),
            workspace_root: "/tmp".into(),
            target_functions: vec![FunctionLocus {
                file: "F.java".to_string(),
                function_name: "flatten".to_string(),
                signature: "String[] flatten(String[] args)".to_string(),
                span: (3, 9),
            }],
            failing_tests: vec![FailingTest {
                test_id: "t1".to_string(),
                error_message: "expected [--foo] got [--foo, bar]".to_string(),
                expected: None,
                actual: None,
            }],
            reference_patch: None,
        }
    }

    const GOOD_REPLY: &str = "\
Function: flatten
Purpose: Normalize arguments.
Signature: String[] flatten(String[] args)
Input: args: raw argv.
Output: normalized token array.
Behavior:
1. Iterate arguments.
2. Split --x=y at = (bug: splits even when option unknown)
";

    fn client(replies: Vec<&str>) -> LlmClient {
        LlmClient::new(
            Arc::new(ReplayBackend::from_replies(replies)),
            LLMConfig::default(),
            PricingTable::default(),
        )
    }

    #[test]
    fn prompt_passes_six_header_check() {
        let dir = templates_dir();
        let p = build_transform_prompt(dir.path()).unwrap();
        assert!(p.system_prompt().contains("Behavior:"));
    }

    #[test]
    fn template_missing_header_is_malformed() {
        let dir = templates_dir();
        let path = dir.path().join("transform_template.txt");
        let text = std::fs::read_to_string(&path).unwrap().replace("Behavior:", "Steps:");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            build_transform_prompt(dir.path()),
            Err(TransformError::Template(TemplateError::MalformedTemplate { .. }))
        ));
    }

    #[test]
    fn prompt_assembly_is_deterministic() {
        let dir = templates_dir();
        let a = build_transform_prompt(dir.path()).unwrap().system_prompt();
        let b = build_transform_prompt(dir.path()).unwrap().system_prompt();
        assert_eq!(a, b);
    }

    #[test]
    fn transform_parses_reply_and_bundles_tests() {
        let dir = templates_dir();
        let prompt = build_transform_prompt(dir.path()).unwrap();
        let c = client(vec![GOOD_REPLY]);
        let mut session = c.open_session(&prompt.system_prompt());
        let bug = demo_bug();
        let info =
            transform(&bug, &["String[] flatten(...) { ... }".to_string()], &c, &mut session, &prompt)
                .unwrap();
        assert_eq!(info.specifications.len(), 1);
        assert_eq!(
            info.specifications[0].behavior_steps[1].bug_note.as_deref(),
            Some("splits even when option unknown")
        );
        assert_eq!(info.failing_tests, bug.failing_tests);
    }

    #[test]
    fn reask_recovers_once_then_errors() {
        let dir = templates_dir();
        let prompt = build_transform_prompt(dir.path()).unwrap();
        // first reply broken, second good
        let broken = GOOD_REPLY.replace("Input:", "In-");
        let c = client(vec![&broken, GOOD_REPLY]);
        let mut session = c.open_session(&prompt.system_prompt());
        let bug = demo_bug();
        let info = transform(&bug, &["src".to_string()], &c, &mut session, &prompt).unwrap();
        assert_eq!(info.specifications.len(), 1);
        // transcript: system + (user, assistant) * 2
        assert_eq!(session.messages.len(), 5);

        // twice broken -> SpecParseError
        let c = client(vec![&broken, &broken]);
        let mut session = c.open_session(&prompt.system_prompt());
        assert!(matches!(
            transform(&bug, &["src".to_string()], &c, &mut session, &prompt),
            Err(TransformError::SpecParse(_))
        ));
    }
}
