//! Shared domain types, the repair-scenario classifier, and their invariants.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::SourceIndex;
use crate::diff::{self, DiffParseError};

/// Location of one target function, 1-based inclusive line span.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FunctionLocus {
    pub file: String,
    pub function_name: String,
    pub signature: String,
    pub span: (usize, usize),
}

impl FunctionLocus {
    pub fn check(&self) -> Result<(), ModelError> {
        if self.span.0 > self.span.1 || self.span.0 == 0 {
            return Err(ModelError::BadSpan {
                function: self.function_name.clone(),
                span: self.span,
            });
        }
        Ok(())
    }
}

/// One failing test observed against the buggy program.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailingTest {
    pub test_id: String,
    pub error_message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actual: Option<String>,
}

/// A bug to repair. Fault localization is assumed perfect: `target_functions`
/// arrives pre-localized and non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugInstance {
    pub bug_id: String,
    pub project_id: String,
    pub workspace_root: PathBuf,
    pub target_functions: Vec<FunctionLocus>,
    pub failing_tests: Vec<FailingTest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_patch: Option<String>,
}

impl BugInstance {
    pub fn from_manifest(text: &str) -> Result<Self, ModelError> {
        let bug: BugInstance = serde_json::from_str(text)?;
        bug.check()?;
        Ok(bug)
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if self.target_functions.is_empty() {
            return Err(ModelError::NoTargetFunctions {
                bug_id: self.bug_id.clone(),
            });
        }
        for locus in &self.target_functions {
            locus.check()?;
        }
        for t in &self.failing_tests {
            if t.test_id.is_empty() {
                return Err(ModelError::EmptyTestId {
                    bug_id: self.bug_id.clone(),
                });
            }
        }
        Ok(())
    }

    /// Checks that every locus file exists under the workspace root.
    pub fn check_files(&self) -> Result<(), ModelError> {
        for locus in &self.target_functions {
            let path = self.workspace_root.join(&locus.file);
            if !path.is_file() {
                return Err(ModelError::MissingLocusFile { path });
            }
        }
        Ok(())
    }
}

/// One enumerated step under the Behavior section of a specification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorStep {
    /// 1-based ordinal, authored order.
    pub index: usize,
    pub description: String,
    /// Present iff the source carried a parenthesized bug annotation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bug_note: Option<String>,
}

/// The six-field structured behavior specification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorSpecification {
    pub function_name: String,
    pub purpose: String,
    pub signature: String,
    pub input_desc: String,
    pub output_desc: String,
    pub behavior_steps: Vec<BehaviorStep>,
}

impl BehaviorSpecification {
    /// A valid specification has all six fields populated.
    pub fn is_valid(&self) -> bool {
        !self.function_name.is_empty()
            && !self.purpose.is_empty()
            && !self.signature.is_empty()
            && !self.input_desc.is_empty()
            && !self.output_desc.is_empty()
            && !self.behavior_steps.is_empty()
    }
}

/// The repair phase's input artifact: one specification per target function
/// (multi-function bugs carry several, in target order) plus failing tests.
/// `failing_tests` may legitimately be empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlawedSpecInfo {
    pub specifications: Vec<BehaviorSpecification>,
    pub failing_tests: Vec<FailingTest>,
}

/// One replacement produced by the generation phase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchReplacement {
    pub locus: FunctionLocus,
    pub text: String,
}

/// Generation-phase output: replacement text per target locus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patch {
    pub replacements: Vec<PatchReplacement>,
    pub attempt_index: usize,
    pub round_index: usize,
}

impl Patch {
    pub fn check_against(&self, bug: &BugInstance) -> Result<(), ModelError> {
        for r in &self.replacements {
            if !bug.target_functions.contains(&r.locus) {
                return Err(ModelError::ForeignLocus {
                    function: r.locus.function_name.clone(),
                });
            }
            if r.text.is_empty() {
                return Err(ModelError::EmptyReplacement {
                    function: r.locus.function_name.clone(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioPartition {
    /// Changes span at least two distinct functions (or fall outside any).
    MF,
    /// All changes confined to one function.
    SF,
}

/// Repair-scenario label for a bug. The implication chain
/// single_line ⇒ single_hunk ⇒ SF holds for every classifier output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairScenario {
    pub partition: ScenarioPartition,
    pub single_hunk: bool,
    pub single_line: bool,
}

impl RepairScenario {
    pub fn chain_holds(&self) -> bool {
        (!self.single_line || self.single_hunk)
            && (!self.single_hunk || self.partition == ScenarioPartition::SF)
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bug {bug_id}: target_functions is empty")]
    NoTargetFunctions { bug_id: String },
    #[error("function {function}: bad span {span:?}")]
    BadSpan { function: String, span: (usize, usize) },
    #[error("bug {bug_id}: failing test with empty test_id")]
    EmptyTestId { bug_id: String },
    #[error("locus file not found: {path}")]
    MissingLocusFile { path: PathBuf },
    #[error("patch targets unknown function {function}")]
    ForeignLocus { function: String },
    #[error("empty replacement text for {function}")]
    EmptyReplacement { function: String },
    #[error(transparent)]
    Diff(#[from] DiffParseError),
    #[error("manifest parse: {0}")]
    Manifest(#[from] serde_json::Error),
}

/// Classify a bug's repair scenario from its reference developer patch.
///
/// Partition is MF iff changed lines fall inside two or more distinct
/// function spans; a changed line outside every known function span also
/// forces MF (context changes such as field declarations disqualify SF).
pub fn classify_scenario(
    reference_patch: &str,
    index: &SourceIndex,
) -> Result<RepairScenario, ModelError> {
    let hunks = diff::parse_unified_diff(reference_patch)?;
    let mut touched: BTreeSet<(String, String, usize)> = BTreeSet::new();
    let mut outside = false;
    let mut changed_lines = 0usize;

    for h in &hunks {
        changed_lines += h.changed_line_count();
        for line in h.changed_old_lines() {
            match index.method_at(Path::new(&h.file), line) {
                Some(m) => {
                    touched.insert((m.file.clone(), m.name.clone(), m.span.0));
                }
                None => outside = true,
            }
        }
    }

    let partition = if outside || touched.len() >= 2 {
        ScenarioPartition::MF
    } else {
        ScenarioPartition::SF
    };
    let single_hunk = partition == ScenarioPartition::SF && hunks.len() == 1;
    let single_line = single_hunk && changed_lines == 1;

    Ok(RepairScenario {
        partition,
        single_hunk,
        single_line,
    })
}
