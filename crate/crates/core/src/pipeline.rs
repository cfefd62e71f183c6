//! Generation phase and validation harness: code generation from a repaired
//! specification, copy-on-write sandbox patching, test-adapter execution,
//! and feedback extraction.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gateway::{ChatSession, GatewayError, LlmClient};
use crate::model::{BehaviorSpecification, FailingTest, FunctionLocus, PatchReplacement};
use crate::spec_text;

pub const SANDBOX_META_FILE: &str = ".sandbox-meta.json";
pub const DEFAULT_ADAPTER_TIMEOUT_SECS: u64 = 600;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("code extraction failed after re-ask: {0}")]
    CodeExtract(String),
    #[error("generation produced {got} code blocks for {expected} specification(s)")]
    ArityMismatch { expected: usize, got: usize },
    #[error("splice in {file}: {reason}")]
    Splice { file: String, reason: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("adapter report parse: {0}")]
    AdapterParse(String),
    #[error("scripted adapter has no entry for patch digest {0}")]
    AdapterMissingEntry(String),
    #[error("adapter spawn: {0}")]
    AdapterSpawn(String),
}

/// Outcome of one validation run. `passed` holds iff compilation succeeded
/// and no test failed; a compile failure reports zero tests run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub compiled: bool,
    pub compile_errors: String,
    pub tests_total: usize,
    pub failures: Vec<FailingTest>,
    pub passed: bool,
}

/// The wire form adapters emit on stdout (or scripted files contain).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdapterReport {
    pub compiled: bool,
    #[serde(default)]
    pub compile_errors: String,
    #[serde(default)]
    pub tests_total: usize,
    #[serde(default)]
    pub failures: Vec<FailingTest>,
}

impl ValidationReport {
    pub fn from_adapter(report: AdapterReport) -> Self {
        let compiled = report.compiled;
        let tests_total = if compiled { report.tests_total } else { 0 };
        let failures = if compiled { report.failures } else { Vec::new() };
        ValidationReport {
            passed: compiled && failures.is_empty(),
            compiled,
            compile_errors: report.compile_errors,
            tests_total,
            failures,
        }
    }
}

/// How generated patches get validated.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestAdapterConfig {
    /// Reports looked up in a JSON file keyed by patch digest; the key
    /// `"default"` catches unknown patches.
    Scripted { path: PathBuf },
    /// External command run with the sandbox path as its last argument,
    /// emitting an [`AdapterReport`] on stdout.
    Command {
        program: String,
        #[serde(default)]
        args: Vec<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
}

fn default_timeout() -> u64 {
    DEFAULT_ADAPTER_TIMEOUT_SECS
}

/// Fenced code blocks of a reply, in order; fence info strings are dropped.
pub fn extract_code_blocks(reply: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<String> = None;
    for line in reply.lines() {
        if line.trim_start().starts_with("```") {
            match current.take() {
                Some(block) => blocks.push(block),
                None => current = Some(String::new()),
            }
            continue;
        }
        if let Some(block) = current.as_mut() {
            if !block.is_empty() {
                block.push('\n');
            }
            block.push_str(line);
        }
    }
    blocks
}

fn render_generation_request(
    specs: &[BehaviorSpecification],
    loci: &[FunctionLocus],
) -> String {
    let mut out = String::from("Fixed specification(s):\n");
    for spec in specs {
        out.push_str(&spec_text::serialize_specification(spec));
        out.push('\n');
    }
    out.push_str("Original signatures, in required output order:\n");
    for locus in loci {
        out.push_str(&format!("- {}\n", locus.signature));
    }
    out
}

/// Generate replacement code for each target locus from the repaired
/// specification(s). One fenced block per function is required, in order;
/// a reply with the wrong block count gets one corrective re-ask.
pub fn generate_code(
    specs: &[BehaviorSpecification],
    loci: &[FunctionLocus],
    client: &LlmClient,
    session: &mut ChatSession,
) -> Result<Vec<PatchReplacement>, PipelineError> {
    assert_eq!(specs.len(), loci.len());
    let message = render_generation_request(specs, loci);
    let reply = client.send(session, &message)?;
    let mut blocks = extract_code_blocks(&reply);
    if blocks.len() != specs.len() {
        let corrective = format!(
            "Your previous reply contained {} fenced code block(s), but exactly \
             {} are required: one complete function definition per \
             specification, in order, and nothing else.",
            blocks.len(),
            specs.len()
        );
        let reply = client.send(session, &corrective)?;
        blocks = extract_code_blocks(&reply);
        if blocks.is_empty() {
            return Err(PipelineError::CodeExtract(
                "no fenced code blocks in reply".to_string(),
            ));
        }
        if blocks.len() != specs.len() {
            return Err(PipelineError::ArityMismatch {
                expected: specs.len(),
                got: blocks.len(),
            });
        }
    }
    Ok(loci
        .iter()
        .zip(blocks)
        .map(|(locus, text)| PatchReplacement {
            locus: locus.clone(),
            text,
        })
        .collect())
}

/// Digest identifying a patch's content: sha256 over the replacement texts
/// in order.
pub fn patch_digest(replacements: &[PatchReplacement]) -> String {
    let mut h = Sha256::new();
    for r in replacements {
        h.update(r.text.as_bytes());
        h.update([0]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Order-independent checksum of a workspace tree (relative paths plus
/// contents), for hygiene checks.
pub fn workspace_checksum(root: &Path) -> Result<String, PipelineError> {
    let mut entries: Vec<(String, Vec<u8>)> = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            PipelineError::Io(std::io::Error::other(e.to_string()))
        })?;
        if entry.file_type().is_file() {
            let rel = entry
                .path()
                .strip_prefix(root)
                .unwrap()
                .to_string_lossy()
                .replace('\\', "/");
            entries.push((rel, std::fs::read(entry.path())?));
        }
    }
    entries.sort();
    let mut h = Sha256::new();
    for (rel, bytes) in entries {
        h.update(rel.as_bytes());
        h.update([0]);
        h.update(&bytes);
        h.update([0]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn splice_file(
    path: &Path,
    file: &str,
    mut edits: Vec<(&FunctionLocus, &str)>,
) -> Result<(), PipelineError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines: Vec<String> = text.lines().map(|l| l.to_string()).collect();

    edits.sort_by_key(|(locus, _)| locus.span.0);
    for pair in edits.windows(2) {
        if pair[1].0.span.0 <= pair[0].0.span.1 {
            return Err(PipelineError::Splice {
                file: file.to_string(),
                reason: format!(
                    "overlapping spans {:?} and {:?}",
                    pair[0].0.span, pair[1].0.span
                ),
            });
        }
    }
    // splice back-to-front so earlier spans stay valid
    for (locus, text) in edits.into_iter().rev() {
        let (start, end) = locus.span;
        if start == 0 || end > lines.len() {
            return Err(PipelineError::Splice {
                file: file.to_string(),
                reason: format!("span {:?} outside file of {} lines", locus.span, lines.len()),
            });
        }
        let replacement: Vec<String> = text.lines().map(|l| l.to_string()).collect();
        lines.splice(start - 1..end, replacement);
    }
    let mut out = lines.join("\n");
    out.push('\n');
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct SandboxMeta {
    patch_digest: String,
}

/// Copy the workspace into a fresh sandbox under `sandbox_parent` and splice
/// the replacements in. The original tree is never written. The patch digest
/// is recorded in the sandbox for the scripted adapter.
pub fn apply_patch(
    workspace_root: &Path,
    replacements: &[PatchReplacement],
    sandbox_parent: &Path,
) -> Result<PathBuf, PipelineError> {
    std::fs::create_dir_all(sandbox_parent)?;
    let digest = patch_digest(replacements);
    let sandbox = sandbox_parent.join(format!("sandbox-{}", &digest[..12]));
    if sandbox.exists() {
        std::fs::remove_dir_all(&sandbox)?;
    }
    for entry in walkdir::WalkDir::new(workspace_root).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            PipelineError::Io(std::io::Error::other(e.to_string()))
        })?;
        let rel = entry.path().strip_prefix(workspace_root).unwrap();
        let dest = sandbox.join(rel);
        if entry.file_type().is_dir() {
            std::fs::create_dir_all(&dest)?;
        } else if entry.file_type().is_file() {
            std::fs::copy(entry.path(), &dest)?;
        }
    }

    let mut by_file: std::collections::BTreeMap<&str, Vec<(&FunctionLocus, &str)>> =
        std::collections::BTreeMap::new();
    for r in replacements {
        by_file
            .entry(r.locus.file.as_str())
            .or_default()
            .push((&r.locus, r.text.as_str()));
    }
    for (file, edits) in by_file {
        let path = sandbox.join(file);
        if !path.is_file() {
            return Err(PipelineError::Splice {
                file: file.to_string(),
                reason: "file not present in workspace".to_string(),
            });
        }
        splice_file(&path, file, edits)?;
    }

    let meta = SandboxMeta {
        patch_digest: digest,
    };
    std::fs::write(
        sandbox.join(SANDBOX_META_FILE),
        serde_json::to_string_pretty(&meta).unwrap(),
    )?;
    Ok(sandbox)
}

fn scripted_report(script_path: &Path, digest: &str) -> Result<AdapterReport, PipelineError> {
    let text = std::fs::read_to_string(script_path)?;
    let table: std::collections::BTreeMap<String, AdapterReport> =
        serde_json::from_str(&text).map_err(|e| PipelineError::AdapterParse(e.to_string()))?;
    table
        .get(digest)
        .or_else(|| table.get("default"))
        .cloned()
        .ok_or_else(|| PipelineError::AdapterMissingEntry(digest.to_string()))
}

fn command_report(
    program: &str,
    args: &[String],
    sandbox: &Path,
    timeout: Duration,
) -> Result<AdapterReport, PipelineError> {
    use std::process::{Command, Stdio};
    let mut child = Command::new(program)
        .args(args)
        .arg(sandbox)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| PipelineError::AdapterSpawn(e.to_string()))?;

    let deadline = std::time::Instant::now() + timeout;
    loop {
        match child.try_wait()? {
            Some(_status) => break,
            None if std::time::Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                // timeout is reported as a synthetic failure, not an error:
                // it consumes the round like any other failed validation
                return Ok(AdapterReport {
                    compiled: true,
                    compile_errors: String::new(),
                    tests_total: 0,
                    failures: vec![FailingTest {
                        test_id: "__adapter_timeout__".to_string(),
                        error_message: format!(
                            "test adapter exceeded the {}s timeout",
                            timeout.as_secs()
                        ),
                        expected: None,
                        actual: None,
                    }],
                });
            }
            None => std::thread::sleep(Duration::from_millis(20)),
        }
    }
    let mut stdout = Vec::new();
    use std::io::Read;
    child.stdout.take().unwrap().read_to_end(&mut stdout)?;
    serde_json::from_slice(&stdout).map_err(|e| PipelineError::AdapterParse(e.to_string()))
}

/// Run the configured adapter against a patched sandbox.
pub fn validate(
    sandbox: &Path,
    adapter: &TestAdapterConfig,
) -> Result<ValidationReport, PipelineError> {
    let report = match adapter {
        TestAdapterConfig::Scripted { path } => {
            let meta: SandboxMeta = serde_json::from_str(&std::fs::read_to_string(
                sandbox.join(SANDBOX_META_FILE),
            )?)
            .map_err(|e| PipelineError::AdapterParse(e.to_string()))?;
            scripted_report(path, &meta.patch_digest)?
        }
        TestAdapterConfig::Command {
            program,
            args,
            timeout_secs,
        } => command_report(program, args, sandbox, Duration::from_secs(*timeout_secs))?,
    };
    Ok(ValidationReport::from_adapter(report))
}

/// Deterministic textual feedback for the next repair round. Compile errors
/// when compilation failed, otherwise failing tests in test-id order.
pub fn extract_feedback(report: &ValidationReport) -> String {
    if !report.compiled {
        return format!(
            "The generated code failed to compile. compilation error messages:\n{}",
            report.compile_errors
        );
    }
    let mut failures = report.failures.clone();
    failures.sort_by(|a, b| a.test_id.cmp(&b.test_id));
    let mut out = String::from("Failing tests:\n");
    for f in &failures {
        out.push_str(&format!("- {}: {}\n", f.test_id, f.error_message));
        if let Some(e) = &f.expected {
            out.push_str(&format!("  expected: {e}\n"));
        }
        if let Some(a) = &f.actual {
            out.push_str(&format!("  actual: {a}\n"));
        }
    }
    out
}
