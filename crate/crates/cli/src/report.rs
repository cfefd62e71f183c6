//! Benchmark aggregation: batch evaluation, the plausible/correct report,
//! scenario counts, result-set overlap, and the correctness review queue.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use specfix_core::analysis::{build_index, LanguageProfile};
use specfix_core::model::{classify_scenario, BugInstance, ScenarioPartition};
use specfix_core::orchestrator::{RepairSession, SessionResult};

use crate::config::RunConfig;
use crate::run::{cmd_repair, load_bug, RunError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    /// Bug manifest paths, relative to this file.
    pub bugs: Vec<PathBuf>,
}

pub fn load_corpus(path: &Path) -> Result<Vec<PathBuf>, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::Manifest {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let manifest: CorpusManifest =
        serde_json::from_str(&text).map_err(|e| RunError::Manifest {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(manifest.bugs.iter().map(|b| base.join(b)).collect())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectRow {
    pub project_id: String,
    pub bugs: usize,
    pub plausible: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioCounts {
    pub mf: usize,
    pub sf: usize,
    pub sh: usize,
    pub sl: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OverlapReport {
    pub dirs: Vec<String>,
    pub plausible_counts: Vec<usize>,
    /// Bugs plausible in every compared directory.
    pub shared: usize,
    /// Per directory, bugs plausible there and nowhere else.
    pub unique: Vec<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BenchReport {
    pub projects: Vec<ProjectRow>,
    pub total: ProjectRow,
    pub scenarios: ScenarioCounts,
    pub avg_time: f64,
    pub avg_cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlap: Option<OverlapReport>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("session parse ({path}): {message}")]
    SessionParse { path: String, message: String },
    #[error("annotation error: {0}")]
    Annotation(String),
    #[error("{0}")]
    Other(String),
}

pub fn load_sessions(results_dir: &Path) -> Result<Vec<RepairSession>, ReportError> {
    let dir = results_dir.join("sessions");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("json"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(&path)?;
        let session: RepairSession =
            serde_json::from_str(&text).map_err(|e| ReportError::SessionParse {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        out.push(session);
    }
    Ok(out)
}

fn plausible_ids(sessions: &[RepairSession]) -> BTreeSet<String> {
    sessions
        .iter()
        .filter(|s| matches!(s.result, SessionResult::Plausible { .. }))
        .map(|s| s.bug_id.clone())
        .collect()
}

/// Correctness annotations: human-reviewed verdicts keyed by bug id.
/// JSON only; a `true` verdict for a bug without a plausible patch is
/// rejected (correct ≤ plausible).
pub fn load_annotations(path: &Path) -> Result<BTreeMap<String, bool>, ReportError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| ReportError::Annotation(format!("{}: {e}", path.display())))
}

pub fn build_report(
    bugs: &[BugInstance],
    sessions: &[RepairSession],
    annotations: Option<&BTreeMap<String, bool>>,
) -> Result<BenchReport, ReportError> {
    let plausible = plausible_ids(sessions);
    if let Some(ann) = annotations {
        for (bug_id, correct) in ann {
            if *correct && !plausible.contains(bug_id) {
                return Err(ReportError::Annotation(format!(
                    "bug {bug_id} marked correct but has no plausible patch"
                )));
            }
        }
    }

    let mut rows: BTreeMap<String, ProjectRow> = BTreeMap::new();
    for bug in bugs {
        let row = rows
            .entry(bug.project_id.clone())
            .or_insert_with(|| ProjectRow {
                project_id: bug.project_id.clone(),
                ..Default::default()
            });
        row.bugs += 1;
        if plausible.contains(&bug.bug_id) {
            row.plausible += 1;
        }
        if let Some(ann) = annotations {
            if ann.get(&bug.bug_id).copied().unwrap_or(false) {
                *row.correct.get_or_insert(0) += 1;
            } else {
                row.correct.get_or_insert(0);
            }
        }
    }

    let mut scenarios = ScenarioCounts::default();
    for bug in bugs {
        let Some(patch) = &bug.reference_patch else {
            continue;
        };
        let index = build_index(&bug.workspace_root, LanguageProfile::JavaSubset)
            .map_err(|e| ReportError::Other(e.to_string()))?;
        let scenario = classify_scenario(patch, &index)
            .map_err(|e| ReportError::Other(format!("bug {}: {e}", bug.bug_id)))?;
        match scenario.partition {
            ScenarioPartition::MF => scenarios.mf += 1,
            ScenarioPartition::SF => {
                scenarios.sf += 1;
                if scenario.single_hunk {
                    scenarios.sh += 1;
                }
                if scenario.single_line {
                    scenarios.sl += 1;
                }
            }
        }
    }

    let projects: Vec<ProjectRow> = rows.into_values().collect();
    let total = ProjectRow {
        project_id: "total".to_string(),
        bugs: projects.iter().map(|r| r.bugs).sum(),
        plausible: projects.iter().map(|r| r.plausible).sum(),
        correct: annotations.map(|_| {
            projects
                .iter()
                .map(|r| r.correct.unwrap_or(0))
                .sum::<usize>()
        }),
    };
    let n = sessions.len().max(1) as f64;
    Ok(BenchReport {
        avg_time: sessions.iter().map(|s| s.wall_time).sum::<f64>() / n,
        avg_cost: sessions.iter().map(|s| s.total_cost).sum::<f64>() / n,
        projects,
        total,
        scenarios,
        overlap: None,
    })
}

/// Set arithmetic over several result directories' plausible sets.
pub fn overlap_report(dirs: &[PathBuf]) -> Result<OverlapReport, ReportError> {
    let sets: Vec<BTreeSet<String>> = dirs
        .iter()
        .map(|d| load_sessions(d).map(|s| plausible_ids(&s)))
        .collect::<Result<_, _>>()?;
    let shared = sets
        .iter()
        .skip(1)
        .fold(sets.first().cloned().unwrap_or_default(), |acc, s| {
            acc.intersection(s).cloned().collect()
        });
    let unique = sets
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.iter()
                .filter(|id| sets.iter().enumerate().all(|(j, t)| i == j || !t.contains(*id)))
                .count()
        })
        .collect();
    Ok(OverlapReport {
        dirs: dirs.iter().map(|d| d.display().to_string()).collect(),
        plausible_counts: sets.iter().map(|s| s.len()).collect(),
        shared: shared.len(),
        unique,
    })
}

pub fn render_text(report: &BenchReport) -> String {
    let mut out = String::new();
    out.push_str("project        bugs  plausible  correct\n");
    for row in report.projects.iter().chain(std::iter::once(&report.total)) {
        let correct = row
            .correct
            .map(|c| c.to_string())
            .unwrap_or_else(|| "-".to_string());
        out.push_str(&format!(
            "{:<14} {:>4} {:>10} {:>8}\n",
            row.project_id, row.bugs, row.plausible, correct
        ));
    }
    out.push_str(&format!(
        "scenarios: MF {} | SF {} | SH {} | SL {}\n",
        report.scenarios.mf, report.scenarios.sf, report.scenarios.sh, report.scenarios.sl
    ));
    out.push_str(&format!(
        "avg time {:.3}s | avg cost ${:.6}\n",
        report.avg_time, report.avg_cost
    ));
    if let Some(overlap) = &report.overlap {
        out.push_str(&format!(
            "overlap: shared {} | unique {:?} across {:?}\n",
            overlap.shared, overlap.unique, overlap.dirs
        ));
    }
    out
}

pub fn write_report(report: &BenchReport, output_dir: &Path) -> Result<(), ReportError> {
    std::fs::create_dir_all(output_dir)?;
    let mut json = serde_json::to_string_pretty(report)
        .map_err(|e| ReportError::Other(e.to_string()))?;
    json.push('\n');
    std::fs::write(output_dir.join("report.json"), json)?;
    std::fs::write(output_dir.join("report.txt"), render_text(report))?;
    Ok(())
}

/// Side-by-side material for the human correctness review: the generated
/// patch next to the reference developer patch.
pub fn emit_review_queue(
    bugs: &[BugInstance],
    sessions: &[RepairSession],
    output_dir: &Path,
) -> Result<usize, ReportError> {
    let dir = output_dir.join("review");
    let mut emitted = 0;
    for session in sessions {
        let SessionResult::Plausible { patch } = &session.result else {
            continue;
        };
        let Some(bug) = bugs.iter().find(|b| b.bug_id == session.bug_id) else {
            continue;
        };
        let Some(reference) = &bug.reference_patch else {
            continue;
        };
        std::fs::create_dir_all(&dir)?;
        let mut text = format!("bug: {}\n\n== generated patch ==\n", bug.bug_id);
        for r in &patch.replacements {
            text.push_str(&format!(
                "--- {} (lines {}-{}) ---\n{}\n",
                r.locus.file, r.locus.span.0, r.locus.span.1, r.text
            ));
        }
        text.push_str("\n== reference patch ==\n");
        text.push_str(reference);
        std::fs::write(dir.join(format!("{}.txt", bug.bug_id)), text)?;
        emitted += 1;
    }
    Ok(emitted)
}

/// Run every corpus bug through the repair pipeline with a bounded worker
/// pool, then aggregate. Annotation files are merged when present at
/// `<output_dir>/annotations.json`.
pub fn cmd_evaluate(config: &RunConfig, corpus: &Path) -> Result<BenchReport, RunError> {
    config.validate()?;
    let manifest_paths = load_corpus(corpus)?;
    let bugs: Vec<BugInstance> = manifest_paths
        .iter()
        .map(|p| load_bug(p))
        .collect::<Result<_, _>>()?;

    let queue: Mutex<Vec<PathBuf>> = Mutex::new(manifest_paths.clone());
    let errors: Mutex<Vec<String>> = Mutex::new(Vec::new());
    let workers = config.parallelism.min(manifest_paths.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let next = queue.lock().unwrap().pop();
                let Some(path) = next else { break };
                if let Err(e) = cmd_repair(config, &path) {
                    errors
                        .lock()
                        .unwrap()
                        .push(format!("{}: {e}", path.display()));
                }
            });
        }
    });
    let errors = errors.into_inner().unwrap();
    if !errors.is_empty() {
        return Err(RunError::Other(errors.join("; ")));
    }

    let sessions =
        load_sessions(&config.output_dir).map_err(|e| RunError::Other(e.to_string()))?;
    emit_review_queue(&bugs, &sessions, &config.output_dir)
        .map_err(|e| RunError::Other(e.to_string()))?;
    let annotations_path = config.output_dir.join("annotations.json");
    let annotations = if annotations_path.is_file() {
        Some(load_annotations(&annotations_path).map_err(|e| RunError::Other(e.to_string()))?)
    } else {
        None
    };
    let report = build_report(&bugs, &sessions, annotations.as_ref())
        .map_err(|e| RunError::Other(e.to_string()))?;
    write_report(&report, &config.output_dir).map_err(|e| RunError::Other(e.to_string()))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use specfix_core::gateway::TokenUsage;
    use specfix_core::model::{FailingTest, FunctionLocus, Patch, PatchReplacement};
    use specfix_core::orchestrator::ReasoningStrategy;

    fn bug(id: &str, project: &str, ws: &Path, reference: Option<&str>) -> BugInstance {
        BugInstance {
            bug_id: id.to_string(),
            project_id: project.to_string(),
            workspace_root: ws.to_path_buf(),
            target_functions: vec![FunctionLocus {
                file: "A.java".to_string(),
                function_name: "f".to_string(),
                signature: "int f(int x)".to_string(),
                span: (2, 4),
            }],
            failing_tests: vec![FailingTest {
                test_id: "t".to_string(),
                error_message: "m".to_string(),
                expected: None,
                actual: None,
            }],
            reference_patch: reference.map(|s| s.to_string()),
        }
    }

    fn session(id: &str, plausible: bool) -> RepairSession {
        let result = if plausible {
            SessionResult::Plausible {
                patch: Patch {
                    replacements: vec![PatchReplacement {
                        locus: FunctionLocus {
                            file: "A.java".to_string(),
                            function_name: "f".to_string(),
                            signature: "int f(int x)".to_string(),
                            span: (2, 4),
                        },
                        text: "fixed".to_string(),
                    }],
                    attempt_index: 1,
                    round_index: 1,
                },
            }
        } else {
            SessionResult::Exhausted
        };
        RepairSession {
            bug_id: id.to_string(),
            strategy: ReasoningStrategy::None,
            transform_session: None,
            attempts: vec![],
            total_usage: TokenUsage::default(),
            total_cost: 0.25,
            wall_time: 2.0,
            result,
        }
    }

    fn workspace() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("A.java"),
            "class A {\n    int f(int x) {\n        return x;\n    }\n}\n",
        )
        .unwrap();
        dir
    }

    const REF_PATCH: &str = "\
--- a/A.java
+++ b/A.java
@@ -3,1 +3,1 @@
-        return x;
+        return x + 1;
";

    #[test]
    fn totals_equal_row_sums_and_correct_capped() {
        let ws = workspace();
        let bugs = vec![
            bug("b1", "p1", ws.path(), Some(REF_PATCH)),
            bug("b2", "p1", ws.path(), None),
            bug("b3", "p2", ws.path(), None),
        ];
        let sessions = vec![session("b1", true), session("b2", false), session("b3", true)];
        let mut ann = BTreeMap::new();
        ann.insert("b1".to_string(), true);
        ann.insert("b3".to_string(), false);
        let report = build_report(&bugs, &sessions, Some(&ann)).unwrap();
        assert_eq!(report.total.bugs, 3);
        assert_eq!(report.total.plausible, 2);
        assert_eq!(report.total.correct, Some(1));
        assert_eq!(
            report.total.bugs,
            report.projects.iter().map(|r| r.bugs).sum::<usize>()
        );
        // single-line reference patch classifies SL ⊆ SH ⊆ SF
        assert_eq!(report.scenarios.sf, 1);
        assert_eq!(report.scenarios.sh, 1);
        assert_eq!(report.scenarios.sl, 1);
        assert_eq!(report.scenarios.mf, 0);
        assert!((report.avg_cost - 0.25).abs() < 1e-12);

        // correct verdict without a plausible patch is rejected
        let mut bad = BTreeMap::new();
        bad.insert("b2".to_string(), true);
        assert!(matches!(
            build_report(&bugs, &sessions, Some(&bad)),
            Err(ReportError::Annotation(_))
        ));
    }

    #[test]
    fn report_text_is_deterministic() {
        let ws = workspace();
        let bugs = vec![bug("b1", "p1", ws.path(), None)];
        let sessions = vec![session("b1", true)];
        let a = render_text(&build_report(&bugs, &sessions, None).unwrap());
        let b = render_text(&build_report(&bugs, &sessions, None).unwrap());
        assert_eq!(a, b);
        assert!(a.contains("total"));
    }

    fn write_result_dir(dir: &Path, sessions: &[RepairSession]) {
        for s in sessions {
            specfix_core::orchestrator::write_session(
                s,
                &dir.join("sessions").join(format!("{}.json", s.bug_id)),
            )
            .unwrap();
        }
    }

    #[test]
    fn overlap_set_arithmetic() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        // dir1 solves b1, b2; dir2 solves b2, b3
        write_result_dir(
            d1.path(),
            &[session("b1", true), session("b2", true), session("b3", false)],
        );
        write_result_dir(
            d2.path(),
            &[session("b1", false), session("b2", true), session("b3", true)],
        );
        let overlap =
            overlap_report(&[d1.path().to_path_buf(), d2.path().to_path_buf()]).unwrap();
        assert_eq!(overlap.plausible_counts, vec![2, 2]);
        assert_eq!(overlap.shared, 1);
        assert_eq!(overlap.unique, vec![1, 1]);
    }

    #[test]
    fn review_queue_only_for_plausible_with_reference() {
        let ws = workspace();
        let out = tempfile::tempdir().unwrap();
        let bugs = vec![
            bug("b1", "p", ws.path(), Some(REF_PATCH)),
            bug("b2", "p", ws.path(), Some(REF_PATCH)),
            bug("b3", "p", ws.path(), None),
        ];
        let sessions = vec![session("b1", true), session("b2", false), session("b3", true)];
        let n = emit_review_queue(&bugs, &sessions, out.path()).unwrap();
        assert_eq!(n, 1);
        assert!(out.path().join("review/b1.txt").is_file());
        assert!(!out.path().join("review/b2.txt").exists());
    }
}
