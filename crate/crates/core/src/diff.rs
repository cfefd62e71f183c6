//! Unified diff parsing and re-serialization.
//!
//! The parser is lossless at hunk granularity: [`serialize`] on a parsed
//! hunk list reproduces an equivalent diff (same files, spans, and lines).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffParseError {
    #[error("line {line}: malformed hunk header `{text}`")]
    BadHunkHeader { line: usize, text: String },
    #[error("line {line}: hunk line outside any hunk: `{text}`")]
    OrphanLine { line: usize, text: String },
    #[error("line {line}: unexpected line prefix `{text}`")]
    BadPrefix { line: usize, text: String },
}

/// One line inside a hunk body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum HunkLine {
    Context(String),
    Removed(String),
    Added(String),
}

/// A single `@@`-delimited hunk, tied to the file it patches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hunk {
    /// Path taken from the `+++` header (or `---` when `+++` is /dev/null).
    pub file: String,
    /// (start, count) in the old file, 1-based.
    pub old_span: (usize, usize),
    /// (start, count) in the new file, 1-based.
    pub new_span: (usize, usize),
    pub lines: Vec<HunkLine>,
}

impl Hunk {
    /// Old-file line numbers touched by this hunk: removals at their own
    /// line, additions attributed to the old-file position they insert at.
    pub fn changed_old_lines(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut old_line = self.old_span.0;
        for l in &self.lines {
            match l {
                HunkLine::Context(_) => old_line += 1,
                HunkLine::Removed(_) => {
                    out.push(old_line);
                    old_line += 1;
                }
                HunkLine::Added(_) => out.push(old_line),
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Changed-line count where a removal paired with an addition at the
    /// same hunk position counts as one modified line. Computed per run of
    /// consecutive removals/additions as max(#removed, #added).
    pub fn changed_line_count(&self) -> usize {
        let mut total = 0usize;
        let mut removed = 0usize;
        let mut added = 0usize;
        for l in &self.lines {
            match l {
                HunkLine::Removed(_) => removed += 1,
                HunkLine::Added(_) => added += 1,
                HunkLine::Context(_) => {
                    total += removed.max(added);
                    removed = 0;
                    added = 0;
                }
            }
        }
        total + removed.max(added)
    }
}

fn strip_path_prefix(path: &str) -> String {
    let p = path.split('\t').next().unwrap_or(path).trim();
    for prefix in ["a/", "b/"] {
        if let Some(rest) = p.strip_prefix(prefix) {
            return rest.to_string();
        }
    }
    p.to_string()
}

fn parse_span(part: &str, line_no: usize, raw: &str) -> Result<(usize, usize), DiffParseError> {
    let body = &part[1..]; // drop the -/+ sign
    let (start, count) = match body.split_once(',') {
        Some((s, c)) => (s, c),
        None => (body, "1"),
    };
    let start = start.parse().map_err(|_| DiffParseError::BadHunkHeader {
        line: line_no,
        text: raw.to_string(),
    })?;
    let count = count.parse().map_err(|_| DiffParseError::BadHunkHeader {
        line: line_no,
        text: raw.to_string(),
    })?;
    Ok((start, count))
}

/// Parse a unified diff into its hunk list. An empty (or whitespace-only)
/// input yields an empty list.
pub fn parse_unified_diff(text: &str) -> Result<Vec<Hunk>, DiffParseError> {
    let mut hunks = Vec::new();
    let mut current_file: Option<String> = None;
    let mut old_file: Option<String> = None;
    let mut current: Option<Hunk> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.starts_with("--- ") {
            if let Some(h) = current.take() {
                hunks.push(h);
            }
            old_file = Some(strip_path_prefix(&raw[4..]));
            current_file = None;
        } else if raw.starts_with("+++ ") {
            let p = strip_path_prefix(&raw[4..]);
            current_file = if p == "/dev/null" {
                old_file.clone()
            } else {
                Some(p)
            };
        } else if raw.starts_with("@@") {
            if let Some(h) = current.take() {
                hunks.push(h);
            }
            let file = current_file
                .clone()
                .ok_or_else(|| DiffParseError::OrphanLine {
                    line: line_no,
                    text: raw.to_string(),
                })?;
            let inner = raw
                .trim_start_matches('@')
                .trim_end_matches(|c| c != '@')
                .trim_matches('@')
                .trim();
            let mut parts = inner.split_whitespace();
            let (old_part, new_part) = match (parts.next(), parts.next()) {
                (Some(o), Some(n)) if o.starts_with('-') && n.starts_with('+') => (o, n),
                _ => {
                    return Err(DiffParseError::BadHunkHeader {
                        line: line_no,
                        text: raw.to_string(),
                    })
                }
            };
            current = Some(Hunk {
                file,
                old_span: parse_span(old_part, line_no, raw)?,
                new_span: parse_span(new_part, line_no, raw)?,
                lines: Vec::new(),
            });
        } else if let Some(h) = current.as_mut() {
            if raw == r"\ No newline at end of file" {
                continue;
            }
            match raw.chars().next() {
                Some(' ') => h.lines.push(HunkLine::Context(raw[1..].to_string())),
                Some('-') => h.lines.push(HunkLine::Removed(raw[1..].to_string())),
                Some('+') => h.lines.push(HunkLine::Added(raw[1..].to_string())),
                None => h.lines.push(HunkLine::Context(String::new())),
                Some(_) => {
                    // `diff --git` and similar headers end the hunk
                    if raw.starts_with("diff ") || raw.starts_with("index ") {
                        hunks.push(current.take().unwrap());
                    } else {
                        return Err(DiffParseError::BadPrefix {
                            line: line_no,
                            text: raw.to_string(),
                        });
                    }
                }
            }
        } else if raw.trim().is_empty()
            || raw.starts_with("diff ")
            || raw.starts_with("index ")
            || raw.starts_with("new file")
            || raw.starts_with("deleted file")
        {
            // inter-file noise
        } else {
            return Err(DiffParseError::OrphanLine {
                line: line_no,
                text: raw.to_string(),
            });
        }
    }
    if let Some(h) = current.take() {
        hunks.push(h);
    }
    Ok(hunks)
}

/// Render a hunk list back to unified-diff text.
pub fn serialize(hunks: &[Hunk]) -> String {
    let mut out = String::new();
    let mut last_file: Option<&str> = None;
    for h in hunks {
        if last_file != Some(h.file.as_str()) {
            out.push_str(&format!("--- a/{}\n+++ b/{}\n", h.file, h.file));
            last_file = Some(h.file.as_str());
        }
        out.push_str(&format!(
            "@@ -{},{} +{},{} @@\n",
            h.old_span.0, h.old_span.1, h.new_span.0, h.new_span.1
        ));
        for l in &h.lines {
            match l {
                HunkLine::Context(t) => out.push_str(&format!(" {t}\n")),
                HunkLine::Removed(t) => out.push_str(&format!("-{t}\n")),
                HunkLine::Added(t) => out.push_str(&format!("+{t}\n")),
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SINGLE_HUNK: &str = "\
--- a/src/Foo.java
+++ b/src/Foo.java
@@ -3,3 +3,3 @@
 int a = 1;
-int b = 2;
+int b = 3;
";

    const MULTI_FILE: &str = "\
--- a/src/Foo.java
+++ b/src/Foo.java
@@ -3,2 +3,2 @@
-int b = 2;
+int b = 3;
@@ -10,2 +10,2 @@
-int c = 2;
+int c = 3;
--- a/src/Bar.java
+++ b/src/Bar.java
@@ -1,1 +1,2 @@
 class Bar {
+  // note
";

    #[test]
    fn empty_diff_yields_no_hunks() {
        assert!(parse_unified_diff("").unwrap().is_empty());
        assert!(parse_unified_diff("\n\n").unwrap().is_empty());
    }

    #[test]
    fn single_hunk_spans_recorded() {
        let hunks = parse_unified_diff(SINGLE_HUNK).unwrap();
        assert_eq!(hunks.len(), 1);
        assert_eq!(hunks[0].file, "src/Foo.java");
        assert_eq!(hunks[0].old_span, (3, 3));
        assert_eq!(hunks[0].new_span, (3, 3));
        assert_eq!(hunks[0].lines.len(), 3);
    }

    #[test]
    fn three_hunks_two_files() {
        let hunks = parse_unified_diff(MULTI_FILE).unwrap();
        assert_eq!(hunks.len(), 3);
        let files: std::collections::BTreeSet<_> =
            hunks.iter().map(|h| h.file.as_str()).collect();
        assert_eq!(files.len(), 2);
    }

    #[test]
    fn roundtrip_is_identity_on_hunks() {
        for text in [SINGLE_HUNK, MULTI_FILE] {
            let hunks = parse_unified_diff(text).unwrap();
            let re = parse_unified_diff(&serialize(&hunks)).unwrap();
            assert_eq!(hunks, re);
        }
    }

    #[test]
    fn malformed_header_reports_line() {
        let bad = "--- a/x\n+++ b/x\n@@ garbage @@\n";
        match parse_unified_diff(bad) {
            Err(DiffParseError::BadHunkHeader { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected BadHunkHeader, got {other:?}"),
        }
    }

    #[test]
    fn modified_line_counts_as_one() {
        let hunks = parse_unified_diff(SINGLE_HUNK).unwrap();
        assert_eq!(hunks[0].changed_line_count(), 1);
    }

    #[test]
    fn changed_old_lines_attribute_additions_to_insert_point() {
        let hunks = parse_unified_diff(MULTI_FILE).unwrap();
        // pure addition after context line 1 touches old line 2
        assert_eq!(hunks[2].changed_old_lines(), vec![2]);
    }
}
