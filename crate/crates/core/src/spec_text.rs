//! Parsing and rendering of the six-field behavior-specification text form.
//!
//! The canonical form is the template layout: one `Header:` line per field,
//! with enumerated behavior steps. Parsing tolerates markdown noise around
//! headers (`**Function:**`, `## Function:`); serialization always emits the
//! canonical form, so serialize ∘ parse is a fixed point on parser output.

use thiserror::Error;

use crate::model::{BehaviorSpecification, BehaviorStep};

pub const HEADERS: [&str; 6] = [
    "Function",
    "Purpose",
    "Signature",
    "Input",
    "Output",
    "Behavior",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpecParseError {
    #[error("missing section header(s): {0}")]
    MissingHeaders(String),
    #[error("Behavior section has no steps")]
    NoSteps,
    #[error("no specification block found in reply")]
    NoBlock,
}

/// Match `Header:` at the start of a line, tolerating `#`, `*`, and
/// whitespace decoration. Returns the remainder after the colon.
fn match_header<'a>(line: &'a str, header: &str) -> Option<&'a str> {
    let stripped = line
        .trim_start()
        .trim_start_matches(['#', '*'])
        .trim_start();
    let rest = stripped.strip_prefix(header)?;
    let rest = rest.trim_start();
    let rest = rest.strip_prefix(':')?;
    Some(rest.trim_start_matches(['*']).trim())
}

fn header_of(line: &str) -> Option<(&'static str, &str)> {
    for h in HEADERS {
        if let Some(rest) = match_header(line, h) {
            return Some((h, rest));
        }
    }
    None
}

/// Split a trailing parenthesized bug annotation off a step description.
/// The annotation counts only when the parenthesized text begins with "bug"
/// (case-insensitive): `(bug: ...)`, `(buggy: ...)`, `(BUG - ...)`.
fn split_bug_note(text: &str) -> (String, Option<String>) {
    let trimmed = text.trim_end();
    if !trimmed.ends_with(')') {
        return (trimmed.to_string(), None);
    }
    let Some(open) = trimmed.rfind('(') else {
        return (trimmed.to_string(), None);
    };
    let inner = &trimmed[open + 1..trimmed.len() - 1];
    if !inner.to_ascii_lowercase().starts_with("bug") {
        return (trimmed.to_string(), None);
    }
    // drop the leading bug-word and separator punctuation
    let after_word = inner
        .trim_start_matches(|c: char| c.is_ascii_alphanumeric())
        .trim_start()
        .trim_start_matches([':', ',', '-', '–'])
        .trim();
    let note = if after_word.is_empty() { inner.trim() } else { after_word };
    let desc = trimmed[..open].trim_end().to_string();
    (desc, Some(note.to_string()))
}

fn parse_behavior_steps(text: &str) -> Result<Vec<BehaviorStep>, SpecParseError> {
    let mut steps: Vec<(String, String)> = Vec::new(); // (raw marker, text)
    for line in text.lines() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let enumerated = t
            .split_once('.')
            .filter(|(n, _)| !n.is_empty() && n.chars().all(|c| c.is_ascii_digit()))
            .map(|(_, rest)| rest.trim());
        let bulleted = t
            .strip_prefix('-')
            .or_else(|| t.strip_prefix('*'))
            .map(|s| s.trim());
        match enumerated.or(bulleted) {
            Some(body) => steps.push((t.to_string(), body.to_string())),
            None => {
                // continuation of the previous step
                if let Some(last) = steps.last_mut() {
                    last.1.push(' ');
                    last.1.push_str(t);
                }
            }
        }
    }
    if steps.is_empty() {
        return Err(SpecParseError::NoSteps);
    }
    Ok(steps
        .into_iter()
        .enumerate()
        .map(|(i, (_, body))| {
            let (description, bug_note) = split_bug_note(&body);
            BehaviorStep {
                index: i + 1,
                description,
                bug_note,
            }
        })
        .collect())
}

/// Parse one specification from reply text. Section text between consecutive
/// headers is assigned to fields; enumerated/bulleted lines under Behavior
/// become steps.
pub fn parse_specification(reply: &str) -> Result<BehaviorSpecification, SpecParseError> {
    let mut sections: Vec<(&'static str, String)> = Vec::new();
    let mut current: Option<(&'static str, String)> = None;
    for line in reply.lines() {
        if let Some((h, rest)) = header_of(line) {
            // only accept each header once: a second Function header starts
            // noise we ignore here (multi-block extraction handles it)
            if sections.iter().any(|(s, _)| *s == h)
                || current.as_ref().map(|(s, _)| *s == h).unwrap_or(false)
            {
                if let Some(cur) = current.take() {
                    sections.push(cur);
                }
                break;
            }
            if let Some(cur) = current.take() {
                sections.push(cur);
            }
            current = Some((h, rest.to_string()));
        } else if let Some((_, text)) = current.as_mut() {
            if !text.is_empty() {
                text.push('\n');
            }
            text.push_str(line);
        }
    }
    if let Some(cur) = current.take() {
        sections.push(cur);
    }

    let missing: Vec<&str> = HEADERS
        .iter()
        .filter(|h| !sections.iter().any(|(s, _)| s == *h))
        .copied()
        .collect();
    if !missing.is_empty() {
        return Err(SpecParseError::MissingHeaders(missing.join(", ")));
    }

    let get = |h: &str| {
        sections
            .iter()
            .find(|(s, _)| *s == h)
            .map(|(_, t)| t.trim().to_string())
            .unwrap_or_default()
    };

    Ok(BehaviorSpecification {
        function_name: get("Function"),
        purpose: get("Purpose"),
        signature: get("Signature"),
        input_desc: get("Input"),
        output_desc: get("Output"),
        behavior_steps: parse_behavior_steps(&get("Behavior"))?,
    })
}

/// Render the canonical template form.
pub fn serialize_specification(spec: &BehaviorSpecification) -> String {
    let mut out = String::new();
    out.push_str(&format!("Function: {}\n", spec.function_name));
    out.push_str(&format!("Purpose: {}\n", spec.purpose));
    out.push_str(&format!("Signature: {}\n", spec.signature));
    out.push_str(&format!("Input: {}\n", spec.input_desc));
    out.push_str(&format!("Output: {}\n", spec.output_desc));
    out.push_str("Behavior:\n");
    for step in &spec.behavior_steps {
        match &step.bug_note {
            Some(note) => out.push_str(&format!(
                "{}. {} (bug: {})\n",
                step.index, step.description, note
            )),
            None => out.push_str(&format!("{}. {}\n", step.index, step.description)),
        }
    }
    out
}

/// Extract every well-formed specification block from a reply, in order.
/// A block starts at a `Function:` header and runs to the next one.
pub fn parse_all_specifications(reply: &str) -> Vec<BehaviorSpecification> {
    let lines: Vec<&str> = reply.lines().collect();
    let starts: Vec<usize> = lines
        .iter()
        .enumerate()
        .filter(|(_, l)| match_header(l, "Function").is_some())
        .map(|(i, _)| i)
        .collect();
    let mut out = Vec::new();
    for (k, &start) in starts.iter().enumerate() {
        let end = starts.get(k + 1).copied().unwrap_or(lines.len());
        let block = lines[start..end].join("\n");
        if let Ok(spec) = parse_specification(&block) {
            out.push(spec);
        }
    }
    out
}

/// The last `n` well-formed blocks in a reply (chain-of-thought prose and
/// intermediate restatements precede the final specification).
pub fn parse_last_specifications(
    reply: &str,
    n: usize,
) -> Result<Vec<BehaviorSpecification>, SpecParseError> {
    let all = parse_all_specifications(reply);
    if all.len() < n || n == 0 {
        return Err(SpecParseError::NoBlock);
    }
    Ok(all[all.len() - n..].to_vec())
}
