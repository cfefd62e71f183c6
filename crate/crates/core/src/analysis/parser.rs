//! Reference analyzer for a Java-like subset.
//!
//! Line-oriented, brace-matching scan over comment/string-sanitized text.
//! Recognizes package/import declarations, class bodies, method definitions,
//! field and local variable declarations, assignments, call expressions, and
//! if/else/for/while/do/switch constructs. Precision contract: method
//! resolution is name-based and dataflow bookkeeping is line-granular.

use super::{
    CallRecord, ClassRecord, ControlFlowConstruct, FileParseError, MethodRecord, VariableRecord,
    VariableScope,
};

const MODIFIERS: &[&str] = &[
    "public", "private", "protected", "static", "final", "abstract", "synchronized", "native",
    "default", "strictfp", "transient", "volatile",
];

const KEYWORDS: &[&str] = &[
    "if", "else", "for", "while", "do", "switch", "case", "return", "new", "catch", "try",
    "finally", "throw", "throws", "break", "continue", "class", "interface", "enum", "package",
    "import", "extends", "implements", "instanceof", "super", "this", "null", "true", "false",
    "assert", "default",
];

const STATEMENT_KEYWORDS: &[&str] = &["if", "for", "while", "switch", "catch", "return", "new"];

fn is_modifier(t: &str) -> bool {
    MODIFIERS.contains(&t)
}

fn is_keyword(t: &str) -> bool {
    KEYWORDS.contains(&t)
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '$'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '$'
}

/// Blank out comments, string literals, and char literals, preserving line
/// structure and byte positions.
pub fn sanitize(text: &str) -> String {
    #[derive(PartialEq)]
    enum S {
        Code,
        LineComment,
        BlockComment,
        Str,
        Chr,
    }
    let mut state = S::Code;
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match state {
            S::Code => match c {
                '/' if chars.peek() == Some(&'/') => {
                    state = S::LineComment;
                    out.push(' ');
                }
                '/' if chars.peek() == Some(&'*') => {
                    state = S::BlockComment;
                    out.push(' ');
                }
                '"' => {
                    state = S::Str;
                    out.push(' ');
                }
                '\'' => {
                    state = S::Chr;
                    out.push(' ');
                }
                _ => out.push(c),
            },
            S::LineComment => {
                if c == '\n' {
                    state = S::Code;
                    out.push('\n');
                } else {
                    out.push(' ');
                }
            }
            S::BlockComment => {
                if c == '\n' {
                    out.push('\n');
                } else if c == '*' && chars.peek() == Some(&'/') {
                    chars.next();
                    out.push_str("  ");
                    state = S::Code;
                } else {
                    out.push(' ');
                }
            }
            S::Str => {
                if c == '\\' {
                    chars.next();
                    out.push_str("  ");
                } else if c == '"' || c == '\n' {
                    if c == '\n' {
                        out.push('\n');
                    } else {
                        out.push(' ');
                    }
                    state = S::Code;
                } else {
                    out.push(' ');
                }
            }
            S::Chr => {
                if c == '\\' {
                    chars.next();
                    out.push_str("  ");
                } else if c == '\'' || c == '\n' {
                    if c == '\n' {
                        out.push('\n');
                    } else {
                        out.push(' ');
                    }
                    state = S::Code;
                } else {
                    out.push(' ');
                }
            }
        }
    }
    out
}

/// Identifier tokens with byte column offsets.
pub fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if is_ident_start(c) {
            let start = i;
            while i < bytes.len() && is_ident_char(bytes[i] as char) {
                i += 1;
            }
            out.push((start, &line[start..i]));
        } else if c.is_ascii_digit() {
            // skip numeric literal (incl. suffix letters)
            while i < bytes.len() && is_ident_char(bytes[i] as char) {
                i += 1;
            }
        } else {
            i += 1;
        }
    }
    out
}

struct OpenConstruct {
    kind: OpenKind,
    open_depth: usize,
}

enum OpenKind {
    Class(usize),  // index into classes
    Method(usize), // index into methods
    Other,
}

#[derive(Default)]
#[derive(Debug)]
pub struct ParsedFile {
    pub package: Option<String>,
    pub imports: Vec<String>,
    pub classes: Vec<ClassRecord>,
    pub methods: Vec<MethodRecord>,
    pub variables: Vec<VariableRecord>,
    pub calls: Vec<CallRecord>,
}

struct PendingMethod {
    name: String,
    signature: String,
    params: Vec<(String, String)>,
    decl_line: usize,
    class: Option<String>,
}

/// Pending declaration that attaches to the next `{` (or `;` for bodiless
/// methods).
enum Pending {
    Class { name: String, decl_line: usize },
    Method(PendingMethod),
}

pub fn parse_file(rel_path: &str, text: &str) -> Result<ParsedFile, FileParseError> {
    let sanitized = sanitize(text);
    let lines: Vec<&str> = sanitized.lines().collect();
    let mut pf = ParsedFile::default();

    let mut depth: usize = 0;
    let mut open: Vec<OpenConstruct> = Vec::new();
    let mut pending: Option<Pending> = None;
    // method signature accumulation across lines
    let mut sig_accum: Option<(String, usize, i32)> = None; // (text, decl_line, paren balance)

    for (idx, raw) in lines.iter().enumerate() {
        let line_no = idx + 1;
        let line = *raw;
        let trimmed = line.trim();
        let toks = tokens(line);

        // continue a multi-line method signature
        if let Some((ref mut text, decl_line, ref mut bal)) = sig_accum {
            for c in trimmed.chars() {
                match c {
                    '(' => *bal += 1,
                    ')' => *bal -= 1,
                    _ => {}
                }
            }
            text.push(' ');
            text.push_str(trimmed.trim_end_matches('{').trim_end_matches(';').trim());
            if *bal <= 0 {
                let decl_line = decl_line;
                let text = text.clone();
                sig_accum = None;
                if let Some(pm) = finish_signature(&text, decl_line, &open, &pf) {
                    pending = Some(Pending::Method(pm));
                }
            }
            // fall through so braces on this line are still counted
        } else if depth == 0 && trimmed.starts_with("package ") {
            pf.package = Some(
                trimmed
                    .trim_start_matches("package ")
                    .trim_end_matches(';')
                    .trim()
                    .to_string(),
            );
        } else if depth == 0 && trimmed.starts_with("import ") {
            pf.imports.push(
                trimmed
                    .trim_start_matches("import ")
                    .trim_end_matches(';')
                    .trim()
                    .to_string(),
            );
        } else if let Some(pos) = class_decl(&toks) {
            pending = Some(Pending::Class {
                name: toks[pos].1.to_string(),
                decl_line: line_no,
            });
        } else if in_class_not_method(&open) && looks_like_method_start(line, &toks) {
            let mut bal = 0i32;
            for c in line.chars() {
                match c {
                    '(' => bal += 1,
                    ')' => bal -= 1,
                    _ => {}
                }
            }
            let text = trimmed
                .trim_end_matches('{')
                .trim_end_matches(';')
                .trim()
                .to_string();
            if bal > 0 {
                sig_accum = Some((text, line_no, bal));
            } else if let Some(pm) = finish_signature(&text, line_no, &open, &pf) {
                if trimmed.ends_with(';') {
                    // abstract / bodiless method
                    push_method(&mut pf, pm, line_no, depth + 1);
                } else {
                    pending = Some(Pending::Method(pm));
                }
            }
        } else if let Some(mi) = current_method(&open) {
            analyze_body_line(&mut pf, mi, rel_path, line, line_no, &toks, depth);
        } else if in_class_not_method(&open) {
            collect_field_decl(&mut pf, rel_path, line, line_no, &toks, &open);
        }

        // brace processing
        for c in line.chars() {
            match c {
                '{' => {
                    match pending.take() {
                        Some(Pending::Class { name, decl_line }) => {
                            pf.classes.push(ClassRecord {
                                name,
                                file: rel_path.to_string(),
                                span: (decl_line, decl_line),
                                field_names: Vec::new(),
                                method_names: Vec::new(),
                            });
                            open.push(OpenConstruct {
                                kind: OpenKind::Class(pf.classes.len() - 1),
                                open_depth: depth,
                            });
                        }
                        Some(Pending::Method(pm)) => {
                            let mi = push_method(&mut pf, pm, 0, depth + 1);
                            open.push(OpenConstruct {
                                kind: OpenKind::Method(mi),
                                open_depth: depth,
                            });
                        }
                        None => open.push(OpenConstruct {
                            kind: OpenKind::Other,
                            open_depth: depth,
                        }),
                    }
                    depth += 1;
                }
                '}' => {
                    if depth == 0 {
                        return Err(FileParseError {
                            file: rel_path.to_string(),
                            line: line_no,
                            message: "unbalanced `}`".to_string(),
                        });
                    }
                    depth -= 1;
                    if let Some(top) = open.last() {
                        if top.open_depth == depth {
                            let c = open.pop().unwrap();
                            match c.kind {
                                OpenKind::Class(ci) => pf.classes[ci].span.1 = line_no,
                                OpenKind::Method(mi) => pf.methods[mi].span.1 = line_no,
                                OpenKind::Other => {}
                            }
                        }
                    }
                }
                ';' => {
                    if let Some(Pending::Method(_)) = &pending {
                        if let Some(Pending::Method(pm)) = pending.take() {
                            push_method(&mut pf, pm, line_no, depth + 1);
                        }
                    }
                }
                _ => {}
            }
        }
    }

    if depth != 0 {
        return Err(FileParseError {
            file: rel_path.to_string(),
            line: lines.len(),
            message: format!("unbalanced braces at end of file (depth {depth})"),
        });
    }

    finalize(&mut pf, rel_path, &lines);
    Ok(pf)
}

fn class_decl(toks: &[(usize, &str)]) -> Option<usize> {
    for (i, (_, t)) in toks.iter().enumerate() {
        if matches!(*t, "class" | "interface" | "enum") {
            if let Some((_, name)) = toks.get(i + 1) {
                if !is_keyword(name) {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn in_class_not_method(open: &[OpenConstruct]) -> bool {
    for c in open.iter().rev() {
        match c.kind {
            OpenKind::Method(_) => return false,
            OpenKind::Class(_) => return true,
            OpenKind::Other => continue,
        }
    }
    false
}

fn current_method(open: &[OpenConstruct]) -> Option<usize> {
    for c in open.iter().rev() {
        match c.kind {
            OpenKind::Method(mi) => return Some(mi),
            OpenKind::Class(_) => return None,
            OpenKind::Other => continue,
        }
    }
    None
}

fn enclosing_class<'a>(open: &[OpenConstruct], pf: &'a ParsedFile) -> Option<&'a str> {
    for c in open.iter().rev() {
        if let OpenKind::Class(ci) = c.kind {
            return Some(&pf.classes[ci].name);
        }
    }
    None
}

fn looks_like_method_start(line: &str, toks: &[(usize, &str)]) -> bool {
    let Some(paren) = line.find('(') else {
        return false;
    };
    // token immediately before `(`
    let mut name_idx = None;
    for (i, (col, t)) in toks.iter().enumerate() {
        if col + t.len() <= paren
            && line[col + t.len()..paren].chars().all(|c| c.is_whitespace())
        {
            name_idx = Some(i);
        }
    }
    let Some(ni) = name_idx else { return false };
    let (col, name) = toks[ni];
    if STATEMENT_KEYWORDS.contains(&name) || is_keyword(name) {
        return false;
    }
    if col > 0 && line.as_bytes()[..col].iter().rev().find(|b| !b.is_ascii_whitespace())
        == Some(&b'@')
    {
        return false; // annotation
    }
    // preceding tokens must be modifiers then a return type, or none (constructor)
    let before: Vec<&str> = toks[..ni].iter().map(|(_, t)| *t).collect();
    let non_mod: Vec<&str> = before.iter().filter(|t| !is_modifier(t)).copied().collect();
    match non_mod.len() {
        0 => true, // constructor: Name(
        1 => !is_keyword(non_mod[0]) || non_mod[0] == "void" || non_mod[0] == "boolean",
        _ => {
            // generic return types contribute extra tokens; accept if none are
            // statement keywords
            non_mod.iter().all(|t| !STATEMENT_KEYWORDS.contains(t))
        }
    }
}

fn finish_signature(
    text: &str,
    decl_line: usize,
    open: &[OpenConstruct],
    pf: &ParsedFile,
) -> Option<PendingMethod> {
    let paren = text.find('(')?;
    let close = text.rfind(')')?;
    if close < paren {
        return None;
    }
    let head = &text[..paren];
    let name = tokens(head).last().map(|(_, t)| t.to_string())?;
    let params_text = &text[paren + 1..close];
    let params = parse_params(params_text);
    let signature = text[..=close].trim().to_string();
    Some(PendingMethod {
        name,
        signature,
        params,
        decl_line,
        class: enclosing_class(open, pf).map(|s| s.to_string()),
    })
}

fn parse_params(text: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut part = String::new();
    let mut parts = Vec::new();
    for c in text.chars() {
        match c {
            '<' | '(' | '[' => {
                depth += 1;
                part.push(c);
            }
            '>' | ')' | ']' => {
                depth -= 1;
                part.push(c);
            }
            ',' if depth == 0 => {
                parts.push(part.clone());
                part.clear();
            }
            _ => part.push(c),
        }
    }
    if !part.trim().is_empty() {
        parts.push(part);
    }
    for p in parts {
        let toks = tokens(&p);
        if toks.len() >= 2 {
            let name = toks.last().unwrap().1.to_string();
            let ty = toks[..toks.len() - 1]
                .iter()
                .map(|(_, t)| *t)
                .filter(|t| !is_modifier(t))
                .collect::<Vec<_>>()
                .join(" ");
            out.push((ty, name));
        }
    }
    out
}

fn push_method(pf: &mut ParsedFile, pm: PendingMethod, end_line: usize, body_depth: usize) -> usize {
    let end = if end_line == 0 { pm.decl_line } else { end_line };
    pf.methods.push(MethodRecord {
        name: pm.name,
        signature: pm.signature,
        file: String::new(), // set in finalize
        class: pm.class,
        span: (pm.decl_line, end),
        params: pm.params,
        locals: Vec::new(),
        called_methods: Vec::new(),
        control_flow: Vec::new(),
        body_depth,
        has_body: end_line == 0,
    });
    pf.methods.len() - 1
}

fn decl_in_line(line: &str, toks: &[(usize, &str)]) -> Option<(String, String, usize)> {
    // pattern: Type name (= | ; | , | :) — Type is a non-keyword identifier
    // or primitive; generics/arrays tolerated between type and name.
    for i in 0..toks.len().saturating_sub(1) {
        let (_, ty) = toks[i];
        let (ncol, name) = toks[i + 1];
        if is_keyword(ty) || is_keyword(name) {
            continue;
        }
        // between type and name: only whitespace, generics, or array brackets
        let (tcol, tlen) = (toks[i].0, toks[i].1.len());
        let between = &line[tcol + tlen..ncol];
        if between.is_empty()
            || !between
                .chars()
                .all(|c| c.is_whitespace() || "<>,[]?".contains(c))
        {
            continue;
        }
        let after = line[ncol + name.len()..].trim_start();
        let initialized = after.starts_with('=') && !after.starts_with("==");
        if initialized || after.starts_with(';') || after.starts_with(':') {
            return Some((ty.to_string(), name.to_string(), initialized as usize));
        }
    }
    None
}

fn analyze_body_line(
    pf: &mut ParsedFile,
    mi: usize,
    rel_path: &str,
    line: &str,
    line_no: usize,
    toks: &[(usize, &str)],
    depth: usize,
) {
    let method_name = pf.methods[mi].name.clone();
    let body_depth = pf.methods[mi].body_depth;

    // control flow: depth per column so `} else {` is attributed correctly
    let mut seen_cols: Vec<(usize, usize)> = Vec::new();
    let mut d = depth;
    for (i, c) in line.char_indices() {
        seen_cols.push((i, d));
        match c {
            '{' => d += 1,
            '}' => d = d.saturating_sub(1),
            _ => {}
        }
    }
    for (col, t) in toks {
        if matches!(*t, "if" | "else" | "for" | "while" | "do" | "switch") {
            let d = seen_cols
                .iter()
                .rev()
                .find(|(c, _)| c <= col)
                .map(|(_, d)| *d)
                .unwrap_or(depth);
            pf.methods[mi].control_flow.push(ControlFlowConstruct {
                kind: t.to_string(),
                line: line_no,
                depth: d.saturating_sub(body_depth),
            });
        }
    }

    // local declaration
    if let Some((ty, name, initialized)) = decl_in_line(line, toks) {
        pf.methods[mi].locals.push(name.clone());
        pf.variables.push(VariableRecord {
            name: name.clone(),
            file: rel_path.to_string(),
            scope: VariableScope::Local {
                method: method_name.clone(),
            },
            decl_line: line_no,
            assign_lines: if initialized == 1 { vec![line_no] } else { vec![] },
            ref_lines: Vec::new(),
            var_type: ty,
        });
    }

    // assignments / increments on known variables are resolved in finalize;
    // here we record calls
    for (col, t) in toks {
        if is_keyword(t) {
            continue;
        }
        let after = line[col + t.len()..].trim_start();
        if after.starts_with('(') {
            // exclude declarations of the method itself (not in body lines)
            // and `new Type(` constructor calls
            let before = line[..*col].trim_end();
            if before.ends_with("new") {
                continue;
            }
            pf.calls.push(CallRecord {
                callee: t.to_string(),
                file: rel_path.to_string(),
                line: line_no,
                caller: Some(method_name.clone()),
            });
        }
    }
}

fn collect_field_decl(
    pf: &mut ParsedFile,
    rel_path: &str,
    line: &str,
    line_no: usize,
    toks: &[(usize, &str)],
    open: &[OpenConstruct],
) {
    let Some(class) = enclosing_class(open, pf).map(|s| s.to_string()) else {
        return;
    };
    if let Some((ty, name, initialized)) = decl_in_line(line, toks) {
        pf.variables.push(VariableRecord {
            name: name.clone(),
            file: rel_path.to_string(),
            scope: VariableScope::Field {
                class: class.clone(),
            },
            decl_line: line_no,
            assign_lines: if initialized == 1 { vec![line_no] } else { vec![] },
            ref_lines: Vec::new(),
            var_type: ty,
        });
        for c in pf.classes.iter_mut() {
            if c.name == class && c.file == rel_path {
                c.field_names.push(name);
                break;
            }
        }
    }
}

/// Second pass: attach file names, param variables, references, assignment
/// sites, class member lists.
fn finalize(pf: &mut ParsedFile, rel_path: &str, lines: &[&str]) {
    for m in pf.methods.iter_mut() {
        m.file = rel_path.to_string();
    }
    // parameter variables
    let mut param_vars = Vec::new();
    for m in &pf.methods {
        for (ty, name) in &m.params {
            param_vars.push(VariableRecord {
                name: name.clone(),
                file: rel_path.to_string(),
                scope: VariableScope::Param {
                    method: m.name.clone(),
                },
                decl_line: m.span.0,
                // a parameter receives its value at the declaration site
                assign_lines: vec![m.span.0],
                ref_lines: Vec::new(),
                var_type: ty.clone(),
            });
        }
    }
    pf.variables.extend(param_vars);

    // method membership in classes
    for m in &pf.methods {
        if let Some(class) = &m.class {
            for c in pf.classes.iter_mut() {
                if &c.name == class {
                    c.method_names.push(m.name.clone());
                    break;
                }
            }
        }
    }

    // resolve references and assignments per variable within its scope span
    let method_spans: Vec<(String, (usize, usize))> = pf
        .methods
        .iter()
        .map(|m| (m.name.clone(), m.span))
        .collect();
    let class_spans: Vec<(String, (usize, usize))> = pf
        .classes
        .iter()
        .map(|c| (c.name.clone(), c.span))
        .collect();

    for v in pf.variables.iter_mut() {
        let span = match &v.scope {
            VariableScope::Local { method } | VariableScope::Param { method } => method_spans
                .iter()
                .find(|(n, s)| n == method && s.0 <= v.decl_line && v.decl_line <= s.1)
                .map(|(_, s)| *s),
            VariableScope::Field { class } => class_spans
                .iter()
                .find(|(n, _)| n == class)
                .map(|(_, s)| *s),
        };
        let Some((start, end)) = span else { continue };
        for line_no in start..=end {
            let Some(line) = lines.get(line_no - 1) else {
                continue;
            };
            for (col, t) in tokens(line) {
                if t != v.name {
                    continue;
                }
                if line_no != v.decl_line && !v.ref_lines.contains(&line_no) {
                    v.ref_lines.push(line_no);
                }
                // assignment forms: `x =`, `x op=`, `x++`, `++x`
                let after = line[col + t.len()..].trim_start();
                let before = line[..col].trim_end();
                let assigned = (after.starts_with('=') && !after.starts_with("=="))
                    || ["+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>="]
                        .iter()
                        .any(|op| after.starts_with(op))
                    || after.starts_with("++")
                    || after.starts_with("--")
                    || before.ends_with("++")
                    || before.ends_with("--");
                if assigned && !v.assign_lines.contains(&line_no) && line_no != v.decl_line {
                    v.assign_lines.push(line_no);
                }
            }
        }
        v.ref_lines.sort_unstable();
        v.assign_lines.sort_unstable();
    }

    // drop self-referential "calls" that are really control-flow or casts is
    // already handled; also drop calls to the enclosing method declaration line
    let decl_lines: Vec<(String, usize)> = pf
        .methods
        .iter()
        .map(|m| (m.name.clone(), m.span.0))
        .collect();
    pf.calls
        .retain(|c| !decl_lines.iter().any(|(n, l)| *n == c.callee && *l == c.line));

    // called methods per method
    let calls = pf.calls.clone();
    for m in pf.methods.iter_mut() {
        for c in &calls {
            if c.caller.as_deref() == Some(m.name.as_str())
                && m.span.0 <= c.line
                && c.line <= m.span.1
                && !m.called_methods.contains(&c.callee)
            {
                m.called_methods.push(c.callee.clone());
            }
        }
    }
}
