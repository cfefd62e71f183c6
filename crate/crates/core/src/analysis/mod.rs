//! Project model and the code-analysis tool library.
//!
//! [`build_index`] parses a workspace into an immutable [`SourceIndex`];
//! the tool functions below are read-only queries over it. Dataflow is
//! intra-procedural and flow-insensitive across branches; method resolution
//! is name-based, so overloads report together.

mod parser;
pub mod registry;

pub use registry::{ToolError as RegistryError, ToolRegistry};

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

/// Selects a registered source-language analyzer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LanguageProfile {
    /// The shipped reference frontend: Java-like subset.
    JavaSubset,
}

impl LanguageProfile {
    fn extensions(&self) -> &'static [&'static str] {
        match self {
            LanguageProfile::JavaSubset => &["java"],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub lines: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassRecord {
    pub name: String,
    pub file: String,
    pub span: (usize, usize),
    pub field_names: Vec<String>,
    pub method_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlFlowConstruct {
    pub kind: String,
    pub line: usize,
    /// Nesting depth relative to the method body (0 = top level of the body).
    pub depth: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodRecord {
    pub name: String,
    pub signature: String,
    pub file: String,
    pub class: Option<String>,
    pub span: (usize, usize),
    pub params: Vec<(String, String)>,
    pub locals: Vec<String>,
    pub called_methods: Vec<String>,
    pub control_flow: Vec<ControlFlowConstruct>,
    pub body_depth: usize,
    pub has_body: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum VariableScope {
    Field { class: String },
    Local { method: String },
    Param { method: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariableRecord {
    pub name: String,
    pub file: String,
    pub scope: VariableScope,
    pub decl_line: usize,
    /// Sites where the variable receives a value (declaration-with-initializer,
    /// assignment, compound assignment, increment/decrement; parameters at
    /// their declaration site).
    pub assign_lines: Vec<usize>,
    /// All non-declaration occurrences within the scope.
    pub ref_lines: Vec<usize>,
    pub var_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub callee: String,
    pub file: String,
    pub line: usize,
    pub caller: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileParseError {
    pub file: String,
    pub line: usize,
    pub message: String,
}

/// Immutable parsed project model. Safe to share across concurrent readers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceIndex {
    pub files: Vec<FileRecord>,
    pub classes: Vec<ClassRecord>,
    pub methods: Vec<MethodRecord>,
    pub variables: Vec<VariableRecord>,
    pub imports: BTreeMap<String, Vec<String>>,
    pub calls: Vec<CallRecord>,
    /// Per-file parse failures; affected files are skipped, the build continues.
    pub parse_errors: Vec<FileParseError>,
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("workspace contains no source files: {0}")]
    EmptyWorkspace(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ToolError {
    #[error("unknown file: {0}")]
    UnknownFile(String),
    #[error("unknown method: {0}")]
    UnknownMethod(String),
    #[error("unknown class: {0}")]
    UnknownClass(String),
}

impl SourceIndex {
    pub fn file(&self, path: &str) -> Option<&FileRecord> {
        self.files.iter().find(|f| f.path == path)
    }

    fn require_file(&self, path: &str) -> Result<&FileRecord, ToolError> {
        self.file(path)
            .ok_or_else(|| ToolError::UnknownFile(path.to_string()))
    }

    /// Method whose span contains `line` in `file`, if any.
    pub fn method_at(&self, file: &Path, line: usize) -> Option<&MethodRecord> {
        let file = file.to_string_lossy();
        self.methods
            .iter()
            .filter(|m| m.file == file && m.span.0 <= line && line <= m.span.1)
            .min_by_key(|m| m.span.1 - m.span.0)
    }

    /// Slice of file text covering a 1-based inclusive span.
    pub fn slice(&self, file: &str, span: (usize, usize)) -> Option<String> {
        let f = self.file(file)?;
        if span.0 == 0 || span.1 > f.lines.len() {
            return None;
        }
        Some(f.lines[span.0 - 1..span.1].join("\n"))
    }
}

/// Build a [`SourceIndex`] over a workspace tree. Files that fail to parse
/// are recorded in `parse_errors` and skipped.
pub fn build_index(
    workspace_root: &Path,
    profile: LanguageProfile,
) -> Result<SourceIndex, AnalysisError> {
    let mut index = SourceIndex {
        files: Vec::new(),
        classes: Vec::new(),
        methods: Vec::new(),
        variables: Vec::new(),
        imports: BTreeMap::new(),
        calls: Vec::new(),
        parse_errors: Vec::new(),
    };

    let mut paths: Vec<_> = WalkDir::new(workspace_root)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .filter(|e| {
            e.path()
                .extension()
                .and_then(|x| x.to_str())
                .map(|x| profile.extensions().contains(&x))
                .unwrap_or(false)
        })
        .map(|e| e.into_path())
        .collect();
    paths.sort();

    if paths.is_empty() {
        return Err(AnalysisError::EmptyWorkspace(
            workspace_root.display().to_string(),
        ));
    }

    for path in paths {
        let rel = path
            .strip_prefix(workspace_root)
            .unwrap_or(&path)
            .to_string_lossy()
            .replace('\\', "/");
        let text = std::fs::read_to_string(&path)?;
        match parser::parse_file(&rel, &text) {
            Ok(pf) => {
                index.files.push(FileRecord {
                    path: rel.clone(),
                    lines: text.lines().map(|l| l.to_string()).collect(),
                });
                index.classes.extend(pf.classes);
                index.methods.extend(pf.methods);
                index.variables.extend(pf.variables);
                index.calls.extend(pf.calls);
                index.imports.insert(rel, pf.imports);
            }
            Err(e) => index.parse_errors.push(e),
        }
    }
    Ok(index)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariableReport {
    pub name: String,
    pub file: String,
    pub declarations: Vec<(usize, String)>, // (line, scope description)
    pub references: Vec<usize>,
}

/// Declaration and reference sites of a variable within one file. An unknown
/// name yields an empty report rather than an error: agents probe.
pub fn identify_variable(
    index: &SourceIndex,
    name: &str,
    file: &str,
) -> Result<VariableReport, ToolError> {
    index.require_file(file)?;
    let mut declarations = Vec::new();
    let mut references = Vec::new();
    for v in index.variables.iter().filter(|v| v.name == name && v.file == file) {
        let scope = match &v.scope {
            VariableScope::Field { class } => format!("field of {class}"),
            VariableScope::Local { method } => format!("local in {method}"),
            VariableScope::Param { method } => format!("parameter of {method}"),
        };
        declarations.push((v.decl_line, scope));
        references.extend(v.ref_lines.iter().copied());
    }
    references.sort_unstable();
    references.dedup();
    Ok(VariableReport {
        name: name.to_string(),
        file: file.to_string(),
        declarations,
        references,
    })
}

fn scoped_vars<'a>(
    index: &'a SourceIndex,
    name: &str,
    file: &str,
    method: Option<&str>,
) -> Vec<&'a VariableRecord> {
    index
        .variables
        .iter()
        .filter(|v| v.name == name && v.file == file)
        .filter(|v| match (method, &v.scope) {
            (None, _) => true,
            (Some(m), VariableScope::Local { method }) => method == m,
            (Some(m), VariableScope::Param { method }) => method == m,
            (Some(_), VariableScope::Field { .. }) => false,
        })
        .collect()
}

/// All sites where the variable receives a value.
pub fn find_variable_assignments(
    index: &SourceIndex,
    name: &str,
    file: &str,
    method: Option<&str>,
) -> Result<Vec<usize>, ToolError> {
    index.require_file(file)?;
    let mut sites: Vec<usize> = scoped_vars(index, name, file, method)
        .iter()
        .flat_map(|v| v.assign_lines.iter().copied())
        .collect();
    sites.sort_unstable();
    sites.dedup();
    Ok(sites)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefUseChain {
    pub def_line: usize,
    pub use_lines: Vec<usize>,
}

/// Ordered def-use chains: for each assignment site, the reference sites
/// after it and before the next assignment. Uses in either branch of a
/// conditional attach to the dominating def (flow-insensitive).
pub fn track_variable_dataflow(
    index: &SourceIndex,
    name: &str,
    file: &str,
    method: Option<&str>,
) -> Result<Vec<DefUseChain>, ToolError> {
    index.require_file(file)?;
    let mut chains = Vec::new();
    for v in scoped_vars(index, name, file, method) {
        let mut defs = v.assign_lines.clone();
        if defs.is_empty() {
            defs.push(v.decl_line);
        }
        defs.sort_unstable();
        defs.dedup();
        let uses: Vec<usize> = v
            .ref_lines
            .iter()
            .copied()
            .filter(|l| !defs.contains(l))
            .collect();
        for (i, def) in defs.iter().enumerate() {
            let next = defs.get(i + 1).copied().unwrap_or(usize::MAX);
            let mut chain: Vec<usize> = uses
                .iter()
                .copied()
                .filter(|&u| (u > *def || (i == 0 && u <= *def)) && u <= next.saturating_sub(1))
                .collect();
            chain.sort_unstable();
            chains.push(DefUseChain {
                def_line: *def,
                use_lines: chain,
            });
        }
    }
    Ok(chains)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallSite {
    pub file: String,
    pub line: usize,
    pub enclosing_method: Option<String>,
}

/// All call sites of a method, name-based across the whole index.
pub fn trace_method_usage(index: &SourceIndex, method_name: &str) -> Vec<CallSite> {
    index
        .calls
        .iter()
        .filter(|c| c.callee == method_name)
        .map(|c| CallSite {
            file: c.file.clone(),
            line: c.line,
            enclosing_method: c.caller.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodReport {
    pub name: String,
    pub signature: String,
    pub file: String,
    pub span: (usize, usize),
    pub parameters: Vec<(String, String)>,
    pub locals: Vec<String>,
    pub called_methods: Vec<String>,
    pub control_flow: Vec<ControlFlowConstruct>,
    pub has_body: bool,
}

/// Structured report over one method (all same-name overloads in the file).
pub fn analyze_method_details(
    index: &SourceIndex,
    method_name: &str,
    file: &str,
) -> Result<Vec<MethodReport>, ToolError> {
    index.require_file(file)?;
    let reports: Vec<MethodReport> = index
        .methods
        .iter()
        .filter(|m| m.name == method_name && m.file == file)
        .map(|m| MethodReport {
            name: m.name.clone(),
            signature: m.signature.clone(),
            file: m.file.clone(),
            span: m.span,
            parameters: m.params.clone(),
            locals: m.locals.clone(),
            called_methods: m.called_methods.clone(),
            control_flow: m.control_flow.clone(),
            has_body: m.has_body,
        })
        .collect();
    if reports.is_empty() {
        return Err(ToolError::UnknownMethod(method_name.to_string()));
    }
    Ok(reports)
}

/// Internal control-flow constructs of a method in one file.
pub fn find_method_in_file(
    index: &SourceIndex,
    method_name: &str,
    file: &str,
) -> Result<Vec<ControlFlowConstruct>, ToolError> {
    index.require_file(file)?;
    let mut found = false;
    let mut out = Vec::new();
    for m in index
        .methods
        .iter()
        .filter(|m| m.name == method_name && m.file == file)
    {
        found = true;
        out.extend(m.control_flow.iter().cloned());
    }
    if !found {
        return Err(ToolError::UnknownMethod(method_name.to_string()));
    }
    Ok(out)
}

/// Definition locations of a class; same-named classes in different files
/// all report.
pub fn find_class_loc(
    index: &SourceIndex,
    class_name: &str,
) -> Result<Vec<(String, (usize, usize))>, ToolError> {
    let locs: Vec<_> = index
        .classes
        .iter()
        .filter(|c| c.name == class_name)
        .map(|c| (c.file.clone(), c.span))
        .collect();
    if locs.is_empty() {
        return Err(ToolError::UnknownClass(class_name.to_string()));
    }
    Ok(locs)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassReport {
    pub name: String,
    pub file: String,
    pub span: (usize, usize),
    pub text: String,
    pub fields: Vec<String>,
    pub methods: Vec<String>,
}

/// Full class text plus member summary.
pub fn identify_class(index: &SourceIndex, class_name: &str) -> Result<ClassReport, ToolError> {
    let c = index
        .classes
        .iter()
        .find(|c| c.name == class_name)
        .ok_or_else(|| ToolError::UnknownClass(class_name.to_string()))?;
    let text = index.slice(&c.file, c.span).unwrap_or_default();
    Ok(ClassReport {
        name: c.name.clone(),
        file: c.file.clone(),
        span: c.span,
        text,
        fields: c.field_names.clone(),
        methods: c.method_names.clone(),
    })
}

/// Import declarations of a file, in file order.
pub fn get_imports(index: &SourceIndex, file: &str) -> Result<Vec<String>, ToolError> {
    index.require_file(file)?;
    Ok(index.imports.get(file).cloned().unwrap_or_default())
}
