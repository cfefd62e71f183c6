//! JSON-argument dispatch surface for the tool library.
//!
//! All ten tool names are registered up front; arg schemas are validated
//! before dispatch. `example_retrieval` is wired in by the caller because it
//! closes over the example store and embedder.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::{json, Value};
use thiserror::Error;

use super::{
    analyze_method_details, find_class_loc, find_method_in_file, find_variable_assignments,
    get_imports, identify_class, identify_variable, trace_method_usage, track_variable_dataflow,
    SourceIndex,
};

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("unknown tool: {0}")]
    UnknownTool(String),
    #[error("tool {tool}: missing or mistyped argument `{arg}` (expected {expected})")]
    BadArgs {
        tool: String,
        arg: String,
        expected: &'static str,
    },
    #[error("tool {tool}: {message}")]
    Failed { tool: String, message: String },
}

pub type ToolHandler = Box<dyn Fn(&Value) -> Result<Value, ToolError> + Send + Sync>;

struct ToolDescriptor {
    /// (name, type, required)
    arg_schema: Vec<(&'static str, &'static str, bool)>,
    handler: ToolHandler,
}

/// The Table-style tool library exposed to the reasoning agent.
pub struct ToolRegistry {
    tools: BTreeMap<String, ToolDescriptor>,
}

pub const TOOL_NAMES: [&str; 10] = [
    "identify_variable",
    "find_variable_assignments",
    "track_variable_dataflow",
    "trace_method_usage",
    "analyze_method_details",
    "find_method_in_file",
    "find_class_loc",
    "identify_class",
    "get_imports",
    "example_retrieval",
];

fn req_str(tool: &str, args: &Value, key: &str) -> Result<String, ToolError> {
    args.get(key)
        .and_then(|v| v.as_str())
        .map(|s| s.to_string())
        .ok_or_else(|| ToolError::BadArgs {
            tool: tool.to_string(),
            arg: key.to_string(),
            expected: "string",
        })
}

fn opt_str(args: &Value, key: &str) -> Option<String> {
    args.get(key).and_then(|v| v.as_str()).map(|s| s.to_string())
}

fn to_json<T: serde::Serialize>(tool: &str, v: Result<T, super::ToolError>) -> Result<Value, ToolError> {
    match v {
        Ok(v) => serde_json::to_value(v).map_err(|e| ToolError::Failed {
            tool: tool.to_string(),
            message: e.to_string(),
        }),
        Err(e) => Err(ToolError::Failed {
            tool: tool.to_string(),
            message: e.to_string(),
        }),
    }
}

impl ToolRegistry {
    /// Registry over an index, with `example_retrieval` backed by the given
    /// closure (typically `agent::retrieve_example` over a loaded store).
    pub fn new(index: Arc<SourceIndex>, example_retrieval: ToolHandler) -> Self {
        let mut tools = BTreeMap::new();

        macro_rules! register {
            ($name:literal, $schema:expr, $handler:expr) => {
                tools.insert(
                    $name.to_string(),
                    ToolDescriptor {
                        arg_schema: $schema,
                        handler: Box::new($handler),
                    },
                );
            };
        }

        let ix = index.clone();
        register!(
            "identify_variable",
            vec![("name", "string", true), ("file", "string", true)],
            move |args: &Value| {
                let name = req_str("identify_variable", args, "name")?;
                let file = req_str("identify_variable", args, "file")?;
                to_json("identify_variable", identify_variable(&ix, &name, &file))
            }
        );

        let ix = index.clone();
        register!(
            "find_variable_assignments",
            vec![
                ("name", "string", true),
                ("file", "string", true),
                ("method", "string", false)
            ],
            move |args: &Value| {
                let name = req_str("find_variable_assignments", args, "name")?;
                let file = req_str("find_variable_assignments", args, "file")?;
                let method = opt_str(args, "method");
                to_json(
                    "find_variable_assignments",
                    find_variable_assignments(&ix, &name, &file, method.as_deref()),
                )
            }
        );

        let ix = index.clone();
        register!(
            "track_variable_dataflow",
            vec![
                ("name", "string", true),
                ("file", "string", true),
                ("method", "string", false)
            ],
            move |args: &Value| {
                let name = req_str("track_variable_dataflow", args, "name")?;
                let file = req_str("track_variable_dataflow", args, "file")?;
                let method = opt_str(args, "method");
                to_json(
                    "track_variable_dataflow",
                    track_variable_dataflow(&ix, &name, &file, method.as_deref()),
                )
            }
        );

        let ix = index.clone();
        register!(
            "trace_method_usage",
            vec![("method", "string", true)],
            move |args: &Value| {
                let method = req_str("trace_method_usage", args, "method")?;
                serde_json::to_value(trace_method_usage(&ix, &method)).map_err(|e| {
                    ToolError::Failed {
                        tool: "trace_method_usage".to_string(),
                        message: e.to_string(),
                    }
                })
            }
        );

        let ix = index.clone();
        register!(
            "analyze_method_details",
            vec![("method", "string", true), ("file", "string", true)],
            move |args: &Value| {
                let method = req_str("analyze_method_details", args, "method")?;
                let file = req_str("analyze_method_details", args, "file")?;
                to_json(
                    "analyze_method_details",
                    analyze_method_details(&ix, &method, &file),
                )
            }
        );

        let ix = index.clone();
        register!(
            "find_method_in_file",
            vec![("method", "string", true), ("file", "string", true)],
            move |args: &Value| {
                let method = req_str("find_method_in_file", args, "method")?;
                let file = req_str("find_method_in_file", args, "file")?;
                to_json(
                    "find_method_in_file",
                    find_method_in_file(&ix, &method, &file),
                )
            }
        );

        let ix = index.clone();
        register!(
            "find_class_loc",
            vec![("class", "string", true)],
            move |args: &Value| {
                let class = req_str("find_class_loc", args, "class")?;
                to_json("find_class_loc", find_class_loc(&ix, &class))
            }
        );

        let ix = index.clone();
        register!(
            "identify_class",
            vec![("class", "string", true)],
            move |args: &Value| {
                let class = req_str("identify_class", args, "class")?;
                to_json("identify_class", identify_class(&ix, &class))
            }
        );

        let ix = index.clone();
        register!(
            "get_imports",
            vec![("file", "string", true)],
            move |args: &Value| {
                let file = req_str("get_imports", args, "file")?;
                to_json("get_imports", get_imports(&ix, &file))
            }
        );

        register!(
            "example_retrieval",
            vec![
                ("buggy_code", "string", true),
                ("root_cause", "string", true)
            ],
            example_retrieval
        );

        ToolRegistry { tools }
    }

    /// A registry with `example_retrieval` returning "no example"; used when
    /// no store is configured.
    pub fn without_store(index: Arc<SourceIndex>) -> Self {
        Self::new(
            index,
            Box::new(|_args| Ok(json!({ "example": null }))),
        )
    }

    pub fn names(&self) -> Vec<&str> {
        self.tools.keys().map(|s| s.as_str()).collect()
    }

    pub fn describe(&self, name: &str) -> Option<String> {
        self.tools.get(name).map(|d| {
            let args: Vec<String> = d
                .arg_schema
                .iter()
                .map(|(n, t, r)| {
                    if *r {
                        format!("{n}: {t}")
                    } else {
                        format!("{n}?: {t}")
                    }
                })
                .collect();
            format!("{name}({})", args.join(", "))
        })
    }

    /// Validate args against the schema, then dispatch.
    pub fn call(&self, name: &str, args: &Value) -> Result<Value, ToolError> {
        let d = self
            .tools
            .get(name)
            .ok_or_else(|| ToolError::UnknownTool(name.to_string()))?;
        for (arg, ty, required) in &d.arg_schema {
            match args.get(arg) {
                None if *required => {
                    return Err(ToolError::BadArgs {
                        tool: name.to_string(),
                        arg: arg.to_string(),
                        expected: ty,
                    })
                }
                Some(v) if *ty == "string" && !v.is_string() => {
                    return Err(ToolError::BadArgs {
                        tool: name.to_string(),
                        arg: arg.to_string(),
                        expected: ty,
                    })
                }
                _ => {}
            }
        }
        (d.handler)(args)
    }
}
