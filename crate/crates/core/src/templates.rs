//! Plain-text prompt templates with a version header line.
//!
//! Templates live as files in a directory so deployments can tune wording;
//! the shipped defaults are embedded and can be materialized with
//! [`materialize_defaults`].

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("missing template file: {0}")]
    MissingTemplateFile(String),
    #[error("malformed template {file}: {reason}")]
    MalformedTemplate { file: String, reason: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub const TEMPLATE_FILES: [(&str, &str); 8] = [
    ("transform_task.txt", include_str!("../templates/transform_task.txt")),
    ("transform_definition.txt", include_str!("../templates/transform_definition.txt")),
    ("transform_template.txt", include_str!("../templates/transform_template.txt")),
    ("repair_role.txt", include_str!("../templates/repair_role.txt")),
    ("repair_context.txt", include_str!("../templates/repair_context.txt")),
    ("repair_steps.txt", include_str!("../templates/repair_steps.txt")),
    ("generation_task.txt", include_str!("../templates/generation_task.txt")),
    ("agent_prompt.txt", include_str!("../templates/agent_prompt.txt")),
];

/// Write the embedded default templates into `dir` (creating it).
pub fn materialize_defaults(dir: &Path) -> Result<(), TemplateError> {
    std::fs::create_dir_all(dir)?;
    for (name, content) in TEMPLATE_FILES {
        std::fs::write(dir.join(name), content)?;
    }
    Ok(())
}

/// Load one template file, dropping the version header line.
pub fn load(dir: &Path, name: &str) -> Result<String, TemplateError> {
    let path = dir.join(name);
    let text = std::fs::read_to_string(&path)
        .map_err(|_| TemplateError::MissingTemplateFile(path.display().to_string()))?;
    let body = match text.split_once('\n') {
        Some((first, rest)) if first.starts_with("# template-version") => rest,
        _ => text.as_str(),
    };
    let body = body.trim();
    if body.is_empty() {
        return Err(TemplateError::MalformedTemplate {
            file: name.to_string(),
            reason: "empty body".to_string(),
        });
    }
    Ok(body.to_string())
}
