use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PLACEHOLDERS: [&str; 6] = [
    "input_chunk",
    "prev_cu",
    "query",
    "summary",
    "context",
    "input",
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("template `{template}` left placeholder {{{name}}} unresolved")]
    Unresolved { template: String, name: String },
    #[error("template `{template}` has no placeholder {{{name}}}")]
    Unexpected { template: String, name: String },
    #[error("cannot read template `{0}`: {1}")]
    Io(String, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    Worker,
    ManagerSingle,
    ManagerMulti,
    VanillaSingle,
    VanillaMulti,
}

impl TemplateName {
    pub const ALL: [TemplateName; 5] = [
        TemplateName::Worker,
        TemplateName::ManagerSingle,
        TemplateName::ManagerMulti,
        TemplateName::VanillaSingle,
        TemplateName::VanillaMulti,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::Worker => "worker",
            TemplateName::ManagerSingle => "manager_single",
            TemplateName::ManagerMulti => "manager_multi",
            TemplateName::VanillaSingle => "vanilla_single",
            TemplateName::VanillaMulti => "vanilla_multi",
        }
    }

    fn builtin_body(self) -> &'static str {
        match self {
            TemplateName::Worker => include_str!("../../templates/worker.txt"),
            TemplateName::ManagerSingle => include_str!("../../templates/manager_single.txt"),
            TemplateName::ManagerMulti => include_str!("../../templates/manager_multi.txt"),
            TemplateName::VanillaSingle => include_str!("../../templates/vanilla_single.txt"),
            TemplateName::VanillaMulti => include_str!("../../templates/vanilla_multi.txt"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Piece {
    Text(usize, usize),
    Slot(usize),
}

/// A prompt body with `{name}` placeholders drawn from [`PLACEHOLDERS`].
/// Any other brace text is literal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: TemplateName,
    body: String,
}

impl PromptTemplate {
    pub fn new(name: TemplateName, body: impl Into<String>) -> Self {
        Self {
            name,
            body: body.into(),
        }
    }

    pub fn builtin(name: TemplateName) -> Self {
        Self::new(name, name.builtin_body())
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    fn pieces(&self) -> Vec<Piece> {
        let mut pieces = Vec::new();
        let mut text_start = 0;
        let mut i = 0;
        let bytes = self.body.as_bytes();
        while i < bytes.len() {
            if bytes[i] == b'{' {
                let hit = PLACEHOLDERS.iter().position(|p| {
                    self.body[i + 1..].starts_with(p)
                        && self.body[i + 1 + p.len()..].starts_with('}')
                });
                if let Some(slot) = hit {
                    pieces.push(Piece::Text(text_start, i));
                    pieces.push(Piece::Slot(slot));
                    i += PLACEHOLDERS[slot].len() + 2;
                    text_start = i;
                    continue;
                }
            }
            i += 1;
        }
        pieces.push(Piece::Text(text_start, bytes.len()));
        pieces
    }

    /// Placeholder names in order of appearance.
    pub fn placeholders(&self) -> Vec<&'static str> {
        self.pieces()
            .into_iter()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(PLACEHOLDERS[s]),
                Piece::Text(..) => None,
            })
            .collect()
    }

    /// Single-pass substitution: values are never re-scanned for placeholders.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, PromptError> {
        let slots = self.placeholders();
        if let Some((name, _)) = values.iter().find(|(n, _)| !slots.contains(n)) {
            return Err(PromptError::Unexpected {
                template: self.name.as_str().into(),
                name: name.to_string(),
            });
        }
        let mut out = String::with_capacity(
            self.body.len() + values.iter().map(|(_, v)| v.len()).sum::<usize>(),
        );
        for piece in self.pieces() {
            match piece {
                Piece::Text(a, b) => out.push_str(&self.body[a..b]),
                Piece::Slot(s) => {
                    let name = PLACEHOLDERS[s];
                    let value = values
                        .iter()
                        .find(|(n, _)| *n == name)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| PromptError::Unresolved {
                            template: self.name.as_str().into(),
                            name: name.into(),
                        })?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

/// The five prompt templates used by every method.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    templates: Vec<PromptTemplate>,
}

impl PromptSet {
    pub fn builtin() -> Self {
        Self {
            templates: TemplateName::ALL
                .iter()
                .map(|&n| PromptTemplate::builtin(n))
                .collect(),
        }
    }

    /// Loads `<name>.txt` for every template from `dir`, byte for byte.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let templates = TemplateName::ALL
            .iter()
            .map(|&name| {
                let path = dir.join(format!("{}.txt", name.as_str()));
                std::fs::read_to_string(&path)
                    .map(|body| PromptTemplate::new(name, body))
                    .map_err(|e| PromptError::Io(path.display().to_string(), e.to_string()))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { templates })
    }

    pub fn get(&self, name: TemplateName) -> &PromptTemplate {
        self.templates
            .iter()
            .find(|t| t.name == name)
            .expect("every template is present")
    }
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::builtin()
    }
}
