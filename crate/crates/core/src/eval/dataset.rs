use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QARecord {
    pub record_id: String,
    pub dataset: String,
    pub context: String,
    pub input: String,
    pub answers: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DatasetError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: invalid JSON: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: missing or invalid field `{field}`")]
    MissingField { line: usize, field: String },
}

impl DatasetError {
    pub fn line(&self) -> Option<usize> {
        match self {
            DatasetError::Io { .. } => None,
            DatasetError::Parse { line, .. } | DatasetError::MissingField { line, .. } => {
                Some(*line)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum LoadMode {
    /// First malformed line aborts the load.
    #[default]
    Strict,
    /// Malformed lines are reported and skipped.
    Lenient,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadedDataset {
    pub records: Vec<QARecord>,
    pub skipped: Vec<DatasetError>,
}

fn parse_line(line_no: usize, line: &str, default_dataset: &str) -> Result<QARecord, DatasetError> {
    let value: Value = serde_json::from_str(line).map_err(|e| DatasetError::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    let missing = |field: &str| DatasetError::MissingField {
        line: line_no,
        field: field.to_string(),
    };
    let text = |field: &str| -> Result<String, DatasetError> {
        match value.get(field).and_then(Value::as_str) {
            Some(s) if !s.trim().is_empty() => Ok(s.to_string()),
            _ => Err(missing(field)),
        }
    };
    let context = text("context")?;
    let input = text("input")?;
    let answers: Vec<String> = value
        .get("answers")
        .and_then(Value::as_array)
        .ok_or_else(|| missing("answers"))?
        .iter()
        .map(|a| {
            a.as_str()
                .map(str::to_string)
                .ok_or_else(|| missing("answers"))
        })
        .collect::<Result<_, _>>()?;
    if answers.is_empty() {
        return Err(missing("answers"));
    }
    let record_id = match value.get("_id").or_else(|| value.get("record_id")) {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => format!("{default_dataset}-{line_no}"),
    };
    let dataset = value
        .get("dataset")
        .and_then(Value::as_str)
        .unwrap_or(default_dataset)
        .to_string();
    Ok(QARecord {
        record_id,
        dataset,
        context,
        input,
        answers,
    })
}

/// Parses LongBench-style JSON lines with `context`, `input`, `answers` and
/// optional `dataset` / `_id` (or `record_id`). Blank lines are ignored; line numbers are 1-based.
pub fn parse_dataset(
    text: &str,
    default_dataset: &str,
    mode: LoadMode,
) -> Result<LoadedDataset, DatasetError> {
    let mut out = LoadedDataset::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(i + 1, line, default_dataset) {
            Ok(r) => out.records.push(r),
            Err(e) if mode == LoadMode::Lenient => {
                log::warn!("skipping malformed record: {e}");
                out.skipped.push(e);
            }
            Err(e) => return Err(e),
        }
    }
    if out.records.is_empty() && out.skipped.is_empty() {
        log::warn!("dataset `{default_dataset}` contains no records");
    }
    Ok(out)
}

/// Loads a dataset file; the file stem is the default dataset name.
pub fn load_dataset(path: &Path, mode: LoadMode) -> Result<LoadedDataset, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset");
    parse_dataset(&text, stem, mode)
}
