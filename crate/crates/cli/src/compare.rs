use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use agent_forest::eval::EvalResult;
use serde::Serialize;

use crate::{io_err, CliError};

/// The scored cells of one run directory.
#[derive(Debug, Clone)]
pub struct ResultSet {
    pub label: String,
    pub dir: PathBuf,
    pub results: Vec<EvalResult>,
}

pub fn load_result_set(dir: &Path) -> Result<ResultSet, CliError> {
    let path = dir.join("results.jsonl");
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let results: Vec<EvalResult> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::Io(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect::<Result<_, _>>()?;
    let label = results
        .first()
        .map_or_else(|| "empty".to_string(), |r| r.method.clone());
    Ok(ResultSet {
        label,
        dir: dir.to_path_buf(),
        results,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub dataset: String,
    pub records: usize,
    pub means: Vec<f64>,
    /// Columns holding the row maximum; ties mark every tied column.
    pub best: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub columns: Vec<String>,
    pub rows: Vec<ComparisonRow>,
    pub average: ComparisonRow,
}

fn mark_best(means: &[f64]) -> Vec<bool> {
    let top = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    means.iter().map(|&m| m == top).collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mean F1 per dataset and set, restricted to (dataset, record) pairs present
/// in every set.
pub fn compare(sets: &[ResultSet]) -> Result<Comparison, CliError> {
    if sets.len() < 2 {
        return Err(CliError::Config(
            "compare needs at least two result directories".into(),
        ));
    }
    let keys = |s: &ResultSet| -> BTreeSet<(String, String)> {
        s.results
            .iter()
            .map(|r| (r.dataset.clone(), r.record_id.clone()))
            .collect()
    };
    let shared = sets[1..].iter().fold(keys(&sets[0]), |acc, s| {
        acc.intersection(&keys(s)).cloned().collect()
    });
    if shared.is_empty() {
        return Err(CliError::NoOverlap);
    }

    let mut columns: Vec<String> = sets.iter().map(|s| s.label.clone()).collect();
    for i in 0..columns.len() {
        if columns.iter().filter(|c| **c == columns[i]).count() > 1 {
            let dir = sets[i]
                .dir
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or("?");
            columns[i] = format!("{} ({dir})", sets[i].label);
        }
    }

    let mut per_dataset: BTreeMap<&str, usize> = BTreeMap::new();
    for (d, _) in &shared {
        *per_dataset.entry(d.as_str()).or_default() += 1;
    }
    let rows: Vec<ComparisonRow> = per_dataset
        .iter()
        .map(|(&dataset, &records)| {
            let means: Vec<f64> = sets
                .iter()
                .map(|s| {
                    mean(
                        s.results
                            .iter()
                            .filter(|r| {
                                r.dataset == dataset
                                    && shared.contains(&(r.dataset.clone(), r.record_id.clone()))
                            })
                            .map(|r| r.f1),
                    )
                })
                .collect();
            ComparisonRow {
                dataset: dataset.to_string(),
                records,
                best: mark_best(&means),
                means,
            }
        })
        .collect();
    let averages: Vec<f64> = (0..sets.len())
        .map(|c| mean(rows.iter().map(|r| r.means[c])))
        .collect();
    let average = ComparisonRow {
        dataset: "average".into(),
        records: shared.len(),
        best: mark_best(&averages),
        means: averages,
    };
    Ok(Comparison {
        columns,
        rows,
        average,
    })
}

impl Comparison {
    /// Plain-text table in percent; the best value of each row carries `*`.
    pub fn render(&self) -> String {
        let width = self
            .columns
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max(9);
        let mut out = format!("{:<24} {:>7}", "dataset", "records");
        for c in &self.columns {
            out.push_str(&format!(" {c:>width$}"));
        }
        out.push('\n');
        for row in self.rows.iter().chain(std::iter::once(&self.average)) {
            out.push_str(&format!("{:<24} {:>7}", row.dataset, row.records));
            for (m, &best) in row.means.iter().zip(&row.best) {
                let cell = format!("{:.2}{}", 100.0 * m, if best { "*" } else { " " });
                out.push_str(&format!(" {cell:>width$}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn cmd_compare(dirs: &[PathBuf]) -> Result<Comparison, CliError> {
    let sets = dirs
        .iter()
        .map(|d| load_result_set(d))
        .collect::<Result<Vec<_>, _>>()?;
    compare(&sets)
}
