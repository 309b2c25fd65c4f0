use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use agent_forest::agent::PromptSet;
use agent_forest::embedding::{Embedder, HashEmbedder};
use agent_forest::eval::BoxStats;
use agent_forest::eval::{selection_checks, similarity_analysis, PathSelectionCheck};
use agent_forest::pipeline::{audit_trace, Method};
use agent_forest::{RunTrace, WhitespaceTokenizer};
use serde::Serialize;

use crate::config::RunConfig;
use crate::run::build_embedder;
use crate::{io_err, CliError};

#[derive(Debug, Clone, Default)]
pub struct AnalyzeOptions {
    /// Config naming the embedder, used when a run directory has no snapshot.
    pub config: Option<PathBuf>,
    /// Where to write the reports; the first directory when absent.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceFinding {
    pub file: String,
    pub method: Method,
    pub violations: Vec<String>,
    pub selection: Vec<PathSelectionCheck<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub embedder: String,
    pub traces: usize,
    pub failed_runs: usize,
    pub findings: Vec<TraceFinding>,
    pub similarity: Vec<(Method, String, f64)>,
    pub per_method: BTreeMap<Method, BoxStats<f64>>,
    /// Forest paths whose last greedy score is below their best single chunk.
    pub final_step_shortfalls: usize,
    pub forest_paths: usize,
}

impl AnalysisReport {
    pub fn violations(&self) -> Vec<String> {
        self.findings
            .iter()
            .flat_map(|f| f.violations.iter().map(move |v| format!("{}: {v}", f.file)))
            .collect()
    }

    pub fn stats_tsv(&self) -> String {
        let mut out =
            "method\tn\tmean\tmedian\tq1\tq3\tiqr\tlower_whisker\tupper_whisker\tmin\tmax\n"
                .to_string();
        for (m, s) in &self.per_method {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                m.as_str(),
                s.n,
                s.mean,
                s.median,
                s.q1,
                s.q3,
                s.iqr,
                s.lower_whisker,
                s.upper_whisker,
                s.min,
                s.max
            ));
        }
        out
    }

    pub fn similarity_tsv(&self) -> String {
        let mut out = "method\ttrace\tsimilarity\n".to_string();
        for (m, file, s) in &self.similarity {
            out.push_str(&format!("{}\t{file}\t{s}\n", m.as_str()));
        }
        out
    }
}

fn traces_dir(dir: &Path) -> PathBuf {
    let nested = dir.join("traces");
    if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    }
}

fn embedder_for(
    dirs: &[PathBuf],
    opts: &AnalyzeOptions,
) -> Result<Box<dyn Embedder<f64>>, CliError> {
    let snapshot = dirs
        .iter()
        .map(|d| d.join("config.toml"))
        .find(|p| p.is_file());
    match snapshot.or_else(|| opts.config.clone()) {
        Some(path) => {
            let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            // Only the embedder section matters; the snapshot's paths may no longer exist.
            let cfg = RunConfig::parse(&text, &[])?;
            build_embedder(&cfg)
        }
        None => Ok(Box::new(HashEmbedder::new(256, 0))),
    }
}

fn load_traces(dirs: &[PathBuf]) -> Result<Vec<(String, RunTrace<f64>)>, CliError> {
    let mut out = Vec::new();
    for dir in dirs {
        let tdir = traces_dir(dir);
        let mut files: Vec<PathBuf> = fs::read_dir(&tdir)
            .map_err(|e| io_err(&tdir, e))?
            .map(|e| e.map(|e| e.path()).map_err(|err| io_err(&tdir, err)))
            .collect::<Result<Vec<_>, _>>()?;
        files.retain(|p| p.extension().is_some_and(|x| x == "jsonl"));
        files.sort();
        for path in files {
            let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            let trace = RunTrace::from_jsonl(&text)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            out.push((path.display().to_string(), trace));
        }
    }
    Ok(out)
}

/// Audits every trace, checks forest selection scores and measures
/// query-to-compressed-input similarity per method.
pub fn analyze(dirs: &[PathBuf], opts: &AnalyzeOptions) -> Result<AnalysisReport, CliError> {
    let traces = load_traces(dirs)?;
    if traces.is_empty() {
        return Err(CliError::EmptyInput(format!(
            "no traces found in {} director(ies)",
            dirs.len()
        )));
    }
    let embedder = embedder_for(dirs, opts)?;
    let identity = embedder.identity();
    let prompts = PromptSet::builtin();
    let tokenizer = WhitespaceTokenizer;
    let provider = |e: agent_forest::embedding::EmbeddingError| CliError::Provider(e.to_string());

    let mut findings = Vec::with_capacity(traces.len());
    for (file, trace) in &traces {
        let mut violations: Vec<String> = Vec::new();
        let mismatch = trace.embedder.as_ref().filter(|used| **used != identity);
        if let Some(used) = mismatch {
            violations.push(format!(
                "[embedder] trace used {used}, analysis has {identity}"
            ));
        }
        let mut selection = Vec::new();
        if mismatch.is_none() {
            violations.extend(
                audit_trace(trace, embedder.as_ref(), &tokenizer, &prompts)
                    .iter()
                    .map(|v| v.to_string()),
            );
            selection = selection_checks(trace, embedder.as_ref()).map_err(provider)?;
            for c in selection.iter().filter(|c| !c.first_step_holds()) {
                violations.push(format!(
                    "[selection] path {}: first score {} below best single chunk {}",
                    c.path, c.first_score, c.best_single
                ));
            }
        }
        findings.push(TraceFinding {
            file: file.clone(),
            method: trace.method,
            violations,
            selection,
        });
    }

    let completed: Vec<&(String, RunTrace<f64>)> =
        traces.iter().filter(|(_, t)| t.error.is_none()).collect();
    let owned: Vec<RunTrace<f64>> = completed.iter().map(|(_, t)| t.clone()).collect();
    let (similarity, per_method) = if owned.is_empty() {
        (Vec::new(), BTreeMap::new())
    } else {
        let report = similarity_analysis(&owned, embedder.as_ref()).map_err(provider)?;
        let points = report
            .points
            .iter()
            .map(|p| (p.method, completed[p.trace].0.clone(), p.similarity))
            .collect();
        (points, report.per_method)
    };

    let checks = findings.iter().flat_map(|f| &f.selection);
    let forest_paths = checks.clone().count();
    let final_step_shortfalls = checks.filter(|c| !c.final_step_holds()).count();
    Ok(AnalysisReport {
        embedder: identity,
        traces: traces.len(),
        failed_runs: traces.len() - completed.len(),
        findings,
        similarity,
        per_method,
        final_step_shortfalls,
        forest_paths,
    })
}

/// Runs [`analyze`], writes `analysis.json`, `similarity.tsv` and
/// `stats.tsv`, and fails with the violations if any trace broke an audit.
pub fn cmd_analyze(dirs: &[PathBuf], opts: &AnalyzeOptions) -> Result<AnalysisReport, CliError> {
    if dirs.is_empty() {
        return Err(CliError::EmptyInput("no directories given".into()));
    }
    let report = analyze(dirs, opts)?;
    let out = opts.out_dir.clone().unwrap_or_else(|| dirs[0].clone());
    fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    for (name, body) in [
        ("analysis.json", json),
        ("similarity.tsv", report.similarity_tsv()),
        ("stats.tsv", report.stats_tsv()),
    ] {
        let path = out.join(name);
        fs::write(&path, body).map_err(|e| io_err(&path, e))?;
    }
    let violations = report.violations();
    if violations.is_empty() {
        Ok(report)
    } else {
        Err(CliError::AuditFailure(violations))
    }
}
