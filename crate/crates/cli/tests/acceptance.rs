//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Every check compares the implementation against an oracle written here
//! (hand cosine, brute-force optima, closed forms, hand-computed values).
//! The process fails when a criterion fails unless it is listed in
//! `KNOWN_UNATTAINABLE`, whose failures are still printed as FAIL.

use std::collections::BTreeMap;
use std::fs;
use std::panic;
use std::path::{Path, PathBuf};
use std::time::Instant;

use agent_forest::agent::{
    render_manager_prompt, render_vanilla_prompt, render_worker_prompt, AgentRunConfig,
    MockBackend, PromptSet, TaskKind, TemplateName,
};
use agent_forest::cluster::{cluster_with_history, partition_cost, ClusterMethod};
use agent_forest::embedding::{Embedder, EmbeddingVector, HashEmbedder};
use agent_forest::eval::qa_f1;
use agent_forest::forest::{SelectionPolicy, CANDIDATE_SEPARATOR};
use agent_forest::pipeline::{
    run_coa, run_goa, run_parallel_agents, run_rag, run_vanilla, AgentRole, RunTrace,
};
use agent_forest::retrieval::{RagOrder, Retriever};
use agent_forest::synth::{synthetic_corpus, synthetic_record, SynthSpec};
use agent_forest_cli::analyze::AnalyzeOptions;
use agent_forest_cli::{cmd_analyze, cmd_run, CliError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that cannot hold as stated; see the README.
const KNOWN_UNATTAINABLE: &[u32] = &[9];

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;
type Criterion = Box<dyn Fn() -> Verdict>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn manifest() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn small_cfg(k: usize, seed: u64) -> AgentRunConfig {
    AgentRunConfig {
        t_max: 320,
        worker_max_tokens: 30,
        manager_max_tokens: 24,
        k,
        seed,
        ..AgentRunConfig::default()
    }
}

fn small_spec() -> SynthSpec {
    SynthSpec {
        paragraphs: 8,
        sentences: (8, 16),
    }
}

fn embedder() -> HashEmbedder {
    HashEmbedder::new(256, 0)
}

fn hand_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn embed(e: &HashEmbedder, text: &str) -> Vec<f64> {
    let v: EmbeddingVector<f64> = e.embed(text).expect("hash embedding");
    v.values().to_vec()
}

/// Every greedy step picked a candidate with the highest re-scored cosine.
fn greedy_argmax() -> Check {
    let started = Instant::now();
    let e = embedder();
    let mut steps = 0;
    for fixture in 0..50u64 {
        let r = synthetic_record(1000 + fixture, &small_spec());
        let k = 1 + fixture as usize % 3;
        let cfg = AgentRunConfig {
            clustering: [ClusterMethod::KMedoids, ClusterMethod::KMeans][fixture as usize % 2],
            ..small_cfg(k, fixture)
        };
        let trace: RunTrace<f64> = run_goa(&r.context, &r.input, &cfg, &e, &MockBackend::new())
            .map_err(|f| f.error.to_string())?;
        ensure(trace.chunks.len() <= 8, || {
            format!("fixture {fixture}: {} chunks", trace.chunks.len())
        })?;
        let q = embed(&e, &r.input);
        for path in &trace.forest.as_ref().ok_or("no forest")?.paths {
            let mut remaining: Vec<usize> = path.member_ids.iter().copied().collect();
            let mut prev = String::new();
            for (step, &chosen) in path.order.iter().enumerate() {
                let scored: Vec<(usize, f64)> = remaining
                    .iter()
                    .map(|&id| {
                        let text = &trace.chunks[id].text;
                        let cand = if prev.is_empty() {
                            text.clone()
                        } else {
                            format!("{prev}{CANDIDATE_SEPARATOR}{text}")
                        };
                        (id, hand_cosine(&q, &embed(&e, &cand)))
                    })
                    .collect();
                let best = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
                let got = scored
                    .iter()
                    .find(|s| s.0 == chosen)
                    .ok_or_else(|| format!("fixture {fixture}: chunk {chosen} not remaining"))?
                    .1;
                ensure(got >= best - 1e-12, || {
                    format!(
                        "fixture {fixture} path {} step {step}: {got} < {best}",
                        path.cluster_index
                    )
                })?;
                ensure((path.selection_scores[step] - best).abs() <= 1e-12, || {
                    format!(
                        "fixture {fixture}: recorded score {} vs oracle {best}",
                        path.selection_scores[step]
                    )
                })?;
                remaining.retain(|&id| id != chosen);
                prev = path.summaries[step].clone();
                steps += 1;
            }
            ensure(remaining.is_empty(), || {
                format!("fixture {fixture}: path left chunks unvisited")
            })?;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 30.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "{steps} selection steps over 50 fixtures in {secs:.1}s"
    ))
}

/// One document-ordered path issues exactly the chain's calls.
fn chain_reduction() -> Check {
    for fixture in 0..20u64 {
        let r = synthetic_record(2000 + fixture, &small_spec());
        let cfg = AgentRunConfig {
            selection: SelectionPolicy::DocumentOrder,
            ..small_cfg(1, fixture)
        };
        let goa: RunTrace<f64> =
            run_goa(&r.context, &r.input, &cfg, &embedder(), &MockBackend::new())
                .map_err(|f| f.error.to_string())?;
        let coa: RunTrace<f64> = run_coa(&r.context, &r.input, &cfg, &MockBackend::new())
            .map_err(|f| f.error.to_string())?;
        let prompts = |t: &RunTrace<f64>| {
            t.calls
                .iter()
                .map(|c| (c.prompt.clone(), c.prompt_hash.clone()))
                .collect::<Vec<_>>()
        };
        ensure(prompts(&goa) == prompts(&coa), || {
            format!("fixture {fixture}: call sequences differ")
        })?;
        ensure(goa.calls.len() >= 3, || {
            format!("fixture {fixture}: only {} calls", goa.calls.len())
        })?;
    }
    Ok("20 fixtures with identical prompt sequences".into())
}

/// Retained chunk count is the largest a with a*L within the budget, and the
/// retained chunks are the top scorers.
fn rag_kappa() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let r = synthetic_record(
        3000,
        &SynthSpec {
            paragraphs: 60,
            sentences: (4, 8),
        },
    );
    let e = embedder();
    let q = embed(&e, &r.input);
    for pair in 0..100 {
        let t_max = rng.random_range(300..4000usize);
        let l = rng.random_range(10..400usize);
        let retriever = if pair % 2 == 0 {
            Retriever::Embedding
        } else {
            Retriever::Bm25
        };
        let cfg = AgentRunConfig {
            t_max,
            rag_chunk_words: l,
            retriever,
            rag_order: RagOrder::Score,
            ..AgentRunConfig::for_context_window(t_max)
        };
        let t: RunTrace<f64> = run_rag(&r.context, &r.input, &cfg, &e, &MockBackend::new())
            .map_err(|f| f.error.to_string())?;
        let rag = t.rag.as_ref().ok_or("no retrieval record")?;
        let mut oracle = 0;
        while (oracle + 1) * l <= rag.available_budget {
            oracle += 1;
        }
        ensure(rag.kappa == oracle, || {
            format!(
                "pair {pair} (budget {}, L {l}): kappa {} vs {oracle}",
                rag.available_budget, rag.kappa
            )
        })?;
        let keep = oracle.min(t.chunks.len());
        if retriever == Retriever::Embedding {
            for (id, chunk) in t.chunks.iter().enumerate() {
                let s = hand_cosine(&q, &embed(&e, &chunk.text));
                ensure((s - rag.scores[id]).abs() < 1e-12, || {
                    format!("pair {pair}: score of chunk {id} differs")
                })?;
            }
        }
        let mut ranked: Vec<usize> = (0..t.chunks.len()).collect();
        ranked.sort_by(|&a, &b| rag.scores[b].total_cmp(&rag.scores[a]).then(a.cmp(&b)));
        ranked.truncate(keep);
        ensure(rag.ranked_ids == ranked, || {
            format!(
                "pair {pair}: retained {:?}, expected {ranked:?}",
                rag.ranked_ids
            )
        })?;
        ensure(rag.presented_ids == ranked, || {
            format!("pair {pair}: prompt order differs")
        })?;
    }
    Ok("100 (budget, L) pairs".into())
}

/// Hand-computed token F1 values and metric properties.
fn f1_suite() -> Check {
    let g = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let table: [(&str, Vec<String>, f64); 25] = [
        ("Paris", g(&["Paris"]), 1.0),
        ("the Eiffel Tower", g(&["Eiffel Tower"]), 1.0),
        // "a" is an article, so {b, c} meets {b, d}.
        ("a b c", g(&["a b d"]), 0.5),
        ("x b c", g(&["x b d"]), 2.0 / 3.0),
        ("Oslo", g(&["Bergen"]), 0.0),
        ("", g(&["Oslo"]), 0.0),
        ("the", g(&["the"]), 0.0),
        ("Oslo, Norway", g(&["Oslo"]), 2.0 / 3.0),
        ("Oslo", g(&["Oslo Norway"]), 2.0 / 3.0),
        ("New York City", g(&["new york"]), 0.8),
        ("x x y", g(&["x y y"]), 2.0 / 3.0),
        ("Oslo", g(&["Bergen", "Oslo"]), 1.0),
        ("Oslo Norway", g(&["Bergen", "Oslo"]), 2.0 / 3.0),
        ("An Apple!", g(&["apple"]), 1.0),
        ("1990s", g(&["1990"]), 0.0),
        ("a b c d", g(&["b c d e"]), 6.0 / 7.0),
        ("red green blue yellow", g(&["red"]), 0.4),
        ("the cat sat on the mat", g(&["cat on mat"]), 6.0 / 7.0),
        ("U.S.A.", g(&["USA"]), 1.0),
        ("Hello,   World", g(&["hello world"]), 1.0),
        ("one two three", g(&["four five six"]), 0.0),
        ("b b b", g(&["b"]), 0.5),
        ("b", g(&["b b b"]), 0.5),
        (
            "alpha beta",
            g(&["beta gamma", "alpha beta gamma delta"]),
            2.0 / 3.0,
        ),
        (
            "The Juniper Order was founded in Oslo.",
            g(&["Oslo"]),
            2.0 / 7.0,
        ),
    ];
    for (pred, golds, want) in &table {
        let got = qa_f1(pred, golds);
        ensure((got - want).abs() <= 1e-9, || {
            format!("qa_f1({pred:?}, {golds:?}) = {got}, expected {want}")
        })?;
    }

    let words = [
        "a", "an", "the", "x", "y", "z", "Oslo", "oslo,", "b.", "c!", "d",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let phrase = |rng: &mut ChaCha8Rng| {
        let n = rng.random_range(0..6);
        (0..n)
            .map(|_| words[rng.random_range(0..words.len())])
            .collect::<Vec<_>>()
            .join(" ")
    };
    for i in 0..1000 {
        let (a, b, extra) = (phrase(&mut rng), phrase(&mut rng), phrase(&mut rng));
        let ab = qa_f1(&a, std::slice::from_ref(&b));
        ensure(ab == qa_f1(&b, std::slice::from_ref(&a)), || {
            format!("pair {i}: asymmetric on {a:?} / {b:?}")
        })?;
        ensure((0.0..=1.0).contains(&ab), || {
            format!("pair {i}: out of range")
        })?;
        ensure(qa_f1(&a, &[b.clone(), extra.clone()]) >= ab, || {
            format!("pair {i}: adding a gold lowered F1")
        })?;
        let has_content = a
            .split_whitespace()
            .any(|w| !["a", "an", "the"].contains(&w));
        ensure(
            !has_content || qa_f1(&a, std::slice::from_ref(&a)) == 1.0,
            || format!("pair {i}: self F1 below 1"),
        )?;
    }
    Ok("25 fixtures and 1000 random pairs".into())
}

/// Renderings equal the golden files byte for byte.
fn prompt_goldens() -> Check {
    let dir = manifest().join("../core/tests/golden");
    let prompts = PromptSet::builtin();
    let chunk = "The Juniper Order was founded in Oslo. Its {query} archive is literal text.";
    let prev = "Earlier summary mentioning the harbor.";
    let query = "In which city was the Juniper Order founded?";
    let context = "Passage one.\n\nPassage two.";
    let summaries = vec![
        "First path summary.".to_string(),
        "Second path summary.".to_string(),
    ];
    let cases = [
        (
            TemplateName::Worker,
            render_worker_prompt(&prompts, chunk, prev, query),
        ),
        (
            TemplateName::ManagerSingle,
            render_manager_prompt(&prompts, TaskKind::SingleDocQa, &summaries, query),
        ),
        (
            TemplateName::ManagerMulti,
            render_manager_prompt(&prompts, TaskKind::MultiDocQa, &summaries, query),
        ),
        (
            TemplateName::VanillaSingle,
            render_vanilla_prompt(&prompts, TaskKind::SingleDocQa, context, query),
        ),
        (
            TemplateName::VanillaMulti,
            render_vanilla_prompt(&prompts, TaskKind::MultiDocQa, context, query),
        ),
    ];
    for (name, rendered) in cases {
        let rendered = rendered.map_err(|e| e.to_string())?;
        let path = dir.join(format!("{}.txt", name.as_str()));
        let golden = fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        ensure(rendered.as_bytes() == golden.as_slice(), || {
            format!("{} drifted from its golden file", name.as_str())
        })?;
    }
    Ok("5 templates".into())
}

/// Every prompt fits the window and every output its budget, for all methods.
fn budget_safety() -> Check {
    let mut records: Vec<(String, String)> = synthetic_corpus(50, 3, &small_spec())
        .into_iter()
        .map(|r| (r.context, r.input))
        .collect();
    let long = synthetic_record(
        5,
        &SynthSpec {
            paragraphs: 300,
            sentences: (4, 8),
        },
    );
    records.push((long.context, long.input));
    let e = embedder();
    let mut calls = 0;
    for (t_max, worker) in [(2048, 256), (8192, 1024)] {
        let cfg = AgentRunConfig::for_context_window(t_max);
        ensure(
            cfg.worker_max_tokens == worker && cfg.manager_max_tokens == 128,
            || format!("defaults at {t_max}"),
        )?;
        for (doc, query) in &records {
            let b = MockBackend::new();
            let traces: Vec<RunTrace<f64>> = [
                run_goa(doc, query, &cfg, &e, &b),
                run_coa(doc, query, &cfg, &b),
                run_parallel_agents(doc, query, &cfg, &b),
                run_rag(doc, query, &cfg, &e, &b),
                run_vanilla(doc, query, &cfg, &b),
            ]
            .into_iter()
            .collect::<Result<_, _>>()
            .map_err(|f| f.error.to_string())?;
            for t in &traces {
                for c in &t.calls {
                    let role_limit = if c.role == AgentRole::Worker {
                        worker
                    } else {
                        128
                    };
                    let prompt_tokens = c.prompt.split_whitespace().count();
                    let out_tokens = c.response.split_whitespace().count();
                    ensure(prompt_tokens <= t_max, || {
                        format!("{} at {t_max}: prompt of {prompt_tokens} tokens", t.method)
                    })?;
                    ensure(
                        out_tokens <= c.max_output_tokens && c.max_output_tokens <= role_limit,
                        || {
                            format!(
                                "{} at {t_max}: output {out_tokens}, budget {}",
                                t.method, c.max_output_tokens
                            )
                        },
                    )?;
                    calls += 1;
                }
            }
        }
    }
    Ok(format!("{calls} calls, 5 methods, 2 windows, 0 violations"))
}

fn tree_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for name in ["results.jsonl", "summary.json"] {
        out.insert(
            name.to_string(),
            fs::read(dir.join(name)).unwrap_or_default(),
        );
    }
    for entry in fs::read_dir(dir.join("traces"))
        .into_iter()
        .flatten()
        .flatten()
    {
        let name = format!("traces/{}", entry.file_name().to_string_lossy());
        out.insert(name, fs::read(entry.path()).unwrap_or_default());
    }
    out
}

/// Two runs of the same config produce identical results and traces.
fn determinism() -> Check {
    let config = manifest().join("fixtures/example.toml");
    let mut trees = Vec::new();
    for _ in 0..2 {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        cmd_run(
            &config,
            &[format!("output_dir=\"{}\"", tmp.path().display())],
        )
        .map_err(|e| e.to_string())?;
        trees.push(tree_bytes(tmp.path()));
    }
    ensure(trees[0].len() > 2, || "no traces written".into())?;
    for (name, bytes) in &trees[0] {
        ensure(trees[1].get(name) == Some(bytes), || {
            format!("{name} differs between runs")
        })?;
    }
    ensure(trees[0].len() == trees[1].len(), || {
        "file sets differ".into()
    })?;
    Ok(format!("{} files byte-identical", trees[0].len()))
}

fn random_vectors(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<EmbeddingVector<f64>> {
    (0..n)
        .map(|_| loop {
            let raw: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            if let Ok(v) = EmbeddingVector::from_raw(raw) {
                break v;
            }
        })
        .collect()
}

/// Lowest k-medoids cost over every labelling with `k` non-empty clusters.
fn brute_force_medoids(vectors: &[EmbeddingVector<f64>], k: usize) -> f64 {
    let n = vectors.len();
    let dist: Vec<Vec<f64>> = vectors
        .iter()
        .map(|a| {
            vectors
                .iter()
                .map(|b| 1.0 - hand_cosine(a.values(), b.values()))
                .collect()
        })
        .collect();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        if (0..k).all(|c| labels.contains(&c)) {
            let cost: f64 = (0..k)
                .map(|c| {
                    let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
                    members
                        .iter()
                        .map(|&m| members.iter().map(|&i| dist[i][m]).sum::<f64>())
                        .fold(f64::INFINITY, f64::min)
                })
                .sum();
            best = best.min(cost);
        }
        let mut i = 0;
        while i < n && labels[i] == k - 1 {
            labels[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
        labels[i] += 1;
    }
}

/// Valid partitions, non-increasing cost, k-medoids near the exact optimum.
fn clustering() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for inst in 0..200u64 {
        let (n, k, dim) = (
            rng.random_range(1..30),
            rng.random_range(1..6),
            rng.random_range(2..12),
        );
        let method = if inst % 2 == 0 {
            ClusterMethod::KMedoids
        } else {
            ClusterMethod::KMeans
        };
        let vectors = random_vectors(&mut rng, n, dim);
        let out = cluster_with_history(&vectors, k, method, inst).map_err(|e| e.to_string())?;
        let p = &out.partition;
        ensure(
            p.validate().is_ok() && p.len() == n && p.k() == k.min(n),
            || format!("instance {inst}: invalid partition"),
        )?;
        let mut covered = p.clusters().concat();
        covered.sort_unstable();
        ensure(covered == (0..n).collect::<Vec<_>>(), || {
            format!("instance {inst}: items not covered once")
        })?;
        ensure(
            out.cost_history.windows(2).all(|w| w[1] <= w[0] + 1e-9),
            || format!("instance {inst}: cost rose"),
        )?;
    }
    let (mut fixtures, mut worst) = (0, 1.0f64);
    for n in 1..=8usize {
        for k in 1..=3usize {
            for seed in 0..5u64 {
                let vectors = random_vectors(&mut rng, n, 2 + seed as usize);
                let out = cluster_with_history(&vectors, k, ClusterMethod::KMedoids, seed)
                    .map_err(|e| e.to_string())?;
                let ours = partition_cost(&vectors, &out.partition, ClusterMethod::KMedoids)
                    .map_err(|e| e.to_string())?;
                let opt = brute_force_medoids(&vectors, k.min(n));
                ensure(ours <= 1.1 * opt + 1e-12, || {
                    format!("n {n} k {k} seed {seed}: {ours} vs optimum {opt}")
                })?;
                if opt > 0.0 {
                    worst = worst.max(ours / opt);
                }
                fixtures += 1;
            }
        }
    }
    Ok(format!(
        "200 instances; {fixtures} brute-force fixtures, worst ratio {worst:.4}"
    ))
}

/// Quantile with Hazen plotting positions, written independently of the crate.
fn hazen(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = n as f64 * p + 0.5;
    if h <= 1.0 {
        return sorted[0];
    }
    if h >= n as f64 {
        return sorted[n - 1];
    }
    let lo = h.floor();
    let i = lo as usize;
    sorted[i - 1] + (h - lo) * (sorted[i] - sorted[i - 1])
}

fn hand_stats(values: &[f64]) -> [f64; 10] {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    let (q1, median, q3) = (hazen(&s, 0.25), hazen(&s, 0.5), hazen(&s, 0.75));
    let iqr = q3 - q1;
    let lw = *s.iter().find(|&&v| v >= q1 - 1.5 * iqr).expect("sample");
    let uw = *s
        .iter()
        .rev()
        .find(|&&v| v <= q3 + 1.5 * iqr)
        .expect("sample");
    [
        mean,
        median,
        q1,
        q3,
        iqr,
        lw,
        uw,
        s[0],
        s[s.len() - 1],
        s.len() as f64,
    ]
}

/// Analysis statistics match hand-computed box plots, and every GoA path's
/// last selection score reaches its cluster's best single-chunk similarity.
fn similarity_analysis() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = tmp.path().join("corpus.jsonl");
    let corpus = synthetic_corpus(9000, 30, &small_spec());
    let lines: String = corpus
        .iter()
        .map(|r| serde_json::to_string(r).expect("record") + "\n")
        .collect();
    fs::write(&data, lines).map_err(|e| e.to_string())?;
    let config = manifest().join("fixtures/example.toml");
    let mut dirs = Vec::new();
    for method in ["goa", "coa", "rag", "vanilla"] {
        let dir = tmp.path().join(method);
        let overrides = [
            format!("method=\"{method}\""),
            format!("dataset=\"{}\"", data.display()),
            format!("output_dir=\"{}\"", dir.display()),
            "seeds=[0]".into(),
            "rag_chunk_words=40".into(),
        ];
        cmd_run(&config, &overrides).map_err(|e| e.to_string())?;
        dirs.push(dir);
    }
    let out = tmp.path().join("analysis");
    let report = cmd_analyze(
        &dirs,
        &AnalyzeOptions {
            config: None,
            out_dir: Some(out.clone()),
        },
    )
    .map_err(|e| match e {
        CliError::AuditFailure(v) => format!("audit failures: {v:?}"),
        other => other.to_string(),
    })?;

    let mut samples: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let sim = fs::read_to_string(out.join("similarity.tsv")).map_err(|e| e.to_string())?;
    for line in sim.lines().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        samples
            .entry(cols[0].to_string())
            .or_default()
            .push(cols[2].parse().map_err(|_| "bad similarity")?);
    }
    ensure(
        samples.values().all(|v| v.len() == 30) && samples.len() == 4,
        || "expected 30 points per method".into(),
    )?;
    let stats = fs::read_to_string(out.join("stats.tsv")).map_err(|e| e.to_string())?;
    for line in stats.lines().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        let got: Vec<f64> = cols[1..]
            .iter()
            .map(|c| c.parse::<f64>().unwrap_or(f64::NAN))
            .collect();
        // stats.tsv: n mean median q1 q3 iqr lower_whisker upper_whisker min max
        let h = hand_stats(&samples[cols[0]]);
        let want = [h[9], h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]];
        for (g, w) in got.iter().zip(want) {
            ensure((g - w).abs() <= 1e-9, || {
                format!("{}: {got:?} vs {want:?}", cols[0])
            })?;
        }
    }

    let checks: Vec<_> = report.findings.iter().flat_map(|f| &f.selection).collect();
    ensure(!checks.is_empty(), || "no forest paths".into())?;
    let first_ok = checks.iter().filter(|c| c.first_step_holds()).count();
    let final_ok = checks.iter().filter(|c| c.final_step_holds()).count();
    let records_ok = report
        .findings
        .iter()
        .filter(|f| !f.selection.is_empty() && f.selection.iter().all(|c| c.final_step_holds()))
        .count();
    let detail = format!(
        "box stats match for 4 methods; first step >= best single chunk on {first_ok}/{n} paths, \
         final step on {final_ok}/{n} paths ({records_ok}/30 records)",
        n = checks.len()
    );
    ensure(final_ok == checks.len(), || detail.clone())?;
    Ok(detail)
}

/// End-to-end run against live endpoints named in the environment.
fn live_smoke() -> Verdict {
    let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
    let (Some(llm), Some(llm_model), Some(emb), Some(emb_model)) = (
        var("AGENT_FOREST_LIVE_LLM_ENDPOINT"),
        var("AGENT_FOREST_LIVE_LLM_MODEL"),
        var("AGENT_FOREST_LIVE_EMBED_ENDPOINT"),
        var("AGENT_FOREST_LIVE_EMBED_MODEL"),
    ) else {
        return Verdict::Skip("no live endpoints configured (AGENT_FOREST_LIVE_* unset)".into());
    };
    let dim = var("AGENT_FOREST_LIVE_EMBED_DIM").unwrap_or_else(|| "1024".into());
    let run = || -> Check {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let source = fs::read_to_string(manifest().join("fixtures/fixture.jsonl"))
            .map_err(|e| e.to_string())?;
        let data = tmp.path().join("three.jsonl");
        fs::write(&data, source.lines().take(3).collect::<Vec<_>>().join("\n"))
            .map_err(|e| e.to_string())?;
        let overrides = [
            format!("dataset=\"{}\"", data.display()),
            format!("output_dir=\"{}\"", tmp.path().join("run").display()),
            "seeds=[0]".into(),
            "t_max=2048".into(),
            "worker_max_tokens=256".into(),
            "manager_max_tokens=128".into(),
            "backend.provider=\"remote\"".into(),
            format!("backend.endpoint=\"{llm}\""),
            format!("backend.model=\"{llm_model}\""),
            "embedder.provider=\"remote\"".into(),
            format!("embedder.endpoint=\"{emb}\""),
            format!("embedder.model=\"{emb_model}\""),
            format!("embedder.dim={dim}"),
        ];
        let outcome = cmd_run(&manifest().join("fixtures/example.toml"), &overrides)
            .map_err(|e| e.to_string())?;
        ensure(outcome.failures() == 0, || {
            format!("{} runs failed", outcome.failures())
        })?;
        let report = cmd_analyze(
            std::slice::from_ref(&outcome.dir),
            &AnalyzeOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        Ok(format!("3 records, {} traces audited clean", report.traces))
    };
    match run() {
        Ok(d) => Verdict::Pass(d),
        Err(d) => Verdict::Fail(d),
    }
}

fn verdict(check: fn() -> Check) -> Verdict {
    match panic::catch_unwind(check) {
        Ok(Ok(d)) => Verdict::Pass(d),
        Ok(Err(d)) => Verdict::Fail(d),
        Err(_) => Verdict::Fail("panicked".into()),
    }
}

fn main() {
    let criteria: Vec<(u32, &str, Criterion)> = vec![
        (
            1,
            "greedy selection is the re-scored argmax",
            Box::new(|| verdict(greedy_argmax)),
        ),
        (
            2,
            "single document-order path equals the chain",
            Box::new(|| verdict(chain_reduction)),
        ),
        (
            3,
            "retrieval keeps kappa top-scored chunks",
            Box::new(|| verdict(rag_kappa)),
        ),
        (
            4,
            "token F1 fixtures and properties",
            Box::new(|| verdict(f1_suite)),
        ),
        (
            5,
            "prompt renderings match golden files",
            Box::new(|| verdict(prompt_goldens)),
        ),
        (
            6,
            "prompt and output budgets hold",
            Box::new(|| verdict(budget_safety)),
        ),
        (
            7,
            "runs are byte-for-byte reproducible",
            Box::new(|| verdict(determinism)),
        ),
        (
            8,
            "clustering validity and optimality",
            Box::new(|| verdict(clustering)),
        ),
        (
            9,
            "similarity statistics and final-step selection",
            Box::new(|| verdict(similarity_analysis)),
        ),
        (10, "live endpoint smoke run", Box::new(live_smoke)),
    ];
    let mut unexpected = 0;
    for (id, name, run) in criteria {
        let (status, detail) = match run() {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Skip(d) => ("SKIP", d),
            Verdict::Fail(d) => {
                if !KNOWN_UNATTAINABLE.contains(&id) {
                    unexpected += 1;
                }
                ("FAIL", d)
            }
        };
        println!("criterion {id:>2} {status} {name}: {detail}");
    }
    if unexpected > 0 {
        eprintln!("{unexpected} criterion(s) failed");
        std::process::exit(1);
    }
}
