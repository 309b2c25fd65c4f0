//! Deterministic extractive stand-in for a chat model.
//!
//! Worker prompts: the source text and previous summary are split into
//! sentences, each scored by how many distinct query content words it
//! contains. Sentences with a positive score are taken best-first (earlier
//! sentence on ties) while they fit the token budget and are emitted in their
//! original order. If even the best sentence does not fit, it is cut to the
//! budget.
//!
//! Manager and direct-answer prompts: the best-scoring sentence of the
//! provided text (first sentence if nothing overlaps) wrapped in
//! `<answer>`..`</answer>`.

use std::collections::BTreeSet;

use super::{BackendError, ChatBackend, GenerateRequest};
use crate::text::{truncate_head, Tokenizer, WhitespaceTokenizer};

const WORKER_INTRO: &str = "You need to read [SOURCE TEXT] and [PREVIOUS SUMMARY]";
const SOURCE_MARK: &str = "[SOURCE TEXT]: ";
const PREV_MARK: &str = "\n\n[PREVIOUS SUMMARY]: ";
const QUERY_MARK: &str = "\n\n[QUERY]: ";
const SUMMARY_END: &str = "\n\nSummary:";
const MANAGER_MARK: &str =
    "You need to generate a final summary based on the provided summary:\n\n";
const PASSAGES_MARK: &str = "The following are given passages.\n";
const INSTRUCTION_REPEAT: &str = "\n\nAnswer the question based on";
const QUESTION_MARK: &str = "\n\nQuestion: ";
const ANSWER_END: &str = "\nAnswer:";

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "did", "do", "does", "for", "from", "how",
    "in", "is", "it", "its", "of", "on", "or", "that", "the", "this", "to", "was", "were", "what",
    "when", "where", "which", "who", "whom", "why", "with",
];

/// Splits on `.`, `!` or `?` followed by whitespace, and on line breaks.
pub fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for line in text.lines() {
        let mut start = 0;
        let chars: Vec<(usize, char)> = line.char_indices().collect();
        for (pos, &(idx, ch)) in chars.iter().enumerate() {
            let at_break = matches!(ch, '.' | '!' | '?')
                && chars
                    .get(pos + 1)
                    .is_none_or(|&(_, next)| next.is_whitespace());
            if at_break {
                let end = idx + ch.len_utf8();
                out.push(line[start..end].trim());
                start = end;
            }
        }
        out.push(line[start..].trim());
    }
    out.retain(|s| !s.is_empty());
    out
}

fn content_words(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .filter(|w| !STOPWORDS.contains(&w.as_str()))
        .collect()
}

fn is_worker_header(sentence: &str) -> bool {
    sentence.starts_with("[Summary of Worker ") && sentence.ends_with(']')
}

enum Parsed<'a> {
    Worker {
        source: &'a str,
        previous: &'a str,
        query: &'a str,
    },
    Answer {
        passages: &'a str,
        query: &'a str,
    },
}

fn parse(prompt: &str) -> Result<Parsed<'_>, BackendError> {
    let fail = |what: &str| BackendError::UnparseablePrompt(what.to_string());
    if prompt.starts_with(WORKER_INTRO) {
        let src = prompt
            .find(SOURCE_MARK)
            .ok_or_else(|| fail("missing [SOURCE TEXT]"))?
            + SOURCE_MARK.len();
        let end = prompt
            .rfind(SUMMARY_END)
            .ok_or_else(|| fail("missing Summary:"))?;
        let q = prompt[..end]
            .rfind(QUERY_MARK)
            .ok_or_else(|| fail("missing [QUERY]"))?;
        let p = prompt[..q]
            .rfind(PREV_MARK)
            .ok_or_else(|| fail("missing [PREVIOUS SUMMARY]"))?;
        if p < src {
            return Err(fail("sections out of order"));
        }
        return Ok(Parsed::Worker {
            source: &prompt[src..p],
            previous: &prompt[p + PREV_MARK.len()..q],
            query: &prompt[q + QUERY_MARK.len()..end],
        });
    }
    let start = match (prompt.find(MANAGER_MARK), prompt.find(PASSAGES_MARK)) {
        (Some(m), _) => m + MANAGER_MARK.len(),
        (None, Some(v)) => v + PASSAGES_MARK.len(),
        (None, None) => return Err(fail("unrecognized prompt")),
    };
    let end = prompt
        .rfind(ANSWER_END)
        .ok_or_else(|| fail("missing Answer:"))?;
    let q = prompt[..end]
        .rfind(QUESTION_MARK)
        .ok_or_else(|| fail("missing Question:"))?;
    let stop = prompt[..q]
        .rfind(INSTRUCTION_REPEAT)
        .ok_or_else(|| fail("missing closing instruction"))?;
    if stop < start {
        return Err(fail("sections out of order"));
    }
    Ok(Parsed::Answer {
        passages: &prompt[start..stop],
        query: &prompt[q + QUESTION_MARK.len()..end],
    })
}

/// Scores in sentence order.
fn score_all(sentences: &[&str], query: &str) -> Vec<usize> {
    let q = content_words(query);
    sentences
        .iter()
        .map(|s| content_words(s).intersection(&q).count())
        .collect()
}

/// Indices sorted best-first, earlier sentence on ties.
fn ranked(scores: &[usize]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Stateless, so one instance can serve every path concurrently.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend {
    tokenizer: WhitespaceTokenizer,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Pure in `(prompt, max_output_tokens)`; the seed is accepted for
    /// interface parity and does not change the output.
    pub fn mock_generate(
        &self,
        prompt: &str,
        max_output_tokens: usize,
        _seed: Option<u64>,
    ) -> Result<String, BackendError> {
        match parse(prompt)? {
            Parsed::Worker {
                source,
                previous,
                query,
            } => Ok(self.summarize(source, previous, query, max_output_tokens)),
            Parsed::Answer { passages, query } => {
                Ok(self.answer(passages, query, max_output_tokens))
            }
        }
    }

    fn summarize(&self, source: &str, previous: &str, query: &str, budget: usize) -> String {
        let mut pool = sentences(source);
        pool.extend(sentences(previous));
        let scores = score_all(&pool, query);
        let mut chosen: Vec<usize> = Vec::new();
        let mut used = 0;
        for i in ranked(&scores) {
            if scores[i] == 0 {
                break;
            }
            let len = self.tokenizer.count(pool[i]);
            if used + len <= budget {
                chosen.push(i);
                used += len;
            } else if chosen.is_empty() {
                return truncate_head(pool[i], budget, &self.tokenizer);
            } else {
                break;
            }
        }
        chosen.sort_unstable();
        chosen
            .iter()
            .map(|&i| pool[i])
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn answer(&self, passages: &str, query: &str, budget: usize) -> String {
        let pool: Vec<&str> = sentences(passages)
            .into_iter()
            .filter(|s| !is_worker_header(s))
            .collect();
        let scores = score_all(&pool, query);
        let best = ranked(&scores).first().map_or("", |&i| pool[i]);
        format!(
            "<answer>{}</answer>",
            truncate_head(best, budget, &self.tokenizer)
        )
    }
}

impl ChatBackend for MockBackend {
    fn generate(&self, request: &GenerateRequest) -> Result<String, BackendError> {
        self.mock_generate(&request.prompt, request.max_output_tokens, request.seed)
    }

    fn identity(&self) -> String {
        "mock/extractive-v1".into()
    }
}
