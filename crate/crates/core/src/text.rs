//! Paragraph splitting, token-budgeted chunking and middle truncation.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Separator placed between paragraphs when they are packed into one chunk.
pub const PARAGRAPH_SEPARATOR: &str = "\n\n";

/// Placed between the kept head and tail by [`truncate_middle`].
pub const TRUNCATION_JOINER: &str = "\n";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TextError {
    #[error("document has no non-whitespace content")]
    EmptyDocument,
    #[error("token budget must be positive")]
    ZeroBudget,
}

/// Counts tokens and exposes token boundaries so text can be sliced on them.
pub trait Tokenizer: Send + Sync {
    /// Byte ranges of each token in `text`, in order and non-overlapping.
    fn token_spans(&self, text: &str) -> Vec<Range<usize>>;

    fn count(&self, text: &str) -> usize {
        self.token_spans(text).len()
    }

    fn identity(&self) -> String;
}

/// One token per maximal run of non-whitespace characters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn token_spans(&self, text: &str) -> Vec<Range<usize>> {
        let mut spans = Vec::new();
        let mut start = None;
        for (idx, ch) in text.char_indices() {
            match (ch.is_whitespace(), start) {
                (true, Some(s)) => {
                    spans.push(s..idx);
                    start = None;
                }
                (false, None) => start = Some(idx),
                _ => {}
            }
        }
        if let Some(s) = start {
            spans.push(s..text.len());
        }
        spans
    }

    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }

    fn identity(&self) -> String {
        "whitespace".to_string()
    }
}

/// A contiguous piece of a document assigned to one worker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: usize,
    pub text: String,
    pub token_count: usize,
    /// Byte offsets `(start, end)` into the source document.
    pub char_span: (usize, usize),
}

/// Byte ranges of the paragraphs in `document`.
///
/// Paragraphs are separated by one or more blank (whitespace-only) lines.
/// A paragraph runs from the start of its first non-blank line to the end of
/// its last non-blank line; interior whitespace is untouched.
pub fn paragraph_spans(document: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut current: Option<Range<usize>> = None;
    let mut line_start = 0;
    while line_start <= document.len() {
        let line_end = document[line_start..]
            .find('\n')
            .map_or(document.len(), |off| line_start + off);
        let line = &document[line_start..line_end];
        if line.trim().is_empty() {
            if let Some(span) = current.take() {
                spans.push(span);
            }
        } else {
            let content_end = line_start + line.trim_end().len();
            match current.as_mut() {
                Some(span) => span.end = content_end,
                None => {
                    let lead = line.len() - line.trim_start().len();
                    current = Some(line_start + lead..content_end);
                }
            }
        }
        if line_end == document.len() {
            break;
        }
        line_start = line_end + 1;
    }
    if let Some(span) = current {
        spans.push(span);
    }
    spans
}

pub fn split_paragraphs(document: &str) -> Vec<String> {
    paragraph_spans(document)
        .into_iter()
        .map(|span| document[span].to_string())
        .collect()
}

/// Packs paragraphs into chunks of at most `chunk_budget` tokens.
///
/// Paragraphs are appended to the open chunk until the next one would push it
/// over budget, which then starts a new chunk. A paragraph that alone exceeds
/// the budget is cut at token boundaries into budget-sized pieces, each its own
/// chunk (the last piece may be shorter).
pub fn segment(
    document: &str,
    chunk_budget: usize,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<Chunk>, TextError> {
    if chunk_budget == 0 {
        return Err(TextError::ZeroBudget);
    }
    if document.trim().is_empty() {
        return Err(TextError::EmptyDocument);
    }

    struct Open {
        text: String,
        tokens: usize,
        span: (usize, usize),
    }

    let mut chunks: Vec<Chunk> = Vec::new();
    let mut open: Option<Open> = None;
    let flush = |chunks: &mut Vec<Chunk>, open: Open| {
        chunks.push(Chunk {
            id: chunks.len(),
            text: open.text,
            token_count: open.tokens,
            char_span: open.span,
        });
    };

    for span in paragraph_spans(document) {
        let paragraph = &document[span.clone()];
        if let Some(current) = open.as_mut() {
            let joined = format!("{}{PARAGRAPH_SEPARATOR}{paragraph}", current.text);
            let tokens = tokenizer.count(&joined);
            if tokens <= chunk_budget {
                current.text = joined;
                current.tokens = tokens;
                current.span.1 = span.end;
                continue;
            }
            flush(&mut chunks, open.take().expect("open chunk"));
        }

        let tokens = tokenizer.count(paragraph);
        if tokens <= chunk_budget {
            open = Some(Open {
                text: paragraph.to_string(),
                tokens,
                span: (span.start, span.end),
            });
            continue;
        }

        let token_spans = tokenizer.token_spans(paragraph);
        for piece in token_spans.chunks(chunk_budget) {
            let start = span.start + piece[0].start;
            let end = span.start + piece[piece.len() - 1].end;
            let text = &document[start..end];
            flush(
                &mut chunks,
                Open {
                    text: text.to_string(),
                    tokens: tokenizer.count(text),
                    span: (start, end),
                },
            );
        }
    }
    if let Some(current) = open {
        flush(&mut chunks, current);
    }
    Ok(chunks)
}

/// The first `n` tokens of `text`, cut at a token boundary.
pub fn truncate_head(text: &str, n: usize, tokenizer: &dyn Tokenizer) -> String {
    let spans = tokenizer.token_spans(text);
    if spans.len() <= n {
        return text.to_string();
    }
    if n == 0 {
        return String::new();
    }
    text[..spans[n - 1].end].to_string()
}

/// Keeps the first `ceil(budget/2)` and last `floor(budget/2)` tokens.
///
/// Text already within budget is returned unchanged.
pub fn truncate_middle(text: &str, budget: usize, tokenizer: &dyn Tokenizer) -> String {
    let spans = tokenizer.token_spans(text);
    if spans.len() <= budget {
        return text.to_string();
    }
    if budget == 0 {
        return String::new();
    }
    let head = budget.div_ceil(2);
    let mut tail = budget / 2;
    loop {
        let head_text = &text[..spans[head - 1].end];
        let joined = if tail == 0 {
            head_text.to_string()
        } else {
            let tail_text = &text[spans[spans.len() - tail].start..];
            format!("{head_text}{TRUNCATION_JOINER}{tail_text}")
        };
        // Subword tokenizers may fuse tokens across the joint.
        if tail == 0 || tokenizer.count(&joined) <= budget {
            return joined;
        }
        tail -= 1;
    }
}
