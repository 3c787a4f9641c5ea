//! Vocabulary, decile cutoffs and the hospitalization-to-timeline encoder.

mod cutoffs;
mod encode;
pub mod preset;
mod vocab;

use std::io::{BufRead, Write};
use std::path::Path;

use thiserror::Error;

pub use cutoffs::{bin_value, CutoffTable, AGE_KEY};
pub use encode::{
    collect_numeric_observations, event_spans, fit_vocabulary, EventSpan, Timeline,
    TimelineEnding, Tokenizer, DEFAULT_CONTEXT_LIMIT, PREFIX_LEN,
};
pub use vocab::{
    SpecialIds, TokenId, Vocabulary, DECILES, NAN, NONE, PAD, SPECIALS, TL_END, TL_START, TRUNC,
};

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("duplicate token `{0}`")]
    DuplicateToken(String),
    #[error("vocabulary lacks required token `{0}`")]
    MissingSpecial(String),
    #[error("unknown token id {0}")]
    UnknownId(u32),
    #[error("hospitalization `{hospitalization_id}`, {event}: no vocabulary entry for `{token}`")]
    UnknownToken {
        hospitalization_id: String,
        event: String,
        token: String,
    },
    #[error("hospitalization `{hospitalization_id}`, {event}: no cutoffs for `{category}`")]
    MissingCutoff {
        hospitalization_id: String,
        event: String,
        category: String,
    },
    #[error("non-finite value for {context}")]
    NonFinite { context: String },
    #[error("cutoffs for `{0}` are not finite and non-decreasing")]
    BadCutoffs(String),
    #[error("no numeric observations for categories: {}", .0.join(", "))]
    NoObservations(Vec<String>),
    #[error("cutoff file line {line}: {message}")]
    CutoffFile { line: usize, message: String },
    #[error("timeline file line {line}: {message}")]
    TimelineFile { line: usize, message: String },
    #[error("context limit {0} is too small for a timeline")]
    LimitTooSmall(usize),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl TokenizerError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        TokenizerError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// One timeline per line: id, tokens, token_times (epoch seconds), spans and
/// ending.
pub fn write_timelines_jsonl<W: Write>(mut out: W, timelines: &[Timeline]) -> std::io::Result<()> {
    for tl in timelines {
        serde_json::to_writer(&mut out, tl)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Read timelines, checking that the stored spans match the token times.
pub fn read_timelines_jsonl<R: BufRead>(input: R) -> Result<Vec<Timeline>, TokenizerError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let bad = |message: String| TokenizerError::TimelineFile { line: i + 1, message };
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let tl: Timeline = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if tl.tokens.len() != tl.token_times.len() {
            return Err(bad(format!(
                "{} tokens but {} token times",
                tl.tokens.len(),
                tl.token_times.len()
            )));
        }
        if tl.event_spans != event_spans(&tl.token_times, tl.ending) {
            return Err(bad(format!("spans of `{}` do not match its token times", tl.hospitalization_id)));
        }
        out.push(tl);
    }
    Ok(out)
}

pub fn read_timelines_file(path: &Path) -> Result<Vec<Timeline>, TokenizerError> {
    let file = std::fs::File::open(path).map_err(|e| TokenizerError::io(path, e))?;
    read_timelines_jsonl(std::io::BufReader::new(file))
}
