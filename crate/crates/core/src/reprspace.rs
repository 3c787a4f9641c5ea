//! Movement of prefix representations along a timeline: per-token step
//! lengths, event path lengths and net displacements, and their relation
//! to information content.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::infomeasure::ScoredTimeline;
use crate::seqmodel::{ModelError, SequenceModel};
use crate::stats::{ols_fit, OlsFit, StatsError};
use crate::tokenizer::{EventSpan, Timeline, TokenizerError, Vocabulary};

#[derive(Debug, Error)]
pub enum ReprError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error("representation at position {position} has dimension {got}, expected {expected}")]
    DimensionDrift {
        position: usize,
        expected: usize,
        got: usize,
    },
    #[error("net displacement needs stored vectors; the trace was built in streaming mode")]
    Streaming,
    #[error("span ({start}, {end}) lies outside a trace of length {len}")]
    SpanOutOfRange { start: usize, end: usize, len: usize },
    #[error("timeline {0} has no attached deltas")]
    MissingDeltas(String),
    #[error("{0}")]
    Io(String),
}

impl From<std::io::Error> for ReprError {
    fn from(e: std::io::Error) -> Self {
        ReprError::Io(e.to_string())
    }
}

impl From<csv::Error> for ReprError {
    fn from(e: csv::Error) -> Self {
        ReprError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMode {
    /// Keep every prefix vector.
    #[default]
    Full,
    /// Keep only the step lengths.
    Streaming,
}

/// Representations of the prefixes `x_{1:t}`, t = 1..T, and the steps
/// between consecutive ones.
#[derive(Debug, Clone, PartialEq)]
pub struct ReprTrace {
    pub dim: usize,
    /// Δ_t at index t−1; Δ_1 = 0.
    pub deltas: Vec<f64>,
    /// `R(x_{1:t})` at index t−1, absent in streaming mode.
    pub vectors: Option<Vec<Vec<f64>>>,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn check_dim(position: usize, expected: usize, v: &[f64]) -> Result<(), ReprError> {
    if v.len() != expected {
        return Err(ReprError::DimensionDrift {
            position,
            expected,
            got: v.len(),
        });
    }
    Ok(())
}

pub fn trace(
    model: &dyn SequenceModel,
    timeline: &Timeline,
    mode: TraceMode,
) -> Result<ReprTrace, ReprError> {
    let dim = model.repr_dim();
    let tokens = &timeline.tokens;
    match mode {
        TraceMode::Full => {
            let vectors = model.representations(tokens)?;
            if vectors.len() != tokens.len() {
                return Err(ReprError::Model(ModelError::Format(format!(
                    "{} representations for {} prefixes",
                    vectors.len(),
                    tokens.len()
                ))));
            }
            for (i, v) in vectors.iter().enumerate() {
                check_dim(i + 1, dim, v)?;
            }
            let mut deltas = vec![0.0; vectors.len()];
            for t in 1..vectors.len() {
                deltas[t] = euclidean(&vectors[t], &vectors[t - 1]);
            }
            Ok(ReprTrace {
                dim,
                deltas,
                vectors: Some(vectors),
            })
        }
        TraceMode::Streaming => {
            let mut deltas = Vec::with_capacity(tokens.len());
            let mut prev: Option<Vec<f64>> = None;
            for t in 1..=tokens.len() {
                let v = model.representation(&tokens[..t])?;
                check_dim(t, dim, &v)?;
                deltas.push(prev.as_ref().map_or(0.0, |p| euclidean(&v, p)));
                prev = Some(v);
            }
            Ok(ReprTrace {
                dim,
                deltas,
                vectors: None,
            })
        }
    }
}

impl ReprTrace {
    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    fn check_span(&self, span: EventSpan) -> Result<(), ReprError> {
        if span.start < 1 || span.start > span.end || span.end > self.len() {
            return Err(ReprError::SpanOutOfRange {
                start: span.start,
                end: span.end,
                len: self.len(),
            });
        }
        Ok(())
    }

    /// Σ Δ_t over the span.
    pub fn path_length(&self, span: EventSpan) -> Result<f64, ReprError> {
        self.check_span(span)?;
        Ok(self.deltas[span.range()].iter().sum())
    }

    /// ‖R(x_{1:v}) − R(x_{1:u−1})‖. For u = 1 the reference is `R(x_{1:1})`,
    /// matching Δ_1 = 0.
    pub fn net_displacement(&self, span: EventSpan) -> Result<f64, ReprError> {
        self.check_span(span)?;
        let vectors = self.vectors.as_ref().ok_or(ReprError::Streaming)?;
        let from = span.start.saturating_sub(2);
        Ok(euclidean(&vectors[span.end - 1], &vectors[from]))
    }
}

/// Trace a cohort and attach the deltas to the scored timelines.
pub fn attach_traces(
    model: &dyn SequenceModel,
    scored: &mut [ScoredTimeline],
    mode: TraceMode,
) -> Result<Vec<ReprTrace>, ReprError> {
    scored
        .par_iter_mut()
        .map(|s| {
            let tr = trace(model, &s.timeline, mode)?;
            s.token_deltas = Some(tr.deltas.clone());
            Ok(tr)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionLevel {
    Token,
    Event,
}

/// OLS of Δ_t on token bits (t ≥ 2), or of event path length on event bits.
/// Infinite scores are skipped.
pub fn info_delta_regression(
    scored: &[ScoredTimeline],
    level: RegressionLevel,
) -> Result<OlsFit, ReprError> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for s in scored {
        let deltas = s
            .token_deltas
            .as_ref()
            .ok_or_else(|| ReprError::MissingDeltas(s.timeline.hospitalization_id.clone()))?;
        match level {
            RegressionLevel::Token => {
                for (&b, &d) in s.token_bits.iter().zip(deltas).skip(1) {
                    if b.is_finite() {
                        x.push(b);
                        y.push(d);
                    }
                }
            }
            RegressionLevel::Event => {
                for (span, bits) in s.timeline.event_spans.iter().zip(&s.event_bits) {
                    if bits.is_finite() {
                        x.push(*bits);
                        y.push(deltas[span.range()].iter().sum());
                    }
                }
            }
        }
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewPoints {
            needed: 3,
            got: x.len(),
        }
        .into());
    }
    Ok(ols_fit(&x, &y)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenTypeSummary {
    pub token_type: String,
    pub count: usize,
    pub mean_bits: f64,
    pub mean_delta: f64,
}

/// Mean bits and mean Δ per token type, over tokens with finite bits.
pub fn summarize_by_token_type(
    scored: &[ScoredTimeline],
    vocab: &Vocabulary,
) -> Result<Vec<TokenTypeSummary>, ReprError> {
    let mut acc: BTreeMap<String, (usize, f64, f64)> = BTreeMap::new();
    for s in scored {
        let deltas = s
            .token_deltas
            .as_ref()
            .ok_or_else(|| ReprError::MissingDeltas(s.timeline.hospitalization_id.clone()))?;
        for (t, id) in s.timeline.tokens.iter().enumerate() {
            if !s.token_bits[t].is_finite() {
                continue;
            }
            let token = vocab
                .token(*id)
                .ok_or(TokenizerError::UnknownId(*id))?;
            let e = acc.entry(Vocabulary::token_type(token).to_string()).or_default();
            e.0 += 1;
            e.1 += s.token_bits[t];
            e.2 += deltas[t];
        }
    }
    Ok(acc
        .into_iter()
        .map(|(token_type, (n, b, d))| TokenTypeSummary {
            token_type,
            count: n,
            mean_bits: b / n as f64,
            mean_delta: d / n as f64,
        })
        .collect())
}

/// CSV with columns `hospitalization_id,t,token,bits,delta`, t 1-based.
pub fn write_trace_csv<W: Write>(
    out: W,
    scored: &[ScoredTimeline],
    vocab: &Vocabulary,
) -> Result<(), ReprError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["hospitalization_id", "t", "token", "bits", "delta"])?;
    for s in scored {
        let deltas = s
            .token_deltas
            .as_ref()
            .ok_or_else(|| ReprError::MissingDeltas(s.timeline.hospitalization_id.clone()))?;
        let tokens = vocab.decode(&s.timeline.tokens)?;
        for (t, token) in tokens.iter().enumerate() {
            w.write_record([
                s.timeline.hospitalization_id.as_str(),
                &(t + 1).to_string(),
                token,
                &format!("{:.6}", s.token_bits[t]),
                &format!("{:.6}", deltas[t]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_type_summary_csv<W: Write>(
    out: W,
    rows: &[TokenTypeSummary],
) -> Result<(), ReprError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["token_type", "count", "mean_bits", "mean_delta"])?;
    for r in rows {
        w.write_record([
            r.token_type.as_str(),
            &r.count.to_string(),
            &format!("{:.6}", r.mean_bits),
            &format!("{:.6}", r.mean_delta),
        ])?;
    }
    w.flush()?;
    Ok(())
}
