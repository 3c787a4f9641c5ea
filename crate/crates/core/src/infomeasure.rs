//! Tokenwise and eventwise context-aware information in bits, percentile
//! thresholds over an early time window, and the per-timeline count features
//! built from them.

use std::f64::consts::LN_2;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seqmodel::{pack_with_width, ModelError, SequenceModel, PACK_WIDTH};
use crate::tokenizer::{EventSpan, Timeline, TimelineEnding, TokenizerError, Vocabulary};

/// Display cap for infinite scores.
pub const DEFAULT_DISPLAY_CAP: f64 = 64.0;
pub const DEFAULT_WINDOW_HOURS: f64 = 24.0;
pub const DEFAULT_MIN_TOKENS: usize = 100;

#[derive(Debug, Error)]
pub enum InfoError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error("timeline {id}: token {token} is outside the model vocabulary of {vocab_size}")]
    VocabMismatch {
        id: String,
        token: u32,
        vocab_size: usize,
    },
    #[error("only {got} scored tokens fall in the window, need at least {needed}")]
    TooFewTokens { needed: usize, got: usize },
    #[error("no events fall in the window")]
    NoEvents,
    #[error("nothing to average")]
    Empty,
    #[error("thresholds are out of order: q95_event {q95} > q99_event {q99}")]
    Unordered { q95: f64, q99: f64 },
    #[error("{0}")]
    Io(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl From<std::io::Error> for InfoError {
    fn from(e: std::io::Error) -> Self {
        InfoError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Every token scored, the first one by its unconditional probability.
    #[default]
    Raw,
    /// The leading TL_START token is deterministic and gets 0 bits.
    Clinical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    /// Contexts never reach before the start of the scored timeline.
    #[default]
    Confined,
    /// Contexts follow the packed training rows and may include earlier
    /// timelines of the cohort.
    Packed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub mode: ScoreMode,
    pub context: ContextMode,
}

/// Per-token and per-event bits for one timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTimeline {
    pub timeline: Timeline,
    /// −log2 p(x_t | x_<t); `+inf` where the model gave probability zero.
    pub token_bits: Vec<f64>,
    /// Sum of member token bits for each event span.
    pub event_bits: Vec<f64>,
    /// Representation deltas, when a trace was attached.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_deltas: Option<Vec<f64>>,
}

impl ScoredTimeline {
    /// Wrap token scores and derive event scores.
    pub fn new(timeline: Timeline, token_bits: Vec<f64>) -> Self {
        assert_eq!(timeline.len(), token_bits.len());
        let event_bits = score_events(&token_bits, &timeline.event_spans);
        Self {
            timeline,
            token_bits,
            event_bits,
            token_deltas: None,
        }
    }

    /// Whether any token received probability zero.
    pub fn has_infinite(&self) -> bool {
        self.token_bits.iter().any(|b| b.is_infinite())
    }

    pub fn total_bits(&self) -> f64 {
        self.token_bits.iter().sum()
    }

    /// Admission time: the time of the first prefix token.
    pub fn admit_time(&self) -> i64 {
        self.timeline.token_times.first().copied().unwrap_or(0)
    }

    /// Zero-based indices of clinical tokens at or before the window end.
    pub fn window_tokens(&self, hours: f64) -> impl Iterator<Item = usize> + '_ {
        let end = window_end(self.admit_time(), hours);
        self.timeline
            .clinical_range()
            .filter(move |&i| self.timeline.token_times[i] <= end)
    }

    /// Indices of events starting at or before the window end.
    pub fn window_events(&self, hours: f64) -> impl Iterator<Item = usize> + '_ {
        let end = window_end(self.admit_time(), hours);
        self.timeline
            .event_spans
            .iter()
            .enumerate()
            .filter(move |(_, s)| self.timeline.token_times[s.start - 1] <= end)
            .map(|(k, _)| k)
    }
}

fn window_end(admit: i64, hours: f64) -> i64 {
    admit + (hours * 3600.0).round() as i64
}

/// Natural-log probabilities to bits.
pub fn to_bits(log_probs: &[f64]) -> Vec<f64> {
    log_probs.iter().map(|lp| -lp / LN_2 + 0.0).collect()
}

fn check_vocab(model: &dyn SequenceModel, timeline: &Timeline) -> Result<(), InfoError> {
    let vocab_size = model.vocab_size();
    match timeline.tokens.iter().find(|t| **t as usize >= vocab_size) {
        Some(&token) => Err(InfoError::VocabMismatch {
            id: timeline.hospitalization_id.clone(),
            token,
            vocab_size,
        }),
        None => Ok(()),
    }
}

fn apply_mode(bits: &mut [f64], mode: ScoreMode) {
    if mode == ScoreMode::Clinical {
        if let Some(first) = bits.first_mut() {
            *first = 0.0;
        }
    }
}

/// Bits of every token of one timeline with its context confined to it.
pub fn score_tokens(
    model: &dyn SequenceModel,
    timeline: &Timeline,
    mode: ScoreMode,
) -> Result<Vec<f64>, InfoError> {
    check_vocab(model, timeline)?;
    let mut bits = to_bits(&model.sequence_log_probs(&timeline.tokens)?);
    apply_mode(&mut bits, mode);
    Ok(bits)
}

/// Event scores as sums of member token scores.
pub fn score_events(token_bits: &[f64], spans: &[EventSpan]) -> Vec<f64> {
    spans
        .iter()
        .map(|s| token_bits[s.range()].iter().sum())
        .collect()
}

/// Score a cohort. In packed mode the cohort order defines the stream.
pub fn score_cohort(
    model: &dyn SequenceModel,
    timelines: &[Timeline],
    opts: ScoreOptions,
) -> Result<Vec<ScoredTimeline>, InfoError> {
    match opts.context {
        ContextMode::Confined => timelines
            .par_iter()
            .map(|tl| Ok(ScoredTimeline::new(tl.clone(), score_tokens(model, tl, opts.mode)?)))
            .collect(),
        ContextMode::Packed => {
            for tl in timelines {
                check_vocab(model, tl)?;
            }
            let total: usize = timelines.iter().map(Timeline::len).sum();
            // rows only, batching is irrelevant here
            let rows: Vec<Vec<u32>> = pack_with_width(timelines, 1, PACK_WIDTH, 0)
                .into_iter()
                .map(|b| b.data)
                .collect();
            let per_row: Vec<Vec<f64>> = rows
                .par_iter()
                .enumerate()
                .map(|(r, row)| {
                    let used = (total - r * PACK_WIDTH).min(PACK_WIDTH);
                    Ok(to_bits(&model.sequence_log_probs(&row[..used])?))
                })
                .collect::<Result<_, ModelError>>()?;
            let mut stream = per_row.into_iter().flatten();
            Ok(timelines
                .iter()
                .map(|tl| {
                    let mut bits: Vec<f64> = stream.by_ref().take(tl.len()).collect();
                    apply_mode(&mut bits, opts.mode);
                    ScoredTimeline::new(tl.clone(), bits)
                })
                .collect())
        }
    }
}

/// Mean bits per token over a cohort.
pub fn mean_bits(scored: &[ScoredTimeline]) -> Result<f64, InfoError> {
    let n: usize = scored.iter().map(|s| s.token_bits.len()).sum();
    if n == 0 {
        return Err(InfoError::Empty);
    }
    Ok(scored.iter().map(ScoredTimeline::total_bits).sum::<f64>() / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoThresholds {
    pub q95_token: f64,
    pub q95_event: f64,
    pub q99_event: f64,
    /// Where the thresholds were fitted.
    pub source: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdOptions {
    pub window_hours: f64,
    pub min_tokens: usize,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        Self {
            window_hours: DEFAULT_WINDOW_HOURS,
            min_tokens: DEFAULT_MIN_TOKENS,
        }
    }
}

/// Linear-interpolation quantile that tolerates infinite entries.
fn quantile_inf(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let (a, b) = (sorted[lo], sorted[hi]);
    if a == b || lo == hi {
        a
    } else if b.is_infinite() {
        b
    } else {
        a + (h - lo as f64) * (b - a)
    }
}

/// Percentile thresholds over clinical tokens and events inside the window,
/// with the same linear rule as the decile cutoffs.
pub fn fit_thresholds(
    scored: &[ScoredTimeline],
    opts: &ThresholdOptions,
    source: &str,
) -> Result<InfoThresholds, InfoError> {
    let mut tokens: Vec<f64> = scored
        .iter()
        .flat_map(|s| s.window_tokens(opts.window_hours).map(|i| s.token_bits[i]))
        .collect();
    let mut events: Vec<f64> = scored
        .iter()
        .flat_map(|s| s.window_events(opts.window_hours).map(|k| s.event_bits[k]))
        .collect();
    if tokens.is_empty() || tokens.len() < opts.min_tokens {
        return Err(InfoError::TooFewTokens {
            needed: opts.min_tokens.max(1),
            got: tokens.len(),
        });
    }
    if events.is_empty() {
        return Err(InfoError::NoEvents);
    }
    tokens.sort_by(f64::total_cmp);
    events.sort_by(f64::total_cmp);
    Ok(InfoThresholds {
        q95_token: quantile_inf(&tokens, 0.95),
        q95_event: quantile_inf(&events, 0.95),
        q99_event: quantile_inf(&events, 0.99),
        source: source.to_string(),
    })
}

impl InfoThresholds {
    pub fn validate(&self) -> Result<(), InfoError> {
        if self.q95_event > self.q99_event {
            return Err(InfoError::Unordered {
                q95: self.q95_event,
                q99: self.q99_event,
            });
        }
        Ok(())
    }

    pub fn token_flag(&self, bits: f64) -> bool {
        bits >= self.q95_token
    }

    pub fn event_band(&self, bits: f64) -> EventBand {
        if bits >= self.q99_event {
            EventBand::Ge99
        } else if bits >= self.q95_event {
            EventBand::Ge95Lt99
        } else {
            EventBand::Below
        }
    }

    pub fn read(path: &std::path::Path) -> Result<Self, InfoError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| InfoError::Io(format!("{}: {e}", path.display())))?;
        let t: Self = serde_json::from_str(&text).map_err(|e| InfoError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        t.validate()?;
        Ok(t)
    }

    pub fn write(&self, path: &std::path::Path) -> Result<(), InfoError> {
        let text = serde_json::to_string_pretty(self).expect("thresholds serialize");
        std::fs::write(path, text + "\n").map_err(|e| InfoError::Io(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventBand {
    Below,
    Ge95Lt99,
    Ge99,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CountFeatures {
    pub t_ge95: usize,
    pub e_ge95_lt99: usize,
    pub e_ge99: usize,
}

impl CountFeatures {
    pub fn as_row(&self) -> Vec<f64> {
        vec![self.t_ge95 as f64, self.e_ge95_lt99 as f64, self.e_ge99 as f64]
    }
}

pub fn count_features(
    scored: &ScoredTimeline,
    thresholds: &InfoThresholds,
    window_hours: f64,
) -> CountFeatures {
    let mut c = CountFeatures {
        t_ge95: scored
            .window_tokens(window_hours)
            .filter(|&i| thresholds.token_flag(scored.token_bits[i]))
            .count(),
        ..Default::default()
    };
    for k in scored.window_events(window_hours) {
        match thresholds.event_band(scored.event_bits[k]) {
            EventBand::Ge99 => c.e_ge99 += 1,
            EventBand::Ge95Lt99 => c.e_ge95_lt99 += 1,
            EventBand::Below => {}
        }
    }
    c
}

/// One line of the scored-timeline export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub hospitalization_id: String,
    pub tokens: Vec<String>,
    /// Epoch seconds per token.
    pub token_times: Vec<i64>,
    pub ending: TimelineEnding,
    /// Capped at the display limit and rounded to 6 decimals.
    pub bits: Vec<f64>,
    /// Positions whose true score is infinite.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub infinite: Vec<usize>,
    pub events: Vec<EventRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_ge95: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub span: EventSpan,
    pub bits: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<EventBand>,
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Bits for display: infinities become `cap`, then rounded to 6 decimals.
pub fn display_bits(x: f64, cap: f64) -> f64 {
    round6(x.min(cap))
}

impl ScoredRecord {
    pub fn build(
        scored: &ScoredTimeline,
        vocab: &Vocabulary,
        thresholds: Option<&InfoThresholds>,
        cap: f64,
    ) -> Result<Self, InfoError> {
        Ok(Self {
            hospitalization_id: scored.timeline.hospitalization_id.clone(),
            tokens: vocab.decode(&scored.timeline.tokens)?,
            token_times: scored.timeline.token_times.clone(),
            ending: scored.timeline.ending,
            bits: scored.token_bits.iter().map(|b| display_bits(*b, cap)).collect(),
            infinite: scored
                .token_bits
                .iter()
                .enumerate()
                .filter(|(_, b)| b.is_infinite())
                .map(|(i, _)| i)
                .collect(),
            events: scored
                .timeline
                .event_spans
                .iter()
                .zip(&scored.event_bits)
                .map(|(span, bits)| EventRecord {
                    span: *span,
                    bits: display_bits(*bits, cap),
                    band: thresholds.map(|t| t.event_band(*bits)),
                })
                .collect(),
            token_ge95: thresholds.map(|t| scored.token_bits.iter().map(|b| t.token_flag(*b)).collect()),
            deltas: scored
                .token_deltas
                .as_ref()
                .map(|d| d.iter().map(|x| round6(*x)).collect()),
        })
    }
}

impl ScoredRecord {
    /// Rebuild the scored timeline, with infinite positions restored.
    pub fn to_scored(&self, vocab: &Vocabulary) -> Result<ScoredTimeline, InfoError> {
        let n = self.tokens.len();
        if self.token_times.len() != n || self.bits.len() != n {
            return Err(InfoError::Io(format!(
                "record `{}` has {n} tokens, {} times and {} scores",
                self.hospitalization_id,
                self.token_times.len(),
                self.bits.len()
            )));
        }
        let tokens = self
            .tokens
            .iter()
            .map(|t| {
                vocab.id(t).ok_or_else(|| InfoError::Io(format!(
                    "record `{}`: token `{t}` is not in the vocabulary",
                    self.hospitalization_id
                )))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let timeline = Timeline::new(self.hospitalization_id.clone(), tokens, self.token_times.clone(), self.ending);
        let spans: Vec<EventSpan> = self.events.iter().map(|e| e.span).collect();
        if spans != timeline.event_spans {
            return Err(InfoError::Io(format!(
                "record `{}`: event spans do not match the token times",
                self.hospitalization_id
            )));
        }
        let mut bits = self.bits.clone();
        for &i in &self.infinite {
            if i >= n {
                return Err(InfoError::Io(format!(
                    "record `{}`: infinite position {i} is out of range",
                    self.hospitalization_id
                )));
            }
            bits[i] = f64::INFINITY;
        }
        let mut scored = ScoredTimeline::new(timeline, bits);
        scored.token_deltas = self.deltas.clone();
        Ok(scored)
    }
}

pub fn write_scored_jsonl<W: Write>(
    mut out: W,
    scored: &[ScoredTimeline],
    vocab: &Vocabulary,
    thresholds: Option<&InfoThresholds>,
    cap: f64,
) -> Result<(), InfoError> {
    for s in scored {
        let rec = ScoredRecord::build(s, vocab, thresholds, cap)?;
        serde_json::to_writer(&mut out, &rec).map_err(|e| InfoError::Io(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_scored_jsonl<R: BufRead>(input: R) -> Result<Vec<ScoredRecord>, InfoError> {
    input
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|(i, l)| {
            serde_json::from_str(&l?).map_err(|e| InfoError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqmodel::{JointTableModel, UniformModel};
    use crate::tokenizer::{TimelineEnding, PREFIX_LEN};
    use proptest::prelude::*;

    fn tl_with_times(tokens: Vec<u32>, times: Vec<i64>) -> Timeline {
        Timeline::new("h".into(), tokens, times, TimelineEnding::Window)
    }

    /// Hand-built scores on a timeline with prefix and the given event times.
    fn scored(bits: Vec<f64>, times: Vec<i64>) -> ScoredTimeline {
        let tokens = vec![0; bits.len()];
        ScoredTimeline::new(tl_with_times(tokens, times), bits)
    }

    #[test]
    fn probability_values_in_bits() {
        assert_eq!(to_bits(&[0.0]), [0.0]);
        assert!((to_bits(&[0.5f64.ln()])[0] - 1.0).abs() < 1e-15);
        let u = UniformModel { vocab_size: 208 };
        let t = tl_with_times(vec![1, 2], vec![0, 0]);
        let b = score_tokens(&u, &t, ScoreMode::Raw).unwrap();
        assert!((b[0] - 7.700_439_718_141_093).abs() < 1e-12);
        assert_eq!(score_tokens(&u, &t, ScoreMode::Clinical).unwrap()[0], 0.0);
    }

    #[test]
    fn chain_rule_on_three_token_table() {
        // p over all 3^4 sequences, proportional to 1 + index
        let n = 81;
        let z: f64 = (1..=n).map(|i| i as f64).sum();
        let joint: Vec<f64> = (0..n).map(|i| (i + 1) as f64 / z).collect();
        let m = JointTableModel::new(3, 4, joint.clone()).unwrap();
        for (i, p) in joint.iter().enumerate() {
            let seq = [(i / 27) as u32, (i / 9 % 3) as u32, (i / 3 % 3) as u32, (i % 3) as u32];
            let bits = score_tokens(&m, &tl_with_times(seq.to_vec(), vec![0; 4]), ScoreMode::Raw)
                .unwrap();
            let total: f64 = bits.iter().sum();
            assert!((total + p.log2()).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_probability_is_flagged_infinite() {
        let m = JointTableModel::new(2, 1, vec![1.0, 0.0]).unwrap();
        let s = ScoredTimeline::new(tl_with_times(vec![1], vec![0]), score_tokens(&m, &tl_with_times(vec![1], vec![0]), ScoreMode::Raw).unwrap());
        assert!(s.has_infinite());
        assert_eq!(display_bits(s.token_bits[0], DEFAULT_DISPLAY_CAP), 64.0);
    }

    #[test]
    fn event_scores_add_up() {
        let spans = [EventSpan::new(1, 1), EventSpan::new(2, 3)];
        let e = score_events(&[2.5, 1.0, 2.0], &spans);
        assert_eq!(e, [2.5, 3.0]);
        assert!(score_events(&[1.0], &[]).is_empty());
    }

    #[test]
    fn mean_bits_examples() {
        let s = scored(vec![1.0, 3.0], vec![0, 0]);
        assert_eq!(mean_bits(&[s]).unwrap(), 2.0);
        assert!(matches!(mean_bits(&[]), Err(InfoError::Empty)));
    }

    fn hundred_token_cohort() -> ScoredTimeline {
        // prefix of 6 zero-bit tokens then 100 single-token events 1..100 bits
        let mut bits = vec![0.0; PREFIX_LEN];
        let mut times = vec![0; PREFIX_LEN];
        for k in 1..=100 {
            bits.push(k as f64);
            times.push(k as i64 * 60);
        }
        scored(bits, times)
    }

    #[test]
    fn thresholds_on_one_to_hundred() {
        let t = fit_thresholds(&[hundred_token_cohort()], &ThresholdOptions::default(), "test")
            .unwrap();
        assert!((t.q95_token - 95.05).abs() < 1e-9);
        assert!((t.q95_event - 95.05).abs() < 1e-9);
        assert!((t.q99_event - 99.01).abs() < 1e-9);
        let opts = ThresholdOptions {
            min_tokens: 101,
            ..Default::default()
        };
        assert!(matches!(
            fit_thresholds(&[hundred_token_cohort()], &opts, "x"),
            Err(InfoError::TooFewTokens { got: 100, .. })
        ));
    }

    #[test]
    fn window_excludes_late_tokens() {
        let mut bits = vec![0.0; PREFIX_LEN];
        let mut times = vec![0; PREFIX_LEN];
        bits.extend([5.0, 7.0]);
        times.extend([24 * 3600, 24 * 3600 + 1]);
        let s = scored(bits, times);
        assert_eq!(s.window_tokens(24.0).collect::<Vec<_>>(), [6]);
        assert_eq!(s.window_events(24.0).count(), 1);
    }

    #[test]
    fn equal_scores_give_equal_thresholds() {
        let mut bits = vec![0.0; PREFIX_LEN];
        let mut times = vec![0; PREFIX_LEN];
        for k in 0..120 {
            bits.push(3.0);
            times.push(k);
        }
        let t = fit_thresholds(&[scored(bits, times)], &ThresholdOptions::default(), "x").unwrap();
        assert_eq!((t.q95_token, t.q95_event, t.q99_event), (3.0, 3.0, 3.0));
    }

    #[test]
    fn band_counts_on_constructed_events() {
        let thr = InfoThresholds {
            q95_token: 10.0,
            q95_event: 10.0,
            q99_event: 20.0,
            source: "x".into(),
        };
        // 20 events: 15 below, 4 in [10, 20), one exactly at 20
        let mut bits = vec![0.0; PREFIX_LEN];
        let mut times = vec![0; PREFIX_LEN];
        let values = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 9.5, 0.5, 1.5, 2.5, 3.5, 4.5, 10.0, 12.0, 15.0, 19.99, 20.0];
        for (k, v) in values.iter().enumerate() {
            bits.push(*v);
            times.push(k as i64 + 1);
        }
        let c = count_features(&scored(bits, times), &thr, 24.0);
        assert_eq!((c.t_ge95, c.e_ge95_lt99, c.e_ge99), (5, 4, 1));
        assert_eq!(thr.event_band(20.0), EventBand::Ge99);
        let none = count_features(&scored(vec![0.0; 8], vec![0; 8]), &thr, 24.0);
        assert_eq!(none.t_ge95, 0);
    }

    #[test]
    fn packed_mode_crosses_timelines() {
        // a table model over length-3 sequences sees the previous timeline
        let u = UniformModel { vocab_size: 4 };
        let a = tl_with_times(vec![1, 2], vec![0, 0]);
        let b = tl_with_times(vec![3], vec![0]);
        let opts = ScoreOptions {
            mode: ScoreMode::Raw,
            context: ContextMode::Packed,
        };
        let s = score_cohort(&u, &[a.clone(), b.clone()], opts).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].token_bits, [2.0]);
        let confined = score_cohort(&u, &[a, b], ScoreOptions::default()).unwrap();
        assert_eq!(confined[0].token_bits, s[0].token_bits);
    }

    #[test]
    fn vocabulary_mismatch_names_timeline() {
        let u = UniformModel { vocab_size: 2 };
        let err = score_tokens(&u, &tl_with_times(vec![5], vec![0]), ScoreMode::Raw).unwrap_err();
        assert!(err.to_string().contains("timeline h"));
    }

    #[test]
    fn jsonl_round_trip() {
        let vocab = Vocabulary::preset();
        let s = scored(vec![1.23456789, f64::INFINITY], vec![0, 0]);
        let thr = InfoThresholds {
            q95_token: 1.0,
            q95_event: 1.0,
            q99_event: 2.0,
            source: "x".into(),
        };
        let mut out = Vec::new();
        write_scored_jsonl(&mut out, std::slice::from_ref(&s), &vocab, Some(&thr), DEFAULT_DISPLAY_CAP).unwrap();
        let back = read_scored_jsonl(out.as_slice()).unwrap();
        assert_eq!(back[0].bits, [1.234568, 64.0]);
        assert_eq!(back[0].infinite, [1]);
        assert_eq!(back[0].tokens[0], "Q0");
        let rebuilt = back[0].to_scored(&vocab).unwrap();
        assert_eq!(rebuilt.token_bits, [1.234568, f64::INFINITY]);
        assert_eq!(rebuilt.timeline.tokens, s.timeline.tokens);
    }

    proptest! {
        #[test]
        fn event_score_is_token_sum(bits in prop::collection::vec(0.0f64..30.0, 7..60), cuts in prop::collection::vec(0usize..5, 60)) {
            let n = bits.len();
            let mut times = vec![0i64; PREFIX_LEN];
            let mut t = 0;
            for &c in &cuts[PREFIX_LEN..n] {
                t += (c == 0) as i64;
                times.push(t);
            }
            let s = scored(bits.clone(), times);
            for (span, e) in s.timeline.event_spans.iter().zip(&s.event_bits) {
                let direct: f64 = bits[span.start - 1..span.end].iter().sum();
                prop_assert!((direct - e).abs() <= 1e-9);
            }
        }

        #[test]
        fn mean_is_associative(bits in prop::collection::vec(0.0f64..30.0, 1..80), split in 0usize..80) {
            let k = split.min(bits.len());
            let whole = mean_bits(&[scored(bits.clone(), vec![0; bits.len()])]).unwrap();
            let mut parts = Vec::new();
            if k > 0 { parts.push(scored(bits[..k].to_vec(), vec![0; k])); }
            if k < bits.len() { parts.push(scored(bits[k..].to_vec(), vec![0; bits.len() - k])); }
            let two = mean_bits(&parts).unwrap();
            let streaming = bits.iter().enumerate().fold(0.0, |m, (i, b)| m + (b - m) / (i + 1) as f64);
            prop_assert!((whole - two).abs() <= 1e-12 * whole.max(1.0));
            prop_assert!((whole - streaming).abs() <= 1e-12 * whole.max(1.0));
        }

        #[test]
        fn q99_never_below_q95(bits in prop::collection::vec(0.0f64..30.0, 100..200)) {
            let n = bits.len();
            let mut times = vec![0; PREFIX_LEN];
            times.extend((1..=n - PREFIX_LEN).map(|i| i as i64));
            let t = fit_thresholds(&[scored(bits, times)], &ThresholdOptions { min_tokens: 1, ..Default::default() }, "p").unwrap();
            prop_assert!(t.q95_event <= t.q99_event);
        }
    }
}
