//! Redaction experiments on 24-hour timelines and count-feature regressions.
//!
//! The grid keeps hospitalizations with an ICU transfer in the first 24
//! hours, truncates their timelines at the 24-hour mark, scores events on the
//! truncated timelines and builds the original plus 12 redacted versions
//! (top, bottom and random removal of 10 to 40 percent of events). For every
//! version and outcome a logistic head is trained on representations of the
//! training split and evaluated on the test split against the original.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::infomeasure::{
    count_features, score_tokens, InfoError, InfoThresholds, ScoreMode, ScoredTimeline,
    DEFAULT_WINDOW_HOURS,
};
use crate::ingest::{split_cohort, Hospitalization, IngestError, SplitPolicy, TableKind};
use crate::seqmodel::{ModelError, SequenceModel};
use crate::stats::{
    bootstrap_report, paired_pvalue, BootstrapOptions, LogisticFit, LogisticOptions, Metric,
    MetricReport, StatsError,
};
use crate::tokenizer::{Timeline, Tokenizer, TokenizerError};

pub const DEFAULT_HEAD_L2: f64 = 1e-4;
pub const PERCENTAGES: [u32; 4] = [10, 20, 30, 40];
const ICU_CATEGORY: &str = "icu";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Info(#[from] InfoError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{0}")]
    Stats(#[from] StatsError),
    #[error("redaction percentage must be one of 10, 20, 30, 40, got {0}")]
    InvalidPercentage(u32),
    #[error("unknown redaction method {0:?}")]
    UnknownMethod(String),
    #[error("unknown outcome {0:?}; expected mortality or long_los")]
    UnknownOutcome(String),
    #[error("{split} split has a single class for {outcome} ({positives} of {n} positive)")]
    DegenerateSplit {
        split: &'static str,
        outcome: Outcome,
        positives: usize,
        n: usize,
    },
    #[error("{split} split is empty")]
    EmptySplit { split: &'static str },
    #[error("event scores cover {got} events, timeline {id} has {expected}")]
    ScoreMismatch {
        id: String,
        expected: usize,
        got: usize,
    },
    #[error("timeline {id}: representation has {got} entries, model declares {expected}")]
    Dimension {
        id: String,
        expected: usize,
        got: usize,
    },
    #[error("timeline {id}: representation is not finite")]
    NonFiniteFeature { id: String },
    #[error("count regression: logistic fit separates the data; rerun with a positive --l2 penalty")]
    Separation,
    #[error("{0}")]
    Io(String),
}

impl From<std::io::Error> for ExperimentError {
    fn from(e: std::io::Error) -> Self {
        ExperimentError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Mortality,
    LongLos,
}

impl Outcome {
    pub const ALL: [Outcome; 2] = [Outcome::Mortality, Outcome::LongLos];

    pub fn label(self, h: &Hospitalization) -> bool {
        match self {
            Outcome::Mortality => h.outcome_inpatient_mortality,
            Outcome::LongLos => h.outcome_long_los,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Mortality => "mortality",
            Outcome::LongLos => "long_los",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Outcome {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "mortality" | "inpatient_mortality" => Ok(Outcome::Mortality),
            "long_los" | "long-los" => Ok(Outcome::LongLos),
            other => Err(ExperimentError::UnknownOutcome(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RedactionMethod {
    /// Most informative events first; ties remove the earlier event first.
    Top,
    /// Least informative events first; ties remove the later event first.
    Bottom,
    /// Uniform without replacement, seeded per hospitalization.
    Random,
}

impl RedactionMethod {
    pub const ALL: [RedactionMethod; 3] =
        [RedactionMethod::Top, RedactionMethod::Bottom, RedactionMethod::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            RedactionMethod::Top => "top",
            RedactionMethod::Bottom => "bottom",
            RedactionMethod::Random => "random",
        }
    }
}

impl FromStr for RedactionMethod {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "top" => Ok(RedactionMethod::Top),
            "bottom" => Ok(RedactionMethod::Bottom),
            "random" => Ok(RedactionMethod::Random),
            other => Err(ExperimentError::UnknownMethod(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RedactionPlan {
    pub method: RedactionMethod,
    pub percentage: u32,
    /// Used by the random method only.
    pub seed: u64,
}

impl RedactionPlan {
    pub fn new(method: RedactionMethod, percentage: u32, seed: u64) -> Result<Self, ExperimentError> {
        let plan = Self {
            method,
            percentage,
            seed,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if PERCENTAGES.contains(&self.percentage) {
            Ok(())
        } else {
            Err(ExperimentError::InvalidPercentage(self.percentage))
        }
    }

    /// Events removed from a timeline with `m` events.
    pub fn count(&self, m: usize) -> usize {
        m * self.percentage as usize / 100
    }

    /// The 12 plans of the grid, methods outermost.
    pub fn grid(seed: u64) -> Vec<RedactionPlan> {
        RedactionMethod::ALL
            .iter()
            .flat_map(|&method| {
                PERCENTAGES.iter().map(move |&percentage| RedactionPlan {
                    method,
                    percentage,
                    seed,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    Original,
    Redacted(RedactionPlan),
}

impl Variant {
    /// The original followed by the 12 redacted versions.
    pub fn all(seed: u64) -> Vec<Variant> {
        std::iter::once(Variant::Original)
            .chain(RedactionPlan::grid(seed).into_iter().map(Variant::Redacted))
            .collect()
    }

    pub fn method_label(&self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::Redacted(p) => p.method.as_str(),
        }
    }

    pub fn pct_label(&self) -> String {
        match self {
            Variant::Original => "---".to_string(),
            Variant::Redacted(p) => p.percentage.to_string(),
        }
    }
}

/// Keep hospitalizations with an ICU transfer at or before admission + 24h.
pub fn filter_icu_24h(cohort: &[Hospitalization]) -> Vec<Hospitalization> {
    cohort
        .iter()
        .filter(|h| {
            let limit = h.admit_time + chrono::Duration::hours(24);
            h.events.iter().any(|e| {
                e.table_kind == TableKind::Transfers
                    && e.category == ICU_CATEGORY
                    && e.timestamp <= limit
            })
        })
        .cloned()
        .collect()
}

/// Prefix plus every event at or before admission + 24h; no suffix.
pub fn truncate_24h(timeline: &Timeline) -> Timeline {
    let admit = timeline.token_times.first().copied().unwrap_or(0);
    timeline.window_until(admit + (DEFAULT_WINDOW_HOURS * 3600.0) as i64)
}

/// Stable 64-bit FNV-1a, for seeding per-hospitalization streams.
fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Indices of the events a plan removes, given one score per event.
pub fn redacted_events(
    timeline: &Timeline,
    event_bits: &[f64],
    plan: &RedactionPlan,
) -> Result<BTreeSet<usize>, ExperimentError> {
    plan.validate()?;
    let m = timeline.event_spans.len();
    if event_bits.len() != m {
        return Err(ExperimentError::ScoreMismatch {
            id: timeline.hospitalization_id.clone(),
            expected: m,
            got: event_bits.len(),
        });
    }
    let k = plan.count(m);
    let mut order: Vec<usize> = (0..m).collect();
    Ok(match plan.method {
        RedactionMethod::Top => {
            order.sort_by(|&a, &b| event_bits[b].total_cmp(&event_bits[a]).then(a.cmp(&b)));
            order.into_iter().take(k).collect()
        }
        RedactionMethod::Bottom => {
            order.sort_by(|&a, &b| event_bits[a].total_cmp(&event_bits[b]).then(b.cmp(&a)));
            order.into_iter().take(k).collect()
        }
        RedactionMethod::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(plan.seed ^ u64::from(plan.percentage) << 32);
            rng.set_stream(fnv1a(&timeline.hospitalization_id));
            sample(&mut rng, m, k).into_iter().collect()
        }
    })
}

/// Remove the events selected by a plan; the prefix is always kept.
pub fn redact(
    timeline: &Timeline,
    event_bits: &[f64],
    plan: &RedactionPlan,
) -> Result<Timeline, ExperimentError> {
    let drop = redacted_events(timeline, event_bits, plan)?;
    Ok(timeline.without_events(&drop))
}

/// How a sequence of prefix representations becomes one feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Representation of the whole truncated timeline.
    #[default]
    Last,
    /// Mean of the representations of every prefix.
    Mean,
}

impl FromStr for Pooling {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "last" => Ok(Pooling::Last),
            "mean" => Ok(Pooling::Mean),
            other => Err(format!("unknown pooling {other:?}; expected last or mean")),
        }
    }
}

fn features_of(
    model: &dyn SequenceModel,
    timeline: &Timeline,
    pooling: Pooling,
) -> Result<Vec<f64>, ExperimentError> {
    let d = model.repr_dim();
    let v = match pooling {
        Pooling::Last => model.representation(&timeline.tokens)?,
        Pooling::Mean => {
            let reps = model.representations(&timeline.tokens)?;
            let mut mean = vec![0.0; d];
            for r in &reps {
                if r.len() != d {
                    return Err(ExperimentError::Dimension {
                        id: timeline.hospitalization_id.clone(),
                        expected: d,
                        got: r.len(),
                    });
                }
                for (m, x) in mean.iter_mut().zip(r) {
                    *m += x;
                }
            }
            let n = reps.len().max(1) as f64;
            mean.iter_mut().for_each(|m| *m /= n);
            mean
        }
    };
    if v.len() != d {
        return Err(ExperimentError::Dimension {
            id: timeline.hospitalization_id.clone(),
            expected: d,
            got: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(ExperimentError::NonFiniteFeature {
            id: timeline.hospitalization_id.clone(),
        });
    }
    Ok(v)
}

/// One feature vector per timeline, in input order.
pub fn extract_features(
    model: &dyn SequenceModel,
    timelines: &[Timeline],
    pooling: Pooling,
) -> Result<Vec<Vec<f64>>, ExperimentError> {
    timelines
        .par_iter()
        .map(|tl| features_of(model, tl, pooling))
        .collect()
}

/// A truncated timeline with its event scores and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub timeline: Timeline,
    pub event_bits: Vec<f64>,
    pub mortality: bool,
    pub long_los: bool,
}

impl Sample {
    pub fn label(&self, outcome: Outcome) -> bool {
        match outcome {
            Outcome::Mortality => self.mortality,
            Outcome::LongLos => self.long_los,
        }
    }
}

/// Encode, truncate and score hospitalizations for the redaction grid.
pub fn prepare_samples(
    cohort: &[Hospitalization],
    tokenizer: &Tokenizer,
    model: &dyn SequenceModel,
) -> Result<Vec<Sample>, ExperimentError> {
    cohort
        .par_iter()
        .map(|h| {
            let timeline = truncate_24h(&tokenizer.encode(h)?);
            let bits = score_tokens(model, &timeline, ScoreMode::Raw)?;
            let event_bits = ScoredTimeline::new(timeline.clone(), bits).event_bits;
            Ok(Sample {
                timeline,
                event_bits,
                mortality: h.outcome_inpatient_mortality,
                long_los: h.outcome_long_los,
            })
        })
        .collect()
}

/// Timelines of one variant, in sample order.
pub fn variant_timelines(
    samples: &[Sample],
    variant: &Variant,
) -> Result<Vec<Timeline>, ExperimentError> {
    match variant {
        Variant::Original => Ok(samples.iter().map(|s| s.timeline.clone()).collect()),
        Variant::Redacted(plan) => samples
            .par_iter()
            .map(|s| redact(&s.timeline, &s.event_bits, plan))
            .collect(),
    }
}

fn check_labels(
    labels: &[bool],
    split: &'static str,
    outcome: Outcome,
) -> Result<(), ExperimentError> {
    let positives = labels.iter().filter(|l| **l).count();
    if positives == 0 || positives == labels.len() {
        return Err(ExperimentError::DegenerateSplit {
            split,
            outcome,
            positives,
            n: labels.len(),
        });
    }
    Ok(())
}

/// Train a head on one split and return probabilities on the other.
pub fn fit_and_predict(
    train_x: &[Vec<f64>],
    train_y: &[bool],
    test_x: &[Vec<f64>],
    l2: f64,
) -> Result<Vec<f64>, ExperimentError> {
    let opts = LogisticOptions {
        l2,
        max_iter: 200,
        ..Default::default()
    };
    let fit = LogisticFit::fit(train_x, train_y, &opts)?;
    Ok(test_x.iter().map(|r| fit.predict_proba(r)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptions {
    pub split: SplitPolicy,
    pub icu_filter: bool,
    pub pooling: Pooling,
    pub head_l2: f64,
    pub bootstrap: BootstrapOptions,
    /// Seed of the random redaction method.
    pub redaction_seed: u64,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            split: SplitPolicy::ByPatientRandom {
                fractions: [0.7, 0.0, 0.3],
                seed: 0,
            },
            icu_filter: true,
            pooling: Pooling::Last,
            head_l2: DEFAULT_HEAD_L2,
            bootstrap: BootstrapOptions::default(),
            redaction_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub outcome: Outcome,
    pub variant: Variant,
    /// ROC-AUC, PR-AUC and Brier, in that order.
    pub reports: Vec<MetricReport>,
    /// One-sided p-values against the original; `None` on the original row.
    pub p_values: Option<Vec<f64>>,
}

impl GridRow {
    pub fn report(&self, metric: Metric) -> &MetricReport {
        self.reports
            .iter()
            .find(|r| r.metric == metric)
            .expect("every metric is reported")
    }

    pub fn p_value(&self, metric: Metric) -> Option<f64> {
        let i = Metric::ALL.iter().position(|m| *m == metric)?;
        self.p_values.as_ref().map(|p| p[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RedactionGrid {
    pub n_cohort: usize,
    pub n_analyzed: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub rows: Vec<GridRow>,
    /// Test-split probabilities per (outcome, variant), in row order.
    #[serde(skip)]
    pub predictions: Vec<Vec<f64>>,
}

impl RedactionGrid {
    pub fn row(&self, outcome: Outcome, variant: &Variant) -> Option<&GridRow> {
        self.rows
            .iter()
            .find(|r| r.outcome == outcome && r.variant == *variant)
    }

    pub fn rows_for(&self, outcome: Outcome) -> impl Iterator<Item = &GridRow> {
        self.rows.iter().filter(move |r| r.outcome == outcome)
    }
}

/// Run the full redaction grid for the requested outcomes.
pub fn run_redaction_grid(
    cohort: &[Hospitalization],
    tokenizer: &Tokenizer,
    model: &dyn SequenceModel,
    outcomes: &[Outcome],
    opts: &GridOptions,
) -> Result<RedactionGrid, ExperimentError> {
    let analyzed = if opts.icu_filter {
        filter_icu_24h(cohort)
    } else {
        cohort.to_vec()
    };
    let split = split_cohort(&analyzed, opts.split)?;
    if split.train.is_empty() {
        return Err(ExperimentError::EmptySplit { split: "train" });
    }
    if split.test.is_empty() {
        return Err(ExperimentError::EmptySplit { split: "test" });
    }
    let train = prepare_samples(&split.train, tokenizer, model)?;
    let test = prepare_samples(&split.test, tokenizer, model)?;
    for &outcome in outcomes {
        let labels = |s: &[Sample]| s.iter().map(|x| x.label(outcome)).collect::<Vec<_>>();
        check_labels(&labels(&train), "train", outcome)?;
        check_labels(&labels(&test), "test", outcome)?;
    }

    let variants = Variant::all(opts.redaction_seed);
    let mut features = Vec::with_capacity(variants.len());
    for v in &variants {
        let tr = extract_features(model, &variant_timelines(&train, v)?, opts.pooling)?;
        let te = extract_features(model, &variant_timelines(&test, v)?, opts.pooling)?;
        features.push((tr, te));
    }

    let mut rows = Vec::new();
    let mut predictions = Vec::new();
    for &outcome in outcomes {
        let train_y: Vec<bool> = train.iter().map(|s| s.label(outcome)).collect();
        let test_y: Vec<bool> = test.iter().map(|s| s.label(outcome)).collect();
        let probs: Vec<Vec<f64>> = features
            .par_iter()
            .map(|(tr, te)| fit_and_predict(tr, &train_y, te, opts.head_l2))
            .collect::<Result<_, _>>()?;
        for (v, p) in variants.iter().zip(&probs) {
            let reports = bootstrap_report(p, &test_y, &Metric::ALL, &opts.bootstrap)?;
            let p_values = match v {
                Variant::Original => None,
                Variant::Redacted(_) => Some(
                    Metric::ALL
                        .iter()
                        .map(|m| paired_pvalue(*m, &probs[0], p, &test_y, &opts.bootstrap))
                        .collect::<Result<Vec<_>, _>>()?,
                ),
            };
            rows.push(GridRow {
                outcome,
                variant: *v,
                reports,
                p_values,
            });
        }
        predictions.extend(probs);
    }
    Ok(RedactionGrid {
        n_cohort: cohort.len(),
        n_analyzed: analyzed.len(),
        n_train: train.len(),
        n_test: test.len(),
        rows,
        predictions,
    })
}

/// Significance stars: `*` p<0.05, `**` p<0.01, `***` p<0.001.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// p-value cell: `<0.001`, three decimals, or blank above 0.1.
pub fn format_p(p: f64) -> String {
    if p < 0.001 {
        "<0.001".to_string()
    } else if p > 0.1 {
        String::new()
    } else {
        format!("{p:.3}")
    }
}

/// Metric cell such as `0.869 ± 0.009`.
pub fn format_metric(r: &MetricReport) -> String {
    format!("{:.3} ± {:.3}", r.point, r.half_width())
}

fn p_cell(row: &GridRow, m: Metric) -> String {
    row.p_value(m).map_or_else(|| "---".to_string(), format_p)
}

/// Long-format CSV: one line per outcome, variant and metric.
pub fn write_grid_csv<W: Write>(out: W, grid: &RedactionGrid) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| ExperimentError::Io(e.to_string());
    w.write_record([
        "outcome", "method", "pct", "metric", "point", "ci_low", "ci_high", "cell", "p_value",
        "p_cell", "stars",
    ])
    .map_err(io)?;
    for row in &grid.rows {
        for m in Metric::ALL {
            let r = row.report(m);
            let p = row.p_value(m);
            w.write_record([
                row.outcome.as_str().to_string(),
                row.variant.method_label().to_string(),
                row.variant.pct_label(),
                m.label().to_string(),
                format!("{:.6}", r.point),
                format!("{:.6}", r.ci_low),
                format!("{:.6}", r.ci_high),
                format_metric(r),
                p.map_or_else(String::new, |p| format!("{p:.6}")),
                p_cell(row, m),
                p.map_or("", stars).to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-outcome table with a range and p-value column for each metric.
pub fn format_outcome_markdown(grid: &RedactionGrid, outcome: Outcome) -> String {
    let mut s = String::from(
        "| method | pct. | ROC-AUC | p-val. | PR-AUC | p-val. | Brier | p-val. |\n\
         |---|---|---|---|---|---|---|---|\n",
    );
    for row in grid.rows_for(outcome) {
        s.push_str(&format!("| {} | {} |", row.variant.method_label(), row.variant.pct_label()));
        for m in Metric::ALL {
            s.push_str(&format!(" {} | {} |", format_metric(row.report(m)), p_cell(row, m)));
        }
        s.push('\n');
    }
    s
}

/// ROC-AUC of every outcome side by side, with significance stars.
pub fn format_summary_markdown(grid: &RedactionGrid) -> String {
    let outcomes: Vec<Outcome> = Outcome::ALL
        .into_iter()
        .filter(|o| grid.rows_for(*o).next().is_some())
        .collect();
    let mut s = String::from("| method | pct. |");
    for o in &outcomes {
        s.push_str(&format!(" {o} |"));
    }
    s.push_str("\n|---|---|");
    s.push_str(&"---|".repeat(outcomes.len()));
    s.push('\n');
    let first = outcomes.first().copied();
    for row in grid.rows.iter().filter(|r| Some(r.outcome) == first) {
        s.push_str(&format!("| {} | {} |", row.variant.method_label(), row.variant.pct_label()));
        for o in &outcomes {
            let r = grid.row(*o, &row.variant).expect("same variants for each outcome");
            let star = r.p_value(Metric::RocAuc).map_or("", stars);
            let cell = format_metric(r.report(Metric::RocAuc));
            if star.is_empty() {
                s.push_str(&format!(" {cell} |"));
            } else {
                s.push_str(&format!(" {cell} {star} |"));
            }
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountRegressionOptions {
    pub window_hours: f64,
    /// Zero gives the unpenalized fit with Wald inference.
    pub l2: f64,
}

impl Default for CountRegressionOptions {
    fn default() -> Self {
        Self {
            window_hours: DEFAULT_WINDOW_HOURS,
            l2: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub name: &'static str,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
    /// The feature never varies; its estimate is 0 with infinite error.
    pub constant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountRegression {
    pub n: usize,
    pub positives: usize,
    /// Intercept, T≥95, E≥95,<99, E≥99.
    pub coefficients: Vec<Coefficient>,
}

pub const COUNT_FEATURE_NAMES: [&str; 4] = ["intercept", "T_ge95", "E_ge95_lt99", "E_ge99"];

/// Logistic regression of an outcome on the three count features.
pub fn count_feature_regression(
    scored: &[ScoredTimeline],
    labels: &[bool],
    thresholds: &InfoThresholds,
    opts: &CountRegressionOptions,
) -> Result<CountRegression, ExperimentError> {
    let rows: Vec<Vec<f64>> = scored
        .iter()
        .map(|s| count_features(s, thresholds, opts.window_hours).as_row())
        .collect();
    let fit = LogisticFit::fit(
        &rows,
        labels,
        &LogisticOptions {
            l2: opts.l2,
            max_iter: 200,
            ..Default::default()
        },
    )
    .map_err(|e| match e {
        StatsError::Separation | StatsError::NonConvergence { .. } => ExperimentError::Separation,
        e => ExperimentError::Stats(e),
    })?;
    let (coef, se) = fit.raw_units();
    let coefficients = (0..4)
        .map(|j| Coefficient {
            name: COUNT_FEATURE_NAMES[j],
            estimate: coef[j],
            std_error: se[j],
            z: fit.z_scores[j],
            p_value: fit.p_values[j],
            constant: j > 0 && fit.constant_columns[j - 1],
        })
        .collect();
    Ok(CountRegression {
        n: labels.len(),
        positives: labels.iter().filter(|l| **l).count(),
        coefficients,
    })
}
