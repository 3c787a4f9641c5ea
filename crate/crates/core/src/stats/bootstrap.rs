//! Percentile bootstrap intervals and the paired exchangeability test.
//!
//! Each replicate draws from its own ChaCha stream (`seed`, replicate index),
//! so results do not depend on how replicates are scheduled across threads.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{check_probabilities, weighted_brier, Metric, Ranking};
use super::quantile::linear_quantile_sorted;
use super::{check_len, StatsError};

pub const DEFAULT_REPLICATES: usize = 10_000;
/// Largest tolerated share of resamples that lose a class.
pub const MAX_DEGENERATE_SHARE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
    /// Central coverage of the interval.
    pub level: f64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            replicates: DEFAULT_REPLICATES,
            seed: 0,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: Metric,
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub replicates: usize,
    pub seed: u64,
    /// Resamples redrawn because they lost a class.
    pub redraws: usize,
}

impl MetricReport {
    pub fn half_width(&self) -> f64 {
        (self.ci_high - self.ci_low) / 2.0
    }
}

fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    rng
}

fn evaluate(
    metric: Metric,
    ranking: &Ranking,
    scores: &[f64],
    labels: &[bool],
    weight: impl Fn(usize) -> u64,
) -> Option<f64> {
    match metric {
        Metric::RocAuc => ranking.auc(labels, weight),
        Metric::PrAuc => ranking.average_precision(labels, weight),
        Metric::Brier => weighted_brier(scores, labels, weight),
    }
}

fn validate(scores: &[f64], labels: &[bool], metrics: &[Metric]) -> Result<(), StatsError> {
    check_len(scores.len(), labels.len())?;
    if scores.is_empty() {
        return Err(StatsError::Empty);
    }
    for m in metrics {
        m.evaluate(scores, labels)?;
    }
    if metrics.contains(&Metric::Brier) {
        check_probabilities(scores)?;
    }
    if !labels.iter().any(|l| *l) || labels.iter().all(|l| *l) {
        return Err(StatsError::SingleClass);
    }
    Ok(())
}

/// Point estimates and percentile intervals for several metrics computed on
/// shared resamples. Resamples missing a class are redrawn.
pub fn bootstrap_report(
    scores: &[f64],
    labels: &[bool],
    metrics: &[Metric],
    opts: &BootstrapOptions,
) -> Result<Vec<MetricReport>, StatsError> {
    validate(scores, labels, metrics)?;
    let n = scores.len();
    let ranking = Ranking::new(scores);

    let draws: Vec<(Vec<f64>, usize)> = (0..opts.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(opts.seed, r);
            let mut counts = vec![0u64; n];
            let mut redraws = 0;
            loop {
                counts.iter_mut().for_each(|c| *c = 0);
                for _ in 0..n {
                    counts[rng.gen_range(0..n)] += 1;
                }
                let pos = labels.iter().zip(&counts).any(|(l, c)| *l && *c > 0);
                let neg = labels.iter().zip(&counts).any(|(l, c)| !*l && *c > 0);
                if pos && neg {
                    break;
                }
                redraws += 1;
            }
            let values = metrics
                .iter()
                .map(|m| {
                    evaluate(*m, &ranking, scores, labels, |i| counts[i])
                        .expect("both classes present")
                })
                .collect();
            (values, redraws)
        })
        .collect();

    let redraws: usize = draws.iter().map(|(_, d)| d).sum();
    if redraws as f64 > MAX_DEGENERATE_SHARE * opts.replicates as f64 {
        return Err(StatsError::DegenerateResamples {
            degenerate: redraws,
            total: opts.replicates + redraws,
        });
    }

    let tail = (1.0 - opts.level) / 2.0;
    metrics
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let point = m.evaluate(scores, labels)?;
            let mut values: Vec<f64> = draws.iter().map(|(v, _)| v[k]).collect();
            values.sort_by(f64::total_cmp);
            let (ci_low, ci_high) = if values.is_empty() {
                (point, point)
            } else {
                (
                    linear_quantile_sorted(&values, tail),
                    linear_quantile_sorted(&values, 1.0 - tail),
                )
            };
            Ok(MetricReport {
                metric: *m,
                point,
                ci_low,
                ci_high,
                replicates: opts.replicates,
                seed: opts.seed,
                redraws,
            })
        })
        .collect()
}

pub fn bootstrap_ci(
    scores: &[f64],
    labels: &[bool],
    metric: Metric,
    opts: &BootstrapOptions,
) -> Result<(f64, f64), StatsError> {
    let r = bootstrap_report(scores, labels, &[metric], opts)?;
    Ok((r[0].ci_low, r[0].ci_high))
}

/// Paired comparison of two score vectors on the same rows. The statistic is
/// oriented so that positive values favour `a` (lower Brier counts as better).
#[derive(Debug, Clone)]
pub struct PairedTest<'a> {
    metric: Metric,
    a: &'a [f64],
    labels: Vec<bool>,
    combined: Vec<f64>,
    ranking: Ranking,
}

impl<'a> PairedTest<'a> {
    pub fn new(
        metric: Metric,
        a: &'a [f64],
        b: &'a [f64],
        labels: &[bool],
    ) -> Result<Self, StatsError> {
        check_len(a.len(), b.len())?;
        validate(a, labels, &[metric])?;
        validate(b, labels, &[metric])?;
        let combined: Vec<f64> = a.iter().chain(b).copied().collect();
        let ranking = Ranking::new(&combined);
        Ok(Self {
            metric,
            a,
            labels: labels.iter().chain(labels).copied().collect(),
            combined,
            ranking,
        })
    }

    pub fn rows(&self) -> usize {
        self.a.len()
    }

    /// Statistic after swapping `a[i]` and `b[i]` wherever `swap[i]`.
    pub fn delta(&self, swap: &[bool]) -> f64 {
        let n = self.a.len();
        let in_a = |j: usize| (j >= n) == swap[j % n];
        let wa = |j: usize| u64::from(in_a(j));
        let wb = |j: usize| u64::from(!in_a(j));
        let (ma, mb) = match self.metric {
            Metric::RocAuc => (
                self.ranking.auc(&self.labels, wa),
                self.ranking.auc(&self.labels, wb),
            ),
            Metric::PrAuc => (
                self.ranking.average_precision(&self.labels, wa),
                self.ranking.average_precision(&self.labels, wb),
            ),
            Metric::Brier => (
                weighted_brier(&self.combined, &self.labels, wa),
                weighted_brier(&self.combined, &self.labels, wb),
            ),
        };
        let d = ma.expect("labels fixed") - mb.expect("labels fixed");
        if self.metric.higher_is_better() {
            d
        } else {
            -d
        }
    }

    pub fn observed(&self) -> f64 {
        self.delta(&vec![false; self.a.len()])
    }

    /// One-sided p = (1 + #{Δ* ≥ Δ_obs}) / (replicates + 1), each replicate
    /// swapping every row's pair with probability one half.
    pub fn pvalue(&self, replicates: usize, seed: u64) -> f64 {
        let observed = self.observed();
        let n = self.a.len();
        let hits: usize = (0..replicates)
            .into_par_iter()
            .map(|r| {
                let mut rng = replicate_rng(seed, r);
                let swap: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
                usize::from(self.delta(&swap) >= observed)
            })
            .sum();
        (1 + hits) as f64 / (replicates + 1) as f64
    }
}

pub fn paired_pvalue(
    metric: Metric,
    scores_a: &[f64],
    scores_b: &[f64],
    labels: &[bool],
    opts: &BootstrapOptions,
) -> Result<f64, StatsError> {
    Ok(PairedTest::new(metric, scores_a, scores_b, labels)?.pvalue(opts.replicates, opts.seed))
}
