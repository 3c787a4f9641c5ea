use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{check_len, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    RocAuc,
    PrAuc,
    Brier,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::RocAuc, Metric::PrAuc, Metric::Brier];

    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::Brier)
    }

    pub fn label(self) -> &'static str {
        match self {
            Metric::RocAuc => "ROC-AUC",
            Metric::PrAuc => "PR-AUC",
            Metric::Brier => "Brier",
        }
    }

    pub fn evaluate(self, scores: &[f64], labels: &[bool]) -> Result<f64, StatsError> {
        match self {
            Metric::RocAuc => roc_auc(scores, labels),
            Metric::PrAuc => pr_auc(scores, labels),
            Metric::Brier => brier(scores, labels),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "roc_auc" | "auc" => Ok(Metric::RocAuc),
            "pr_auc" | "ap" => Ok(Metric::PrAuc),
            "brier" => Ok(Metric::Brier),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

/// Items sorted ascending by score, split into groups of tied scores.
/// Metrics are then evaluated under integer item weights, which lets
/// bootstrap resamples and paired swaps reuse one sort.
#[derive(Debug, Clone)]
pub(crate) struct Ranking {
    order: Vec<usize>,
    /// Start offsets into `order` of each tie group, plus a final `len`.
    bounds: Vec<usize>,
}

impl Ranking {
    pub(crate) fn new(scores: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|a, b| scores[*a].total_cmp(&scores[*b]).then(a.cmp(b)));
        let mut bounds = Vec::new();
        for (k, &i) in order.iter().enumerate() {
            if k == 0 || scores[order[k - 1]] != scores[i] {
                bounds.push(k);
            }
        }
        bounds.push(order.len());
        Self { order, bounds }
    }

    fn groups(&self) -> impl DoubleEndedIterator<Item = &[usize]> + '_ {
        self.bounds.windows(2).map(|w| &self.order[w[0]..w[1]])
    }

    /// Mann–Whitney AUC with ties worth one half, or `None` when a class has
    /// zero weight.
    pub(crate) fn auc(&self, labels: &[bool], weight: impl Fn(usize) -> u64) -> Option<f64> {
        let mut neg_below = 0u64;
        let mut twice_wins = 0u64;
        let mut pos_total = 0u64;
        for group in self.groups() {
            let (mut wp, mut wn) = (0u64, 0u64);
            for &i in group {
                let w = weight(i);
                if labels[i] {
                    wp += w;
                } else {
                    wn += w;
                }
            }
            twice_wins += wp * (2 * neg_below + wn);
            neg_below += wn;
            pos_total += wp;
        }
        if pos_total == 0 || neg_below == 0 {
            return None;
        }
        let wins = twice_wins as f64 / 2.0;
        Some(wins / (pos_total * neg_below) as f64)
    }

    /// Average precision over descending score thresholds, one step per tie
    /// group. `None` without positive weight.
    pub(crate) fn average_precision(
        &self,
        labels: &[bool],
        weight: impl Fn(usize) -> u64,
    ) -> Option<f64> {
        let mut tp = 0u64;
        let mut fp = 0u64;
        let mut steps: Vec<(u64, u64, u64)> = Vec::new();
        for group in self.groups().rev() {
            let (mut wp, mut wn) = (0u64, 0u64);
            for &i in group {
                let w = weight(i);
                if labels[i] {
                    wp += w;
                } else {
                    wn += w;
                }
            }
            tp += wp;
            fp += wn;
            if wp > 0 {
                steps.push((wp, tp, fp));
            }
        }
        if tp == 0 {
            return None;
        }
        let total = tp as f64;
        Some(
            steps
                .iter()
                .map(|(wp, tp, fp)| (*wp as f64 / total) * (*tp as f64 / (*tp + *fp) as f64))
                .sum(),
        )
    }
}

fn check_finite(scores: &[f64]) -> Result<(), StatsError> {
    match scores.iter().position(|s| !s.is_finite()) {
        Some(i) => Err(StatsError::NonFinite(i)),
        None => Ok(()),
    }
}

pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, StatsError> {
    check_len(scores.len(), labels.len())?;
    check_finite(scores)?;
    Ranking::new(scores)
        .auc(labels, |_| 1)
        .ok_or(StatsError::SingleClass)
}

pub fn pr_auc(scores: &[f64], labels: &[bool]) -> Result<f64, StatsError> {
    check_len(scores.len(), labels.len())?;
    check_finite(scores)?;
    Ranking::new(scores)
        .average_precision(labels, |_| 1)
        .ok_or(StatsError::NoPositives)
}

pub(crate) fn check_probabilities(probs: &[f64]) -> Result<(), StatsError> {
    match probs.iter().position(|p| !(0.0..=1.0).contains(p)) {
        Some(index) => Err(StatsError::ProbabilityOutOfRange {
            index,
            value: probs[index],
        }),
        None => Ok(()),
    }
}

pub fn brier(probs: &[f64], labels: &[bool]) -> Result<f64, StatsError> {
    check_len(probs.len(), labels.len())?;
    if probs.is_empty() {
        return Err(StatsError::Empty);
    }
    check_probabilities(probs)?;
    Ok(weighted_brier(probs, labels, |_| 1).expect("non-empty"))
}

pub(crate) fn weighted_brier(
    probs: &[f64],
    labels: &[bool],
    weight: impl Fn(usize) -> u64,
) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0u64;
    for (i, (p, y)) in probs.iter().zip(labels).enumerate() {
        let w = weight(i);
        if w > 0 {
            let e = p - f64::from(u8::from(*y));
            num += w as f64 * e * e;
            den += w;
        }
    }
    (den > 0).then(|| num / den as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut twice = 0u64;
        let mut pairs = 0u64;
        for (i, si) in scores.iter().enumerate() {
            for (j, sj) in scores.iter().enumerate() {
                if labels[i] && !labels[j] {
                    pairs += 1;
                    twice += if si > sj {
                        2
                    } else if si == sj {
                        1
                    } else {
                        0
                    };
                }
            }
        }
        (twice as f64 / 2.0) / pairs as f64
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.3], &[true, false, true]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.1, 0.9], &[false, true]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.4; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.1, 0.2], &[true, true]), Err(StatsError::SingleClass));
    }

    #[test]
    fn ap_examples() {
        assert_eq!(pr_auc(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        // one positive ranked last among n
        let n = 7;
        let scores: Vec<f64> = (0..n).map(|i| (n - i) as f64).collect();
        let labels: Vec<bool> = (0..n).map(|i| i == n - 1).collect();
        assert!((pr_auc(&scores, &labels).unwrap() - 1.0 / n as f64).abs() < 1e-15);
        assert_eq!(pr_auc(&[0.3], &[false]), Err(StatsError::NoPositives));
    }

    #[test]
    fn brier_examples() {
        assert_eq!(brier(&[1.0, 0.0], &[true, false]).unwrap(), 0.0);
        assert_eq!(brier(&[0.5; 4], &[true, false, true, true]).unwrap(), 0.25);
        assert!((brier(&[0.8, 0.4], &[true, false]).unwrap() - 0.10).abs() < 1e-15);
        assert!(matches!(
            brier(&[1.2], &[true]),
            Err(StatsError::ProbabilityOutOfRange { index: 0, .. })
        ));
    }

    fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                proptest::collection::vec((0u8..12).prop_map(|k| k as f64 / 4.0), n),
                proptest::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise((scores, labels) in scored_labels()) {
            prop_assume!(labels.iter().any(|l| *l) && labels.iter().any(|l| !*l));
            prop_assert_eq!(roc_auc(&scores, &labels).unwrap(), brute_auc(&scores, &labels));
        }

        #[test]
        fn auc_invariant_to_monotone_transform((scores, labels) in scored_labels()) {
            prop_assume!(labels.iter().any(|l| *l) && labels.iter().any(|l| !*l));
            let t: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            prop_assert_eq!(roc_auc(&scores, &labels).unwrap(), roc_auc(&t, &labels).unwrap());
        }

        #[test]
        fn auc_complement(n in 2usize..40, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let labels: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
            let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
            let sum = roc_auc(&scores, &labels).unwrap() + roc_auc(&scores, &flipped).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }

        #[test]
        fn brier_bounded(p in proptest::collection::vec(0f64..=1.0, 1..30), seed in any::<u64>()) {
            let labels: Vec<bool> = (0..p.len()).map(|i| (seed >> (i % 64)) & 1 == 1).collect();
            let b = brier(&p, &labels).unwrap();
            prop_assert!((0.0..=1.0).contains(&b));
        }
    }
}
