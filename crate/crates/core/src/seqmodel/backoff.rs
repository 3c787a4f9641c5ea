//! Interpolated absolute-discounting n-gram model.
//!
//! Level 0 is an add-α unigram, `p0(v) = (c(v) + α) / (N + α|V|)`. A context
//! `h` of length k seen `c(h)` times gives
//! `p(v|h) = max(c(h,v) − D, 0) / c(h) + D·N1+(h)/c(h) · p(v|h')`, where `h'`
//! drops the oldest token and N1+(h) counts distinct successors. Unseen
//! contexts back off to `h'` directly.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{ModelError, SequenceModel};
use crate::tokenizer::{Timeline, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackoffConfig {
    pub order: usize,
    pub alpha: f64,
    pub discount: f64,
}

impl Default for BackoffConfig {
    fn default() -> Self {
        Self {
            order: 4,
            alpha: 0.5,
            discount: 0.75,
        }
    }
}

impl BackoffConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.order < 1 {
            return Err(ModelError::InvalidOrder(self.order));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(ModelError::InvalidAlpha(self.alpha));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(ModelError::InvalidDiscount(self.discount));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ContextCounts {
    total: u64,
    /// Sorted by token id.
    successors: Vec<(TokenId, u64)>,
}

impl ContextCounts {
    fn count(&self, token: TokenId) -> u64 {
        self.successors
            .binary_search_by_key(&token, |(t, _)| *t)
            .map_or(0, |i| self.successors[i].1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "BackoffData", try_from = "BackoffData")]
pub struct BackoffModel {
    config: BackoffConfig,
    vocab_size: usize,
    unigram: Vec<u64>,
    total: u64,
    /// `levels[k - 1]` holds contexts of length k.
    levels: Vec<HashMap<Box<[TokenId]>, ContextCounts>>,
}

type LevelEntry = (Vec<TokenId>, Vec<(TokenId, u64)>);

#[derive(Serialize, Deserialize)]
struct BackoffData {
    config: BackoffConfig,
    vocab_size: usize,
    unigram: Vec<u64>,
    levels: Vec<Vec<LevelEntry>>,
}

impl From<BackoffModel> for BackoffData {
    fn from(m: BackoffModel) -> Self {
        let levels = m
            .levels
            .into_iter()
            .map(|level| {
                let mut entries: Vec<LevelEntry> = level
                    .into_iter()
                    .map(|(ctx, c)| (ctx.into_vec(), c.successors))
                    .collect();
                entries.sort();
                entries
            })
            .collect();
        Self {
            config: m.config,
            vocab_size: m.vocab_size,
            unigram: m.unigram,
            levels,
        }
    }
}

impl TryFrom<BackoffData> for BackoffModel {
    type Error = ModelError;

    fn try_from(d: BackoffData) -> Result<Self, Self::Error> {
        d.config.validate()?;
        if d.unigram.len() != d.vocab_size || d.levels.len() + 1 != d.config.order {
            return Err(ModelError::Format("inconsistent back-off tables".into()));
        }
        let levels = d
            .levels
            .into_iter()
            .map(|entries| {
                entries
                    .into_iter()
                    .map(|(ctx, successors)| {
                        let total = successors.iter().map(|(_, c)| c).sum();
                        (ctx.into_boxed_slice(), ContextCounts { total, successors })
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            config: d.config,
            vocab_size: d.vocab_size,
            total: d.unigram.iter().sum(),
            unigram: d.unigram,
            levels,
        })
    }
}

impl BackoffModel {
    /// Count k-grams over the concatenation of the timelines, the stream the
    /// packing step lays out row-major.
    pub fn train(
        timelines: &[Timeline],
        vocab_size: usize,
        config: BackoffConfig,
    ) -> Result<Self, ModelError> {
        let stream: Vec<TokenId> = timelines
            .iter()
            .flat_map(|t| t.tokens.iter().copied())
            .collect();
        Self::train_on_stream(&stream, vocab_size, config)
    }

    pub fn train_on_stream(
        stream: &[TokenId],
        vocab_size: usize,
        config: BackoffConfig,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        if stream.is_empty() {
            return Err(ModelError::EmptyCorpus);
        }
        if let Some(&token) = stream.iter().find(|t| **t as usize >= vocab_size) {
            return Err(ModelError::TokenOutOfRange { token, vocab_size });
        }
        let mut unigram = vec![0u64; vocab_size];
        for &t in stream {
            unigram[t as usize] += 1;
        }
        let mut raw: Vec<HashMap<&[TokenId], HashMap<TokenId, u64>>> =
            vec![HashMap::new(); config.order - 1];
        for i in 0..stream.len() {
            for k in 1..config.order.min(i + 1) {
                *raw[k - 1]
                    .entry(&stream[i - k..i])
                    .or_default()
                    .entry(stream[i])
                    .or_default() += 1;
            }
        }
        let levels = raw
            .into_iter()
            .map(|level| {
                level
                    .into_iter()
                    .map(|(ctx, succ)| {
                        let mut successors: Vec<(TokenId, u64)> = succ.into_iter().collect();
                        successors.sort_unstable();
                        let total = successors.iter().map(|(_, c)| c).sum();
                        (ctx.into(), ContextCounts { total, successors })
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            config,
            vocab_size,
            unigram,
            total: stream.len() as u64,
            levels,
        })
    }

    pub fn config(&self) -> &BackoffConfig {
        &self.config
    }

    /// Number of times `ngram[..k-1]` was followed by `ngram[k-1]`; for a
    /// single token, its unigram count.
    pub fn ngram_count(&self, ngram: &[TokenId]) -> u64 {
        match ngram.len() {
            0 => self.total,
            1 => self.unigram.get(ngram[0] as usize).copied().unwrap_or(0),
            k => self
                .levels
                .get(k - 2)
                .and_then(|l| l.get(&ngram[..k - 1]))
                .map_or(0, |c| c.count(ngram[k - 1])),
        }
    }

    /// Occurrences of a context followed by any token.
    pub fn context_count(&self, context: &[TokenId]) -> u64 {
        match context.len() {
            0 => self.total,
            k => self
                .levels
                .get(k - 1)
                .and_then(|l| l.get(context))
                .map_or(0, |c| c.total),
        }
    }

    fn unigram_prob(&self, token: TokenId) -> f64 {
        let a = self.config.alpha;
        (self.unigram[token as usize] as f64 + a) / (self.total as f64 + a * self.vocab_size as f64)
    }

    /// Contexts from length 1 up to the usable maximum, as suffixes of
    /// `context`.
    fn suffixes<'c>(&self, context: &'c [TokenId]) -> impl Iterator<Item = (usize, &'c [TokenId])> {
        let max = (self.config.order - 1).min(context.len());
        (1..=max).map(move |k| (k, &context[context.len() - k..]))
    }

    pub fn prob(&self, context: &[TokenId], token: TokenId) -> f64 {
        let d = self.config.discount;
        let mut p = self.unigram_prob(token);
        for (k, ctx) in self.suffixes(context) {
            match self.levels[k - 1].get(ctx) {
                Some(c) => {
                    let total = c.total as f64;
                    let hit = (c.count(token) as f64 - d).max(0.0) / total;
                    p = hit + d * c.successors.len() as f64 / total * p;
                }
                // longer contexts containing an unseen one are unseen too
                None => break,
            }
        }
        p
    }

    pub fn distribution(&self, context: &[TokenId]) -> Vec<f64> {
        let d = self.config.discount;
        let mut v: Vec<f64> = (0..self.vocab_size as TokenId)
            .map(|t| self.unigram_prob(t))
            .collect();
        for (k, ctx) in self.suffixes(context) {
            let Some(c) = self.levels[k - 1].get(ctx) else {
                break;
            };
            let total = c.total as f64;
            let lambda = d * c.successors.len() as f64 / total;
            v.iter_mut().for_each(|x| *x *= lambda);
            for &(t, n) in &c.successors {
                v[t as usize] += (n as f64 - d).max(0.0) / total;
            }
        }
        v
    }
}

impl SequenceModel for BackoffModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn repr_dim(&self) -> usize {
        self.vocab_size
    }

    fn log_conditional(&self, context: &[TokenId]) -> Result<Vec<f64>, ModelError> {
        Ok(self.distribution(context).into_iter().map(f64::ln).collect())
    }

    fn representation(&self, prefix: &[TokenId]) -> Result<Vec<f64>, ModelError> {
        self.log_conditional(prefix)
    }

    fn log_prob(&self, context: &[TokenId], token: TokenId) -> Result<f64, ModelError> {
        if token as usize >= self.vocab_size {
            return Err(ModelError::TokenOutOfRange {
                token,
                vocab_size: self.vocab_size,
            });
        }
        Ok(self.prob(context, token).ln())
    }

    fn context_horizon(&self) -> Option<usize> {
        Some(self.config.order - 1)
    }
}
