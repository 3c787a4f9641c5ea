//! The sequence-model contract and its implementations: an absolute-discount
//! back-off counting model, an explicit joint-table model for exhaustive
//! checks, a uniform baseline and a client for external providers speaking
//! the newline-delimited JSON protocol.

mod backoff;
mod external;
mod pack;
pub mod protocol;
mod table;

use std::collections::HashMap;
use std::f64::consts::LN_2;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenizer::{Timeline, TokenId};

pub use backoff::{BackoffConfig, BackoffModel};
pub use external::{Endpoint, ExternalModel};
pub use pack::{pack, pack_with_width, row_start, PackedBatch, PACK_WIDTH};
pub use protocol::{serve, serve_tcp};
pub use table::JointTableModel;

/// Scoring contexts hold at most this many preceding tokens.
pub const MAX_CONTEXT: usize = 1023;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model order must be at least 1, got {0}")]
    InvalidOrder(usize),
    #[error("discount must lie in (0, 1], got {0}")]
    InvalidDiscount(f64),
    #[error("smoothing constant must be positive, got {0}")]
    InvalidAlpha(f64),
    #[error("training stream is empty")]
    EmptyCorpus,
    #[error("token {token} is outside a vocabulary of {vocab_size}")]
    TokenOutOfRange { token: TokenId, vocab_size: usize },
    #[error("context of length {0} exceeds what the model supports")]
    ContextTooLong(usize),
    #[error("request {id:?}: protocol violation: {message}")]
    Protocol { id: Option<u64>, message: String },
    #[error("request {id}: log-probabilities are not normalized (logsumexp {logsumexp:e})")]
    Normalization { id: u64, logsumexp: f64 },
    #[error("request {id}: expected {expected} values, got {got}")]
    Dimension {
        id: u64,
        expected: usize,
        got: usize,
    },
    #[error("request {id}: remote error: {message}")]
    Remote { id: u64, message: String },
    #[error("joint table has {got} entries, expected {expected}")]
    BadJoint { expected: usize, got: usize },
    #[error("{0}")]
    Io(String),
    #[error("model file: {0}")]
    Format(String),
}

impl From<std::io::Error> for ModelError {
    fn from(e: std::io::Error) -> Self {
        ModelError::Io(e.to_string())
    }
}

/// A provider of next-token distributions and prefix representations.
///
/// Distributions are natural-log probability vectors of length
/// `vocab_size`. An empty context asks for the first-token distribution.
pub trait SequenceModel: Send + Sync {
    fn vocab_size(&self) -> usize;

    fn repr_dim(&self) -> usize;

    fn log_conditional(&self, context: &[TokenId]) -> Result<Vec<f64>, ModelError>;

    fn representation(&self, prefix: &[TokenId]) -> Result<Vec<f64>, ModelError>;

    /// Natural-log probability of one token; override when cheaper than the
    /// full vector.
    fn log_prob(&self, context: &[TokenId], token: TokenId) -> Result<f64, ModelError> {
        let v = self.log_conditional(context)?;
        v.get(token as usize)
            .copied()
            .ok_or(ModelError::TokenOutOfRange {
                token,
                vocab_size: v.len(),
            })
    }

    /// Natural-log probability of each token given at most [`MAX_CONTEXT`]
    /// preceding tokens of the same slice. Models that can update
    /// incrementally should override this.
    fn sequence_log_probs(&self, tokens: &[TokenId]) -> Result<Vec<f64>, ModelError> {
        (0..tokens.len())
            .map(|t| self.log_prob(&tokens[t.saturating_sub(MAX_CONTEXT)..t], tokens[t]))
            .collect()
    }

    /// Representations of every prefix `tokens[..=t]`, in order. Models
    /// that can update incrementally should override this.
    fn representations(&self, tokens: &[TokenId]) -> Result<Vec<Vec<f64>>, ModelError> {
        (1..=tokens.len())
            .map(|t| self.representation(&tokens[..t]))
            .collect()
    }

    /// Longest suffix of the context that can influence the output, if
    /// bounded.
    fn context_horizon(&self) -> Option<usize> {
        None
    }
}

/// Every token equally likely; the representation is a constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniformModel {
    pub vocab_size: usize,
}

impl SequenceModel for UniformModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn repr_dim(&self) -> usize {
        1
    }

    fn log_conditional(&self, _context: &[TokenId]) -> Result<Vec<f64>, ModelError> {
        Ok(vec![-(self.vocab_size as f64).ln(); self.vocab_size])
    }

    fn representation(&self, _prefix: &[TokenId]) -> Result<Vec<f64>, ModelError> {
        Ok(vec![0.0])
    }

    fn log_prob(&self, _context: &[TokenId], _token: TokenId) -> Result<f64, ModelError> {
        Ok(-(self.vocab_size as f64).ln())
    }

    fn context_horizon(&self) -> Option<usize> {
        Some(0)
    }
}

pub fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Held-out cross-entropy, per token and per sequence, and the relative
/// entropy to the empirical distribution over distinct sequences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossEntropy {
    pub bits_per_token: f64,
    pub bits_per_sequence: f64,
    pub tokens: usize,
    pub sequences: usize,
    /// Entropy of the empirical distribution over the evaluated sequences.
    pub empirical_entropy_bits: f64,
    /// `bits_per_sequence - empirical_entropy_bits`.
    pub kl_bits: f64,
}

/// Mean −log2 p(x_t | x_<t) over all tokens, each context confined to its
/// own timeline and to the last [`MAX_CONTEXT`] tokens.
pub fn cross_entropy(
    model: &dyn SequenceModel,
    timelines: &[Timeline],
) -> Result<CrossEntropy, ModelError> {
    use rayon::prelude::*;
    let per: Vec<(f64, usize)> = timelines
        .par_iter()
        .map(|tl| {
            let lp = model.sequence_log_probs(&tl.tokens)?;
            Ok((-lp.iter().sum::<f64>() / LN_2, tl.tokens.len()))
        })
        .collect::<Result<_, ModelError>>()?;
    let total_bits: f64 = per.iter().map(|(b, _)| b).sum();
    let tokens: usize = per.iter().map(|(_, n)| n).sum();
    let sequences = timelines.len();

    let mut freq: HashMap<&[TokenId], usize> = HashMap::new();
    for tl in timelines {
        *freq.entry(&tl.tokens).or_default() += 1;
    }
    let nseq = sequences as f64;
    let empirical_entropy_bits = -freq
        .values()
        .map(|c| {
            let p = *c as f64 / nseq;
            p * p.log2()
        })
        .sum::<f64>();
    let bits_per_sequence = if sequences > 0 { total_bits / nseq } else { 0.0 };
    Ok(CrossEntropy {
        bits_per_token: if tokens > 0 {
            total_bits / tokens as f64
        } else {
            0.0
        },
        bits_per_sequence,
        tokens,
        sequences,
        empirical_entropy_bits,
        kl_bits: bits_per_sequence - empirical_entropy_bits,
    })
}

/// Serialized model descriptor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelFile {
    Backoff(BackoffModel),
    External { endpoint: Endpoint },
}

impl ModelFile {
    pub fn read(path: &Path) -> Result<Self, ModelError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ModelError::Format(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<(), ModelError> {
        let text = serde_json::to_string(self).map_err(|e| ModelError::Format(e.to_string()))?;
        fs::write(path, text).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))
    }

    /// Instantiate, connecting to the endpoint for external models.
    pub fn load(self) -> Result<Box<dyn SequenceModel>, ModelError> {
        Ok(match self {
            ModelFile::Backoff(m) => Box::new(m),
            ModelFile::External { endpoint } => Box::new(ExternalModel::connect(&endpoint)?),
        })
    }
}
