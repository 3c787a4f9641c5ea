use super::{ModelError, SequenceModel};
use crate::tokenizer::TokenId;

/// A distribution over fixed-length sequences given by its full joint table.
/// Conditionals are ratios of prefix marginals, so the chain rule holds by
/// construction. Meant for exhaustive checks on tiny vocabularies.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTableModel {
    vocab_size: usize,
    length: usize,
    /// `mass[k][i]`: probability of the length-k prefix with base-V index i.
    mass: Vec<Vec<f64>>,
}

impl JointTableModel {
    /// `joint[i]` is the probability of the sequence whose base-`vocab_size`
    /// digits, most significant first, spell `i`.
    pub fn new(vocab_size: usize, length: usize, joint: Vec<f64>) -> Result<Self, ModelError> {
        let expected = vocab_size.pow(length as u32);
        if joint.len() != expected || joint.iter().any(|p| p.is_nan() || *p < 0.0) {
            return Err(ModelError::BadJoint {
                expected,
                got: joint.len(),
            });
        }
        let total: f64 = joint.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ModelError::Format(format!("joint sums to {total}")));
        }
        let mut mass = vec![joint];
        for _ in 0..length {
            let finer = mass.last().expect("non-empty");
            let coarser = finer.chunks(vocab_size).map(|c| c.iter().sum()).collect();
            mass.push(coarser);
        }
        mass.reverse();
        Ok(Self {
            vocab_size,
            length,
            mass,
        })
    }

    pub fn length(&self) -> usize {
        self.length
    }

    fn index(&self, seq: &[TokenId]) -> usize {
        seq.iter()
            .fold(0, |acc, t| acc * self.vocab_size + *t as usize)
    }

    /// Probability of a full sequence, or the marginal of a shorter prefix.
    pub fn joint(&self, seq: &[TokenId]) -> f64 {
        self.mass[seq.len()][self.index(seq)]
    }

    fn conditional(&self, context: &[TokenId]) -> Result<Vec<f64>, ModelError> {
        if context.len() >= self.length {
            return Err(ModelError::ContextTooLong(context.len()));
        }
        if let Some(&token) = context.iter().find(|t| **t as usize >= self.vocab_size) {
            return Err(ModelError::TokenOutOfRange {
                token,
                vocab_size: self.vocab_size,
            });
        }
        let i = self.index(context);
        let m = self.mass[context.len()][i];
        let next = &self.mass[context.len() + 1][i * self.vocab_size..(i + 1) * self.vocab_size];
        if m <= 0.0 {
            return Ok(vec![1.0 / self.vocab_size as f64; self.vocab_size]);
        }
        Ok(next.iter().map(|p| p / m).collect())
    }
}

impl SequenceModel for JointTableModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn repr_dim(&self) -> usize {
        self.vocab_size
    }

    fn log_conditional(&self, context: &[TokenId]) -> Result<Vec<f64>, ModelError> {
        Ok(self.conditional(context)?.into_iter().map(f64::ln).collect())
    }

    /// The next-token probability vector; zero once the sequence is complete.
    fn representation(&self, prefix: &[TokenId]) -> Result<Vec<f64>, ModelError> {
        if prefix.len() == self.length {
            return Ok(vec![0.0; self.vocab_size]);
        }
        self.conditional(prefix)
    }
}
