use std::sync::Arc;

use crate::seqmodel::{ModelError, SequenceModel, MAX_CONTEXT};
use crate::tokenizer::TokenId;

use super::tables::{Filter, Tables};

/// Exact conditionals of the synthetic generator, computed by forward
/// filtering over the hidden severity state.
///
/// Contexts are assumed to begin at a timeline start. The representation is
/// the state posterior followed by the counts of planted events and missing
/// values seen in the first 24 hours.
#[derive(Clone)]
pub struct OracleModel {
    tables: Arc<Tables>,
}

impl OracleModel {
    pub(crate) fn new(tables: Tables) -> Self {
        Self {
            tables: Arc::new(tables),
        }
    }

    pub fn n_states(&self) -> usize {
        self.tables.n_states()
    }

    fn check(&self, tokens: &[TokenId]) -> Result<(), ModelError> {
        match tokens.iter().find(|t| **t as usize >= self.tables.vocab_size) {
            Some(&token) => Err(ModelError::TokenOutOfRange {
                token,
                vocab_size: self.tables.vocab_size,
            }),
            None => Ok(()),
        }
    }

    fn filter(&self, context: &[TokenId]) -> Result<Filter, ModelError> {
        self.check(context)?;
        let mut f = Filter::new(&self.tables);
        for t in context {
            f.advance(&self.tables, *t);
        }
        Ok(f)
    }

    fn state_vector(f: &Filter) -> Vec<f64> {
        let mut v = f.post.clone();
        v.push(f.planted_window as f64);
        v.push(f.missing_window as f64);
        v
    }
}

impl SequenceModel for OracleModel {
    fn vocab_size(&self) -> usize {
        self.tables.vocab_size
    }

    fn repr_dim(&self) -> usize {
        self.tables.n_states() + 2
    }

    fn log_conditional(&self, context: &[TokenId]) -> Result<Vec<f64>, ModelError> {
        let f = self.filter(context)?;
        Ok(f.distribution(&self.tables).into_iter().map(f64::ln).collect())
    }

    fn representation(&self, prefix: &[TokenId]) -> Result<Vec<f64>, ModelError> {
        Ok(Self::state_vector(&self.filter(prefix)?))
    }

    fn sequence_log_probs(&self, tokens: &[TokenId]) -> Result<Vec<f64>, ModelError> {
        self.check(tokens)?;
        if tokens.len() > MAX_CONTEXT + 1 {
            return (0..tokens.len())
                .map(|t| self.log_prob(&tokens[t.saturating_sub(MAX_CONTEXT)..t], tokens[t]))
                .collect();
        }
        let t = &*self.tables;
        let mut f = Filter::new(t);
        let mut out = Vec::with_capacity(tokens.len());
        for tok in tokens {
            out.push(f.distribution(t)[*tok as usize].ln());
            f.advance(t, *tok);
        }
        Ok(out)
    }

    fn representations(&self, tokens: &[TokenId]) -> Result<Vec<Vec<f64>>, ModelError> {
        self.check(tokens)?;
        let t = &*self.tables;
        let mut f = Filter::new(t);
        Ok(tokens
            .iter()
            .map(|tok| {
                f.advance(t, *tok);
                Self::state_vector(&f)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqmodel::logsumexp;
    use crate::synthgen::{generate, oracle_model, GeneratorConfig, PlantedKind, SeverityConfig};

    fn cfg(n: usize, seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            seed,
            n_patients: n,
            ..Default::default()
        }
    }

    #[test]
    fn conditionals_normalize_along_generated_timelines() {
        let c = cfg(5, 1);
        let m = oracle_model(&c).unwrap();
        let cohort = generate(&c).unwrap();
        for toks in &cohort.tokens {
            for t in (0..=toks.len()).step_by(7) {
                let lp = m.log_conditional(&toks[..t]).unwrap();
                assert_eq!(lp.len(), 208);
                assert!(logsumexp(&lp).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn incremental_scores_match_conditionals() {
        let c = cfg(4, 2);
        let m = oracle_model(&c).unwrap();
        for toks in &generate(&c).unwrap().tokens {
            let seq = m.sequence_log_probs(toks).unwrap();
            assert!(seq.iter().all(|x| x.is_finite() && *x <= 0.0));
            for t in (0..toks.len()).step_by(11) {
                let direct = m.log_prob(&toks[..t], toks[t]).unwrap();
                assert!((direct - seq[t]).abs() < 1e-12);
            }
            let reps = m.representations(toks).unwrap();
            assert_eq!(reps.len(), toks.len());
            assert_eq!(reps[20], m.representation(&toks[..21]).unwrap());
            assert_eq!(reps[0].len(), m.repr_dim());
        }
    }

    #[test]
    fn concatenated_timelines_restart_the_filter() {
        let c = cfg(2, 3);
        let m = oracle_model(&c).unwrap();
        let toks = generate(&c).unwrap().tokens;
        let joined: Vec<TokenId> = toks[0].iter().chain(&toks[1]).copied().collect();
        let seq = m.sequence_log_probs(&joined).unwrap();
        let second = m.sequence_log_probs(&toks[1]).unwrap();
        assert_eq!(seq[toks[0].len()], 0.0);
        for (a, b) in seq[toks[0].len() + 1..].iter().zip(&second[1..]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    /// With one state the event bits have a closed form: the hazard term,
    /// the category entropy and the expected decile entropy.
    #[test]
    fn single_state_event_bits_match_closed_form() {
        let mut c = cfg(400, 4);
        c.planted.rate = 0.0;
        c.planted.missing_rate = 0.0;
        c.min_stay_hours = 0.0;
        c.severity = SeverityConfig {
            levels: vec![0.0],
            initial: vec![1.0],
            stop_hazard: vec![0.02],
            icu_on_arrival: vec![0.5],
            ..Default::default()
        };
        let t = Tables::build(&c).unwrap();
        let m = OracleModel::new(Tables::build(&c).unwrap());
        let h = |p: &[f64]| -> f64 { p.iter().filter(|x| **x > 0.0).map(|x| -x * x.log2()).sum() };
        let emit = &t.emit[0];
        let expected = -(1.0f64 - 0.02).log2()
            + h(emit)
            + emit
                .iter()
                .zip(&t.deciles)
                .map(|(w, d)| if *w > 0.0 { w * h(&d[0]) } else { 0.0 })
                .sum::<f64>();
        let tk = crate::tokenizer::Tokenizer::preset();
        let mut bits = Vec::new();
        let cohort = generate(&c).unwrap();
        for hosp in &cohort.hospitalizations {
            let tl = tk.encode(hosp).unwrap();
            let lp = m.sequence_log_probs(&tl.tokens).unwrap();
            // skip the arrival event, drawn from its own table
            for span in &tl.event_spans[1..] {
                bits.push(-span.range().map(|i| lp[i]).sum::<f64>() / std::f64::consts::LN_2);
            }
        }
        let n = bits.len() as f64;
        let mean = bits.iter().sum::<f64>() / n;
        let sd = (bits.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((mean - expected).abs() < 4.0 * sd / n.sqrt(), "{mean} vs {expected}");
    }

    #[test]
    fn planted_events_carry_more_bits() {
        let c = cfg(300, 5);
        let m = oracle_model(&c).unwrap();
        let cohort = generate(&c).unwrap();
        let tk = crate::tokenizer::Tokenizer::preset();
        let (mut wins, mut total) = (0, 0);
        for p in cohort.planted.iter().filter(|p| p.kind == PlantedKind::Category) {
            let i = cohort.hospitalizations.iter().position(|h| h.id == p.hospitalization_id).unwrap();
            let tl = tk.encode(&cohort.hospitalizations[i]).unwrap();
            let lp = m.sequence_log_probs(&tl.tokens).unwrap();
            let bits = |k: usize| -tl.event_spans[k].range().map(|j| lp[j]).sum::<f64>();
            let k = p.event_index - 1;
            // nearest earlier or later non-planted neighbour of the same stay
            let other = if k + 1 < tl.event_spans.len() { k + 1 } else { k - 1 };
            if cohort.planted.iter().any(|q| q.hospitalization_id == p.hospitalization_id && q.event_index == other + 1) {
                continue;
            }
            total += 1;
            wins += usize::from(bits(k) > bits(other));
        }
        assert!(total > 50);
        assert!(wins as f64 >= 0.95 * total as f64, "{wins}/{total}");
    }

    #[test]
    fn mortality_rises_with_planted_count() {
        let c = cfg(1, 0);
        let t = Tables::build(&c).unwrap();
        for s in 0..t.n_states() {
            assert!(t.death_prob(s, 2, 0) > t.death_prob(s, 1, 0));
            assert!(t.death_prob(s, 1, 0) > t.death_prob(s, 0, 0));
            assert!(t.death_prob(s, 0, 1) > t.death_prob(s, 0, 0));
        }
        let null = Tables::build(&c.null()).unwrap();
        assert_eq!(null.death_prob(0, 3, 2), null.death_prob(2, 0, 0));
    }
}
