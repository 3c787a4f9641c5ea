//! Seeded synthetic cohorts with a known token-level generating process.
//!
//! A hidden severity chain drives which categories are measured, how
//! extreme their deciles are and when the stay ends. With probability ρ an
//! event is instead drawn from a planted catalog the normal process never
//! uses, and a small share of normal measurements lose their value. Mortality
//! depends on the final state and on the planted events and missing values of
//! the first 24 hours. [`OracleModel`] evaluates the exact conditionals of
//! the resulting token stream under the preset tokenizer.

mod config;
mod oracle;
mod tables;

use std::io::{BufRead, Write};

use chrono::{DateTime, Duration, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Demographics, EventRecord, EventValue, Hospitalization, EXPIRED_CATEGORY};
use crate::tokenizer::{TokenId, PREFIX_LEN};

pub use config::{
    default_catalog, CatalogEntry, GeneratorConfig, OutcomeConfig, PlantedConfig, SeverityConfig,
};
pub use oracle::OracleModel;
use tables::Tables;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("the event catalog is empty")]
    EmptyCatalog,
    #[error("token {0} is not in the preset vocabulary")]
    UnknownToken(String),
    #[error("category {0} has no preset cutoffs")]
    MissingCutoffs(String),
    #[error("{0}")]
    Io(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl From<std::io::Error> for SynthError {
    fn from(e: std::io::Error) -> Self {
        SynthError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantedKind {
    /// An event from the planted catalog.
    Category,
    /// A normal measurement whose value is missing.
    MissingValue,
}

/// Sidecar record of one planted event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEvent {
    pub hospitalization_id: String,
    /// 1-based index among the clinical events of the stay.
    pub event_index: usize,
    /// 1-based position of the event's first token in the timeline.
    pub token_start: usize,
    pub timestamp: DateTime<Utc>,
    pub token: String,
    pub kind: PlantedKind,
    /// Whether the event falls in the first 24 hours.
    pub in_window: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCohort {
    pub hospitalizations: Vec<Hospitalization>,
    /// Token ids the preset tokenizer should produce, per hospitalization.
    pub tokens: Vec<Vec<TokenId>>,
    pub planted: Vec<PlantedEvent>,
}

struct Drawn {
    hosp: Hospitalization,
    tokens: Vec<TokenId>,
    planted: Vec<PlantedEvent>,
}

fn sample(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    // rounding fallthrough: last positive weight
    weights.iter().rposition(|w| *w > 0.0).expect("some positive weight")
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// A value inside decile bin `d` of `cuts`.
fn value_in_bin(rng: &mut ChaCha8Rng, cuts: &[f64; 9], d: usize, floor: Option<f64>) -> f64 {
    let span = ((cuts[8] - cuts[0]) / 8.0).max(1e-3);
    let u: f64 = rng.gen_range(0.0..0.999);
    match d {
        0 => {
            let lo = floor.map_or(cuts[0] - span, |f| f.min(cuts[0] - 1e-6));
            cuts[0] - (cuts[0] - lo) * (0.001 + u * 0.998)
        }
        9 => cuts[8] + u * span,
        _ => cuts[d - 1] + u * (cuts[d] - cuts[d - 1]),
    }
}

fn draw_stay(
    t: &Tables,
    cfg: &GeneratorConfig,
    rng: &mut ChaCha8Rng,
    id: String,
    patient_id: String,
    admit: DateTime<Utc>,
) -> Drawn {
    let mut tokens = vec![t.tl_start];
    let mut pick = |rng: &mut ChaCha8Rng, table: &[(TokenId, f64, String)]| {
        let k = sample(rng, &table.iter().map(|x| x.1).collect::<Vec<_>>());
        tokens.push(table[k].0);
        table[k].2.clone()
    };
    let race = pick(rng, &t.prefix[0]);
    let ethnicity = pick(rng, &t.prefix[1]);
    let sex = pick(rng, &t.prefix[2]);
    let age_decile: usize = pick(rng, &t.prefix[3]).parse().expect("decile index");
    let admission_type = pick(rng, &t.prefix[4]);
    let age = value_in_bin(rng, &t.age_cuts, age_decile, Some(18.0));
    debug_assert_eq!(tokens.len(), PREFIX_LEN);

    let slot = 3600.0 / cfg.events_per_hour;
    let at = |k: usize, u: f64| admit + Duration::seconds((((k - 1) as f64 + u) * slot).round() as i64);
    let mut events = Vec::new();
    let mut planted = Vec::new();
    let mut planted_window = 0;

    let mut state = sample(rng, &t.initial);
    let arrival = t.arrival[sample(rng, &t.arrival_probs[state])];
    let mut k = 1;
    let emit = |rng: &mut ChaCha8Rng, kind: usize, k: usize, tokens: &mut Vec<TokenId>, events: &mut Vec<EventRecord>, state: usize| {
        let kd = &t.kinds[kind];
        let start = tokens.len() + 1;
        tokens.push(kd.token);
        let u: f64 = rng.gen_range(0.05..0.95);
        let timestamp = at(k, u);
        let missing = kd.cuts.is_some() && rng.gen::<f64>() < t.missing_prob(kind);
        let value = match kd.cuts {
            Some(_) if missing => {
                tokens.push(t.nan);
                None
            }
            Some(cuts) => {
                let d = sample(rng, &t.deciles[kind][state]);
                tokens.push(t.decile_ids[d]);
                Some(EventValue::Numeric(value_in_bin(rng, &cuts, d, None)))
            }
            None => None,
        };
        events.push(EventRecord {
            timestamp,
            table_kind: kd.table,
            category: kd.raw.clone(),
            value,
        });
        (start, timestamp, missing)
    };
    let mut missing_window = 0;
    emit(rng, arrival, k, &mut tokens, &mut events, state);
    loop {
        if rng.gen::<f64>() < t.hazard(state, k) {
            break;
        }
        state = sample(rng, &t.trans[state]);
        let kind = sample(rng, &t.emit[state]);
        k += 1;
        let (start, timestamp, missing) = emit(rng, kind, k, &mut tokens, &mut events, state);
        let in_window = k <= t.window_events;
        let surprise = if t.kinds[kind].planted {
            planted_window += usize::from(in_window);
            Some(PlantedKind::Category)
        } else if missing {
            missing_window += usize::from(in_window);
            Some(PlantedKind::MissingValue)
        } else {
            None
        };
        if let Some(kind_of_surprise) = surprise {
            planted.push(PlantedEvent {
                hospitalization_id: id.clone(),
                event_index: k,
                token_start: start,
                timestamp,
                token: t.kinds[kind].name.clone(),
                kind: kind_of_surprise,
                in_window,
            });
        }
    }
    let died = rng.gen::<f64>() < t.death_prob(state, planted_window, missing_window);
    let discharge_category = if died {
        tokens.push(t.expired);
        EXPIRED_CATEGORY.to_string()
    } else {
        pick_alive(rng, t, &mut tokens)
    };
    tokens.push(t.tl_end);
    let discharge_time = admit
        + Duration::seconds(((k as f64 + rng.gen_range(0.05..0.95)) * slot).round() as i64);
    let hosp = Hospitalization {
        id,
        patient_id,
        demographics: Demographics {
            race: Some(race),
            ethnicity: Some(ethnicity),
            sex,
        },
        age_at_admission: age,
        admission_type,
        admit_time: admit,
        discharge_time,
        discharge_category,
        events,
        outcome_inpatient_mortality: died,
        outcome_long_los: Hospitalization::derive_long_los(admit, discharge_time),
    };
    Drawn {
        hosp,
        tokens,
        planted,
    }
}

fn pick_alive(rng: &mut ChaCha8Rng, t: &Tables, tokens: &mut Vec<TokenId>) -> String {
    let k = sample(rng, &t.alive.iter().map(|x| x.1).collect::<Vec<_>>());
    tokens.push(t.alive[k].0);
    t.alive[k].2.clone()
}

/// Draw a cohort. Each patient uses its own stream of the seeded generator,
/// so the output does not depend on thread scheduling.
pub fn generate(cfg: &GeneratorConfig) -> Result<SynthCohort, SynthError> {
    let t = Tables::build(cfg)?;
    let per_patient: Vec<Vec<Drawn>> = (0..cfg.n_patients)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(p as u64);
            let patient_id = format!("P{p:06}");
            let mut admit = cfg.start
                + Duration::minutes(rng.gen_range(0..365 * 24 * 60));
            let mut out = Vec::new();
            for a in 1..=cfg.max_admissions {
                if a > 1 && rng.gen::<f64>() >= cfg.readmission_prob {
                    break;
                }
                let id = format!("H{p:06}-{a}");
                let d = draw_stay(&t, cfg, &mut rng, id, patient_id.clone(), admit);
                admit = d.hosp.discharge_time + Duration::minutes(rng.gen_range(5 * 1440..60 * 1440));
                out.push(d);
            }
            out
        })
        .collect();
    let mut cohort = SynthCohort {
        hospitalizations: Vec::new(),
        tokens: Vec::new(),
        planted: Vec::new(),
    };
    for d in per_patient.into_iter().flatten() {
        cohort.hospitalizations.push(d.hosp);
        cohort.tokens.push(d.tokens);
        cohort.planted.extend(d.planted);
    }
    Ok(cohort)
}

/// The exact model of the token stream produced by [`generate`].
pub fn oracle_model(cfg: &GeneratorConfig) -> Result<OracleModel, SynthError> {
    Ok(OracleModel::new(Tables::build(cfg)?))
}

pub fn write_sidecar<W: Write>(mut out: W, planted: &[PlantedEvent]) -> Result<(), SynthError> {
    for p in planted {
        serde_json::to_writer(&mut out, p).map_err(|e| SynthError::Io(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_sidecar<R: BufRead>(input: R) -> Result<Vec<PlantedEvent>, SynthError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| SynthError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
