use std::collections::HashMap;

use crate::ingest::{TableKind, EXPIRED_CATEGORY};
use crate::tokenizer::{CutoffTable, TokenId, Vocabulary, AGE_KEY, PREFIX_LEN};

use super::{GeneratorConfig, SynthError};

/// Longest timeline the generator may produce, in tokens.
const TOKEN_BUDGET: usize = 1024;

pub(crate) struct Kind {
    pub name: String,
    pub token: TokenId,
    pub table: TableKind,
    pub raw: String,
    /// Decile cutoffs for valued kinds; `None` for single-token events.
    pub cuts: Option<[f64; 9]>,
    pub planted: bool,
    pub missing_prone: bool,
}

/// Every probability table of the generating process, indexed by token ids
/// of the preset vocabulary.
pub(crate) struct Tables {
    pub vocab_size: usize,
    pub tl_start: TokenId,
    pub tl_end: TokenId,
    pub nan: TokenId,
    /// Probability that a valued event of a missing-prone kind has a
    /// missing value.
    pub missing_rate: f64,
    pub expired: TokenId,
    pub decile_ids: [TokenId; 10],
    /// Race, ethnicity, sex, age decile and admission type: (token,
    /// probability, raw value).
    pub prefix: [Vec<(TokenId, f64, String)>; 5],
    pub age_cuts: [f64; 9],
    pub alive: Vec<(TokenId, f64, String)>,
    pub severity: Vec<f64>,
    pub initial: Vec<f64>,
    pub trans: Vec<Vec<f64>>,
    stop_hazard: Vec<f64>,
    min_events: usize,
    max_events: usize,
    pub window_events: usize,
    /// Kind indices of the ICU, ED and ward arrivals.
    pub arrival: [usize; 3],
    pub arrival_probs: Vec<[f64; 3]>,
    pub kinds: Vec<Kind>,
    /// `emit[s][kind]`: probability of the kind for an event in state s.
    pub emit: Vec<Vec<f64>>,
    /// `deciles[kind][s]`: decile distribution of a valued kind.
    pub deciles: Vec<Vec<Vec<f64>>>,
    kind_of: HashMap<TokenId, usize>,
    /// Intercept, severity, planted and missing coefficients.
    mortality: [f64; 4],
}

fn table_of(token: &str) -> Option<(TableKind, &str)> {
    let (prefix, raw) = token.split_once('_')?;
    let kind = match prefix {
        "LAB" => TableKind::Labs,
        "VTL" => TableKind::Vitals,
        "MED" => TableKind::Medications,
        "ADT" => TableKind::Transfers,
        "POSN" => TableKind::Positioning,
        _ => return None,
    };
    Some((kind, raw))
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let z: f64 = v.iter().sum();
    v.into_iter().map(|x| x / z).collect()
}

/// Bins that some value can reach: bin d needs `cuts[d-1] < cuts[d]`.
fn reachable(cuts: &[f64; 9]) -> [bool; 10] {
    let mut r = [true; 10];
    for d in 1..9 {
        r[d] = cuts[d - 1] < cuts[d];
    }
    r
}

fn check_probs(name: &str, v: &[f64], n: usize) -> Result<(), SynthError> {
    if v.len() != n {
        return Err(SynthError::Config(format!("{name} has {} entries, expected {n}", v.len())));
    }
    if v.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(SynthError::Config(format!("{name} must lie in [0, 1]")));
    }
    Ok(())
}

impl Tables {
    pub fn build(cfg: &GeneratorConfig) -> Result<Self, SynthError> {
        let vocab = Vocabulary::preset();
        let cutoffs = CutoffTable::preset();
        let id = |t: &str| vocab.id(t).ok_or_else(|| SynthError::UnknownToken(t.to_string()));
        let sev = &cfg.severity;
        let s_count = sev.levels.len();
        if s_count == 0 {
            return Err(SynthError::Config("severity needs at least one state".into()));
        }
        check_probs("severity.initial", &sev.initial, s_count)?;
        if (sev.initial.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(SynthError::Config("severity.initial must sum to 1".into()));
        }
        check_probs("severity.stop_hazard", &sev.stop_hazard, s_count)?;
        check_probs("severity.icu_on_arrival", &sev.icu_on_arrival, s_count)?;
        check_probs("severity.stay", &[sev.stay], 1)?;
        check_probs("planted.rate", &[cfg.planted.rate], 1)?;
        check_probs("planted.missing_rate", &[cfg.planted.missing_rate], 1)?;
        check_probs("readmission_prob", &[cfg.readmission_prob], 1)?;
        if !(sev.decile_width > 0.0 && sev.decile_width_gain >= 0.0) {
            return Err(SynthError::Config("decile widths must be positive".into()));
        }
        if cfg.events_per_hour.is_nan() || cfg.events_per_hour <= 0.0 || (24.0 * cfg.events_per_hour).fract() != 0.0 {
            return Err(SynthError::Config(
                "events_per_hour must be positive with a whole number of events per day".into(),
            ));
        }
        if cfg.min_stay_hours < 0.0 || cfg.max_admissions == 0 {
            return Err(SynthError::Config("min_stay_hours and max_admissions must be non-negative and positive".into()));
        }
        let min_events = cfg.min_events();
        if cfg.max_events < min_events || PREFIX_LEN + 2 * cfg.max_events + 2 > TOKEN_BUDGET {
            return Err(SynthError::Config(format!(
                "max_events must lie between {min_events} and {}",
                (TOKEN_BUDGET - PREFIX_LEN - 2) / 2
            )));
        }
        if cfg.catalog.is_empty() {
            return Err(SynthError::EmptyCatalog);
        }
        if cfg.planted.rate > 0.0 && cfg.planted.categories.is_empty() {
            return Err(SynthError::Config("planted.rate > 0 needs planted categories".into()));
        }

        let mut kinds: Vec<Kind> = Vec::new();
        let mut kind_of: HashMap<TokenId, usize> = HashMap::new();
        let mut add = |name: &str, planted: bool| -> Result<usize, SynthError> {
            let token = id(name)?;
            if let Some(&k) = kind_of.get(&token) {
                if planted || kinds[k].planted {
                    return Err(SynthError::Config(format!("{name} is both planted and normal")));
                }
                return Ok(k);
            }
            let (table, raw) = table_of(name).ok_or_else(|| {
                SynthError::Config(format!("{name} is not a lab, vital, medication, transfer or position token"))
            })?;
            let cuts = if table.is_numeric() {
                Some(*cutoffs.get(name).ok_or_else(|| SynthError::MissingCutoffs(name.to_string()))?)
            } else {
                None
            };
            kinds.push(Kind {
                name: name.to_string(),
                token,
                table,
                raw: raw.to_string(),
                cuts,
                planted,
                missing_prone: false,
            });
            kind_of.insert(token, kinds.len() - 1);
            Ok(kinds.len() - 1)
        };
        let mut seen = std::collections::HashSet::new();
        let mut catalog: Vec<(usize, &super::CatalogEntry)> = Vec::new();
        for e in &cfg.catalog {
            if !(e.weight >= 0.0 && e.acuity.is_finite() && e.direction.is_finite()) {
                return Err(SynthError::Config(format!("catalog entry {} has a bad weight", e.token)));
            }
            if !seen.insert(e.token.as_str()) {
                return Err(SynthError::Config(format!("{} is listed twice", e.token)));
            }
            catalog.push((add(&e.token, false)?, e));
        }
        let mut planted = Vec::new();
        for c in &cfg.planted.categories {
            planted.push(add(c, true)?);
        }
        let planted_weights = match cfg.planted.weights.len() {
            0 => vec![1.0; planted.len()],
            n if n == planted.len() => cfg.planted.weights.clone(),
            n => {
                return Err(SynthError::Config(format!(
                    "planted.weights has {n} entries for {} categories",
                    planted.len()
                )))
            }
        };
        if planted_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite()))
            || (!planted.is_empty() && planted_weights.iter().sum::<f64>() <= 0.0)
        {
            return Err(SynthError::Config("planted.weights must be non-negative with a positive sum".into()));
        }
        let planted_share = normalized(planted_weights);
        let arrival = [add("ADT_icu", false)?, add("ADT_ed", false)?, add("ADT_ward", false)?];
        for c in &cfg.planted.missing_categories {
            let k = kind_of.get(&id(c)?).copied()
                .filter(|k| kinds[*k].cuts.is_some() && !kinds[*k].planted)
                .ok_or_else(|| SynthError::Config(format!("missing category {c} is not a valued catalog entry")))?;
            kinds[k].missing_prone = true;
        }
        if catalog.iter().all(|(_, e)| e.weight == 0.0) {
            return Err(SynthError::EmptyCatalog);
        }

        let rho = cfg.planted.rate;
        let emit: Vec<Vec<f64>> = sev
            .levels
            .iter()
            .map(|level| {
                let mut w = vec![0.0; kinds.len()];
                for (k, e) in &catalog {
                    w[*k] = e.weight * (sev.acuity_gain * e.acuity * level).exp();
                }
                let mut w = normalized(w);
                for x in &mut w {
                    *x *= 1.0 - rho;
                }
                for (k, share) in planted.iter().zip(&planted_share) {
                    w[*k] = rho * share;
                }
                w
            })
            .collect();
        let direction: HashMap<usize, f64> = catalog.iter().map(|(k, e)| (*k, e.direction)).collect();
        let deciles = kinds
            .iter()
            .enumerate()
            .map(|(k, kind)| {
                let Some(cuts) = kind.cuts else {
                    return vec![vec![0.0; 10]; s_count];
                };
                let ok = reachable(&cuts);
                sev.levels
                    .iter()
                    .map(|level| {
                        let w: Vec<f64> = if kind.planted {
                            (0..10).map(|d| f64::from(u8::from(ok[d]))).collect()
                        } else {
                            let mu = 4.5 + direction[&k] * sev.decile_shift * level;
                            let width = sev.decile_width + sev.decile_width_gain * level;
                            (0..10)
                                .map(|d| {
                                    let z = (d as f64 - mu) / width;
                                    if ok[d] {
                                        (-0.5 * z * z).exp()
                                    } else {
                                        0.0
                                    }
                                })
                                .collect()
                        };
                        normalized(w)
                    })
                    .collect()
            })
            .collect();
        let trans = (0..s_count)
            .map(|s| {
                (0..s_count)
                    .map(|r| {
                        if s_count == 1 {
                            1.0
                        } else if r == s {
                            sev.stay
                        } else {
                            (1.0 - sev.stay) / (s_count - 1) as f64
                        }
                    })
                    .collect()
            })
            .collect();
        let arrival_probs = sev
            .icu_on_arrival
            .iter()
            .map(|p| [*p, (1.0 - p) / 2.0, (1.0 - p) / 2.0])
            .collect();

        let table = |rows: &[(&str, f64, &str)]| -> Result<Vec<(TokenId, f64, String)>, SynthError> {
            rows.iter()
                .map(|(tok, p, raw)| Ok((id(tok)?, *p, raw.to_string())))
                .collect()
        };
        let age_rows: Vec<(String, f64, String)> =
            (0..10).map(|d| (format!("Q{d}"), 0.1, d.to_string())).collect();
        let age_table = age_rows
            .iter()
            .map(|(t, p, r)| Ok((id(t)?, *p, r.clone())))
            .collect::<Result<Vec<_>, SynthError>>()?;
        let prefix = [
            table(&[
                ("RACE_white", 0.6, "white"),
                ("RACE_black_or_african_american", 0.15, "black_or_african_american"),
                ("RACE_asian", 0.05, "asian"),
                ("RACE_other", 0.05, "other"),
                ("RACE_unknown", 0.15, "unknown"),
            ])?,
            table(&[
                ("ETHN_non-hispanic", 0.8, "non-hispanic"),
                ("ETHN_hispanic", 0.1, "hispanic"),
                ("ETHN_unknown", 0.1, "unknown"),
            ])?,
            table(&[("SEX_female", 0.5, "female"), ("SEX_male", 0.5, "male")])?,
            age_table,
            table(&[
                ("ADMN_ew_emer.", 0.5, "ew_emer."),
                ("ADMN_eu_observation", 0.1, "eu_observation"),
                ("ADMN_urgent", 0.1, "urgent"),
                ("ADMN_direct_emer.", 0.1, "direct_emer."),
                ("ADMN_elective", 0.1, "elective"),
                ("ADMN_surgical_same_day_admission", 0.1, "surgical_same_day_admission"),
            ])?,
        ];
        let alive = table(&[
            ("DSCG_home", 0.6, "home"),
            ("DSCG_skilled_nursing_facility_(snf)", 0.2, "skilled_nursing_facility_(snf)"),
            ("DSCG_acute_inpatient_rehab_facility", 0.1, "acute_inpatient_rehab_facility"),
            ("DSCG_hospice", 0.05, "hospice"),
            ("DSCG_other", 0.05, "other"),
        ])?;
        let special = vocab.special();
        Ok(Self {
            vocab_size: vocab.len(),
            tl_start: special.tl_start,
            tl_end: special.tl_end,
            nan: special.nan,
            missing_rate: cfg.planted.missing_rate,
            expired: id(&format!("DSCG_{EXPIRED_CATEGORY}"))?,
            decile_ids: special.deciles,
            prefix,
            age_cuts: *cutoffs.get(AGE_KEY).expect("preset age cutoffs"),
            alive,
            severity: sev.levels.clone(),
            initial: sev.initial.clone(),
            trans,
            stop_hazard: sev.stop_hazard.clone(),
            min_events,
            max_events: cfg.max_events,
            window_events: cfg.window_events(),
            arrival,
            arrival_probs,
            kinds,
            emit,
            deciles,
            kind_of,
            mortality: [
                cfg.outcome.mortality_intercept,
                cfg.outcome.mortality_severity,
                cfg.outcome.mortality_planted,
                cfg.outcome.mortality_missing,
            ],
        })
    }

    pub fn n_states(&self) -> usize {
        self.severity.len()
    }

    /// Discharge probability after `events` events in state `s`.
    pub fn hazard(&self, s: usize, events: usize) -> f64 {
        if events < self.min_events {
            0.0
        } else if events >= self.max_events {
            1.0
        } else {
            self.stop_hazard[s]
        }
    }

    pub fn death_prob(&self, s: usize, planted_window: usize, missing_window: usize) -> f64 {
        let [a, b, c, d] = self.mortality;
        super::sigmoid(
            a + b * self.severity[s] + c * planted_window as f64 + d * missing_window as f64,
        )
    }

    /// Probability of a missing value for an event of the given kind.
    pub fn missing_prob(&self, kind: usize) -> f64 {
        if self.kinds[kind].missing_prone {
            self.missing_rate
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Phase {
    /// Expecting prefix position i (0 = TL_START).
    Prefix(usize),
    Arrival,
    /// Between events: next is an event or the discharge token.
    Event,
    /// Expecting the decile of the given kind.
    Value(usize),
    /// After the discharge token.
    End,
    /// After TL_END; a new timeline may start.
    Done,
}

/// Forward filter over the hidden state, driven token by token.
#[derive(Debug, Clone)]
pub(crate) struct Filter {
    pub phase: Phase,
    /// P(current state | tokens so far).
    pub post: Vec<f64>,
    pub events: usize,
    pub planted_window: usize,
    pub missing_window: usize,
}

fn renormalize(post: &mut Vec<f64>, new: Vec<f64>) {
    let z: f64 = new.iter().sum();
    // a context of probability zero leaves the filter where it was
    if z > 0.0 && z.is_finite() {
        *post = new.into_iter().map(|x| x / z).collect();
    }
}

impl Filter {
    pub fn new(t: &Tables) -> Self {
        Self {
            phase: Phase::Prefix(0),
            post: t.initial.clone(),
            events: 0,
            planted_window: 0,
            missing_window: 0,
        }
    }

    fn split(&self, t: &Tables) -> (Vec<f64>, Vec<f64>) {
        let stop: Vec<f64> = (0..t.n_states())
            .map(|s| self.post[s] * t.hazard(s, self.events))
            .collect();
        let n = t.n_states();
        let mut pred = vec![0.0; n];
        for ((post, st), row) in self.post.iter().zip(&stop).zip(&t.trans) {
            let cont = post - st;
            for (p, tr) in pred.iter_mut().zip(row) {
                *p += cont * tr;
            }
        }
        (stop, pred)
    }

    fn discharge_prob(&self, t: &Tables, s: usize, token: TokenId) -> f64 {
        let pd = t.death_prob(s, self.planted_window, self.missing_window);
        if token == t.expired {
            pd
        } else {
            t.alive
                .iter()
                .find(|a| a.0 == token)
                .map_or(0.0, |a| (1.0 - pd) * a.1)
        }
    }

    /// Next-token probabilities over the whole vocabulary.
    pub fn distribution(&self, t: &Tables) -> Vec<f64> {
        let mut p = vec![0.0; t.vocab_size];
        match self.phase {
            Phase::Prefix(0) | Phase::Done => p[t.tl_start as usize] = 1.0,
            Phase::Prefix(i) => {
                for (tok, q, _) in &t.prefix[i - 1] {
                    p[*tok as usize] += q;
                }
            }
            Phase::Arrival => {
                for s in 0..t.n_states() {
                    for (a, k) in t.arrival.iter().enumerate() {
                        p[t.kinds[*k].token as usize] += t.initial[s] * t.arrival_probs[s][a];
                    }
                }
            }
            Phase::Event => {
                let (stop, pred) = self.split(t);
                for (r, w) in pred.iter().enumerate() {
                    for (k, kind) in t.kinds.iter().enumerate() {
                        p[kind.token as usize] += w * t.emit[r][k];
                    }
                }
                for (s, w) in stop.iter().enumerate() {
                    if *w > 0.0 {
                        let pd = t.death_prob(s, self.planted_window, self.missing_window);
                        p[t.expired as usize] += w * pd;
                        for (tok, q, _) in &t.alive {
                            p[*tok as usize] += w * (1.0 - pd) * q;
                        }
                    }
                }
            }
            Phase::Value(k) => {
                let missing = t.missing_prob(k);
                p[t.nan as usize] += missing;
                for (s, w) in self.post.iter().enumerate() {
                    for (d, q) in t.deciles[k][s].iter().enumerate() {
                        p[t.decile_ids[d] as usize] += w * q * (1.0 - missing);
                    }
                }
            }
            Phase::End => p[t.tl_end as usize] = 1.0,
        }
        p
    }

    fn enter_event(&mut self, t: &Tables, k: usize) {
        self.events += 1;
        if t.kinds[k].planted && self.events <= t.window_events {
            self.planted_window += 1;
        }
        self.phase = if t.kinds[k].cuts.is_some() {
            Phase::Value(k)
        } else {
            Phase::Event
        };
    }

    pub fn advance(&mut self, t: &Tables, token: TokenId) {
        match self.phase {
            Phase::Prefix(i) => {
                self.phase = if i + 1 < PREFIX_LEN {
                    Phase::Prefix(i + 1)
                } else {
                    Phase::Arrival
                };
            }
            Phase::Arrival => {
                let a = t.arrival.iter().position(|k| t.kinds[*k].token == token);
                if let Some(a) = a {
                    let new = (0..t.n_states())
                        .map(|s| t.initial[s] * t.arrival_probs[s][a])
                        .collect();
                    renormalize(&mut self.post, new);
                }
                match t.kind_of.get(&token) {
                    Some(&k) => self.enter_event(t, k),
                    None => {
                        self.events = 1;
                        self.phase = Phase::Event;
                    }
                }
            }
            Phase::Event => {
                let (stop, pred) = self.split(t);
                if let Some(&k) = t.kind_of.get(&token) {
                    let new = pred.iter().enumerate().map(|(r, w)| w * t.emit[r][k]).collect();
                    renormalize(&mut self.post, new);
                    self.enter_event(t, k);
                } else if token == t.expired || t.alive.iter().any(|a| a.0 == token) {
                    let new = stop
                        .iter()
                        .enumerate()
                        .map(|(s, w)| w * self.discharge_prob(t, s, token))
                        .collect();
                    renormalize(&mut self.post, new);
                    self.phase = Phase::End;
                }
            }
            Phase::Value(k) => {
                if let Some(d) = t.decile_ids.iter().position(|q| *q == token) {
                    let new = self
                        .post
                        .iter()
                        .enumerate()
                        .map(|(s, w)| w * t.deciles[k][s][d])
                        .collect();
                    renormalize(&mut self.post, new);
                } else if token == t.nan && self.events <= t.window_events {
                    self.missing_window += 1;
                }
                self.phase = Phase::Event;
            }
            Phase::End => self.phase = Phase::Done,
            Phase::Done => {
                *self = Filter::new(t);
                self.phase = Phase::Prefix(1);
            }
        }
    }
}
