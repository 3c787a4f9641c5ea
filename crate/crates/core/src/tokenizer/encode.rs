use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cutoffs::{bin_value, CutoffTable, AGE_KEY};
use super::vocab::{TokenId, Vocabulary, NAN, NONE, TL_END, TL_START};
use super::TokenizerError;
use crate::ingest::{EventValue, Hospitalization, TableKind};

pub const DEFAULT_CONTEXT_LIMIT: usize = 1024;
/// TL_START, race, ethnicity, sex, age decile, admission type.
pub const PREFIX_LEN: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimelineEnding {
    /// Ends with the discharge-category token and TL_END.
    Discharged,
    /// Cut at the context limit; the final token is TRUNC.
    Truncated,
    /// A time window with no suffix tokens.
    Window,
}

impl TimelineEnding {
    pub fn suffix_len(self) -> usize {
        match self {
            TimelineEnding::Discharged => 2,
            TimelineEnding::Truncated => 1,
            TimelineEnding::Window => 0,
        }
    }
}

/// A maximal group of contemporaneous tokens, 1-based and inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct EventSpan {
    pub start: usize,
    pub end: usize,
}

impl EventSpan {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(1 <= start && start <= end);
        Self { start, end }
    }

    /// Zero-based token index range.
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start - 1..self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl From<(usize, usize)> for EventSpan {
    fn from((start, end): (usize, usize)) -> Self {
        Self { start, end }
    }
}

impl From<EventSpan> for (usize, usize) {
    fn from(s: EventSpan) -> Self {
        (s.start, s.end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub hospitalization_id: String,
    pub tokens: Vec<TokenId>,
    /// Epoch seconds per token.
    pub token_times: Vec<i64>,
    pub event_spans: Vec<EventSpan>,
    pub ending: TimelineEnding,
}

impl Timeline {
    /// Build a timeline and derive its event spans.
    pub fn new(
        hospitalization_id: String,
        tokens: Vec<TokenId>,
        token_times: Vec<i64>,
        ending: TimelineEnding,
    ) -> Self {
        assert_eq!(tokens.len(), token_times.len());
        let event_spans = event_spans(&token_times, ending);
        Self {
            hospitalization_id,
            tokens,
            token_times,
            event_spans,
            ending,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn truncated(&self) -> bool {
        self.ending == TimelineEnding::Truncated
    }

    /// Zero-based index range of the clinical events.
    pub fn clinical_range(&self) -> std::ops::Range<usize> {
        PREFIX_LEN.min(self.len())..self.len().saturating_sub(self.ending.suffix_len())
    }

    /// Keep the prefix and every event whose time is at or before `until`.
    /// The result has no suffix.
    pub fn window_until(&self, until: i64) -> Timeline {
        let mut end = PREFIX_LEN.min(self.len());
        for span in &self.event_spans {
            if self.token_times[span.start - 1] <= until {
                end = span.end;
            } else {
                break;
            }
        }
        Timeline::new(
            self.hospitalization_id.clone(),
            self.tokens[..end].to_vec(),
            self.token_times[..end].to_vec(),
            TimelineEnding::Window,
        )
    }

    /// Remove whole events by span index. Prefix and suffix are kept, and the
    /// spans of the result are re-derived.
    pub fn without_events(&self, drop: &BTreeSet<usize>) -> Timeline {
        let mut keep = vec![true; self.len()];
        for &e in drop {
            for i in self.event_spans[e].range() {
                keep[i] = false;
            }
        }
        let tokens = self
            .tokens
            .iter()
            .zip(&keep)
            .filter_map(|(t, k)| k.then_some(*t))
            .collect();
        let times = self
            .token_times
            .iter()
            .zip(&keep)
            .filter_map(|(t, k)| k.then_some(*t))
            .collect();
        Timeline::new(self.hospitalization_id.clone(), tokens, times, self.ending)
    }
}

/// Spans of equal token time strictly between prefix and suffix.
pub fn event_spans(token_times: &[i64], ending: TimelineEnding) -> Vec<EventSpan> {
    let lo = PREFIX_LEN.min(token_times.len());
    let hi = token_times.len().saturating_sub(ending.suffix_len()).max(lo);
    let mut spans = Vec::new();
    let mut i = lo;
    while i < hi {
        let mut j = i + 1;
        while j < hi && token_times[j] == token_times[i] {
            j += 1;
        }
        spans.push(EventSpan::new(i + 1, j));
        i = j;
    }
    spans
}

enum Piece {
    Named(Vec<String>),
    Decile(usize),
    Fixed(&'static str),
}

struct Planned {
    piece: Piece,
    time: i64,
    event: Option<usize>,
}

fn candidates(prefix: &str, raw: &str) -> Vec<String> {
    let lower = raw.trim().to_lowercase();
    let mut out = vec![format!("{prefix}{raw}")];
    for alt in [
        format!("{prefix}{lower}"),
        format!("{prefix}{}", lower.replace(' ', "_")),
    ] {
        if !out.contains(&alt) {
            out.push(alt);
        }
    }
    out
}

fn cutoffs_for<'a>(table: &'a CutoffTable, names: &[String]) -> Option<&'a [f64; 9]> {
    names.iter().find_map(|n| table.get(n))
}

fn table_prefix(kind: TableKind) -> &'static str {
    match kind {
        TableKind::Labs => "LAB_",
        TableKind::Vitals => "VTL_",
        TableKind::Medications => "MED_",
        TableKind::Assessments => "ASMT_",
        TableKind::Transfers => "ADT_",
        TableKind::Positioning => "POSN_",
        TableKind::Respiratory => "RESP_mode_",
        TableKind::Admissions => "ADMN_",
        TableKind::Discharges => "DSCG_",
    }
}

fn assessment_category(category: &str) -> Vec<String> {
    if category.starts_with("cat_") {
        candidates("ASMT_", category)
    } else {
        let mut c = candidates("ASMT_cat_", category);
        c.extend(candidates("ASMT_", category));
        c
    }
}

fn describe(h: &Hospitalization, event: Option<usize>) -> String {
    match event {
        Some(i) => {
            let e = &h.events[i];
            format!("event {i} ({} `{}`)", e.table_kind, e.category)
        }
        None => "admission/discharge".to_string(),
    }
}

/// Token plan for one hospitalization, before vocabulary lookup.
fn plan(h: &Hospitalization, cutoffs: &CutoffTable) -> Result<Vec<Planned>, TokenizerError> {
    let admit = h.admit_time.timestamp();
    let discharge = h.discharge_time.timestamp();
    let first = h.events.iter().map(|e| e.timestamp.timestamp()).min();
    let last = h.events.iter().map(|e| e.timestamp.timestamp()).max();
    let t0 = first.map_or(admit, |f| f.min(admit));
    let t_end = last.map_or(discharge, |l| l.max(discharge));

    let missing_cutoff = |event: Option<usize>, category: &str| TokenizerError::MissingCutoff {
        hospitalization_id: h.id.clone(),
        event: describe(h, event),
        category: category.to_string(),
    };

    let mut out = Vec::with_capacity(PREFIX_LEN + 2 * h.events.len() + 2);
    let mut push = |piece, time, event| out.push(Planned { piece, time, event });

    let d = &h.demographics;
    let age_cuts = cutoffs
        .get(AGE_KEY)
        .ok_or_else(|| missing_cutoff(None, AGE_KEY))?;
    let age = bin_value(h.age_at_admission, age_cuts).map_err(|_| TokenizerError::NonFinite {
        context: format!("age of hospitalization `{}`", h.id),
    })?;
    push(Piece::Fixed(TL_START), t0, None);
    push(
        Piece::Named(candidates("RACE_", d.race.as_deref().unwrap_or("unknown"))),
        t0,
        None,
    );
    push(
        Piece::Named(candidates(
            "ETHN_",
            d.ethnicity.as_deref().unwrap_or("unknown"),
        )),
        t0,
        None,
    );
    push(Piece::Named(candidates("SEX_", &d.sex)), t0, None);
    push(Piece::Decile(age), t0, None);
    push(Piece::Named(candidates("ADMN_", &h.admission_type)), t0, None);

    for (i, e) in h.events.iter().enumerate() {
        let t = e.timestamp.timestamp();
        let ev = Some(i);
        match e.table_kind {
            TableKind::Labs | TableKind::Vitals | TableKind::Medications => {
                let names = candidates(table_prefix(e.table_kind), &e.category);
                let value = match &e.value {
                    None => Piece::Fixed(NAN),
                    Some(EventValue::Numeric(x)) => {
                        let cuts = cutoffs_for(cutoffs, &names)
                            .ok_or_else(|| missing_cutoff(ev, &names[0]))?;
                        Piece::Decile(bin_value(*x, cuts)?)
                    }
                    Some(EventValue::Categorical(s)) => {
                        return Err(TokenizerError::UnknownToken {
                            hospitalization_id: h.id.clone(),
                            event: describe(h, ev),
                            token: s.clone(),
                        })
                    }
                };
                push(Piece::Named(names), t, ev);
                push(value, t, ev);
            }
            TableKind::Assessments => {
                let numeric_names = candidates("ASMT_", &e.category);
                let numeric_cuts = cutoffs_for(cutoffs, &numeric_names);
                match (&e.value, numeric_cuts) {
                    (Some(EventValue::Numeric(x)), cuts) => {
                        let cuts = cuts.ok_or_else(|| missing_cutoff(ev, &numeric_names[0]))?;
                        push(Piece::Named(numeric_names), t, ev);
                        push(Piece::Decile(bin_value(*x, cuts)?), t, ev);
                    }
                    (None, Some(_)) => {
                        push(Piece::Named(numeric_names), t, ev);
                        push(Piece::Fixed(NAN), t, ev);
                    }
                    (Some(EventValue::Categorical(s)), _) => {
                        push(Piece::Named(assessment_category(&e.category)), t, ev);
                        push(Piece::Named(candidates("ASMT_val_", s)), t, ev);
                    }
                    (None, None) => {
                        push(Piece::Named(assessment_category(&e.category)), t, ev);
                        push(Piece::Fixed(NONE), t, ev);
                    }
                }
            }
            TableKind::Respiratory => {
                let device = match &e.value {
                    Some(EventValue::Categorical(s)) => s.clone(),
                    Some(EventValue::Numeric(x)) => x.to_string(),
                    None => NONE.to_string(),
                };
                push(
                    Piece::Named(candidates("RESP_mode_", &e.category)),
                    t,
                    ev,
                );
                push(Piece::Named(candidates("RESP_devc_", &device)), t, ev);
            }
            TableKind::Transfers | TableKind::Positioning => {
                push(
                    Piece::Named(candidates(table_prefix(e.table_kind), &e.category)),
                    t,
                    ev,
                );
            }
            TableKind::Admissions | TableKind::Discharges => {}
        }
    }

    push(
        Piece::Named(candidates("DSCG_", &h.discharge_category)),
        t_end,
        None,
    );
    push(Piece::Fixed(TL_END), t_end, None);
    Ok(out)
}

fn resolve(
    vocab: &Vocabulary,
    h: &Hospitalization,
    p: &Planned,
) -> Result<TokenId, TokenizerError> {
    let unknown = |token: &str| TokenizerError::UnknownToken {
        hospitalization_id: h.id.clone(),
        event: describe(h, p.event),
        token: token.to_string(),
    };
    match &p.piece {
        Piece::Named(names) => names
            .iter()
            .find_map(|n| vocab.id(n))
            .ok_or_else(|| unknown(&names[0])),
        Piece::Decile(k) => Ok(vocab.decile(*k)),
        Piece::Fixed(s) => vocab.id(s).ok_or_else(|| unknown(s)),
    }
}

/// Vocabulary grown from the base tokens in first-seen order over the cohort.
pub fn fit_vocabulary(
    cohort: &[Hospitalization],
    cutoffs: &CutoffTable,
) -> Result<Vocabulary, TokenizerError> {
    let mut vocab = Vocabulary::base();
    for h in cohort {
        for p in plan(h, cutoffs)? {
            if let Piece::Named(names) = &p.piece {
                if names.iter().all(|n| vocab.id(n).is_none()) {
                    vocab.insert(&names[0]);
                }
            }
        }
    }
    Ok(vocab)
}

/// Numeric observations keyed the way cutoffs are looked up: the category
/// token string, plus `age_at_admission`.
pub fn collect_numeric_observations(cohort: &[Hospitalization]) -> BTreeMap<String, Vec<f64>> {
    let mut obs: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for h in cohort {
        obs.entry(AGE_KEY.to_string())
            .or_default()
            .push(h.age_at_admission);
        for e in &h.events {
            let prefix = match e.table_kind {
                TableKind::Labs | TableKind::Vitals | TableKind::Medications => {
                    table_prefix(e.table_kind)
                }
                TableKind::Assessments => "ASMT_",
                _ => continue,
            };
            if let Some(EventValue::Numeric(x)) = e.value {
                obs.entry(format!("{prefix}{}", e.category))
                    .or_default()
                    .push(x);
            }
        }
    }
    obs
}

#[derive(Debug, Clone)]
pub struct Tokenizer {
    pub vocab: Vocabulary,
    pub cutoffs: CutoffTable,
    pub context_limit: usize,
}

impl Tokenizer {
    pub fn new(
        vocab: Vocabulary,
        cutoffs: CutoffTable,
        context_limit: usize,
    ) -> Result<Self, TokenizerError> {
        if context_limit < PREFIX_LEN + 2 {
            return Err(TokenizerError::LimitTooSmall(context_limit));
        }
        Ok(Self {
            vocab,
            cutoffs,
            context_limit,
        })
    }

    /// Reference vocabulary and cutoffs with the default context limit.
    pub fn preset() -> Self {
        Self::new(
            Vocabulary::preset(),
            CutoffTable::preset(),
            DEFAULT_CONTEXT_LIMIT,
        )
        .expect("default limit is valid")
    }

    pub fn encode(&self, h: &Hospitalization) -> Result<Timeline, TokenizerError> {
        let planned = plan(h, &self.cutoffs)?;
        let mut tokens = Vec::with_capacity(planned.len().min(self.context_limit));
        let mut times = Vec::with_capacity(tokens.capacity());
        for p in &planned {
            tokens.push(resolve(&self.vocab, h, p)?);
            times.push(p.time);
        }
        let ending = if tokens.len() > self.context_limit {
            tokens.truncate(self.context_limit - 1);
            times.truncate(self.context_limit - 1);
            tokens.push(self.vocab.special().trunc);
            times.push(*times.last().expect("prefix is present"));
            TimelineEnding::Truncated
        } else {
            TimelineEnding::Discharged
        };
        Ok(Timeline::new(h.id.clone(), tokens, times, ending))
    }

    pub fn encode_all(&self, cohort: &[Hospitalization]) -> Result<Vec<Timeline>, TokenizerError> {
        cohort.par_iter().map(|h| self.encode(h)).collect()
    }

    pub fn decode(&self, timeline: &Timeline) -> Result<Vec<String>, TokenizerError> {
        self.vocab.decode(&timeline.tokens)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Demographics, EventRecord};
    use chrono::{DateTime, Duration, Utc};
    use proptest::prelude::*;

    fn t(minutes: i64) -> DateTime<Utc> {
        DateTime::from_timestamp(1_600_000_000, 0).unwrap() + Duration::minutes(minutes)
    }

    fn hosp(events: Vec<EventRecord>) -> Hospitalization {
        Hospitalization {
            id: "H1".into(),
            patient_id: "P1".into(),
            demographics: Demographics {
                race: Some("white".into()),
                ethnicity: None,
                sex: "male".into(),
            },
            age_at_admission: 60.0,
            admission_type: "ew_emer.".into(),
            admit_time: t(0),
            discharge_time: t(60 * 48),
            discharge_category: "home".into(),
            events,
            outcome_inpatient_mortality: false,
            outcome_long_los: false,
        }
    }

    fn ev(minute: i64, kind: TableKind, category: &str, value: Option<EventValue>) -> EventRecord {
        EventRecord {
            timestamp: t(minute),
            table_kind: kind,
            category: category.into(),
            value,
        }
    }

    fn num(x: f64) -> Option<EventValue> {
        Some(EventValue::Numeric(x))
    }

    fn cat(s: &str) -> Option<EventValue> {
        Some(EventValue::Categorical(s.into()))
    }

    #[test]
    fn empty_hospitalization_is_eight_tokens() {
        let tk = Tokenizer::preset();
        let tl = tk.encode(&hosp(vec![])).unwrap();
        assert_eq!(
            tk.decode(&tl).unwrap(),
            [
                "TL_START",
                "RACE_white",
                "ETHN_unknown",
                "SEX_male",
                "Q4",
                "ADMN_ew_emer.",
                "DSCG_home",
                "TL_END"
            ]
        );
        assert!(tl.event_spans.is_empty());
        assert!(!tl.truncated());
    }

    #[test]
    fn hemoglobin_nine_is_q3() {
        let tk = Tokenizer::preset();
        let h = hosp(vec![ev(5, TableKind::Labs, "hemoglobin", num(9.0))]);
        let s = tk.decode(&tk.encode(&h).unwrap()).unwrap();
        assert_eq!(&s[6..8], ["LAB_hemoglobin", "Q3"]);
    }

    #[test]
    fn every_table_kind_encodes() {
        let tk = Tokenizer::preset();
        let h = hosp(vec![
            ev(1, TableKind::Transfers, "icu", None),
            ev(2, TableKind::Respiratory, "simv", cat("imv")),
            ev(3, TableKind::Respiratory, "other", None),
            ev(4, TableKind::Medications, "sodium bicarbonate", num(1.0)),
            ev(5, TableKind::Vitals, "heart_rate", None),
            ev(6, TableKind::Assessments, "gcs_total", num(14.0)),
            ev(7, TableKind::Assessments, "cam_loc", cat("Yes")),
            ev(8, TableKind::Assessments, "cam_total", None),
            ev(9, TableKind::Positioning, "prone", None),
            ev(10, TableKind::Assessments, "rass", None),
        ]);
        let s = tk.decode(&tk.encode(&h).unwrap()).unwrap();
        assert_eq!(
            &s[6..s.len() - 2],
            [
                "ADT_icu",
                "RESP_mode_simv",
                "RESP_devc_imv",
                "RESP_mode_other",
                "RESP_devc_None",
                "MED_sodium bicarbonate",
                "Q9",
                "VTL_heart_rate",
                "nan",
                "ASMT_gcs_total",
                "Q2",
                "ASMT_cat_cam_loc",
                "ASMT_val_yes",
                "ASMT_cat_cam_total",
                "None",
                "POSN_prone",
                "ASMT_rass",
                "nan",
            ]
        );
    }

    #[test]
    fn unknown_category_names_the_event() {
        let tk = Tokenizer::preset();
        let h = hosp(vec![ev(1, TableKind::Transfers, "moon_base", None)]);
        let err = tk.encode(&h).unwrap_err().to_string();
        assert!(err.contains("event 0"), "{err}");
        assert!(err.contains("ADT_moon_base"), "{err}");
    }

    #[test]
    fn spans_follow_contemporaneity() {
        let tk = Tokenizer::preset();
        let same = hosp(vec![
            ev(5, TableKind::Labs, "hemoglobin", num(9.0)),
            ev(5, TableKind::Labs, "sodium", num(140.0)),
        ]);
        let tl = tk.encode(&same).unwrap();
        assert_eq!(tl.event_spans, [EventSpan::new(7, 10)]);

        let apart = hosp(vec![
            ev(5, TableKind::Labs, "hemoglobin", num(9.0)),
            ev(6, TableKind::Labs, "sodium", num(140.0)),
        ]);
        let tl = tk.encode(&apart).unwrap();
        assert_eq!(tl.event_spans, [EventSpan::new(7, 8), EventSpan::new(9, 10)]);
    }

    #[test]
    fn long_stays_truncate_at_the_limit() {
        let tk = Tokenizer::preset();
        let events = (0..2000)
            .map(|i| ev(i, TableKind::Vitals, "spo2", num(95.0)))
            .collect();
        let tl = tk.encode(&hosp(events)).unwrap();
        assert_eq!(tl.len(), 1024);
        assert_eq!(*tl.tokens.last().unwrap(), tk.vocab.special().trunc);
        assert!(tl.truncated());
        // last kept event is cut in half: its category token survives alone
        assert_eq!(tl.event_spans.last().unwrap().len(), 1);
        assert!(Tokenizer::new(Vocabulary::preset(), CutoffTable::preset(), 7).is_err());
    }

    #[test]
    fn fitted_vocabulary_is_first_seen_after_base() {
        let h = hosp(vec![
            ev(1, TableKind::Labs, "zinc", num(1.0)),
            ev(2, TableKind::Labs, "hemoglobin", num(9.0)),
        ]);
        let cut = CutoffTable::fit(&collect_numeric_observations(std::slice::from_ref(&h)))
            .unwrap();
        let v = fit_vocabulary(std::slice::from_ref(&h), &cut).unwrap();
        let tail: Vec<_> = v.tokens()[16..].iter().map(String::as_str).collect();
        assert_eq!(
            tail,
            [
                "RACE_white",
                "ETHN_unknown",
                "SEX_male",
                "ADMN_ew_emer.",
                "LAB_zinc",
                "LAB_hemoglobin",
                "DSCG_home"
            ]
        );
        let tk = Tokenizer::new(v, cut, 1024).unwrap();
        tk.encode(&h).unwrap();
    }

    #[test]
    fn window_and_event_removal() {
        let tk = Tokenizer::preset();
        let h = hosp(vec![
            ev(5, TableKind::Labs, "hemoglobin", num(9.0)),
            ev(60, TableKind::Transfers, "icu", None),
            ev(120, TableKind::Labs, "sodium", num(140.0)),
        ]);
        let tl = tk.encode(&h).unwrap();
        let w = tl.window_until(t(60).timestamp());
        assert_eq!(w.len(), 6 + 3);
        assert_eq!(w.event_spans.len(), 2);
        assert_eq!(w.ending, TimelineEnding::Window);

        let dropped = tl.without_events(&BTreeSet::from([1]));
        assert_eq!(dropped.len(), tl.len() - 1);
        assert_eq!(dropped.event_spans.len(), 2);
        assert_eq!(tl.without_events(&BTreeSet::new()), tl);
    }

    fn arb_event() -> impl Strategy<Value = EventRecord> {
        let labs = ["hemoglobin", "sodium", "potassium"];
        (0i64..50, 0usize..3, 0f64..200.0, 0u8..4).prop_map(move |(m, c, x, k)| match k {
            0 => ev(m, TableKind::Labs, labs[c], num(x)),
            1 => ev(m, TableKind::Transfers, "ward", None),
            2 => ev(m, TableKind::Respiratory, "simv", cat("imv")),
            _ => ev(m, TableKind::Vitals, "sbp", num(x)),
        })
    }

    proptest! {
        #[test]
        fn timeline_shape(events in proptest::collection::vec(arb_event(), 0..40), limit in 8usize..120) {
            let mut h = hosp(events);
            h.sort_events();
            let tk = Tokenizer::new(Vocabulary::preset(), CutoffTable::preset(), limit).unwrap();
            let tl = tk.encode(&h).unwrap();
            prop_assert!(tl.len() <= limit);
            prop_assert_eq!(tl.tokens[0], tk.vocab.special().tl_start);
            prop_assert!(tl.token_times.windows(2).all(|w| w[0] <= w[1]));
            // spans tile the clinical region
            let covered: Vec<usize> = tl.event_spans.iter().flat_map(|s| s.range()).collect();
            prop_assert_eq!(covered, tl.clinical_range().collect::<Vec<_>>());
            for w in tl.event_spans.windows(2) {
                prop_assert!(tl.token_times[w[0].end - 1] < tl.token_times[w[1].start - 1]);
            }
            if !tl.truncated() {
                prop_assert_eq!(*tl.tokens.last().unwrap(), tk.vocab.special().tl_end);
                let names = tk.decode(&tl).unwrap();
                prop_assert!(names[names.len() - 2].starts_with("DSCG_"));
            }
        }
    }
}
