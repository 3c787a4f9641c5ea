//! Parsing of CLIF-style long-format tables into canonical hospitalization
//! records, plus the canonical JSONL cohort format and patient-level splits.
//!
//! Every table is a list of `(hospitalization_id, timestamp, category, value)`
//! rows. The admissions table carries the demographic fields as categories
//! (`patient_id`, `race`, `ethnicity`, `sex`, `age_at_admission`,
//! `admission_type`) stamped with the admission time; the discharges table
//! carries `discharge_category` stamped with the discharge time.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Discharge category that marks an in-hospital death.
pub const EXPIRED_CATEGORY: &str = "expired";
pub const LONG_STAY_DAYS: i64 = 7;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{file}:{line}: field `{field}`: {message}")]
    Malformed {
        file: String,
        line: usize,
        field: String,
        message: String,
    },
    #[error("{file}: unknown table kind `{kind}`")]
    UnknownTableKind { file: String, kind: String },
    #[error("{file}:{line}: unparseable timestamp `{value}`")]
    Timestamp {
        file: String,
        line: usize,
        value: String,
    },
    #[error("hospitalization `{hospitalization_id}` is missing `{field}`")]
    MissingField {
        hospitalization_id: String,
        field: String,
    },
    #[error("hospitalization `{0}` has discharge before admission")]
    DischargeBeforeAdmit(String),
    #[error("split fractions must be non-negative and sum to 1, got {0:?}")]
    BadFractions([f64; 3]),
    #[error("cannot split {patients} patients into 3 sets")]
    TooFewPatients { patients: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {source}")]
    Json {
        file: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    Labs,
    Vitals,
    Medications,
    Assessments,
    Respiratory,
    Transfers,
    Positioning,
    Admissions,
    Discharges,
}

impl TableKind {
    pub const ALL: [TableKind; 9] = [
        TableKind::Labs,
        TableKind::Vitals,
        TableKind::Medications,
        TableKind::Assessments,
        TableKind::Respiratory,
        TableKind::Transfers,
        TableKind::Positioning,
        TableKind::Admissions,
        TableKind::Discharges,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TableKind::Labs => "labs",
            TableKind::Vitals => "vitals",
            TableKind::Medications => "medications",
            TableKind::Assessments => "assessments",
            TableKind::Respiratory => "respiratory",
            TableKind::Transfers => "transfers",
            TableKind::Positioning => "positioning",
            TableKind::Admissions => "admissions",
            TableKind::Discharges => "discharges",
        }
    }

    /// Order used to break timestamp ties between tables.
    pub fn tie_priority(self) -> u8 {
        match self {
            TableKind::Transfers => 0,
            TableKind::Respiratory => 1,
            TableKind::Medications => 2,
            TableKind::Vitals => 3,
            TableKind::Labs => 4,
            TableKind::Assessments => 5,
            TableKind::Positioning => 6,
            TableKind::Admissions => 7,
            TableKind::Discharges => 8,
        }
    }

    /// Tables whose value column must be a decimal.
    pub fn is_numeric(self) -> bool {
        matches!(
            self,
            TableKind::Labs | TableKind::Vitals | TableKind::Medications
        )
    }

    /// Tables that contribute clinical events to a timeline.
    pub fn is_event_table(self) -> bool {
        !matches!(self, TableKind::Admissions | TableKind::Discharges)
    }

    fn from_file_name(path: &Path) -> Option<TableKind> {
        let stem = path.file_stem()?.to_str()?.to_ascii_lowercase();
        // `labs.csv`, `clif_labs.csv`, `site1-vitals.jsonl`
        TableKind::ALL.into_iter().find(|kind| {
            let name = kind.as_str();
            stem == name
                || stem
                    .strip_suffix(name)
                    .is_some_and(|rest| rest.ends_with(['_', '-', '.']))
        })
    }
}

impl fmt::Display for TableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TableKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        TableKind::ALL
            .into_iter()
            .find(|k| k.as_str() == lower)
            .ok_or_else(|| s.to_string())
    }
}

/// A measured or recorded value. Numeric tables carry decimals, the rest
/// carry category strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EventValue {
    Numeric(f64),
    Categorical(String),
}

impl EventValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            EventValue::Numeric(x) => Some(*x),
            EventValue::Categorical(_) => None,
        }
    }

    fn sort_key(&self) -> (u8, f64, &str) {
        match self {
            EventValue::Numeric(x) => (0, *x, ""),
            EventValue::Categorical(s) => (1, 0.0, s.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub timestamp: DateTime<Utc>,
    pub table_kind: TableKind,
    pub category: String,
    #[serde(default)]
    pub value: Option<EventValue>,
}

impl EventRecord {
    /// Deterministic event order: timestamp, table priority, category, value.
    pub fn canonical_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.timestamp
            .cmp(&other.timestamp)
            .then(
                self.table_kind
                    .tie_priority()
                    .cmp(&other.table_kind.tie_priority()),
            )
            .then_with(|| self.category.cmp(&other.category))
            .then_with(|| match (&self.value, &other.value) {
                (None, None) => std::cmp::Ordering::Equal,
                (None, Some(_)) => std::cmp::Ordering::Less,
                (Some(_), None) => std::cmp::Ordering::Greater,
                (Some(a), Some(b)) => {
                    let (ta, xa, sa) = a.sort_key();
                    let (tb, xb, sb) = b.sort_key();
                    ta.cmp(&tb)
                        .then(xa.total_cmp(&xb))
                        .then_with(|| sa.cmp(sb))
                }
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    #[serde(default)]
    pub race: Option<String>,
    #[serde(default)]
    pub ethnicity: Option<String>,
    pub sex: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hospitalization {
    pub id: String,
    pub patient_id: String,
    pub demographics: Demographics,
    pub age_at_admission: f64,
    pub admission_type: String,
    pub admit_time: DateTime<Utc>,
    pub discharge_time: DateTime<Utc>,
    pub discharge_category: String,
    pub events: Vec<EventRecord>,
    pub outcome_inpatient_mortality: bool,
    pub outcome_long_los: bool,
}

impl Hospitalization {
    pub fn length_of_stay(&self) -> Duration {
        self.discharge_time - self.admit_time
    }

    /// Long length of stay: discharge at least seven days after admission.
    pub fn derive_long_los(admit: DateTime<Utc>, discharge: DateTime<Utc>) -> bool {
        discharge - admit >= Duration::days(LONG_STAY_DAYS)
    }

    pub fn sort_events(&mut self) {
        self.events.sort_by(|a, b| a.canonical_cmp(b));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Csv,
    Jsonl,
}

impl FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(InputFormat::Csv),
            "jsonl" | "ndjson" => Ok(InputFormat::Jsonl),
            other => Err(format!("unknown input format `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub min_stay_hours: f64,
    /// Drop hospitalizations shorter than `min_stay_hours`.
    pub filter_short_stays: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            min_stay_hours: 24.0,
            filter_short_stays: false,
        }
    }
}

#[derive(Debug, Clone)]
struct RawRow {
    file: String,
    line: usize,
    kind: TableKind,
    hospitalization_id: String,
    timestamp: DateTime<Utc>,
    category: String,
    value: Option<String>,
}

pub fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let raw = raw.trim();
    if let Ok(ts) = DateTime::parse_from_rfc3339(raw) {
        return Some(ts.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(naive.and_utc());
        }
    }
    None
}

fn read_csv_rows(path: &Path, out: &mut Vec<RawRow>) -> Result<(), IngestError> {
    let file = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .map_err(|e| IngestError::Malformed {
            file: file.clone(),
            line: 1,
            field: "header".into(),
            message: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| IngestError::Malformed {
            file: file.clone(),
            line: 1,
            field: "header".into(),
            message: e.to_string(),
        })?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let missing = |name: &str| IngestError::Malformed {
        file: file.clone(),
        line: 1,
        field: name.to_string(),
        message: "missing column".into(),
    };
    let id_col = column("hospitalization_id").ok_or_else(|| missing("hospitalization_id"))?;
    let ts_col = column("timestamp").ok_or_else(|| missing("timestamp"))?;
    let cat_col = column("category").ok_or_else(|| missing("category"))?;
    let val_col = column("value");
    let kind_col = column("table_kind");
    let file_kind = TableKind::from_file_name(path);
    if kind_col.is_none() && file_kind.is_none() {
        return Err(IngestError::UnknownTableKind {
            file: file.clone(),
            kind: path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string(),
        });
    }

    for record in reader.records() {
        let record = record.map_err(|e| IngestError::Malformed {
            file: file.clone(),
            line: e.position().map_or(0, |p| p.line() as usize),
            field: "record".into(),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let get = |col: usize| record.get(col).unwrap_or("").trim().to_string();
        let kind = match kind_col {
            Some(col) => {
                let raw = get(col);
                raw.parse().map_err(|_| IngestError::UnknownTableKind {
                    file: file.clone(),
                    kind: raw,
                })?
            }
            None => file_kind.expect("checked above"),
        };
        let value = val_col.map(get).filter(|v| !v.is_empty());
        out.push(make_row(
            &file,
            line,
            kind,
            get(id_col),
            &get(ts_col),
            get(cat_col),
            value,
        )?);
    }
    Ok(())
}

#[derive(Deserialize)]
struct JsonRow {
    hospitalization_id: String,
    timestamp: String,
    category: String,
    #[serde(default)]
    value: Option<serde_json::Value>,
    #[serde(default)]
    table_kind: Option<String>,
}

fn read_jsonl_rows(path: &Path, out: &mut Vec<RawRow>) -> Result<(), IngestError> {
    let file = path.display().to_string();
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let file_kind = TableKind::from_file_name(path);
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let text = line.map_err(io_err(path))?;
        if text.trim().is_empty() {
            continue;
        }
        let row: JsonRow = serde_json::from_str(&text).map_err(|source| IngestError::Json {
            file: file.clone(),
            line: line_no,
            source,
        })?;
        let kind = match (&row.table_kind, file_kind) {
            (Some(raw), _) => raw.parse().map_err(|_| IngestError::UnknownTableKind {
                file: file.clone(),
                kind: raw.clone(),
            })?,
            (None, Some(kind)) => kind,
            (None, None) => {
                return Err(IngestError::UnknownTableKind {
                    file: file.clone(),
                    kind: "<undeclared>".into(),
                })
            }
        };
        let value = match row.value {
            None | Some(serde_json::Value::Null) => None,
            Some(serde_json::Value::String(s)) if s.trim().is_empty() => None,
            Some(serde_json::Value::String(s)) => Some(s),
            Some(serde_json::Value::Number(n)) => Some(n.to_string()),
            Some(other) => {
                return Err(IngestError::Malformed {
                    file,
                    line: line_no,
                    field: "value".into(),
                    message: format!("expected number or string, got {other}"),
                })
            }
        };
        out.push(make_row(
            &file,
            line_no,
            kind,
            row.hospitalization_id,
            &row.timestamp,
            row.category,
            value,
        )?);
    }
    Ok(())
}

fn make_row(
    file: &str,
    line: usize,
    kind: TableKind,
    hospitalization_id: String,
    timestamp: &str,
    category: String,
    value: Option<String>,
) -> Result<RawRow, IngestError> {
    let malformed = |field: &str, message: &str| IngestError::Malformed {
        file: file.to_string(),
        line,
        field: field.to_string(),
        message: message.to_string(),
    };
    if hospitalization_id.trim().is_empty() {
        return Err(malformed("hospitalization_id", "empty"));
    }
    if category.trim().is_empty() {
        return Err(malformed("category", "empty"));
    }
    let ts = parse_timestamp(timestamp).ok_or_else(|| IngestError::Timestamp {
        file: file.to_string(),
        line,
        value: timestamp.to_string(),
    })?;
    if kind.is_numeric() {
        if let Some(v) = &value {
            if v.parse::<f64>().map_or(true, |x| !x.is_finite()) {
                return Err(malformed("value", &format!("`{v}` is not a finite decimal")));
            }
        }
    }
    Ok(RawRow {
        file: file.to_string(),
        line,
        kind,
        hospitalization_id,
        timestamp: ts,
        category,
        value,
    })
}

#[derive(Default)]
struct Builder {
    admit_time: Option<DateTime<Utc>>,
    discharge_time: Option<DateTime<Utc>>,
    fields: BTreeMap<String, String>,
    events: Vec<EventRecord>,
}

/// Parse a set of tables into hospitalizations sorted by id, with events
/// merged across tables in canonical order.
pub fn parse_tables<P: AsRef<Path>>(
    paths: &[P],
    format: InputFormat,
    options: &IngestOptions,
) -> Result<Vec<Hospitalization>, IngestError> {
    let mut rows = Vec::new();
    for path in paths {
        let path = path.as_ref();
        match format {
            InputFormat::Csv => read_csv_rows(path, &mut rows)?,
            InputFormat::Jsonl => read_jsonl_rows(path, &mut rows)?,
        }
    }

    let mut builders: BTreeMap<String, Builder> = BTreeMap::new();
    for row in rows {
        let b = builders.entry(row.hospitalization_id.clone()).or_default();
        match row.kind {
            TableKind::Admissions => {
                b.admit_time = Some(b.admit_time.map_or(row.timestamp, |t| t.min(row.timestamp)));
                if let Some(v) = row.value {
                    b.fields.insert(row.category.trim().to_string(), v);
                }
            }
            TableKind::Discharges => {
                b.discharge_time = Some(row.timestamp);
                if let Some(v) = row.value {
                    b.fields.insert(row.category.trim().to_string(), v);
                }
            }
            kind => {
                let value = row.value.map(|v| match v.parse::<f64>() {
                    Ok(x) if x.is_finite() && kind != TableKind::Respiratory => {
                        EventValue::Numeric(x)
                    }
                    _ => EventValue::Categorical(v),
                });
                if kind == TableKind::Assessments || kind.is_numeric() {
                    // numeric tables were validated in make_row
                } else if let Some(EventValue::Numeric(_)) = value {
                    return Err(IngestError::Malformed {
                        file: row.file,
                        line: row.line,
                        field: "value".into(),
                        message: "categorical table carries a numeric value".into(),
                    });
                }
                b.events.push(EventRecord {
                    timestamp: row.timestamp,
                    table_kind: kind,
                    category: row.category,
                    value,
                });
            }
        }
    }

    let mut out = Vec::with_capacity(builders.len());
    for (id, b) in builders {
        let missing = |field: &str| IngestError::MissingField {
            hospitalization_id: id.clone(),
            field: field.to_string(),
        };
        let admit_time = b.admit_time.ok_or_else(|| missing("admit_time"))?;
        let discharge_time = b.discharge_time.ok_or_else(|| missing("discharge_time"))?;
        if discharge_time < admit_time {
            return Err(IngestError::DischargeBeforeAdmit(id));
        }
        let field = |name: &str| b.fields.get(name).cloned();
        let age_raw = field("age_at_admission").ok_or_else(|| missing("age_at_admission"))?;
        let age_at_admission = age_raw
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| missing("age_at_admission"))?;
        let discharge_category =
            field("discharge_category").ok_or_else(|| missing("discharge_category"))?;
        let mut hosp = Hospitalization {
            patient_id: field("patient_id").unwrap_or_else(|| id.clone()),
            demographics: Demographics {
                race: field("race"),
                ethnicity: field("ethnicity"),
                sex: field("sex").ok_or_else(|| missing("sex"))?,
            },
            age_at_admission,
            admission_type: field("admission_type").ok_or_else(|| missing("admission_type"))?,
            admit_time,
            discharge_time,
            outcome_inpatient_mortality: discharge_category.eq_ignore_ascii_case(EXPIRED_CATEGORY),
            outcome_long_los: Hospitalization::derive_long_los(admit_time, discharge_time),
            discharge_category,
            events: b.events,
            id,
        };
        if options.filter_short_stays
            && (hosp.length_of_stay().num_milliseconds() as f64)
                < options.min_stay_hours * 3_600_000.0
        {
            continue;
        }
        hosp.sort_events();
        out.push(hosp);
    }
    Ok(out)
}

pub fn read_cohort_jsonl(path: &Path) -> Result<Vec<Hospitalization>, IngestError> {
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let text = line.map_err(io_err(path))?;
        if text.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&text).map_err(|source| IngestError::Json {
                file: path.display().to_string(),
                line: idx + 1,
                source,
            })?,
        );
    }
    Ok(out)
}

pub fn write_cohort_jsonl(path: &Path, cohort: &[Hospitalization]) -> Result<(), IngestError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    write_cohort(&mut w, cohort).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn write_cohort<W: Write>(w: &mut W, cohort: &[Hospitalization]) -> std::io::Result<()> {
    for h in cohort {
        serde_json::to_writer(&mut *w, h)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitPolicy {
    /// Shuffle patients with a seeded generator, then cut by fractions.
    ByPatientRandom { fractions: [f64; 3], seed: u64 },
    /// Order patients by the time of their first hospitalization.
    ByFirstAdmissionTime { fractions: [f64; 3] },
}

#[derive(Debug, Clone, Default)]
pub struct CohortSplit {
    pub train: Vec<Hospitalization>,
    pub validation: Vec<Hospitalization>,
    pub test: Vec<Hospitalization>,
}

/// Partition at the patient level: every hospitalization of one patient lands
/// in the same split.
pub fn split_cohort(
    cohort: &[Hospitalization],
    policy: SplitPolicy,
) -> Result<CohortSplit, IngestError> {
    let fractions = match policy {
        SplitPolicy::ByPatientRandom { fractions, .. } => fractions,
        SplitPolicy::ByFirstAdmissionTime { fractions } => fractions,
    };
    if fractions.iter().any(|f| f.is_nan() || *f < 0.0) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(IngestError::BadFractions(fractions));
    }

    let mut first_admit: BTreeMap<&str, DateTime<Utc>> = BTreeMap::new();
    for h in cohort {
        first_admit
            .entry(h.patient_id.as_str())
            .and_modify(|t| *t = (*t).min(h.admit_time))
            .or_insert(h.admit_time);
    }
    let n = first_admit.len();
    if n < 3 {
        return Err(IngestError::TooFewPatients { patients: n });
    }

    let mut patients: Vec<&str> = first_admit.keys().copied().collect();
    match policy {
        SplitPolicy::ByPatientRandom { seed, .. } => {
            patients.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        SplitPolicy::ByFirstAdmissionTime { .. } => {
            patients.sort_by_key(|p| (first_admit[p], *p));
        }
    }
    let b1 = (fractions[0] * n as f64).round() as usize;
    let b2 = (((fractions[0] + fractions[1]) * n as f64).round() as usize).clamp(b1, n);
    let assign: BTreeMap<&str, usize> = patients
        .iter()
        .enumerate()
        .map(|(i, p)| (*p, usize::from(i >= b1) + usize::from(i >= b2)))
        .collect();

    let mut split = CohortSplit::default();
    for h in cohort {
        match assign[h.patient_id.as_str()] {
            0 => split.train.push(h.clone()),
            1 => split.validation.push(h.clone()),
            _ => split.test.push(h.clone()),
        }
    }
    Ok(split)
}

/// Patient ids appearing in a set of hospitalizations.
pub fn patient_ids(cohort: &[Hospitalization]) -> BTreeSet<&str> {
    cohort.iter().map(|h| h.patient_id.as_str()).collect()
}

/// Convenience for callers holding owned paths.
pub fn parse_table_files(
    paths: &[PathBuf],
    format: InputFormat,
    options: &IngestOptions,
) -> Result<Vec<Hospitalization>, IngestError> {
    parse_tables(paths, format, options)
}
