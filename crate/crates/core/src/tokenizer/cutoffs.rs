use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use super::preset::PRESET_CUTOFFS;
use super::TokenizerError;
use crate::stats::quantile::linear_quantile_sorted;

/// Key used for the age-at-admission cutoffs.
pub const AGE_KEY: &str = "age_at_admission";

/// Per-category decile cutoffs C1..C9.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffTable {
    rows: Vec<(String, [f64; 9])>,
    index: HashMap<String, usize>,
}

impl CutoffTable {
    pub fn new<I>(rows: I) -> Result<Self, TokenizerError>
    where
        I: IntoIterator<Item = (String, [f64; 9])>,
    {
        let mut out = Self {
            rows: Vec::new(),
            index: HashMap::new(),
        };
        for (category, cuts) in rows {
            if cuts.iter().any(|c| !c.is_finite()) || cuts.windows(2).any(|w| w[0] > w[1]) {
                return Err(TokenizerError::BadCutoffs(category));
            }
            if out.index.contains_key(&category) {
                return Err(TokenizerError::DuplicateToken(category));
            }
            out.index.insert(category.clone(), out.rows.len());
            out.rows.push((category, cuts));
        }
        Ok(out)
    }

    /// The reference cutoffs, in the order they were published.
    pub fn preset() -> Self {
        Self::new(PRESET_CUTOFFS.iter().map(|(c, v)| (c.to_string(), *v)))
            .expect("preset cutoffs are well formed")
    }

    /// Lookup by category key. Keys are matched exactly, then with spaces and
    /// underscores interchanged.
    pub fn get(&self, category: &str) -> Option<&[f64; 9]> {
        let hit = |k: &str| self.index.get(k).map(|i| &self.rows[*i].1);
        hit(category)
            .or_else(|| hit(&category.replace(' ', "_")))
            .or_else(|| hit(&category.replace('_', " ")))
    }

    pub fn contains(&self, category: &str) -> bool {
        self.get(category).is_some()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[(String, [f64; 9])] {
        &self.rows
    }

    /// Fit cutoffs as the empirical deciles (linear interpolation) of each
    /// category's observations. Categories are emitted in sorted order.
    pub fn fit(observations: &BTreeMap<String, Vec<f64>>) -> Result<Self, TokenizerError> {
        let empty: Vec<String> = observations
            .iter()
            .filter(|(_, v)| v.is_empty())
            .map(|(k, _)| k.clone())
            .collect();
        if !empty.is_empty() {
            return Err(TokenizerError::NoObservations(empty));
        }
        let mut rows = Vec::with_capacity(observations.len());
        for (category, values) in observations {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(TokenizerError::NonFinite {
                    context: category.clone(),
                });
            }
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            let mut cuts = [0.0; 9];
            for (k, c) in cuts.iter_mut().enumerate() {
                *c = linear_quantile_sorted(&sorted, (k + 1) as f64 / 10.0);
            }
            rows.push((category.clone(), cuts));
        }
        Self::new(rows)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("category,C1,C2,C3,C4,C5,C6,C7,C8,C9\n");
        for (category, cuts) in &self.rows {
            s.push_str(&csv_field(category));
            for c in cuts {
                s.push_str(&format!(",{c:?}"));
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, TokenizerError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| TokenizerError::CutoffFile {
                line,
                message: e.to_string(),
            })?;
            if rec.len() != 10 {
                return Err(TokenizerError::CutoffFile {
                    line,
                    message: format!("expected 10 columns, found {}", rec.len()),
                });
            }
            let mut cuts = [0.0; 9];
            for (k, c) in cuts.iter_mut().enumerate() {
                let raw = rec[k + 1].trim();
                *c = raw.parse().map_err(|_| TokenizerError::CutoffFile {
                    line,
                    message: format!("C{} `{raw}` is not a number", k + 1),
                })?;
            }
            rows.push((rec[0].to_string(), cuts));
        }
        Self::new(rows)
    }

    pub fn write(&self, path: &Path) -> Result<(), TokenizerError> {
        fs::write(path, self.to_csv()).map_err(|e| TokenizerError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, TokenizerError> {
        let text = fs::read_to_string(path).map_err(|e| TokenizerError::io(path, e))?;
        Self::from_csv(&text)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Decile index 0..=9: Q0 below C1, Qk on [Ck, Ck+1), Q9 at or above C9.
pub fn bin_value(value: f64, cutoffs: &[f64; 9]) -> Result<usize, TokenizerError> {
    if !value.is_finite() {
        return Err(TokenizerError::NonFinite {
            context: value.to_string(),
        });
    }
    Ok(cutoffs.partition_point(|c| *c <= value))
}
