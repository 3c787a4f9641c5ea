use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use super::SynthError;

/// Generator parameters. Every field has a default, so an empty TOML
/// document is a valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_patients: usize,
    /// Probability of each further admission of the same patient.
    pub readmission_prob: f64,
    pub max_admissions: usize,
    pub start: DateTime<Utc>,
    /// Events occupy consecutive slots of `1 / events_per_hour` hours.
    pub events_per_hour: f64,
    /// Discharge is impossible before this many hours of events.
    pub min_stay_hours: f64,
    pub max_events: usize,
    pub severity: SeverityConfig,
    pub planted: PlantedConfig,
    pub outcome: OutcomeConfig,
    pub catalog: Vec<CatalogEntry>,
}

/// Hidden severity chain. Per-state vectors are indexed like `levels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeverityConfig {
    /// Severity score of each state, 0 = stable.
    pub levels: Vec<f64>,
    pub initial: Vec<f64>,
    /// Probability of keeping the state between events; otherwise a
    /// different state is chosen uniformly.
    pub stay: f64,
    /// Per-event discharge probability once the minimum stay has passed.
    pub stop_hazard: Vec<f64>,
    /// Probability the arrival transfer is to the ICU (else ED or ward).
    pub icu_on_arrival: Vec<f64>,
    /// Shift of the decile mode per unit severity, signed by direction.
    pub decile_shift: f64,
    pub decile_width: f64,
    pub decile_width_gain: f64,
    /// Log-weight gain of a category per unit acuity and severity.
    pub acuity_gain: f64,
}

/// Rare events from categories the normal catalog never emits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedConfig {
    /// Probability ρ that an event after arrival is planted.
    pub rate: f64,
    pub categories: Vec<String>,
    /// Relative frequency of each category; empty means equal.
    pub weights: Vec<f64>,
    /// Probability that a valued event of a missing-prone category has a
    /// missing value.
    pub missing_rate: f64,
    pub missing_categories: Vec<String>,
}

/// Log-odds of in-hospital death: intercept + severity · level of the
/// final state + planted · planted events in the first 24 hours + missing ·
/// missing values in the first 24 hours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutcomeConfig {
    pub mortality_intercept: f64,
    pub mortality_severity: f64,
    pub mortality_planted: f64,
    pub mortality_missing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogEntry {
    /// Vocabulary token of the category, e.g. `LAB_lactate`.
    pub token: String,
    pub weight: f64,
    #[serde(default)]
    pub acuity: f64,
    /// +1 when values rise with severity, −1 when they fall.
    #[serde(default)]
    pub direction: f64,
}

impl CatalogEntry {
    fn new(token: &str, weight: f64, acuity: f64, direction: f64) -> Self {
        Self {
            token: token.to_string(),
            weight,
            acuity,
            direction,
        }
    }
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_patients: 1000,
            readmission_prob: 0.15,
            max_admissions: 4,
            start: Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(),
            events_per_hour: 2.0,
            min_stay_hours: 24.0,
            max_events: 480,
            severity: SeverityConfig::default(),
            planted: PlantedConfig::default(),
            outcome: OutcomeConfig::default(),
            catalog: default_catalog(),
        }
    }
}

impl Default for SeverityConfig {
    fn default() -> Self {
        Self {
            levels: vec![0.0, 0.5, 1.0],
            initial: vec![0.5, 0.3, 0.2],
            stay: 0.995,
            stop_hazard: vec![0.012, 0.007, 0.004],
            icu_on_arrival: vec![0.45, 0.7, 0.9],
            decile_shift: 3.0,
            decile_width: 1.2,
            decile_width_gain: 1.0,
            acuity_gain: 2.0,
        }
    }
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            rate: 0.02,
            categories: ["MED_epinephrine", "MED_phenylephrine", "MED_ketamine", "MED_esmolol"]
                .map(String::from)
                .to_vec(),
            weights: vec![0.4, 0.4, 0.1, 0.1],
            missing_rate: 0.015,
            missing_categories: ["VTL_heart_rate", "VTL_sbp", "VTL_respiratory_rate"]
                .map(String::from)
                .to_vec(),
        }
    }
}

impl Default for OutcomeConfig {
    fn default() -> Self {
        Self {
            mortality_intercept: -3.5,
            mortality_severity: 1.5,
            mortality_planted: 1.5,
            mortality_missing: 2.0,
        }
    }
}

pub fn default_catalog() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry::new("VTL_heart_rate", 3.0, 0.0, 1.0),
        CatalogEntry::new("VTL_sbp", 2.5, 0.0, -1.0),
        CatalogEntry::new("VTL_dbp", 2.0, 0.0, -1.0),
        CatalogEntry::new("VTL_map", 2.0, 0.5, -1.0),
        CatalogEntry::new("VTL_respiratory_rate", 2.5, 0.0, 1.0),
        CatalogEntry::new("VTL_temp_c", 1.5, 0.0, 1.0),
        CatalogEntry::new("LAB_hemoglobin", 1.0, 0.0, -1.0),
        CatalogEntry::new("LAB_platelet_count", 1.0, 0.0, -1.0),
        CatalogEntry::new("LAB_bicarbonate", 1.0, 0.0, -1.0),
        CatalogEntry::new("LAB_chloride", 1.0, 0.0, 1.0),
        CatalogEntry::new("LAB_glucose_serum", 1.0, 0.0, 1.0),
        CatalogEntry::new("LAB_potassium", 1.0, 0.0, 1.0),
        CatalogEntry::new("LAB_sodium", 1.0, 0.0, -1.0),
        CatalogEntry::new("LAB_bun", 0.8, 0.5, 1.0),
        CatalogEntry::new("LAB_wbc", 0.8, 0.0, 1.0),
        CatalogEntry::new("LAB_lactate", 0.4, 1.0, 1.0),
        CatalogEntry::new("LAB_ph_arterial", 0.3, 1.0, -1.0),
        CatalogEntry::new("LAB_pco2_arterial", 0.3, 1.0, 1.0),
        CatalogEntry::new("MED_norepinephrine", 0.2, 1.5, 1.0),
        CatalogEntry::new("MED_propofol", 0.2, 1.2, 1.0),
        CatalogEntry::new("MED_fentanyl", 0.3, 1.0, 1.0),
        CatalogEntry::new("MED_insulin", 0.4, 0.0, 1.0),
        CatalogEntry::new("ADT_ward", 0.1, -1.0, 0.0),
        CatalogEntry::new("ADT_stepdown", 0.05, 0.0, 0.0),
        CatalogEntry::new("ADT_icu", 0.05, 1.0, 0.0),
    ]
}

impl GeneratorConfig {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        toml::from_str(text).map_err(|e| SynthError::Config(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SynthError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Events that fit in the first 24 hours.
    pub fn window_events(&self) -> usize {
        (24.0 * self.events_per_hour).round() as usize
    }

    /// Events required before discharge becomes possible.
    pub fn min_events(&self) -> usize {
        (self.min_stay_hours * self.events_per_hour).ceil().max(1.0) as usize
    }

    /// The same process with outcomes unrelated to the timeline and no
    /// planted events or missing values.
    pub fn null(&self) -> Self {
        let mut c = self.clone();
        c.planted.rate = 0.0;
        c.planted.missing_rate = 0.0;
        c.outcome.mortality_severity = 0.0;
        c.outcome.mortality_planted = 0.0;
        c.outcome.mortality_missing = 0.0;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_is_default() {
        assert_eq!(GeneratorConfig::from_toml("").unwrap(), GeneratorConfig::default());
    }

    #[test]
    fn toml_round_trip_and_overrides() {
        let c = GeneratorConfig::default();
        assert_eq!(GeneratorConfig::from_toml(&c.to_toml()).unwrap(), c);
        let c = GeneratorConfig::from_toml("seed = 9\n[planted]\nrate = 0.0\n").unwrap();
        assert_eq!((c.seed, c.planted.rate), (9, 0.0));
        assert!(!c.planted.categories.is_empty());
        assert!(GeneratorConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn derived_counts() {
        let c = GeneratorConfig::default();
        assert_eq!((c.window_events(), c.min_events()), (48, 48));
    }
}
