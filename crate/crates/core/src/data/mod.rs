//! Cohort data model, file IO, preprocessing, scenarios and the synthetic
//! generator.

mod baseline;
pub(crate) mod io;
mod preprocess;
mod scenario;
mod synth;

pub use baseline::{BaselineEncoder, ColumnStats};
pub use io::{instrument_file, load_cohort, save_cohort, BASELINE_FILE, GROUND_TRUTH_FILE, METADATA_FILE};
pub use preprocess::{
    adjacent_outliers, logit, preprocess, quantile_type7, rescale_logit, sample_variance, OutlierScope,
    PreprocessConfig, PreprocessReport, SeriesRemoval, LOGIT_MARGIN, MIN_SUM_SCORE_VARIANCE,
};
pub use scenario::{apply_scenario, make_subscale, ScenarioKind, ScenarioLog, ScenarioSpec, DEFAULT_SUBSCALE};
pub use synth::{generate_synthetic, GeneratorConfig, GroundTruth, PatientTruth, GROUP_LEVELS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::Instrument;

/// Observations of one instrument for one patient.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Series {
    /// Months, strictly increasing.
    pub times: Vec<f64>,
    /// `items[visit][item]`.
    pub items: Vec<Vec<f64>>,
}

impl Series {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn sum_scores(&self) -> Vec<f64> {
        self.items.iter().map(|row| row.iter().sum()).collect()
    }

    /// Keep the visits for which `keep` is true, preserving order.
    pub fn retain_visits(&mut self, keep: &[bool]) {
        debug_assert_eq!(keep.len(), self.len());
        let mut flags = keep.iter();
        self.times.retain(|_| *flags.next().unwrap());
        let mut flags = keep.iter();
        self.items.retain(|_| *flags.next().unwrap());
    }

    pub fn validate(&self, width: usize, what: &str) -> Result<()> {
        if self.times.len() != self.items.len() {
            return Err(Error::Validation(format!("{what}: times and item rows differ in length")));
        }
        if self.times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Validation(format!("{what}: visit times not strictly increasing")));
        }
        for row in &self.items {
            if row.len() != width {
                return Err(Error::Validation(format!(
                    "{what}: expected {width} items per visit, found {}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("{what}: non-finite item value")));
            }
        }
        Ok(())
    }
}

/// One baseline covariate value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Covariate {
    Numeric(f64),
    Category(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub id: String,
    /// Ordered as [`Cohort::baseline_columns`].
    pub baseline: Vec<Covariate>,
    pub r: Series,
    pub s: Series,
}

impl PatientRecord {
    pub fn series(&self, instrument: Instrument) -> &Series {
        match instrument {
            Instrument::R => &self.r,
            Instrument::S => &self.s,
        }
    }

    pub fn series_mut(&mut self, instrument: Instrument) -> &mut Series {
        match instrument {
            Instrument::R => &mut self.r,
            Instrument::S => &mut self.s,
        }
    }

    /// First and last observed time across both instruments.
    pub fn time_span(&self) -> Option<(f64, f64)> {
        let all = self.r.times.iter().chain(&self.s.times);
        let first = all.clone().copied().reduce(f64::min)?;
        let last = all.copied().reduce(f64::max)?;
        Some((first, last))
    }
}

/// Per-item maximum scores of an instrument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScale {
    pub maxima: Vec<f64>,
}

impl ItemScale {
    pub fn uniform(items: usize, max: f64) -> Self {
        Self {
            maxima: vec![max; items],
        }
    }

    pub fn width(&self) -> usize {
        self.maxima.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.maxima.is_empty() || self.maxima.iter().any(|&m| !(m >= 1.0)) {
            return Err(Error::Validation("item maxima must be at least 1".into()));
        }
        Ok(())
    }
}

/// Whether item values are raw scores or logit-transformed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Raw,
    Preprocessed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub baseline_columns: Vec<String>,
    /// Names of categorical baseline columns.
    pub categorical: Vec<String>,
    pub scale_r: ItemScale,
    /// Present once a second instrument exists.
    pub scale_s: Option<ItemScale>,
    pub stage: Stage,
    pub patients: Vec<PatientRecord>,
    pub ground_truth: Option<GroundTruth>,
}

impl Cohort {
    pub fn p(&self) -> usize {
        self.scale_r.width()
    }

    pub fn q(&self) -> Option<usize> {
        self.scale_s.as_ref().map(ItemScale::width)
    }

    pub fn patient(&self, id: &str) -> Result<&PatientRecord> {
        self.patients
            .iter()
            .find(|p| p.id == id)
            .ok_or_else(|| Error::Lookup(format!("unknown patient `{id}`")))
    }

    pub fn is_categorical(&self, column: &str) -> bool {
        self.categorical.iter().any(|c| c == column)
    }

    /// Structural checks shared by loading and generation.
    pub fn validate(&self) -> Result<()> {
        self.scale_r.validate()?;
        if let Some(s) = &self.scale_s {
            s.validate()?;
        }
        let mut seen = std::collections::HashSet::new();
        for patient in &self.patients {
            if !seen.insert(patient.id.as_str()) {
                return Err(Error::Validation(format!("duplicate patient `{}`", patient.id)));
            }
            if patient.baseline.len() != self.baseline_columns.len() {
                return Err(Error::Validation(format!(
                    "patient `{}`: {} baseline values for {} columns",
                    patient.id,
                    patient.baseline.len(),
                    self.baseline_columns.len()
                )));
            }
            patient.r.validate(self.p(), &format!("patient `{}` instrument R", patient.id))?;
            match self.q() {
                Some(q) => patient.s.validate(q, &format!("patient `{}` instrument S", patient.id))?,
                None if !patient.s.is_empty() => {
                    return Err(Error::Validation(format!(
                        "patient `{}` has S observations but the cohort has no S scale",
                        patient.id
                    )))
                }
                None => {}
            }
        }
        Ok(())
    }
}
