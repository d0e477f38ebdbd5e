use serde::{Deserialize, Serialize};

use super::{Cohort, ItemScale, Series, Stage};
use crate::error::{Error, Result};
use crate::ode::Instrument;

/// Items are mapped into `(LOGIT_MARGIN, 1 - LOGIT_MARGIN)` before the logit.
pub const LOGIT_MARGIN: f64 = 0.01;
pub const MIN_SUM_SCORE_VARIANCE: f64 = 0.5;

/// Population over which the outlier interquartile range is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutlierScope {
    /// Adjacent differences of all patients of the instrument.
    Pooled,
    /// Each patient's own adjacent differences.
    PerPatient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub outlier_scope: OutlierScope,
    pub iqr_factor: f64,
    pub min_points: usize,
    pub min_variance: f64,
}

impl PreprocessConfig {
    /// Outlier removal disabled; the remaining filters unchanged.
    pub fn without_outlier_removal() -> Self {
        Self {
            iqr_factor: f64::INFINITY,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.iqr_factor >= 0.0) || !(self.min_variance >= 0.0) || self.min_points == 0 {
            return Err(Error::config(
                "preprocess: iqr_factor and min_variance must be non-negative, min_points positive",
            ));
        }
        Ok(())
    }
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            outlier_scope: OutlierScope::Pooled,
            iqr_factor: 2.0,
            min_points: 2,
            min_variance: MIN_SUM_SCORE_VARIANCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesRemoval {
    TooFewPoints,
    LowVariance,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PreprocessReport {
    /// `(patient, instrument, time)` of every removed outlier visit.
    pub outliers: Vec<(String, Instrument, f64)>,
    pub removed_series: Vec<(String, Instrument, SeriesRemoval)>,
    pub removed_patients: Vec<String>,
    /// Interquartile-range thresholds used, per instrument (pooled scope only).
    pub pooled_thresholds: Vec<(Instrument, f64)>,
    /// True when the input was already preprocessed and returned unchanged.
    pub skipped: bool,
}

/// Quantile by linear interpolation between order statistics (R type 7).
pub fn quantile_type7(values: &[f64], prob: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&prob) {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Sample variance with `n - 1` denominator; 0 below two values.
pub fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn abs_adjacent_differences(sums: &[f64]) -> Vec<f64> {
    sums.windows(2).map(|w| (w[1] - w[0]).abs()).collect()
}

fn iqr(values: &[f64]) -> Option<f64> {
    Some(quantile_type7(values, 0.75)? - quantile_type7(values, 0.25)?)
}

/// Flags visits whose sum-score change from the previous visit exceeds
/// `threshold`; the first visit is never flagged.
pub fn adjacent_outliers(sums: &[f64], threshold: f64) -> Vec<bool> {
    std::iter::once(false)
        .chain(abs_adjacent_differences(sums).into_iter().map(|d| d > threshold))
        .take(sums.len())
        .collect()
}

pub fn logit(u: f64) -> f64 {
    (u / (1.0 - u)).ln()
}

/// Affine map of a raw item score into the open unit interval, then logit.
pub fn rescale_logit(value: f64, max: f64) -> f64 {
    logit(LOGIT_MARGIN + (1.0 - 2.0 * LOGIT_MARGIN) * value / max)
}

fn transform(series: &mut Series, scale: &ItemScale) {
    for row in &mut series.items {
        for (v, &max) in row.iter_mut().zip(&scale.maxima) {
            *v = rescale_logit(*v, max);
        }
    }
}

fn check_raw_range(cohort: &Cohort) -> Result<()> {
    for (instrument, scale) in [(Instrument::R, Some(&cohort.scale_r)), (Instrument::S, cohort.scale_s.as_ref())] {
        let Some(scale) = scale else { continue };
        for p in &cohort.patients {
            for row in &p.series(instrument).items {
                if row.iter().zip(&scale.maxima).any(|(&v, &m)| !(0.0..=m).contains(&v)) {
                    return Err(Error::Validation(format!(
                        "patient `{}` instrument {}: raw item outside [0, max]",
                        p.id,
                        instrument.label()
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Outlier removal, minimum-visit and variance filters, then the logit
/// transform, per instrument. Already preprocessed cohorts pass through.
pub fn preprocess(cohort: &Cohort, config: &PreprocessConfig) -> Result<(Cohort, PreprocessReport)> {
    config.validate()?;
    let mut report = PreprocessReport::default();
    if cohort.stage == Stage::Preprocessed {
        report.skipped = true;
        return Ok((cohort.clone(), report));
    }
    check_raw_range(cohort)?;
    let mut out = cohort.clone();

    let mut instruments = vec![Instrument::R];
    if out.scale_s.is_some() {
        instruments.push(Instrument::S);
    }
    for &instrument in &instruments {
        let pooled_threshold = match config.outlier_scope {
            OutlierScope::Pooled => {
                let all: Vec<f64> = out
                    .patients
                    .iter()
                    .flat_map(|p| abs_adjacent_differences(&p.series(instrument).sum_scores()))
                    .collect();
                let t = iqr(&all).map(|v| config.iqr_factor * v);
                if let Some(t) = t {
                    report.pooled_thresholds.push((instrument, t));
                }
                t
            }
            OutlierScope::PerPatient => None,
        };

        for patient in &mut out.patients {
            let id = patient.id.clone();
            let series = patient.series_mut(instrument);
            if series.is_empty() {
                continue;
            }
            let sums = series.sum_scores();
            let threshold = match config.outlier_scope {
                OutlierScope::Pooled => pooled_threshold,
                OutlierScope::PerPatient => iqr(&abs_adjacent_differences(&sums)).map(|v| config.iqr_factor * v),
            };
            if let Some(threshold) = threshold {
                let flags = adjacent_outliers(&sums, threshold);
                for (t, _) in series.times.iter().zip(&flags).filter(|(_, &f)| f) {
                    report.outliers.push((id.clone(), instrument, *t));
                }
                let keep: Vec<bool> = flags.iter().map(|f| !f).collect();
                series.retain_visits(&keep);
            }

            let removal = if series.len() < config.min_points {
                Some(SeriesRemoval::TooFewPoints)
            } else if sample_variance(&series.sum_scores()) < config.min_variance {
                Some(SeriesRemoval::LowVariance)
            } else {
                None
            };
            if let Some(reason) = removal {
                *series = Series::default();
                report.removed_series.push((id, instrument, reason));
            }
        }
    }

    for patient in &mut out.patients {
        transform(&mut patient.r, &out.scale_r);
        if let Some(scale) = &out.scale_s {
            transform(&mut patient.s, scale);
        }
    }
    out.patients.retain(|p| {
        let keep = !(p.r.is_empty() && p.s.is_empty());
        if !keep {
            report.removed_patients.push(p.id.clone());
        }
        keep
    });
    out.stage = Stage::Preprocessed;
    Ok((out, report))
}
