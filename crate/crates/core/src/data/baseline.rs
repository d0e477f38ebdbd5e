use serde::{Deserialize, Serialize};

use super::{Cohort, Covariate, PatientRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ColumnStats {
    /// z-score; a zero spread is stored as 1.
    Numeric { name: String, mean: f64, sd: f64 },
    /// One indicator per level, levels sorted.
    Categorical { name: String, levels: Vec<String> },
}

impl ColumnStats {
    fn width(&self) -> usize {
        match self {
            ColumnStats::Numeric { .. } => 1,
            ColumnStats::Categorical { levels, .. } => levels.len(),
        }
    }
}

/// Standardization of baseline covariates into a fixed-width vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineEncoder {
    pub columns: Vec<ColumnStats>,
}

impl BaselineEncoder {
    pub fn fit(cohort: &Cohort) -> Result<Self> {
        if cohort.patients.is_empty() {
            return Err(Error::Precondition("cannot fit baseline statistics on an empty cohort".into()));
        }
        let columns = cohort
            .baseline_columns
            .iter()
            .enumerate()
            .map(|(k, name)| {
                if cohort.is_categorical(name) {
                    let mut levels: Vec<String> = cohort
                        .patients
                        .iter()
                        .map(|p| match &p.baseline[k] {
                            Covariate::Category(s) => Ok(s.clone()),
                            Covariate::Numeric(v) => Ok(v.to_string()),
                        })
                        .collect::<Result<_>>()?;
                    levels.sort();
                    levels.dedup();
                    Ok(ColumnStats::Categorical {
                        name: name.clone(),
                        levels,
                    })
                } else {
                    let values = cohort
                        .patients
                        .iter()
                        .map(|p| match &p.baseline[k] {
                            Covariate::Numeric(v) => Ok(*v),
                            Covariate::Category(_) => Err(Error::Validation(format!(
                                "patient `{}`: column `{name}` is not numeric",
                                p.id
                            ))),
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    let n = values.len() as f64;
                    let mean = values.iter().sum::<f64>() / n;
                    let var = if values.len() > 1 {
                        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
                    } else {
                        0.0
                    };
                    let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
                    Ok(ColumnStats::Numeric {
                        name: name.clone(),
                        mean,
                        sd,
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { columns })
    }

    pub fn width(&self) -> usize {
        self.columns.iter().map(ColumnStats::width).sum()
    }

    pub fn encode(&self, patient: &PatientRecord) -> Result<Vec<f64>> {
        if patient.baseline.len() != self.columns.len() {
            return Err(Error::Validation(format!(
                "patient `{}`: {} baseline values, encoder expects {}",
                patient.id,
                patient.baseline.len(),
                self.columns.len()
            )));
        }
        let mut out = Vec::with_capacity(self.width());
        for (stats, value) in self.columns.iter().zip(&patient.baseline) {
            match (stats, value) {
                (ColumnStats::Numeric { mean, sd, .. }, Covariate::Numeric(v)) => out.push((v - mean) / sd),
                (ColumnStats::Categorical { name, levels }, value) => {
                    let level = match value {
                        Covariate::Category(s) => s.clone(),
                        Covariate::Numeric(v) => v.to_string(),
                    };
                    let hit = levels.iter().position(|l| *l == level).ok_or_else(|| {
                        Error::Validation(format!(
                            "patient `{}`: unseen level `{level}` in column `{name}`",
                            patient.id
                        ))
                    })?;
                    out.extend((0..levels.len()).map(|i| if i == hit { 1.0 } else { 0.0 }));
                }
                (ColumnStats::Numeric { name, .. }, Covariate::Category(_)) => {
                    return Err(Error::Validation(format!(
                        "patient `{}`: column `{name}` is not numeric",
                        patient.id
                    )))
                }
            }
        }
        Ok(out)
    }
}
