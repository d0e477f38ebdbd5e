use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::preprocess::quantile_type7;
use super::{Cohort, ItemScale, Series, Stage};
use crate::error::{Error, Result};

/// Default 0-based R item indices forming the second instrument.
pub const DEFAULT_SUBSCALE: [usize; 5] = [10, 11, 12, 13, 14];

const TIME_TOLERANCE: f64 = 1e-9;

/// Replace the second instrument with a copy of selected R items.
pub fn make_subscale(cohort: &Cohort, indices: &[usize]) -> Result<Cohort> {
    if indices.is_empty() {
        return Err(Error::config("subscale needs at least one item index"));
    }
    let p = cohort.p();
    if let Some(&bad) = indices.iter().find(|&&j| j >= p) {
        return Err(Error::config(format!("subscale index {bad} out of range for {p} items")));
    }
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != indices.len() {
        return Err(Error::config("subscale indices must be distinct"));
    }
    let mut out = cohort.clone();
    out.scale_s = Some(ItemScale {
        maxima: indices.iter().map(|&j| cohort.scale_r.maxima[j]).collect(),
    });
    for patient in &mut out.patients {
        patient.s = Series {
            times: patient.r.times.clone(),
            items: patient
                .r
                .items
                .iter()
                .map(|row| indices.iter().map(|&j| row[j]).collect())
                .collect(),
        };
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    None,
    ShiftAll,
    ShiftSubgroup,
    DropoutUniform,
    DropoutLate,
    ScoreConditional,
}

impl ScenarioKind {
    pub const MODIFICATIONS: [ScenarioKind; 5] = [
        ScenarioKind::DropoutUniform,
        ScenarioKind::DropoutLate,
        ScenarioKind::ShiftAll,
        ScenarioKind::ShiftSubgroup,
        ScenarioKind::ScoreConditional,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::None => "none",
            ScenarioKind::ShiftAll => "shift_all",
            ScenarioKind::ShiftSubgroup => "shift_subgroup",
            ScenarioKind::DropoutUniform => "dropout_uniform",
            ScenarioKind::DropoutLate => "dropout_late",
            ScenarioKind::ScoreConditional => "score_conditional",
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        std::iter::once(ScenarioKind::None)
            .chain(ScenarioKind::MODIFICATIONS)
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown scenario kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    #[serde(default = "defaults::shift")]
    pub shift: f64,
    #[serde(default = "defaults::half")]
    pub subgroup_probability: f64,
    #[serde(default = "defaults::half")]
    pub dropout_probability: f64,
    #[serde(default = "defaults::quantile")]
    pub quantile: f64,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    pub fn shift() -> f64 {
        2.0
    }
    pub fn half() -> f64 {
        0.5
    }
    pub fn quantile() -> f64 {
        0.6
    }
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, seed: u64) -> Self {
        Self {
            kind,
            shift: defaults::shift(),
            subgroup_probability: defaults::half(),
            dropout_probability: defaults::half(),
            quantile: defaults::quantile(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.subgroup_probability) || !unit.contains(&self.dropout_probability) {
            return Err(Error::config("scenario probabilities must lie in [0, 1]"));
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(Error::config("scenario quantile must lie in (0, 1)"));
        }
        if !self.shift.is_finite() || self.shift < 0.0 {
            return Err(Error::config("scenario shift must be finite and non-negative"));
        }
        Ok(())
    }

    fn patient_rng(&self, id: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(self.kind.name().as_bytes());
        h.update([0]);
        h.update(id.as_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }
}

/// What a scenario changed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioLog {
    pub kind: Option<ScenarioKind>,
    pub shifted_patients: Vec<String>,
    /// `(patient, time)` of every deleted S observation.
    pub deleted: Vec<(String, f64)>,
    /// Patients left with no S observations by this scenario.
    pub emptied_patients: Vec<String>,
    /// Eligible S observations (for dropout kinds).
    pub eligible: usize,
    pub cutoff: Option<f64>,
}

fn delete_s(log: &mut ScenarioLog, id: &str, series: &mut Series, keep: &[bool]) {
    let had = !series.is_empty();
    for (t, _) in series.times.iter().zip(keep).filter(|(_, &k)| !k) {
        log.deleted.push((id.to_string(), *t));
    }
    series.retain_visits(keep);
    if had && series.is_empty() {
        log.emptied_patients.push(id.to_string());
    }
}

pub fn apply_scenario(cohort: &Cohort, spec: &ScenarioSpec) -> Result<(Cohort, ScenarioLog)> {
    spec.validate()?;
    let mut log = ScenarioLog {
        kind: Some(spec.kind),
        ..Default::default()
    };
    if spec.kind == ScenarioKind::None {
        return Ok((cohort.clone(), log));
    }
    if cohort.scale_s.is_none() {
        return Err(Error::Precondition(format!(
            "scenario `{}` needs a second instrument",
            spec.kind.name()
        )));
    }
    if cohort.stage != Stage::Raw {
        return Err(Error::Precondition(format!(
            "scenario `{}` operates on raw item scores",
            spec.kind.name()
        )));
    }
    let mut out = cohort.clone();

    match spec.kind {
        ScenarioKind::None => unreachable!(),
        ScenarioKind::ShiftAll | ScenarioKind::ShiftSubgroup => {
            if let Some(scale) = &mut out.scale_s {
                scale.maxima.iter_mut().for_each(|m| *m += spec.shift);
            }
            for patient in &mut out.patients {
                let shifted = spec.kind == ScenarioKind::ShiftAll
                    || spec.patient_rng(&patient.id).random_bool(spec.subgroup_probability);
                if shifted {
                    log.shifted_patients.push(patient.id.clone());
                    for row in &mut patient.s.items {
                        row.iter_mut().for_each(|v| *v += spec.shift);
                    }
                }
            }
        }
        ScenarioKind::DropoutUniform => {
            for patient in &mut out.patients {
                let mut rng = spec.patient_rng(&patient.id);
                let keep: Vec<bool> = (0..patient.s.len())
                    .map(|_| !rng.random_bool(spec.dropout_probability))
                    .collect();
                log.eligible += keep.len();
                delete_s(&mut log, &patient.id, &mut patient.s, &keep);
            }
        }
        ScenarioKind::DropoutLate => {
            for patient in &mut out.patients {
                let mut rng = spec.patient_rng(&patient.id);
                let t_r = patient.r.len().saturating_sub(1) as f64;
                let keep: Vec<bool> = (1..=patient.s.len())
                    .map(|k| !rng.random_bool((k as f64 / (t_r + 4.0)).min(1.0)))
                    .collect();
                log.eligible += keep.len();
                delete_s(&mut log, &patient.id, &mut patient.s, &keep);
            }
        }
        ScenarioKind::ScoreConditional => {
            let pooled: Vec<f64> = out.patients.iter().flat_map(|p| p.r.sum_scores()).collect();
            let cutoff = quantile_type7(&pooled, spec.quantile)
                .ok_or_else(|| Error::Precondition("score-conditional scenario on an empty cohort".into()))?;
            log.cutoff = Some(cutoff);
            for patient in &mut out.patients {
                let r_sums = patient.r.sum_scores();
                let keep: Vec<bool> = patient
                    .s
                    .times
                    .iter()
                    .map(|&t| {
                        patient
                            .r
                            .times
                            .iter()
                            .position(|&tr| (tr - t).abs() <= TIME_TOLERANCE)
                            .is_some_and(|i| r_sums[i] > cutoff)
                    })
                    .collect();
                log.eligible += keep.len();
                delete_s(&mut log, &patient.id, &mut patient.s, &keep);
            }
        }
    }
    Ok((out, log))
}
