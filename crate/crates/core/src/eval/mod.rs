//! Misalignment diagnostics, scatter summaries and trajectory exports.

mod export;
mod svg;

pub use export::{read_metrics_csv, write_metrics_csv, write_trajectory_csv};
pub use svg::{scatter_svg, trajectory_svg};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Model, PreparedPatient};
use crate::numerics::ParamStore;
use crate::ode::{combined_trajectory, InitialCondition, Instrument, TrajectoryEstimate};
use crate::vae::PosteriorSeries;

/// Default tolerance (months) for visits of both instruments to coincide.
pub const DEFAULT_TIME_TOLERANCE: f64 = 1e-9;
pub const TRAJECTORY_SAMPLES: usize = 100;

/// Mean absolute difference of the two instruments' encodings at common
/// visit times; `None` when no time is shared.
pub fn misalignment(r: &PosteriorSeries<f64>, s: &PosteriorSeries<f64>, tolerance: f64) -> Option<Vec<f64>> {
    let d = r.means.first().or(s.means.first())?.len();
    let mut sum = vec![0.0; d];
    let mut n = 0usize;
    for (tr, mr) in r.times.iter().zip(&r.means) {
        if let Some(k) = s.times.iter().position(|ts| (ts - tr).abs() <= tolerance) {
            for j in 0..d {
                sum[j] += (mr[j] - s.means[k][j]).abs();
            }
            n += 1;
        }
    }
    (n > 0).then(|| sum.into_iter().map(|v| v / n as f64).collect())
}

fn value_at(traj: &TrajectoryEstimate<f64>, t: f64, tolerance: f64) -> Result<&[f64]> {
    traj.times
        .iter()
        .position(|u| (u - t).abs() <= tolerance)
        .map(|i| traj.values[i].as_slice())
        .ok_or_else(|| Error::Lookup(format!("trajectory not evaluated at t = {t}")))
}

/// `|traj(t_last) - traj(t0)|` per dimension.
pub fn ode_dynamics_range(traj: &TrajectoryEstimate<f64>, t0: f64, t_last: f64) -> Result<Vec<f64>> {
    let a = value_at(traj, t0, DEFAULT_TIME_TOLERANCE)?;
    let b = value_at(traj, t_last, DEFAULT_TIME_TOLERANCE)?;
    Ok(a.iter().zip(b).map(|(x, y)| (y - x).abs()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMetrics {
    pub patient_id: String,
    pub delta_rs: Vec<f64>,
    pub delta_ode: Vec<f64>,
    /// `delta_ode > delta_rs` per dimension.
    pub above_diagonal: Vec<bool>,
}

impl AlignmentMetrics {
    pub fn new(patient_id: String, delta_rs: Vec<f64>, delta_ode: Vec<f64>) -> Self {
        let above_diagonal = delta_ode.iter().zip(&delta_rs).map(|(o, r)| o > r).collect();
        Self {
            patient_id,
            delta_rs,
            delta_ode,
            above_diagonal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterSummary {
    pub patients: usize,
    pub included: usize,
    pub excluded: usize,
    pub excluded_ids: Vec<String>,
    pub above_diagonal_fraction: Vec<f64>,
    pub median_delta_rs: Vec<f64>,
    /// Median over all patients and dimensions.
    pub median_delta_rs_pooled: f64,
    pub max_delta_rs: f64,
    pub mean_delta_rs: Vec<f64>,
    pub mean_delta_rs_pooled: f64,
    pub mean_delta_ode: Vec<f64>,
    pub mean_delta_ode_pooled: f64,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Summary statistics over included patients; statistics of an empty set are NaN.
pub fn summarize(metrics: &[AlignmentMetrics], excluded_ids: Vec<String>, d: usize) -> ScatterSummary {
    let column = |f: &dyn Fn(&AlignmentMetrics) -> f64| metrics.iter().map(f).collect::<Vec<f64>>();
    let per_dim = |sel: fn(&AlignmentMetrics, usize) -> f64, agg: fn(&[f64]) -> f64| {
        (0..d).map(|j| agg(&column(&|m| sel(m, j)))).collect::<Vec<f64>>()
    };
    let all_rs: Vec<f64> = metrics.iter().flat_map(|m| m.delta_rs.iter().copied()).collect();
    let all_ode: Vec<f64> = metrics.iter().flat_map(|m| m.delta_ode.iter().copied()).collect();
    ScatterSummary {
        patients: metrics.len() + excluded_ids.len(),
        included: metrics.len(),
        excluded: excluded_ids.len(),
        excluded_ids,
        above_diagonal_fraction: per_dim(|m, j| f64::from(u8::from(m.above_diagonal[j])), mean),
        median_delta_rs: per_dim(|m, j| m.delta_rs[j], median),
        median_delta_rs_pooled: median(&all_rs),
        max_delta_rs: all_rs.iter().copied().fold(f64::NAN, f64::max),
        mean_delta_rs: per_dim(|m, j| m.delta_rs[j], mean),
        mean_delta_rs_pooled: mean(&all_rs),
        mean_delta_ode: per_dim(|m, j| m.delta_ode[j], mean),
        mean_delta_ode_pooled: mean(&all_ode),
    }
}

/// Metrics of one patient, or `None` when the instruments share no visit.
pub fn patient_metrics(
    model: &Model,
    params: &ParamStore,
    patient: &PreparedPatient,
    tolerance: f64,
) -> Result<Option<AlignmentMetrics>> {
    let fit = model.fit_patient(params, patient, None)?;
    let (Some(r), Some(s)) = (&fit.r, &fit.s) else {
        return Ok(None);
    };
    let Some(delta_rs) = misalignment(&r.posterior, &s.posterior, tolerance) else {
        return Ok(None);
    };
    let (t0, t_last) = span(patient).expect("patient with observations");
    let delta_ode = ode_dynamics_range(&fit.trajectory, t0, t_last)?;
    Ok(Some(AlignmentMetrics::new(patient.id.clone(), delta_rs, delta_ode)))
}

fn span(patient: &PreparedPatient) -> Option<(f64, f64)> {
    let all = patient.r.times.iter().chain(&patient.s.times);
    Some((all.clone().copied().reduce(f64::min)?, all.copied().reduce(f64::max)?))
}

pub fn scatter_report(
    model: &Model,
    params: &ParamStore,
    data: &[PreparedPatient],
    tolerance: f64,
) -> Result<(Vec<AlignmentMetrics>, ScatterSummary)> {
    let mut metrics = Vec::new();
    let mut excluded = Vec::new();
    for patient in data {
        match patient_metrics(model, params, patient, tolerance)? {
            Some(m) => metrics.push(m),
            None => excluded.push(patient.id.clone()),
        }
    }
    let summary = summarize(&metrics, excluded, model.dims.d);
    Ok((metrics, summary))
}

/// Plot data of one patient: encodings and the densely sampled trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryExport {
    pub patient_id: String,
    pub r_times: Vec<f64>,
    pub r_means: Vec<Vec<f64>>,
    pub s_times: Vec<f64>,
    pub s_means: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    /// `values[sample][dim]`.
    pub values: Vec<Vec<f64>>,
    /// Row-major `A` then `c`.
    pub ode_a: Vec<f64>,
    pub ode_c: Vec<f64>,
}

pub fn trajectory_fit_export(
    model: &Model,
    params: &ParamStore,
    patient: &PreparedPatient,
    samples: usize,
) -> Result<TrajectoryExport> {
    let fit = model.fit_patient(params, patient, None)?;
    let (t0, t_last) = span(patient).expect("patient with observations");
    let times: Vec<f64> = if samples <= 1 || t_last == t0 {
        vec![t0; samples.max(1)]
    } else {
        (0..samples)
            .map(|i| t0 + (t_last - t0) * i as f64 / (samples - 1) as f64)
            .collect()
    };
    let mut inits = Vec::new();
    let mut points = |inst: &Option<crate::model::InstrumentFit<f64>>, source| {
        let Some(inst) = inst else {
            return (Vec::new(), Vec::new());
        };
        for (&time, mean) in inst.posterior.times.iter().zip(&inst.posterior.means) {
            inits.push(InitialCondition {
                time,
                value: mean.clone(),
                source,
            });
        }
        (inst.posterior.times.clone(), inst.posterior.means.clone())
    };
    let (r_times, r_means) = points(&fit.r, Instrument::R);
    let (s_times, s_means) = points(&fit.s, Instrument::S);
    let dense = combined_trajectory(&fit.ode, &inits, &times)?;
    Ok(TrajectoryExport {
        patient_id: patient.id.clone(),
        r_times,
        r_means,
        s_times,
        s_means,
        times,
        values: dense.values,
        ode_a: fit.ode.a.as_slice().to_vec(),
        ode_c: fit.ode.c.clone(),
    })
}

/// `n` distinct ids drawn with a generator seeded from `seed`, in cohort order.
pub fn sample_patient_ids(data: &[PreparedPatient], n: usize, seed: u64) -> Vec<String> {
    let mut h = Sha256::new();
    h.update(b"panels");
    h.update(seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
    let mut picked = rand::seq::index::sample(&mut rng, data.len(), n.min(data.len())).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| data[i].id.clone()).collect()
}
