use super::{Model, PatientNoise, PreparedPatient, TrainConfig};
use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Real};
use crate::ode::{combined_trajectory_with_weights, InitialCondition, Instrument, OdeParams, TrajectoryEstimate};
use crate::vae::{elbo_term, PosteriorSeries};

/// Visits at the same time across instruments are matched within this many months.
pub const TIME_TOLERANCE: f64 = 1e-9;

/// Encoded series of one instrument with the trajectory at its visit times.
#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentFit<T> {
    pub posterior: PosteriorSeries<T>,
    /// `traj[visit][dim]`.
    pub traj: Vec<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientFit<T> {
    pub ode: OdeParams<T>,
    /// Evaluated at the union of R and S times.
    pub trajectory: TrajectoryEstimate<T>,
    pub r: Option<InstrumentFit<T>>,
    pub s: Option<InstrumentFit<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms<T> {
    pub elbo_r: T,
    pub elbo_s: T,
    pub adversarial: T,
    pub ode_consistency: T,
    pub variance_ratio: T,
    /// Sum of squared decoder parameters, before weighting.
    pub decoder_squares: T,
    pub total: T,
}

impl<T: Real> LossTerms<T> {
    pub fn values(&self) -> LossTerms<f64> {
        LossTerms {
            elbo_r: self.elbo_r.value(),
            elbo_s: self.elbo_s.value(),
            adversarial: self.adversarial.value(),
            ode_consistency: self.ode_consistency.value(),
            variance_ratio: self.variance_ratio.value(),
            decoder_squares: self.decoder_squares.value(),
            total: self.total.value(),
        }
    }
}

/// `(1/n) sum_k (traj_k - mean_k)`; `None` for an empty series.
pub fn mean_residual<T: Real>(means: &[Vec<T>], traj: &[Vec<T>]) -> Option<Vec<T>> {
    let first = means.first()?;
    let n = means.len() as f64;
    Some(
        (0..first.len())
            .map(|j| {
                let diffs: Vec<T> = traj.iter().zip(means).map(|(t, m)| t[j] - m[j]).collect();
                T::sum(&diffs) * (1.0 / n)
            })
            .collect(),
    )
}

/// `sum_j |r_R,j - r_S,j|` of the mean signed residuals; `None` unless both
/// instruments are observed.
pub fn adversarial_penalty<T: Real>(
    means_r: &[Vec<T>],
    traj_r: &[Vec<T>],
    means_s: &[Vec<T>],
    traj_s: &[Vec<T>],
) -> Option<T> {
    let rr = mean_residual(means_r, traj_r)?;
    let rs = mean_residual(means_s, traj_s)?;
    let terms: Vec<T> = rr.iter().zip(&rs).map(|(&a, &b)| (a - b).abs()).collect();
    Some(T::sum(&terms))
}

/// Squared distance of encoded means to the trajectory, summed over visits
/// and dimensions; `None` for an empty series.
pub fn ode_consistency_penalty<T: Real>(means: &[Vec<T>], traj: &[Vec<T>]) -> Option<T> {
    if means.is_empty() {
        return None;
    }
    let terms: Vec<T> = means
        .iter()
        .zip(traj)
        .flat_map(|(m, t)| m.iter().zip(t).map(|(&a, &b)| (b - a).square()))
        .collect();
    Some(T::sum(&terms))
}

fn column_variance<T: Real>(rows: &[Vec<T>], j: usize) -> T {
    let column: Vec<T> = rows.iter().map(|r| r[j]).collect();
    let n = column.len() as f64;
    let mean = T::sum(&column) * (1.0 / n);
    let sq: Vec<T> = column.iter().map(|&v| (v - mean).square()).collect();
    T::sum(&sq) * (1.0 / (n - 1.0))
}

/// `n * sum_j (s2(traj_j) + 1) / (s2(mean_j) + 1)` with sample variances over
/// the instrument's visits; below two visits each ratio is 1. `None` for an
/// empty series.
pub fn variance_ratio_penalty<T: Real>(means: &[Vec<T>], traj: &[Vec<T>]) -> Option<T> {
    let first = means.first()?;
    let n = means.len();
    let d = first.len();
    if n < 2 {
        return Some(first[0].lift((n * d) as f64));
    }
    let ratios: Vec<T> = (0..d)
        .map(|j| (column_variance(traj, j) + 1.0) / (column_variance(means, j) + 1.0))
        .collect();
    Some(T::sum(&ratios) * n as f64)
}

/// Sorted union of two sorted time lists, merging values within tolerance.
pub fn union_times(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = a.iter().chain(b).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup_by(|x, y| (*x - *y).abs() <= TIME_TOLERANCE);
    all
}

fn index_in(times: &[f64], t: f64) -> usize {
    times
        .iter()
        .position(|&u| (u - t).abs() <= TIME_TOLERANCE)
        .expect("time present in union")
}

impl Model {
    /// Encode both series, infer the ODE parameters and pool the trajectory.
    pub fn fit_patient<T: Real>(
        &self,
        params: &ParamStore<T>,
        patient: &PreparedPatient,
        fixed_weights: Option<&[Vec<Vec<f64>>]>,
    ) -> Result<PatientFit<T>> {
        if patient.r.is_empty() && patient.s.is_empty() {
            return Err(Error::Precondition(format!("patient `{}` has no observations", patient.id)));
        }
        let ode = self.dynamics.infer(params, &patient.baseline)?;
        let post_r = self.vae_r.encode_series(params, &patient.r.times, &patient.r.items)?;
        let post_s = self.vae_s.encode_series(params, &patient.s.times, &patient.s.items)?;

        let inits: Vec<InitialCondition<T>> = [(Instrument::R, &post_r), (Instrument::S, &post_s)]
            .into_iter()
            .flat_map(|(source, post)| {
                post.times.iter().zip(&post.means).map(move |(&time, mean)| InitialCondition {
                    time,
                    value: mean.clone(),
                    source,
                })
            })
            .collect();
        let times = union_times(&patient.r.times, &patient.s.times);
        let trajectory = combined_trajectory_with_weights(&ode, &inits, &times, fixed_weights)?;

        let attach = |post: PosteriorSeries<T>| {
            if post.is_empty() {
                return None;
            }
            let traj = post
                .times
                .iter()
                .map(|&t| trajectory.values[index_in(&times, t)].clone())
                .collect();
            Some(InstrumentFit { posterior: post, traj })
        };
        let r = attach(post_r);
        let s = attach(post_s);
        Ok(PatientFit {
            ode,
            trajectory,
            r,
            s,
        })
    }

    pub fn decoder_squares<T: Real>(&self, params: &ParamStore<T>) -> T {
        let squares: Vec<T> = self
            .vae_r
            .decoder_groups()
            .into_iter()
            .chain(self.vae_s.decoder_groups())
            .flat_map(|g| params.get(g).iter().map(|v| v.square()))
            .collect();
        T::sum(&squares)
    }
}

/// Joint per-patient objective: negative ELBOs of both instruments evaluated
/// at the trajectory means, the three alignment penalties and the decoder
/// weight penalty. Absent instruments contribute nothing.
pub fn patient_loss<T: Real>(
    model: &Model,
    params: &ParamStore<T>,
    patient: &PreparedPatient,
    config: &TrainConfig,
    noise: &PatientNoise,
    fixed_weights: Option<&[Vec<Vec<f64>>]>,
) -> Result<(LossTerms<T>, PatientFit<T>)> {
    if noise.r.len() != patient.r.len() || noise.s.len() != patient.s.len() {
        return Err(Error::config(format!(
            "patient `{}`: noise does not match visit counts",
            patient.id
        )));
    }
    let fit = model.fit_patient(params, patient, fixed_weights)?;
    let zero = fit.ode.a.get(0, 0).lift(0.0);

    let elbo = |vae, series: &crate::data::Series, inst: &Option<InstrumentFit<T>>, eps: &[Vec<f64>]| -> Result<T> {
        let Some(inst) = inst else { return Ok(zero) };
        let terms = series
            .items
            .iter()
            .zip(&inst.traj)
            .zip(&inst.posterior.sds)
            .zip(eps)
            .map(|(((x, mean), sd), e)| elbo_term(vae, params, x, mean, sd, e, config.kl_scale))
            .collect::<Result<Vec<T>>>()?;
        Ok(T::sum(&terms))
    };
    let elbo_r = elbo(&model.vae_r, &patient.r, &fit.r, &noise.r)?;
    let elbo_s = elbo(&model.vae_s, &patient.s, &fit.s, &noise.s)?;

    let parts = |f: fn(&[Vec<T>], &[Vec<T>]) -> Option<T>| -> T {
        let terms: Vec<T> = [&fit.r, &fit.s]
            .into_iter()
            .flatten()
            .filter_map(|i| f(&i.posterior.means, &i.traj))
            .collect();
        if terms.is_empty() {
            zero
        } else {
            T::sum(&terms)
        }
    };
    let ode_consistency = parts(ode_consistency_penalty);
    let variance_ratio = parts(variance_ratio_penalty);
    let adversarial = match (&fit.r, &fit.s) {
        (Some(r), Some(s)) => adversarial_penalty(&r.posterior.means, &r.traj, &s.posterior.means, &s.traj)
            .unwrap_or(zero),
        _ => zero,
    };
    let decoder_squares = model.decoder_squares(params);

    let w = config.weights;
    let total = elbo_r
        + elbo_s
        + adversarial * w.alpha
        + ode_consistency * w.beta
        + variance_ratio * w.gamma
        + decoder_squares * config.decoder_penalty;
    Ok((
        LossTerms {
            elbo_r,
            elbo_s,
            adversarial,
            ode_consistency,
            variance_ratio,
            decoder_squares,
            total,
        },
        fit,
    ))
}
