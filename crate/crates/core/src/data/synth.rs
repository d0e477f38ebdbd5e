//! Seeded synthetic cohort with known two-dimensional linear latent dynamics.
//!
//! Per patient: covariates `x1..x3` and a three-level `group`; a decay matrix
//! whose rates and rotation depend smoothly on the covariates; an initial
//! latent state shifted by group; visits at jittered intervals; integer item
//! scores from a logistic map of the latent state plus noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Cohort, Covariate, ItemScale, PatientRecord, Series, Stage};
use crate::error::{Error, Result};
use crate::numerics::Mat;
use crate::ode::{matrix_exp, Instrument};

pub const GROUP_LEVELS: [&str; 3] = ["a", "b", "c"];
const LATENT: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub n_patients: usize,
    pub seed: u64,
    pub items: usize,
    pub item_max: f64,
    /// Total visits per patient, including baseline, uniform in this range.
    pub min_visits: usize,
    pub max_visits: usize,
    /// Mean months between visits; gaps are jittered by a factor in [0.5, 1.5].
    pub visit_interval: f64,
    /// Standard deviation of additive item noise before rounding.
    pub item_noise: f64,
    /// Scale of the item loading matrix.
    pub loading_scale: f64,
    /// Range of the per-dimension decay rates (per month).
    pub rate_min: f64,
    pub rate_max: f64,
    /// Maximum rotation rate (per month).
    pub rotation: f64,
    /// Magnitude of the group-specific initial latent state.
    pub initial_magnitude: f64,
    pub initial_noise: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_patients: 500,
            seed: 0,
            items: 20,
            item_max: 4.0,
            min_visits: 2,
            max_visits: 12,
            visit_interval: 4.0,
            item_noise: 0.1,
            loading_scale: 1.0,
            rate_min: 0.02,
            rate_max: 0.08,
            rotation: 0.06,
            initial_magnitude: 2.0,
            initial_noise: 0.5,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0 {
            return Err(Error::config("synthetic cohort needs at least one patient"));
        }
        if self.items == 0 || !(self.item_max >= 1.0) {
            return Err(Error::config("synthetic cohort needs items with maximum at least 1"));
        }
        if self.min_visits == 0 || self.min_visits > self.max_visits {
            return Err(Error::config("visit range must satisfy 1 <= min <= max"));
        }
        let positive = [self.visit_interval, self.rate_max];
        let non_negative = [
            self.item_noise,
            self.loading_scale,
            self.rate_min,
            self.rotation,
            self.initial_magnitude,
            self.initial_noise,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite()))
            || non_negative.iter().any(|v| !(*v >= 0.0 && v.is_finite()))
            || self.rate_min > self.rate_max
        {
            return Err(Error::config("generator rates and scales must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientTruth {
    pub id: String,
    /// Row-major system matrix of `z' = A z`.
    pub a: Vec<f64>,
    pub z0: Vec<f64>,
    /// Latent state at each R visit.
    pub latent: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: GeneratorConfig,
    /// `loadings[item][dim]`.
    pub loadings: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
    pub patients: Vec<PatientTruth>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// System matrix as a function of the continuous covariates.
fn system_matrix(config: &GeneratorConfig, x: [f64; 3]) -> [f64; 4] {
    let span = config.rate_max - config.rate_min;
    let l1 = config.rate_min + span * sigmoid(x[0]);
    let l2 = config.rate_min + span * sigmoid(x[1]);
    let k = config.rotation * x[2].tanh();
    [-l1, k, -k, -l2]
}

pub fn generate_synthetic(config: &GeneratorConfig) -> Result<Cohort> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let noise = Normal::new(0.0, config.item_noise).map_err(|e| Error::config(e.to_string()))?;

    let loadings: Vec<Vec<f64>> = (0..config.items)
        .map(|_| {
            (0..LATENT)
                .map(|_| config.loading_scale * std_normal.sample(&mut rng))
                .collect()
        })
        .collect();
    let offsets: Vec<f64> = (0..config.items).map(|_| rng.random_range(-1.0..1.0)).collect();
    // Group centres of the covariates and of the initial state.
    let m = config.initial_magnitude;
    let covariate_centres = [[-0.8, 0.5, 0.0], [0.6, -0.6, 0.8], [0.2, 0.4, -0.8]];
    let initial_centres = [[m, 0.75 * m], [0.75 * m, -m], [-m, 0.75 * m]];

    let mut patients = Vec::with_capacity(config.n_patients);
    let mut truths = Vec::with_capacity(config.n_patients);
    for i in 0..config.n_patients {
        let id = format!("P{:04}", i + 1);
        let group = rng.random_range(0..GROUP_LEVELS.len());
        let x: [f64; 3] = std::array::from_fn(|k| covariate_centres[group][k] + std_normal.sample(&mut rng));
        let a = system_matrix(config, x);
        let z0: Vec<f64> = (0..LATENT)
            .map(|k| initial_centres[group][k] + config.initial_noise * std_normal.sample(&mut rng))
            .collect();

        let visits = rng.random_range(config.min_visits..=config.max_visits);
        let mut times = Vec::with_capacity(visits);
        let mut t = 0.0f64;
        for v in 0..visits {
            if v > 0 {
                let gap = config.visit_interval * rng.random_range(0.5..1.5);
                t = ((t + gap) * 100.0).round() / 100.0;
            }
            times.push(t);
        }

        let a_mat = Mat::from_vec(LATENT, LATENT, a.to_vec());
        let mut latent = Vec::with_capacity(visits);
        let mut items = Vec::with_capacity(visits);
        for &t in &times {
            let flow = matrix_exp(&a_mat.scale(t))?;
            let z = flow.matvec(&z0);
            let row: Vec<f64> = loadings
                .iter()
                .zip(&offsets)
                .map(|(l, o)| {
                    let eta = l[0] * z[0] + l[1] * z[1] + o;
                    let raw = config.item_max * sigmoid(eta) + noise.sample(&mut rng);
                    // `+ 0.0` maps the -0 that rounding can produce to 0.
                    raw.round().clamp(0.0, config.item_max) + 0.0
                })
                .collect();
            latent.push(z);
            items.push(row);
        }

        patients.push(PatientRecord {
            id: id.clone(),
            baseline: x
                .iter()
                .map(|&v| Covariate::Numeric(v))
                .chain(std::iter::once(Covariate::Category(GROUP_LEVELS[group].to_string())))
                .collect(),
            r: Series { times, items },
            s: Series::default(),
        });
        truths.push(PatientTruth {
            id,
            a: a.to_vec(),
            z0,
            latent,
        });
    }

    let cohort = Cohort {
        baseline_columns: vec!["x1".into(), "x2".into(), "x3".into(), "group".into()],
        categorical: vec!["group".into()],
        scale_r: ItemScale::uniform(config.items, config.item_max),
        scale_s: None,
        stage: Stage::Raw,
        patients,
        ground_truth: Some(GroundTruth {
            config: config.clone(),
            loadings,
            offsets,
            patients: truths,
        }),
    };
    cohort.validate()?;
    debug_assert!(cohort.patients.iter().all(|p| p.series(Instrument::S).is_empty()));
    Ok(cohort)
}
