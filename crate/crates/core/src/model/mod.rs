//! Joint model: two instrument VAEs, the dynamics network and the pooled
//! latent trajectory; loss, training loop and checkpoints.

mod checkpoint;
mod config;
mod loss;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use config::{AblationArm, LossWeights, Preset, TrainConfig, TrainOverrides};
pub use loss::{
    adversarial_penalty, mean_residual, ode_consistency_penalty, patient_loss, variance_ratio_penalty,
    InstrumentFit, LossTerms, PatientFit,
};
pub use train::{epoch_rng, train, EpochStats, TrainState};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{BaselineEncoder, Cohort, PatientRecord, Series};
use crate::dynamics::DynamicsNet;
use crate::error::{Error, Result};
use crate::numerics::{ParamStore, ParamStoreBuilder};
use crate::vae::{Vae, VaeSpec};

pub const VAE_R_PREFIX: &str = "vae_r";
pub const VAE_S_PREFIX: &str = "vae_s";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Items of instrument R.
    pub p: usize,
    /// Items of instrument S.
    pub q: usize,
    /// Encoded baseline width.
    pub b: usize,
    pub d: usize,
    pub homogeneous: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub dims: ModelDims,
    pub vae_r: Vae,
    pub vae_s: Vae,
    pub dynamics: DynamicsNet,
}

impl Model {
    /// Fresh parameters, deterministic in `seed`.
    pub fn init(dims: ModelDims, seed: u64) -> Result<(Self, ParamStore)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut builder = ParamStoreBuilder::new();
        let vae_r = Vae::register(&mut builder, VAE_R_PREFIX, VaeSpec::new(dims.p, dims.d)?, &mut rng)?;
        let vae_s = Vae::register(&mut builder, VAE_S_PREFIX, VaeSpec::new(dims.q, dims.d)?, &mut rng)?;
        let dynamics = DynamicsNet::register(&mut builder, dims.b, dims.d, dims.homogeneous, &mut rng)?;
        Ok((
            Self {
                dims,
                vae_r,
                vae_s,
                dynamics,
            },
            builder.build(),
        ))
    }

    pub fn resolve<T>(dims: ModelDims, params: &ParamStore<T>) -> Result<Self> {
        Ok(Self {
            dims,
            vae_r: Vae::resolve(params, VAE_R_PREFIX, VaeSpec::new(dims.p, dims.d)?)?,
            vae_s: Vae::resolve(params, VAE_S_PREFIX, VaeSpec::new(dims.q, dims.d)?)?,
            dynamics: DynamicsNet::resolve(params, dims.b, dims.d, dims.homogeneous)?,
        })
    }

    pub fn dims_for(cohort: &Cohort, encoder: &BaselineEncoder, config: &TrainConfig) -> Result<ModelDims> {
        let q = cohort
            .q()
            .ok_or_else(|| Error::Precondition("training needs a second instrument".into()))?;
        Ok(ModelDims {
            p: cohort.p(),
            q,
            b: encoder.width(),
            d: config.latent_dim,
            homogeneous: config.homogeneous,
        })
    }
}

/// A patient with an encoded baseline vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedPatient {
    pub id: String,
    pub baseline: Vec<f64>,
    pub r: Series,
    pub s: Series,
}

impl PreparedPatient {
    pub fn new(record: &PatientRecord, encoder: &BaselineEncoder) -> Result<Self> {
        Ok(Self {
            id: record.id.clone(),
            baseline: encoder.encode(record)?,
            r: record.r.clone(),
            s: record.s.clone(),
        })
    }
}

pub fn prepare(cohort: &Cohort, encoder: &BaselineEncoder) -> Result<Vec<PreparedPatient>> {
    cohort
        .patients
        .iter()
        .map(|p| PreparedPatient::new(p, encoder))
        .collect()
}

/// Reparameterization noise `[visit][dim]` per instrument.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PatientNoise {
    pub r: Vec<Vec<f64>>,
    pub s: Vec<Vec<f64>>,
}

impl PatientNoise {
    pub fn zeros(patient: &PreparedPatient, d: usize) -> Self {
        Self {
            r: vec![vec![0.0; d]; patient.r.len()],
            s: vec![vec![0.0; d]; patient.s.len()],
        }
    }

    /// Draws R visits then S visits, dimensions innermost.
    pub fn sample<R: rand::Rng + ?Sized>(patient: &PreparedPatient, d: usize, rng: &mut R) -> Self {
        let mut draw = |n: usize| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| (0..d).map(|_| StandardNormal.sample(&mut *rng)).collect())
                .collect()
        };
        let r = draw(patient.r.len());
        let s = draw(patient.s.len());
        Self { r, s }
    }
}
