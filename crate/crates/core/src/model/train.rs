use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{patient_loss, prepare, Model, ModelDims, PatientNoise, PreparedPatient, TrainConfig};
use crate::data::{BaselineEncoder, Cohort};
use crate::error::{Error, Result};
use crate::numerics::{compute_gradient, AdamState, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean patient loss at the parameters each patient was visited with.
    pub mean_loss: f64,
    pub steps: usize,
}

/// Everything needed to continue or evaluate a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub config: TrainConfig,
    pub dims: ModelDims,
    pub encoder: BaselineEncoder,
    pub model: Model,
    pub params: ParamStore,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: usize,
}

impl TrainState {
    /// Fresh state: baseline statistics fitted on `cohort`, parameters from
    /// `config.seed`.
    pub fn new(cohort: &Cohort, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let encoder = BaselineEncoder::fit(cohort)?;
        let dims = Model::dims_for(cohort, &encoder, &config)?;
        let (model, params) = Model::init(dims, config.seed)?;
        let adam = AdamState::new(config.adam, &params);
        Ok(Self {
            config,
            dims,
            encoder,
            model,
            params,
            adam,
            epoch: 0,
        })
    }

    pub fn prepare(&self, cohort: &Cohort) -> Result<Vec<PreparedPatient>> {
        if cohort.p() != self.dims.p || cohort.q() != Some(self.dims.q) {
            return Err(Error::config(format!(
                "cohort has {} / {:?} items, model expects {} / {}",
                cohort.p(),
                cohort.q(),
                self.dims.p,
                self.dims.q
            )));
        }
        prepare(cohort, &self.encoder)
    }
}

/// Generator for the visiting order and noise of one epoch.
pub fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(b"epoch");
    h.update(seed.to_le_bytes());
    h.update((epoch as u64).to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Run epochs `state.epoch + 1 ..= state.config.epochs`, one ADAM step per
/// patient in a seeded order. `on_epoch` sees the state after every epoch.
pub fn train(
    state: &mut TrainState,
    data: &[PreparedPatient],
    mut on_epoch: impl FnMut(&TrainState, &EpochStats) -> Result<()>,
) -> Result<Vec<EpochStats>> {
    state.config.validate()?;
    if data.is_empty() {
        return Err(Error::Precondition("training on an empty cohort".into()));
    }
    let d = state.dims.d;
    let mut history = Vec::new();
    while state.epoch < state.config.epochs {
        let epoch = state.epoch + 1;
        let mut rng = epoch_rng(state.config.seed, epoch);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);

        let mut total = 0.0;
        for &i in &order {
            let patient = &data[i];
            let noise = PatientNoise::sample(patient, d, &mut rng);
            let where_ = || format!("epoch {epoch}, patient `{}`", patient.id);
            let (model, config) = (&state.model, &state.config);
            let (loss, grads) = compute_gradient(&state.params, |p| {
                patient_loss(model, p, patient, config, &noise, None).map(|(terms, _)| terms.total)
            })
            .map_err(|e| e.with_context(where_()))?;
            if !loss.is_finite() {
                return Err(Error::numeric("loss").with_context(where_()));
            }
            state
                .adam
                .step(&mut state.params, &grads)
                .map_err(|e| e.with_context(where_()))?;
            total += loss;
        }
        state.epoch = epoch;
        let stats = EpochStats {
            epoch,
            mean_loss: total / data.len() as f64,
            steps: data.len(),
        };
        on_epoch(state, &stats)?;
        history.push(stats);
    }
    Ok(history)
}
