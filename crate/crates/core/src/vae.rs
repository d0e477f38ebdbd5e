//! Per-instrument variational autoencoder with diagonal Gaussian posterior
//! and diagonal Gaussian reconstruction distribution.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Activation, Dense, GroupId, LayerSpec, ParamStore, ParamStoreBuilder, Real};

/// Decoder variances are clamped to this range.
pub const DECODER_VARIANCE_MIN: f64 = 1e-4;
pub const DECODER_VARIANCE_MAX: f64 = 10.0;

/// Input width `p` and latent dimension `d`; the hidden width equals `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VaeSpec {
    pub input: usize,
    pub latent: usize,
}

impl VaeSpec {
    pub fn new(input: usize, latent: usize) -> Result<Self> {
        if input == 0 || latent == 0 {
            return Err(Error::config(format!(
                "VAE needs positive input and latent widths, got p={input}, d={latent}"
            )));
        }
        Ok(Self { input, latent })
    }

    pub fn hidden(&self) -> usize {
        self.input
    }
}

/// Encoder outputs over a series of visits.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSeries<T> {
    pub times: Vec<f64>,
    pub means: Vec<Vec<T>>,
    pub sds: Vec<Vec<T>>,
}

impl<T> PosteriorSeries<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionDistribution<T> {
    pub mean: Vec<T>,
    pub variance: Vec<T>,
}

/// Parameter handles of one VAE.
#[derive(Debug, Clone, PartialEq)]
pub struct Vae {
    pub spec: VaeSpec,
    enc_hidden: Dense,
    enc_mean: Dense,
    enc_logvar: Dense,
    dec_hidden: Dense,
    dec_mean: Dense,
    dec_logvar: Dense,
}

impl Vae {
    fn layer_specs(spec: VaeSpec) -> Result<[(&'static str, LayerSpec); 6]> {
        let (p, d, h) = (spec.input, spec.latent, spec.hidden());
        Ok([
            ("encoder.hidden", LayerSpec::new(p, h, Activation::Tanh)?),
            ("encoder.mean", LayerSpec::new(h, d, Activation::Identity)?),
            ("encoder.logvar", LayerSpec::new(h, d, Activation::Identity)?),
            ("decoder.hidden", LayerSpec::new(d, h, Activation::Tanh)?),
            ("decoder.mean", LayerSpec::new(h, p, Activation::Identity)?),
            ("decoder.logvar", LayerSpec::new(h, p, Activation::Identity)?),
        ])
    }

    fn from_layers(spec: VaeSpec, mut layers: Vec<Dense>) -> Self {
        let dec_logvar = layers.pop().expect("six layers");
        let dec_mean = layers.pop().expect("six layers");
        let dec_hidden = layers.pop().expect("six layers");
        let enc_logvar = layers.pop().expect("six layers");
        let enc_mean = layers.pop().expect("six layers");
        let enc_hidden = layers.pop().expect("six layers");
        Self {
            spec,
            enc_hidden,
            enc_mean,
            enc_logvar,
            dec_hidden,
            dec_mean,
            dec_logvar,
        }
    }

    /// Register all groups under `prefix` with Glorot weights and zero biases.
    pub fn register<R: Rng + ?Sized>(
        builder: &mut ParamStoreBuilder,
        prefix: &str,
        spec: VaeSpec,
        rng: &mut R,
    ) -> Result<Self> {
        let layers = Self::layer_specs(spec)?
            .into_iter()
            .map(|(name, ls)| Dense::register(builder, &format!("{prefix}.{name}"), ls, rng))
            .collect();
        Ok(Self::from_layers(spec, layers))
    }

    /// Look up previously registered groups (e.g. after loading a checkpoint).
    pub fn resolve<T>(params: &ParamStore<T>, prefix: &str, spec: VaeSpec) -> Result<Self> {
        let layers = Self::layer_specs(spec)?
            .into_iter()
            .map(|(name, ls)| Dense::resolve(params, &format!("{prefix}.{name}"), ls))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_layers(spec, layers))
    }

    pub fn decoder_groups(&self) -> [GroupId; 6] {
        [
            self.dec_hidden.weight,
            self.dec_hidden.bias,
            self.dec_mean.weight,
            self.dec_mean.bias,
            self.dec_logvar.weight,
            self.dec_logvar.bias,
        ]
    }

    /// Posterior mean and standard deviation for one visit.
    pub fn encode<T: Real>(&self, params: &ParamStore<T>, x: &[f64]) -> Result<(Vec<T>, Vec<T>)> {
        if x.len() != self.spec.input {
            return Err(Error::config(format!(
                "encoder expects {} items, got {}",
                self.spec.input,
                x.len()
            )));
        }
        let like = params.get(self.enc_hidden.bias)[0];
        let input: Vec<T> = x.iter().map(|&v| like.lift(v)).collect();
        let h = self.enc_hidden.forward(params, &input)?;
        let mean = self.enc_mean.forward(params, &h)?;
        let sd = self
            .enc_logvar
            .forward(params, &h)?
            .into_iter()
            .map(|raw| (raw * 0.5).exp())
            .collect();
        Ok((mean, sd))
    }

    pub fn encode_series<T: Real>(
        &self,
        params: &ParamStore<T>,
        times: &[f64],
        items: &[Vec<f64>],
    ) -> Result<PosteriorSeries<T>> {
        let mut means = Vec::with_capacity(items.len());
        let mut sds = Vec::with_capacity(items.len());
        for x in items {
            let (m, s) = self.encode(params, x)?;
            means.push(m);
            sds.push(s);
        }
        Ok(PosteriorSeries {
            times: times.to_vec(),
            means,
            sds,
        })
    }

    pub fn decode<T: Real>(&self, params: &ParamStore<T>, z: &[T]) -> Result<ReconstructionDistribution<T>> {
        if z.len() != self.spec.latent {
            return Err(Error::config(format!(
                "decoder expects latent width {}, got {}",
                self.spec.latent,
                z.len()
            )));
        }
        let h = self.dec_hidden.forward(params, z)?;
        let mean = self.dec_mean.forward(params, &h)?;
        let variance = self
            .dec_logvar
            .forward(params, &h)?
            .into_iter()
            .map(decoder_variance)
            .collect();
        Ok(ReconstructionDistribution { mean, variance })
    }
}

/// Map a raw decoder output to a variance in the clamp range.
pub fn decoder_variance<T: Real>(raw: T) -> T {
    raw.exp().clamp_to(DECODER_VARIANCE_MIN, DECODER_VARIANCE_MAX)
}

/// `z = mu + sigma * eps`; gradients reach `mu` and `sigma` only.
pub fn reparameterize<T: Real>(mu: &[T], sigma: &[T], eps: &[f64]) -> Vec<T> {
    debug_assert!(mu.len() == sigma.len() && mu.len() == eps.len());
    mu.iter()
        .zip(sigma)
        .zip(eps)
        .map(|((&m, &s), &e)| m + s * e)
        .collect()
}

/// Negative log density of `x` under the diagonal Gaussian `dist`.
pub fn gaussian_nll<T: Real>(x: &[f64], dist: &ReconstructionDistribution<T>) -> T {
    debug_assert_eq!(x.len(), dist.mean.len());
    let two_pi = 2.0 * std::f64::consts::PI;
    let terms: Vec<T> = x
        .iter()
        .zip(&dist.mean)
        .zip(&dist.variance)
        .map(|((&xj, &m), &v)| (v * two_pi).ln() + (-m + xj).square() / v)
        .collect();
    T::sum(&terms) * 0.5
}

/// `KL(N(mu, diag(sigma^2)) || N(0, I))`.
pub fn kl_to_standard_normal<T: Real>(mu: &[T], sigma: &[T]) -> T {
    debug_assert_eq!(mu.len(), sigma.len());
    let terms: Vec<T> = mu
        .iter()
        .zip(sigma)
        .map(|(&m, &s)| {
            let var = s.square();
            m.square() + var - var.ln() - 1.0
        })
        .collect();
    T::sum(&terms) * 0.5
}

/// Negative ELBO contribution of one visit.
///
/// `mean_used` is the trajectory mean at this visit, `sigma` the encoder's
/// standard deviation; the reconstruction term is a single-sample estimate
/// with noise `eps`, and the KL term is multiplied by `kl_scale`.
pub fn elbo_term<T: Real>(
    vae: &Vae,
    params: &ParamStore<T>,
    x: &[f64],
    mean_used: &[T],
    sigma: &[T],
    eps: &[f64],
    kl_scale: f64,
) -> Result<T> {
    if eps.len() != mean_used.len() || sigma.len() != mean_used.len() {
        return Err(Error::config("noise, mean and sigma widths differ"));
    }
    let z = reparameterize(mean_used, sigma, eps);
    let dist = vae.decode(params, &z)?;
    Ok(gaussian_nll(x, &dist) + kl_to_standard_normal(mean_used, sigma) * kl_scale)
}
