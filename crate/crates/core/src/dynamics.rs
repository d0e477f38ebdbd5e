//! Baseline covariates to patient-specific ODE parameters.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Activation, Dense, GroupId, LayerSpec, Mat, ParamStore, ParamStoreBuilder, Real};
use crate::ode::OdeParams;

/// Number of ODE parameters for latent dimension `d`.
pub fn ode_param_count(latent: usize, homogeneous: bool) -> usize {
    if homogeneous {
        latent * latent
    } else {
        latent * latent + latent
    }
}

/// Two hidden layers followed by an elementwise affine output.
///
/// The second hidden layer squashes into (-0.25, 0.25); the output
/// `diag * h + bias` is initialised to the identity so inference starts in
/// that range. Output order: `A` row-major, then `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsNet {
    pub baseline_width: usize,
    pub latent: usize,
    pub homogeneous: bool,
    hidden1: Dense,
    hidden2: Dense,
    out_diag: GroupId,
    out_bias: GroupId,
}

const PREFIX: &str = "dynamics";

impl DynamicsNet {
    fn specs(baseline_width: usize, latent: usize, homogeneous: bool) -> Result<(LayerSpec, LayerSpec)> {
        let n = ode_param_count(latent, homogeneous);
        Ok((
            LayerSpec::new(baseline_width, baseline_width, Activation::Tanh)?,
            LayerSpec::new(baseline_width, n, Activation::ScaledShiftedSigmoid)?,
        ))
    }

    pub fn register<R: Rng + ?Sized>(
        builder: &mut ParamStoreBuilder,
        baseline_width: usize,
        latent: usize,
        homogeneous: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let (s1, s2) = Self::specs(baseline_width, latent, homogeneous)?;
        let hidden1 = Dense::register(builder, &format!("{PREFIX}.hidden1"), s1, rng);
        let hidden2 = Dense::register(builder, &format!("{PREFIX}.hidden2"), s2, rng);
        let out_diag = builder.filled(format!("{PREFIX}.out.diag"), &[s2.output], 1.0);
        let out_bias = builder.zeros(format!("{PREFIX}.out.bias"), &[s2.output]);
        Ok(Self {
            baseline_width,
            latent,
            homogeneous,
            hidden1,
            hidden2,
            out_diag,
            out_bias,
        })
    }

    pub fn resolve<T>(
        params: &ParamStore<T>,
        baseline_width: usize,
        latent: usize,
        homogeneous: bool,
    ) -> Result<Self> {
        let (s1, s2) = Self::specs(baseline_width, latent, homogeneous)?;
        let hidden1 = Dense::resolve(params, &format!("{PREFIX}.hidden1"), s1)?;
        let hidden2 = Dense::resolve(params, &format!("{PREFIX}.hidden2"), s2)?;
        let layout = params.layout();
        let find = |name: String| {
            let id = layout
                .find(&name)
                .ok_or_else(|| Error::Lookup(format!("missing parameter group `{name}`")))?;
            if layout.shape(id) != [s2.output] {
                return Err(Error::config(format!("parameter group `{name}` has the wrong shape")));
            }
            Ok(id)
        };
        Ok(Self {
            baseline_width,
            latent,
            homogeneous,
            hidden1,
            hidden2,
            out_diag: find(format!("{PREFIX}.out.diag"))?,
            out_bias: find(format!("{PREFIX}.out.bias"))?,
        })
    }

    pub fn output_width(&self) -> usize {
        ode_param_count(self.latent, self.homogeneous)
    }

    /// Raw parameter vector before reshaping.
    pub fn forward<T: Real>(&self, params: &ParamStore<T>, baseline: &[f64]) -> Result<Vec<T>> {
        if baseline.len() != self.baseline_width {
            return Err(Error::config(format!(
                "dynamics network expects {} baseline values, got {}",
                self.baseline_width,
                baseline.len()
            )));
        }
        let like = params.get(self.out_bias)[0];
        let input: Vec<T> = baseline.iter().map(|&v| like.lift(v)).collect();
        let h1 = self.hidden1.forward(params, &input)?;
        let h2 = self.hidden2.forward(params, &h1)?;
        let diag = params.get(self.out_diag);
        let bias = params.get(self.out_bias);
        Ok(h2
            .iter()
            .zip(diag)
            .zip(bias)
            .map(|((&h, &w), &b)| h * w + b)
            .collect())
    }

    pub fn infer<T: Real>(&self, params: &ParamStore<T>, baseline: &[f64]) -> Result<OdeParams<T>> {
        let raw = self.forward(params, baseline)?;
        let d = self.latent;
        let a = Mat::from_vec(d, d, raw[..d * d].to_vec());
        if self.homogeneous {
            OdeParams::homogeneous(a)
        } else {
            OdeParams::new(a, raw[d * d..].to_vec(), false)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(b: usize, d: usize, homogeneous: bool, seed: u64) -> (DynamicsNet, ParamStore) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut builder = ParamStoreBuilder::new();
        let net = DynamicsNet::register(&mut builder, b, d, homogeneous, &mut rng).unwrap();
        (net, builder.build())
    }

    #[test]
    fn homogeneous_output_shape() {
        let (net, p) = net(5, 2, true, 1);
        assert_eq!(net.output_width(), 4);
        let ode = net.infer(&p, &[0.1, 0.2, -0.3, 1.0, 0.0]).unwrap();
        assert_eq!(ode.dim(), 2);
        assert_eq!(ode.c, vec![0.0, 0.0]);
        assert!(ode.homogeneous);
        let (net, _) = net_inhom();
        assert_eq!(net.output_width(), 6);
    }

    fn net_inhom() -> (DynamicsNet, ParamStore) {
        net(3, 2, false, 2)
    }

    #[test]
    fn zero_second_layer_returns_bias() {
        let (net, mut p) = net_inhom();
        p.set("dynamics.hidden2.weight", &[0.0; 18]).unwrap();
        p.set("dynamics.out.diag", &[3.0; 6]).unwrap();
        p.set("dynamics.out.bias", &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let ode = net.infer(&p, &[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(ode.a.as_slice(), &[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(ode.c, vec![0.5, 0.6]);
    }

    #[test]
    fn width_mismatch_is_config_error() {
        let (net, p) = net_inhom();
        assert!(matches!(net.infer(&p, &[1.0]), Err(Error::Config(_))));
    }

    #[test]
    fn matches_straight_line_oracle() {
        let (net, mut p) = net(4, 3, false, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for v in p.iter_flat_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
        let x = [0.5, -1.0, 2.0, 0.25];
        let got = net.forward(&p, &x).unwrap();

        let w1 = p.by_name("dynamics.hidden1.weight").unwrap();
        let b1 = p.by_name("dynamics.hidden1.bias").unwrap();
        let w2 = p.by_name("dynamics.hidden2.weight").unwrap();
        let b2 = p.by_name("dynamics.hidden2.bias").unwrap();
        let dg = p.by_name("dynamics.out.diag").unwrap();
        let bo = p.by_name("dynamics.out.bias").unwrap();
        let mut h1 = [0.0; 4];
        for o in 0..4 {
            let mut s = b1[o];
            for k in 0..4 {
                s += w1[o * 4 + k] * x[k];
            }
            h1[o] = s.tanh();
        }
        for o in 0..12 {
            let mut s = b2[o];
            for k in 0..4 {
                s += w2[o * 4 + k] * h1[k];
            }
            let h2 = 0.5 * (1.0 / (1.0 + (-s).exp()) - 0.5);
            assert!((got[o] - (dg[o] * h2 + bo[o])).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_baselines_give_identical_parameters() {
        let (net, p) = net_inhom();
        let a = net.infer(&p, &[0.3, 0.3, -1.0]).unwrap();
        let b = net.infer(&p, &[0.3, 0.3, -1.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn resolve_round_trips() {
        let (net, p) = net_inhom();
        let again = DynamicsNet::resolve(&p, 3, 2, false).unwrap();
        assert_eq!(net, again);
        assert!(DynamicsNet::resolve(&p, 3, 2, true).is_err());
    }
}
