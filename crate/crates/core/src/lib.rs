//! Alignment of two longitudinal measurement instruments in a shared latent
//! space.
//!
//! Each instrument gets its own variational autoencoder. Patient-specific
//! linear ODE dynamics, inferred from baseline covariates, tie the encoded
//! visits of both instruments to one latent trajectory, and penalty terms
//! make the two instruments indistinguishable relative to that trajectory.

pub mod error;
pub mod numerics;
pub mod data;
pub mod dynamics;
pub mod eval;
pub mod model;
pub mod ode;
pub mod vae;

pub use error::{Error, Result};
