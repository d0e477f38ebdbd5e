//! Dense arithmetic, feedforward layers, reverse-mode gradients and ADAM.

pub mod adam;
pub mod linalg;
pub mod mlp;
pub mod params;
pub mod real;
pub mod tape;

pub use adam::{AdamConfig, AdamState};
pub use linalg::Mat;
pub use mlp::{forward_mlp, scaled_shifted_sigmoid, Activation, Dense, LayerSpec};
pub use params::{compute_gradient, GroupId, ParamLayout, ParamStore, ParamStoreBuilder};
pub use real::Real;
pub use tape::{Tape, Var};
