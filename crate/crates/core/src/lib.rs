//! Composite functional gradient GAN training with centred gradient
//! penalties, on small 2D benchmarks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod cfg;
pub mod data;
pub mod dynamics;
pub mod metrics;
pub mod neighborhood;
pub mod nn;
pub mod tensor;

pub use autodiff::{Tape, Var};
pub use cfg::{train, Penalty, PenaltyKind, TrainConfig, TrainError};
pub use data::GaussianMixture;
pub use nn::{Activation, MlpParams};
pub use tensor::Tensor;
