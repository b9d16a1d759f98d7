//! Denoising-diffusion machinery for conditional mel-spectrogram generation.
//!
//! The crate is organised around the ε-prediction formulation: a
//! [`NoiseSchedule`] fixes the forward corruption process, [`forward`]
//! implements noising and the L1 training objective, [`sampler`] runs the
//! ancestral and accelerated reverse processes, and [`denoiser`] provides
//! the [`EpsilonPredictor`] implementations (an exact Gaussian oracle and a
//! small trainable network). [`ttsnet`] holds desk-scale versions of the
//! text-conditioning network.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod denoiser;
pub mod error;
pub mod forward;
pub mod io;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod tensor;
pub mod ttsnet;

pub use denoiser::{EpsilonPredictor, GaussianDataSpec};
pub use error::{Error, ErrorKind, Result};
pub use forward::TrainingBatch;
pub use rng::SeedStream;
pub use sampler::TrajectorySpec;
pub use schedule::NoiseSchedule;
pub use tensor::{ConditioningContext, SampleTensor};
