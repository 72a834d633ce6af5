//! Mutual information estimation from denoising.
//!
//! Trains a single conditional/unconditional denoiser over a Gaussian SNR
//! channel and estimates mutual information as half the importance-sampled
//! integral of the MMSE gap across SNR levels.

pub mod channel;
pub mod checkpoint;
pub mod error;
pub mod estimator;
pub mod gauss;
pub mod linalg;
pub mod mlp;
pub mod optim;
pub mod tasks;
pub mod train;

pub use channel::{add_noise, channel_coefficients, importance_weight, sample_log_snr, ChannelSample, SamplingConfig};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use error::{Error, Result};
pub use estimator::{
    default_curve_grid, estimate, estimate_gap, estimate_orthogonal, fit_adaptive,
    gaussian_gap_quadrature, mmse_curve,
    pointwise_log_density, uniform_grid, AdaptiveFit, Denoiser, EstimationContext, LogDensity,
    MiEstimate, MmseCurve, Variant,
};
pub use gauss::{
    gaussian_conditional_mmse, gaussian_mi, gaussian_mmse, GaussianDenoiser, JointGaussianSpec,
};
pub use linalg::Matrix;
pub use mlp::{time_embedding, DenoiseBatch, Mlp, MlpConfig};
pub use optim::{adam_step, ModelState, OptimizerConfig, PlateauScheduler};
pub use tasks::{Batch, Family, Standardizer, TaskSpec, Transform};
pub use train::{train, two_stage_train, LossLogRow, TrainConfig, TrainedModel, TwoStageResult};
