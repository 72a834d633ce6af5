//! Trains one denoiser for both conditional and unconditional denoising by
//! replacing y with a null value (zero vector, flag 0) on a random fraction
//! of examples each batch.

use crate::channel::{channel_coefficients, sample_log_snr, SamplingConfig};
use crate::error::{Error, Result};
use crate::estimator::{
    default_curve_grid, fit_adaptive, mmse_curve, AdaptiveFit, Denoiser, EstimationContext,
};
use crate::linalg::Matrix;
use crate::mlp::{DenoiseBatch, Mlp, MlpConfig};
use crate::optim::{adam_step, ModelState, OptimizerConfig, PlateauScheduler};
use crate::tasks::{Standardizer, TaskSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

fn default_epoch_steps() -> usize {
    100
}

fn default_standardize() -> bool {
    true
}

fn default_standardize_samples() -> usize {
    8192
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Probability of replacing y with the null value per example.
    pub null_prob: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub lr: f64,
    pub sampling: SamplingConfig,
    pub seed: u64,
    /// Optimizer steps per scheduler epoch.
    #[serde(default = "default_epoch_steps")]
    pub epoch_steps: usize,
    /// Fit a per-coordinate affine standardization before training.
    #[serde(default = "default_standardize")]
    pub standardize: bool,
    #[serde(default = "default_standardize_samples")]
    pub standardize_samples: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.null_prob) {
            return Err(Error::Config("null_prob must lie in [0,1]".into()));
        }
        if self.iterations == 0 || self.batch_size == 0 {
            return Err(Error::Config("iterations and batch_size must be >= 1".into()));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config("lr must be positive".into()));
        }
        self.sampling.validate()
    }

    /// Reduced budgets sized for a laptop CPU.
    pub fn desk(seed: u64) -> Self {
        TrainConfig {
            null_prob: 0.5,
            batch_size: 128,
            iterations: 30_000,
            lr: 1e-3,
            sampling: SamplingConfig::default(),
            seed,
            epoch_steps: default_epoch_steps(),
            standardize: true,
            standardize_samples: default_standardize_samples(),
        }
    }

    /// The published full-scale setting for tasks of total dimension <= 10.
    pub fn paper(seed: u64) -> Self {
        TrainConfig {
            iterations: 390_000,
            ..TrainConfig::desk(seed)
        }
    }
}

/// One row of the training loss log.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossLogRow {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

/// A trained denoiser together with the input maps and the sampling
/// distribution it was trained under.
#[derive(Clone)]
pub struct TrainedModel {
    pub mlp: Mlp,
    pub state: ModelState,
    pub x_map: Standardizer,
    pub y_map: Standardizer,
    /// Use the EMA shadow weights at inference (default) or the raw weights.
    pub use_ema: bool,
    pub sampling: SamplingConfig,
    pub loss_log: Vec<LossLogRow>,
    /// Fraction of null-conditioned examples actually seen during training.
    pub observed_null_fraction: f64,
}

impl TrainedModel {
    pub fn inference_weights(&self) -> &[f64] {
        if self.use_ema {
            &self.state.ema_weights
        } else {
            &self.state.weights
        }
    }

    pub fn context<'a>(&'a self, task: &'a TaskSpec) -> EstimationContext<'a> {
        EstimationContext {
            denoiser: self,
            task,
            x_map: self.x_map.clone(),
            y_map: self.y_map.clone(),
        }
    }
}

impl Denoiser for TrainedModel {
    fn dim_x(&self) -> usize {
        self.mlp.config().output_dim
    }

    fn dim_y(&self) -> usize {
        self.mlp.config().cond_dim
    }

    fn denoise(&self, z: &[f64], log_snr: f64, y: Option<&[f64]>) -> Vec<f64> {
        self.mlp
            .forward(self.inference_weights(), z, log_snr, y)
            .expect("forward on validated inputs")
    }

    fn denoise_batch(&self, z: &Matrix, log_snr: &[f64], y: &Matrix, cond: &[bool]) -> Matrix {
        let mut yz = y.clone();
        for i in 0..yz.rows() {
            if !cond[i] {
                yz.row_mut(i).fill(0.0);
            }
        }
        let batch = DenoiseBatch {
            z: z.clone(),
            log_snr: log_snr.to_vec(),
            y: yz,
            cond_flag: cond.to_vec(),
        };
        self.mlp
            .forward_batch(self.inference_weights(), &batch)
            .expect("forward on validated inputs")
    }
}

/// Trains a denoiser on fresh samples from the task (infinite-data regime).
///
/// Each step draws a batch of (x, y) pairs, per-example log-SNRs from the
/// proposal, noises x through the channel, nulls y with probability
/// `null_prob`, and takes one Adam step on the mean squared denoising error.
pub fn train(
    task: &TaskSpec,
    mlp_cfg: MlpConfig,
    tc: &TrainConfig,
    oc: &OptimizerConfig,
) -> Result<TrainedModel> {
    tc.validate()?;
    oc.validate()?;
    task.validate()?;
    if mlp_cfg.cond_dim != task.dim_y() || mlp_cfg.output_dim != task.dim_x() {
        return Err(Error::Config(format!(
            "network dims ({}, {}) do not match task dims ({}, {})",
            mlp_cfg.output_dim,
            mlp_cfg.cond_dim,
            task.dim_x(),
            task.dim_y()
        )));
    }
    let mlp = Mlp::new(mlp_cfg)?;
    let mut rng = ChaCha12Rng::seed_from_u64(tc.seed);

    let (x_map, y_map) = if tc.standardize {
        let fit_batch = task.sample(tc.standardize_samples, &mut rng)?;
        (Standardizer::fit(&fit_batch.xs), Standardizer::fit(&fit_batch.ys))
    } else {
        (
            Standardizer::identity(task.dim_x()),
            Standardizer::identity(task.dim_y()),
        )
    };

    let weights = mlp.init_weights(&mut rng);
    let mut state = ModelState::new(weights, tc.lr);
    let mut scheduler = PlateauScheduler::new(oc.plateau_patience, oc.plateau_factor);
    let mut loss_log = Vec::with_capacity(tc.iterations);
    let mut epoch_loss_sum = 0.0;
    let mut null_count = 0usize;

    let dx = task.dim_x();
    let n = tc.batch_size;
    for step in 0..tc.iterations {
        let mut batch = task.sample(n, &mut rng)?;
        x_map.apply(&mut batch.xs);
        y_map.apply(&mut batch.ys);
        let mut z = Matrix::zeros(n, dx);
        let mut log_snr = Vec::with_capacity(n);
        let mut cond_flag = Vec::with_capacity(n);
        for i in 0..n {
            let (t, _) = sample_log_snr(&tc.sampling, &mut rng);
            let (a, b) = channel_coefficients(t.exp());
            let zi = z.row_mut(i);
            for (j, x) in batch.xs.row(i).iter().enumerate() {
                let eps: f64 = StandardNormal.sample(&mut rng);
                zi[j] = a * x + b * eps;
            }
            log_snr.push(t);
            let null = rng.random_bool(tc.null_prob);
            if null {
                batch.ys.row_mut(i).fill(0.0);
                null_count += 1;
            }
            cond_flag.push(!null);
        }
        let dbatch = DenoiseBatch {
            z,
            log_snr,
            y: batch.ys,
            cond_flag,
        };
        let (loss, grad) = mlp
            .residual_loss_and_grad(&state.weights, &dbatch, &batch.xs)
            .map_err(|e| match e {
                Error::Numeric { msg, .. } => Error::Numeric { step, msg },
                other => other,
            })?;
        if !loss.is_finite() {
            return Err(Error::Numeric {
                step,
                msg: "training diverged".into(),
            });
        }
        adam_step(&mut state, &grad, oc)?;
        loss_log.push(LossLogRow {
            step,
            loss,
            lr: state.lr,
        });
        epoch_loss_sum += loss;
        if (step + 1) % tc.epoch_steps == 0 {
            let epoch_loss = epoch_loss_sum / tc.epoch_steps as f64;
            state.lr = scheduler.update(epoch_loss, state.lr);
            epoch_loss_sum = 0.0;
        }
    }

    Ok(TrainedModel {
        mlp,
        state,
        x_map,
        y_map,
        use_ema: true,
        sampling: tc.sampling,
        loss_log,
        observed_null_fraction: null_count as f64 / (tc.iterations * n) as f64,
    })
}

/// Result of the two-stage adaptive procedure.
pub struct TwoStageResult {
    pub preliminary: TrainedModel,
    pub final_model: TrainedModel,
    pub fit: AdaptiveFit,
}

/// Two-stage training: a preliminary model under the default proposal, an
/// adaptive fit of the proposal from its conditional MMSE curve, then a final
/// model trained under the fitted proposal. Falls back to the defaults (and
/// reuses the preliminary model) when no crossing is found.
pub fn two_stage_train(
    task: &TaskSpec,
    mlp_cfg: MlpConfig,
    tc: &TrainConfig,
    oc: &OptimizerConfig,
) -> Result<TwoStageResult> {
    let preliminary = train(task, mlp_cfg, tc, oc)?;
    let mut curve_rng = ChaCha12Rng::seed_from_u64(tc.seed ^ CURVE_SEED_SALT);
    let ctx = preliminary.context(task);
    let curve = mmse_curve(&ctx, &default_curve_grid(), 4096, &mut curve_rng)?;
    let fit = fit_adaptive(&curve, task.dim_x(), &tc.sampling);
    let final_model = if fit.config == tc.sampling {
        // identical config and seed would reproduce the same model bit for bit
        preliminary.clone()
    } else {
        let tc2 = TrainConfig {
            sampling: fit.config,
            ..tc.clone()
        };
        train(task, mlp_cfg, &tc2, oc)?
    };
    Ok(TwoStageResult {
        preliminary,
        final_model,
        fit,
    })
}

const CURVE_SEED_SALT: u64 = 0x6375_7276_655f_7365;
