//! Residual-MLP denoiser with hand-written reverse-mode differentiation.
//!
//! The network maps `(z, log_snr, y, cond_flag)` to a denoised estimate of x.
//! Inputs are concatenated: the noised vector z, a sinusoidal embedding of
//! log-SNR, the conditioning vector y (zeros when absent) and a binary
//! conditioning flag. An input projection is followed by `n_blocks` residual
//! blocks (`h + W2 silu(W1 h + b1) + b2`) and a zero-initialized output layer.
//!
//! The denoised estimate uses the channel coefficients as a skip connection:
//! `xhat = a(g) z + b(g) f(z, g, y)` with `a = sqrt(g/(1+g))`,
//! `b = sqrt(1/(1+g))`. The network therefore only has to model the O(1)
//! correction to the channel mixture: at high SNR the optimal correction
//! vanishes, so network error enters the MMSE suppressed by `b^2 = 1/(1+g)`
//! and the importance-weighted gap integrand stays bounded instead of being
//! amplified by the `e^t` change-of-variables factor. With the zero-init
//! output layer the untrained denoiser is exactly `a z`.
//!
//! Parameters live in one flat vector; the layout is fixed by [`MlpConfig`]
//! so the optimizer, EMA and checkpoints can treat weights as opaque slices.

use crate::channel::channel_coefficients;
use crate::error::{Error, Result};
use crate::linalg::{affine_forward, affine_grad_input, affine_grad_weights, Matrix};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Frequency range for the sinusoidal log-SNR embedding. Geometric spacing
/// between these bounds keeps the features smooth over log-SNR in [-14, 14].
const EMBED_FREQ_MIN: f64 = 1.0 / 16.0;
const EMBED_FREQ_MAX: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    /// Dimension of the noised input z (equals the data dimension).
    pub input_dim: usize,
    /// Hidden width of every layer.
    pub width: usize,
    /// Number of residual blocks.
    pub n_blocks: usize,
    /// Size of the sinusoidal log-SNR embedding (must be even).
    pub time_embed_dim: usize,
    /// Dimension of the conditioning variable y.
    pub cond_dim: usize,
    /// Dimension of the denoised output (equals the data dimension).
    pub output_dim: usize,
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.n_blocks == 0 {
            return Err(Error::Config("width and n_blocks must be positive".into()));
        }
        if self.input_dim != self.output_dim {
            return Err(Error::Config(
                "input_dim must equal output_dim (both are the data dimension)".into(),
            ));
        }
        if self.time_embed_dim < 2 || self.time_embed_dim % 2 != 0 {
            return Err(Error::Config("time_embed_dim must be even and >= 2".into()));
        }
        Ok(())
    }

    /// Total input features after concatenation: z, time embedding, y, flag.
    pub fn in_features(&self) -> usize {
        self.input_dim + self.time_embed_dim + self.cond_dim + 1
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
fn silu_deriv(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Writes the sinusoidal embedding of `log_snr` into `out`.
pub fn time_embedding(log_snr: f64, out: &mut [f64]) {
    let half = out.len() / 2;
    for i in 0..half {
        let frac = if half > 1 {
            i as f64 / (half - 1) as f64
        } else {
            0.5
        };
        let freq = EMBED_FREQ_MIN * (EMBED_FREQ_MAX / EMBED_FREQ_MIN).powf(frac);
        out[2 * i] = (freq * log_snr).sin();
        out[2 * i + 1] = (freq * log_snr).cos();
    }
}

/// Offsets of each layer's weights inside the flat parameter vector.
#[derive(Clone)]
struct Layout {
    w_in: usize,
    b_in: usize,
    blocks: Vec<(usize, usize, usize, usize)>, // (w1, b1, w2, b2)
    w_out: usize,
    b_out: usize,
    total: usize,
}

impl Layout {
    fn new(cfg: &MlpConfig) -> Self {
        let w = cfg.width;
        let mut off = 0;
        let w_in = off;
        off += w * cfg.in_features();
        let b_in = off;
        off += w;
        let mut blocks = Vec::with_capacity(cfg.n_blocks);
        for _ in 0..cfg.n_blocks {
            let w1 = off;
            off += w * w;
            let b1 = off;
            off += w;
            let w2 = off;
            off += w * w;
            let b2 = off;
            off += w;
            blocks.push((w1, b1, w2, b2));
        }
        let w_out = off;
        off += cfg.output_dim * w;
        let b_out = off;
        off += cfg.output_dim;
        Layout {
            w_in,
            b_in,
            blocks,
            w_out,
            b_out,
            total: off,
        }
    }
}

/// The denoiser network: configuration plus parameter layout. Weights are
/// passed in explicitly so the same `Mlp` serves raw and EMA parameters.
#[derive(Clone)]
pub struct Mlp {
    config: MlpConfig,
    layout: Layout,
}

/// One batch of denoising inputs. `y` holds zeros on rows where
/// `cond_flag` is false.
pub struct DenoiseBatch {
    pub z: Matrix,
    pub log_snr: Vec<f64>,
    pub y: Matrix,
    pub cond_flag: Vec<bool>,
}

impl Mlp {
    pub fn new(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        Ok(Mlp { config, layout })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn n_params(&self) -> usize {
        self.layout.total
    }

    /// Fan-in uniform initialization; the output layer starts at zero so the
    /// initial denoiser is exactly the channel-coefficient skip `a z`.
    pub fn init_weights<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut w = vec![0.0; self.layout.total];
        let cfg = &self.config;
        let mut init = |offset: usize, out_dim: usize, in_dim: usize| {
            let bound = 1.0 / (in_dim as f64).sqrt();
            for v in &mut w[offset..offset + out_dim * in_dim] {
                *v = rng.random_range(-bound..bound);
            }
        };
        init(self.layout.w_in, cfg.width, cfg.in_features());
        let blocks = self.layout.blocks.clone();
        for (w1, _, w2, _) in blocks {
            init(w1, cfg.width, cfg.width);
            init(w2, cfg.width, cfg.width);
        }
        // output layer and all biases stay zero
        w
    }

    fn build_input(&self, batch: &DenoiseBatch) -> Result<Matrix> {
        let cfg = &self.config;
        let n = batch.z.rows();
        if batch.z.cols() != cfg.input_dim {
            return Err(Error::Config(format!(
                "z has {} columns, expected {}",
                batch.z.cols(),
                cfg.input_dim
            )));
        }
        if batch.y.cols() != cfg.cond_dim || batch.y.rows() != n {
            return Err(Error::Config("conditioning batch shape mismatch".into()));
        }
        if batch.log_snr.len() != n || batch.cond_flag.len() != n {
            return Err(Error::Config("batch field lengths disagree".into()));
        }
        let mut u = Matrix::zeros(n, cfg.in_features());
        for i in 0..n {
            let zi = batch.z.row(i);
            let yi = batch.y.row(i);
            let ui = u.row_mut(i);
            ui[..cfg.input_dim].copy_from_slice(zi);
            let te = &mut ui[cfg.input_dim..cfg.input_dim + cfg.time_embed_dim];
            time_embedding(batch.log_snr[i], te);
            let yoff = cfg.input_dim + cfg.time_embed_dim;
            if batch.cond_flag[i] {
                ui[yoff..yoff + cfg.cond_dim].copy_from_slice(yi);
                ui[yoff + cfg.cond_dim] = 1.0;
            }
        }
        Ok(u)
    }

    /// Batched forward pass; returns the `(n, output_dim)` denoised estimates.
    pub fn forward_batch(&self, weights: &[f64], batch: &DenoiseBatch) -> Result<Matrix> {
        let (out, _) = self.forward_with_cache(weights, batch, false)?;
        Ok(out)
    }

    /// Single-example forward pass.
    pub fn forward(
        &self,
        weights: &[f64],
        z: &[f64],
        log_snr: f64,
        y: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let cfg = &self.config;
        if z.len() != cfg.input_dim {
            return Err(Error::Config("z length mismatch".into()));
        }
        let mut yv = vec![0.0; cfg.cond_dim];
        let flag = match y {
            Some(yy) => {
                if yy.len() != cfg.cond_dim {
                    return Err(Error::Config("y length mismatch".into()));
                }
                yv.copy_from_slice(yy);
                true
            }
            None => false,
        };
        let batch = DenoiseBatch {
            z: Matrix::from_vec(1, cfg.input_dim, z.to_vec())?,
            log_snr: vec![log_snr],
            y: Matrix::from_vec(1, cfg.cond_dim, yv)?,
            cond_flag: vec![flag],
        };
        let out = self.forward_batch(weights, &batch)?;
        Ok(out.row(0).to_vec())
    }

    fn forward_with_cache(
        &self,
        weights: &[f64],
        batch: &DenoiseBatch,
        keep_cache: bool,
    ) -> Result<(Matrix, Option<Cache>)> {
        if weights.len() != self.layout.total {
            return Err(Error::Config(format!(
                "weight vector has length {}, expected {}",
                weights.len(),
                self.layout.total
            )));
        }
        let cfg = &self.config;
        let lay = &self.layout;
        let n = batch.z.rows();
        let w = cfg.width;
        let u = self.build_input(batch)?;

        let mut pre0 = Matrix::zeros(n, w);
        affine_forward(
            &u,
            &weights[lay.w_in..lay.b_in],
            &weights[lay.b_in..lay.b_in + w],
            &mut pre0,
        );
        let mut h = pre0.clone();
        h.data_mut().iter_mut().for_each(|v| *v = silu(*v));

        let mut block_cache = Vec::new();
        for &(w1, b1, w2, _b2) in &lay.blocks {
            let mut pre = Matrix::zeros(n, w);
            affine_forward(
                &h,
                &weights[w1..w1 + w * w],
                &weights[b1..b1 + w],
                &mut pre,
            );
            let mut act = pre.clone();
            act.data_mut().iter_mut().for_each(|v| *v = silu(*v));
            let mut delta = Matrix::zeros(n, w);
            affine_forward(
                &act,
                &weights[w2..w2 + w * w],
                &weights[_b2.._b2 + w],
                &mut delta,
            );
            let h_in = if keep_cache { Some(h.clone()) } else { None };
            for (hv, dv) in h.data_mut().iter_mut().zip(delta.data()) {
                *hv += dv;
            }
            block_cache.push(BlockCache { h_in, pre, act });
        }

        let mut out = Matrix::zeros(n, cfg.output_dim);
        affine_forward(
            &h,
            &weights[lay.w_out..lay.w_out + cfg.output_dim * w],
            &weights[lay.b_out..lay.b_out + cfg.output_dim],
            &mut out,
        );
        // channel-coefficient skip: xhat = a z + b f(z, g, y)
        let mut b_coef = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b) = channel_coefficients(batch.log_snr[i].exp());
            let oi = out.row_mut(i);
            for (o, z) in oi.iter_mut().zip(batch.z.row(i)) {
                *o = a * z + b * *o;
            }
            b_coef.push(b);
        }
        let cache = keep_cache.then(|| Cache {
            u,
            pre0,
            blocks: block_cache,
            h_final: h,
            b_coef,
        });
        Ok((out, cache))
    }

    /// Mean squared denoising error over the batch and its exact reverse-mode
    /// gradient with respect to the flat weight vector.
    ///
    /// `loss = mean_i ||target_i - xhat_i||^2`.
    pub fn loss_and_grad(
        &self,
        weights: &[f64],
        batch: &DenoiseBatch,
        target: &Matrix,
    ) -> Result<(f64, Vec<f64>)> {
        self.loss_and_grad_impl(weights, batch, target, false)
    }

    /// SNR-balanced variant: each example's squared error is scaled by
    /// `1 + gamma = 1/b^2`, which measures the raw network output against its
    /// O(1) residual target `(x - a z)/b` instead of the x-space error that
    /// the skip suppresses by `b^2` at high SNR. The scale depends only on
    /// gamma, so the minimizer is still the posterior mean at every SNR, but
    /// gradients stay O(1) across the whole log-SNR range instead of
    /// vanishing exactly where the importance weights are largest.
    pub fn residual_loss_and_grad(
        &self,
        weights: &[f64],
        batch: &DenoiseBatch,
        target: &Matrix,
    ) -> Result<(f64, Vec<f64>)> {
        self.loss_and_grad_impl(weights, batch, target, true)
    }

    fn loss_and_grad_impl(
        &self,
        weights: &[f64],
        batch: &DenoiseBatch,
        target: &Matrix,
        snr_balanced: bool,
    ) -> Result<(f64, Vec<f64>)> {
        let cfg = &self.config;
        let lay = &self.layout;
        let n = batch.z.rows();
        if n == 0 {
            return Err(Error::Config("empty batch".into()));
        }
        if target.rows() != n || target.cols() != cfg.output_dim {
            return Err(Error::Config("target shape mismatch".into()));
        }
        let w = cfg.width;
        let (out, cache) = self.forward_with_cache(weights, batch, true)?;
        let cache = cache.expect("cache requested");

        let mut loss = 0.0;
        let mut dout = Matrix::zeros(n, cfg.output_dim);
        for i in 0..n {
            let b = cache.b_coef[i];
            let scale = if snr_balanced { 1.0 / (b * b) } else { 1.0 };
            let oi = out.row(i);
            let ti = target.row(i);
            let gi = dout.row_mut(i);
            for j in 0..cfg.output_dim {
                let r = oi[j] - ti[j];
                loss += scale * r * r;
                gi[j] = 2.0 * scale * r / n as f64;
            }
        }
        loss /= n as f64;
        if !loss.is_finite() {
            return Err(Error::Numeric {
                step: 0,
                msg: "non-finite loss".into(),
            });
        }
        // the skip scales the network output by b, so its gradient does too
        for i in 0..n {
            let b = cache.b_coef[i];
            for v in dout.row_mut(i) {
                *v *= b;
            }
        }

        let mut grad = vec![0.0; lay.total];
        // output layer (weights and bias are contiguous in the flat vector)
        {
            let seg = &mut grad[lay.w_out..lay.b_out + cfg.output_dim];
            let (gw, gb) = seg.split_at_mut(cfg.output_dim * w);
            affine_grad_weights(&dout, &cache.h_final, gw, gb);
        }
        let mut dh = Matrix::zeros(n, w);
        affine_grad_input(&dout, &weights[lay.w_out..lay.w_out + cfg.output_dim * w], &mut dh);

        // residual blocks in reverse; dh flows unchanged through the skip
        for (bi, &(w1, b1, w2, b2)) in lay.blocks.iter().enumerate().rev() {
            let bc = &cache.blocks[bi];
            let h_in = bc.h_in.as_ref().expect("cached block input");
            {
                let seg = &mut grad[w2..b2 + w];
                let (gw, gb) = seg.split_at_mut(w * w);
                affine_grad_weights(&dh, &bc.act, gw, gb);
            }
            let mut dact = Matrix::zeros(n, w);
            affine_grad_input(&dh, &weights[w2..w2 + w * w], &mut dact);
            for (dv, pv) in dact.data_mut().iter_mut().zip(bc.pre.data()) {
                *dv *= silu_deriv(*pv);
            }
            {
                let seg = &mut grad[w1..b1 + w];
                let (gw, gb) = seg.split_at_mut(w * w);
                affine_grad_weights(&dact, h_in, gw, gb);
            }
            let mut dskip = Matrix::zeros(n, w);
            affine_grad_input(&dact, &weights[w1..w1 + w * w], &mut dskip);
            for (hv, sv) in dh.data_mut().iter_mut().zip(dskip.data()) {
                *hv += sv;
            }
        }

        // input projection
        let mut dpre0 = dh;
        for (dv, pv) in dpre0.data_mut().iter_mut().zip(cache.pre0.data()) {
            *dv *= silu_deriv(*pv);
        }
        {
            let seg = &mut grad[lay.w_in..lay.b_in + w];
            let (gw, gb) = seg.split_at_mut(w * cfg.in_features());
            affine_grad_weights(&dpre0, &cache.u, gw, gb);
        }
        Ok((loss, grad))
    }
}

struct BlockCache {
    h_in: Option<Matrix>,
    pre: Matrix,
    act: Matrix,
}

struct Cache {
    u: Matrix,
    pre0: Matrix,
    blocks: Vec<BlockCache>,
    h_final: Matrix,
    b_coef: Vec<f64>,
}
