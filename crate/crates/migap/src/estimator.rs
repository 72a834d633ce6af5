//! MI estimation from denoisers: MMSE curves, the importance-sampled gap
//! estimator, the orthogonal-form estimator, the adaptive proposal fit and
//! pointwise log-density evaluation.
//!
//! Everything here works against the [`Denoiser`] trait, so the exact
//! Gaussian oracle and a trained network are interchangeable.

use crate::channel::{channel_coefficients, importance_weight, sample_log_snr, SamplingConfig};
use crate::error::{Error, Result};
use crate::gauss::GaussianDenoiser;
use crate::linalg::Matrix;
use crate::tasks::{Standardizer, TaskSpec};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Anything that maps `(z, log_snr, optional y)` to a denoised estimate of x.
pub trait Denoiser {
    fn dim_x(&self) -> usize;

    fn dim_y(&self) -> usize;

    fn denoise(&self, z: &[f64], log_snr: f64, y: Option<&[f64]>) -> Vec<f64>;

    /// Batched pass. `y` rows are ignored where `cond` is false.
    /// The default loops; network-backed implementations override this.
    fn denoise_batch(&self, z: &Matrix, log_snr: &[f64], y: &Matrix, cond: &[bool]) -> Matrix {
        let mut out = Matrix::zeros(z.rows(), self.dim_x());
        for i in 0..z.rows() {
            let yi = cond[i].then(|| y.row(i));
            let o = self.denoise(z.row(i), log_snr[i], yi);
            out.row_mut(i).copy_from_slice(&o);
        }
        out
    }
}

impl Denoiser for GaussianDenoiser {
    fn dim_x(&self) -> usize {
        self.dim()
    }

    fn dim_y(&self) -> usize {
        self.dim_cond()
    }

    fn denoise(&self, z: &[f64], log_snr: f64, y: Option<&[f64]>) -> Vec<f64> {
        GaussianDenoiser::denoise(self, z, log_snr, y)
    }
}

/// A denoiser paired with the task it models and the affine maps that take
/// raw task samples into the denoiser's input space.
pub struct EstimationContext<'a> {
    pub denoiser: &'a dyn Denoiser,
    pub task: &'a TaskSpec,
    pub x_map: Standardizer,
    pub y_map: Standardizer,
}

impl<'a> EstimationContext<'a> {
    /// Context with identity maps (oracle denoisers operate on raw samples).
    pub fn raw(denoiser: &'a dyn Denoiser, task: &'a TaskSpec) -> Self {
        EstimationContext {
            denoiser,
            task,
            x_map: Standardizer::identity(task.dim_x()),
            y_map: Standardizer::identity(task.dim_y()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Gap,
    GapAdaptive,
    Orthogonal,
    OrthogonalAdaptive,
}

impl Variant {
    pub fn is_adaptive(self) -> bool {
        matches!(self, Variant::GapAdaptive | Variant::OrthogonalAdaptive)
    }

    pub fn is_orthogonal(self) -> bool {
        matches!(self, Variant::Orthogonal | Variant::OrthogonalAdaptive)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Gap => "gap",
            Variant::GapAdaptive => "gap-adaptive",
            Variant::Orthogonal => "orthogonal",
            Variant::OrthogonalAdaptive => "orthogonal-adaptive",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gap" => Ok(Variant::Gap),
            "gap-adaptive" => Ok(Variant::GapAdaptive),
            "orthogonal" => Ok(Variant::Orthogonal),
            "orthogonal-adaptive" => Ok(Variant::OrthogonalAdaptive),
            other => Err(Error::Config(format!("unknown variant '{other}'"))),
        }
    }
}

/// Gridded conditional and unconditional MMSE values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MmseCurve {
    pub grid: Vec<f64>,
    pub uncond: Vec<f64>,
    pub cond: Vec<f64>,
    /// Mean squared distance between the conditional and unconditional
    /// outputs at each grid point (the orthogonal-form integrand).
    pub ortho: Vec<f64>,
    pub samples_per_point: usize,
}

/// Final MI estimate with dispersion across independent estimation passes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MiEstimate {
    pub mean_nats: f64,
    pub std_nats: f64,
    pub variant: Variant,
    pub n_points: usize,
    pub inference_times: usize,
    pub sampling: SamplingConfig,
}

impl MiEstimate {
    pub fn mean_bits(&self) -> f64 {
        self.mean_nats / std::f64::consts::LN_2
    }
}

const EVAL_CHUNK: usize = 4096;

/// Evaluates both passes (conditional and unconditional) on a standardized
/// sample block, sharing the noise realizations between the passes.
fn both_passes<R: Rng>(
    ctx: &EstimationContext,
    xs: &Matrix,
    ys: &Matrix,
    log_snr: &[f64],
    rng: &mut R,
) -> (Matrix, Matrix, Matrix) {
    let n = xs.rows();
    let d = xs.cols();
    let mut z = Matrix::zeros(n, d);
    for i in 0..n {
        let (a, b) = channel_coefficients(log_snr[i].exp());
        let zi = z.row_mut(i);
        for (j, x) in xs.row(i).iter().enumerate() {
            let eps: f64 = StandardNormal.sample(rng);
            zi[j] = a * x + b * eps;
        }
    }
    let mut xu = Matrix::zeros(n, d);
    let mut xc = Matrix::zeros(n, d);
    let mut start = 0;
    while start < n {
        let len = EVAL_CHUNK.min(n - start);
        let mut zc = Matrix::zeros(len, d);
        let mut yc = Matrix::zeros(len, ys.cols());
        let mut ts = vec![0.0; len];
        for i in 0..len {
            zc.row_mut(i).copy_from_slice(z.row(start + i));
            yc.row_mut(i).copy_from_slice(ys.row(start + i));
            ts[i] = log_snr[start + i];
        }
        let ou = ctx
            .denoiser
            .denoise_batch(&zc, &ts, &yc, &vec![false; len]);
        let oc = ctx.denoiser.denoise_batch(&zc, &ts, &yc, &vec![true; len]);
        for i in 0..len {
            xu.row_mut(start + i).copy_from_slice(ou.row(i));
            xc.row_mut(start + i).copy_from_slice(oc.row(i));
        }
        start += len;
    }
    (z, xu, xc)
}

fn sq_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Monte-Carlo MMSE curve over a log-SNR grid with shared noise realizations
/// between the conditional and unconditional passes.
pub fn mmse_curve<R: Rng>(
    ctx: &EstimationContext,
    grid: &[f64],
    samples_per_point: usize,
    rng: &mut R,
) -> Result<MmseCurve> {
    if grid.is_empty() {
        return Err(Error::Config("grid must be non-empty".into()));
    }
    let mut uncond = Vec::with_capacity(grid.len());
    let mut cond = Vec::with_capacity(grid.len());
    let mut ortho = Vec::with_capacity(grid.len());
    for &t in grid {
        let mut batch = ctx.task.sample(samples_per_point, rng)?;
        ctx.x_map.apply(&mut batch.xs);
        ctx.y_map.apply(&mut batch.ys);
        let ts = vec![t; samples_per_point];
        let (_, xu, xc) = both_passes(ctx, &batch.xs, &batch.ys, &ts, rng);
        let mut su = 0.0;
        let mut sc = 0.0;
        let mut so = 0.0;
        for i in 0..samples_per_point {
            su += sq_err(batch.xs.row(i), xu.row(i));
            sc += sq_err(batch.xs.row(i), xc.row(i));
            so += sq_err(xu.row(i), xc.row(i));
        }
        uncond.push(su / samples_per_point as f64);
        cond.push(sc / samples_per_point as f64);
        ortho.push(so / samples_per_point as f64);
    }
    Ok(MmseCurve {
        grid: grid.to_vec(),
        uncond,
        cond,
        ortho,
        samples_per_point,
    })
}

/// Default curve grid: 64 uniform points in log-SNR [-10, 10].
pub fn default_curve_grid() -> Vec<f64> {
    uniform_grid(-10.0, 10.0, 64)
}

pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn run_passes<R: Rng>(
    ctx: &EstimationContext,
    cfg: &SamplingConfig,
    variant: Variant,
    rng: &mut R,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut rep_means = Vec::with_capacity(cfg.inference_times);
    for _ in 0..cfg.inference_times {
        let mut batch = ctx.task.sample(cfg.n_points, rng)?;
        ctx.x_map.apply(&mut batch.xs);
        ctx.y_map.apply(&mut batch.ys);
        let mut ts = Vec::with_capacity(cfg.n_points);
        let mut weights = Vec::with_capacity(cfg.n_points);
        for _ in 0..cfg.n_points {
            let (t, dens) = sample_log_snr(cfg, rng);
            weights.push(importance_weight(t, dens)?);
            ts.push(t);
        }
        let (_, xu, xc) = both_passes(ctx, &batch.xs, &batch.ys, &ts, rng);
        let mut sum = 0.0;
        for i in 0..cfg.n_points {
            let x = batch.xs.row(i);
            let contrib = if variant.is_orthogonal() {
                let d2 = sq_err(xc.row(i), xu.row(i));
                debug_assert!(d2 >= 0.0);
                d2
            } else {
                sq_err(x, xu.row(i)) - sq_err(x, xc.row(i))
            };
            sum += 0.5 * contrib * weights[i];
        }
        rep_means.push(sum / cfg.n_points as f64);
    }
    Ok(rep_means)
}

fn summarize(rep_means: Vec<f64>, variant: Variant, cfg: &SamplingConfig) -> MiEstimate {
    let n = rep_means.len() as f64;
    let mean = rep_means.iter().sum::<f64>() / n;
    let std = if rep_means.len() >= 2 {
        (rep_means.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    MiEstimate {
        mean_nats: mean,
        std_nats: std,
        variant,
        n_points: cfg.n_points,
        inference_times: cfg.inference_times,
        sampling: *cfg,
    }
}

/// Importance-sampled MMSE-gap MI estimate. Signed by construction: negative
/// per-sample contributions are reported as-is.
pub fn estimate_gap<R: Rng>(
    ctx: &EstimationContext,
    cfg: &SamplingConfig,
    rng: &mut R,
) -> Result<MiEstimate> {
    let reps = run_passes(ctx, cfg, Variant::Gap, rng)?;
    Ok(summarize(reps, Variant::Gap, cfg))
}

/// Orthogonal-form MI estimate: half the weighted squared distance between
/// the conditional and unconditional denoiser outputs. Every per-sample
/// contribution is nonnegative.
pub fn estimate_orthogonal<R: Rng>(
    ctx: &EstimationContext,
    cfg: &SamplingConfig,
    rng: &mut R,
) -> Result<MiEstimate> {
    let reps = run_passes(ctx, cfg, Variant::Orthogonal, rng)?;
    Ok(summarize(reps, Variant::Orthogonal, cfg))
}

pub fn estimate<R: Rng>(
    ctx: &EstimationContext,
    cfg: &SamplingConfig,
    variant: Variant,
    rng: &mut R,
) -> Result<MiEstimate> {
    let reps = run_passes(ctx, cfg, variant, rng)?;
    Ok(summarize(reps, variant, cfg))
}

/// Result of fitting the log-SNR proposal to a conditional MMSE curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptiveFit {
    pub config: SamplingConfig,
    /// True when a crossing was missing and defaults were kept.
    pub fallback: bool,
    pub half_crossing: Option<f64>,
    pub quarter_crossing: Option<f64>,
}

const MIN_ADAPTIVE_SCALE: f64 = 0.5;

/// First downward crossing of `threshold` by `values` over `grid`, linearly
/// interpolated between the bracketing grid points.
fn first_downward_crossing(grid: &[f64], values: &[f64], threshold: f64) -> Option<f64> {
    for i in 0..grid.len().saturating_sub(1) {
        if values[i] >= threshold && values[i + 1] < threshold {
            let frac = (values[i] - threshold) / (values[i] - values[i + 1]);
            return Some(grid[i] + frac * (grid[i + 1] - grid[i]));
        }
    }
    None
}

/// Fits the proposal location to the d/2 crossing of the conditional MMSE
/// curve and the scale to the spread between the d/2 and d/4 crossings,
/// keeping clip and budgets from `defaults`.
pub fn fit_adaptive(curve: &MmseCurve, dim: usize, defaults: &SamplingConfig) -> AdaptiveFit {
    let d = dim as f64;
    let half = first_downward_crossing(&curve.grid, &curve.cond, d / 2.0);
    let quarter = first_downward_crossing(&curve.grid, &curve.cond, d / 4.0);
    match (half, quarter) {
        (Some(h), Some(q)) => AdaptiveFit {
            config: SamplingConfig {
                loc: h,
                scale: (q - h).max(MIN_ADAPTIVE_SCALE),
                ..*defaults
            },
            fallback: false,
            half_crossing: Some(h),
            quarter_crossing: Some(q),
        },
        (h, q) => AdaptiveFit {
            config: *defaults,
            fallback: true,
            half_crossing: h,
            quarter_crossing: q,
        },
    }
}

/// Outcome of a pointwise log-density evaluation.
#[derive(Debug, Clone)]
pub struct LogDensity {
    pub log_density_nats: f64,
    /// Set when the integrand has not decayed at the grid endpoints.
    pub narrow_grid_warning: bool,
}

/// Pointwise log-density of `x` (or of `x` given `y`) by trapezoidal
/// integration of the pointwise-MMSE identity over the log-SNR grid, with a
/// Monte-Carlo pointwise MMSE at each node.
pub fn pointwise_log_density<R: Rng>(
    ctx: &EstimationContext,
    x: &[f64],
    y: Option<&[f64]>,
    grid: &[f64],
    mc_budget: usize,
    rng: &mut R,
) -> Result<LogDensity> {
    if grid.len() < 2 {
        return Err(Error::Config("quadrature grid needs at least 2 nodes".into()));
    }
    let d = x.len();
    if d != ctx.denoiser.dim_x() {
        return Err(Error::Config("x dimension mismatch".into()));
    }
    let mut integrand = Vec::with_capacity(grid.len());
    for &t in grid {
        let gamma = t.exp();
        let (a, b) = channel_coefficients(gamma);
        let mut z = Matrix::zeros(mc_budget, d);
        let mut eps = Matrix::zeros(mc_budget, d);
        for i in 0..mc_budget {
            let zi = z.row_mut(i);
            for (j, xv) in x.iter().enumerate() {
                let e: f64 = StandardNormal.sample(rng);
                eps.row_mut(i)[j] = e;
                zi[j] = a * xv + b * e;
            }
        }
        let ts = vec![t; mc_budget];
        let mut yrow = Matrix::zeros(mc_budget, ctx.denoiser.dim_y());
        if let Some(yv) = y {
            for i in 0..mc_budget {
                yrow.row_mut(i)[..yv.len()].copy_from_slice(yv);
            }
        }
        let flags = vec![y.is_some(); mc_budget];
        let xhat = ctx.denoiser.denoise_batch(&z, &ts, &yrow, &flags);
        // Integrand in log-SNR space: gamma * (d/(1+gamma) - mmse(x|gamma)).
        // At high SNR the two terms are both O(1) while their difference is
        // O(1/gamma), so a plain Monte-Carlo mmse leaves noise that does not
        // decay with gamma. The inverted-channel error |eps|^2/gamma has
        // known mean d/gamma and tracks the denoiser error sample by sample,
        // so subtracting it as a control variate restores the decay.
        let val = if gamma > 1.0 {
            let mut diff = 0.0;
            for i in 0..mc_budget {
                let e2: f64 = eps.row(i).iter().map(|v| v * v).sum();
                diff += e2 / gamma - sq_err(x, xhat.row(i));
            }
            diff /= mc_budget as f64;
            gamma * (diff - d as f64 / (gamma * (1.0 + gamma)))
        } else {
            let mut mmse = 0.0;
            for i in 0..mc_budget {
                mmse += sq_err(x, xhat.row(i));
            }
            mmse /= mc_budget as f64;
            gamma * (d as f64 / (1.0 + gamma) - mmse)
        };
        integrand.push(val);
    }
    let mut integral = 0.0;
    for i in 0..grid.len() - 1 {
        integral += 0.5 * (integrand[i] + integrand[i + 1]) * (grid[i + 1] - grid[i]);
    }
    let peak = integrand.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-12);
    let narrow = integrand[0].abs() > 1e-3 * peak
        || integrand[grid.len() - 1].abs() > 1e-3 * peak;
    let log_density =
        -(d as f64) / 2.0 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln()
            + 0.5 * integral;
    Ok(LogDensity {
        log_density_nats: log_density,
        narrow_grid_warning: narrow,
    })
}

/// Deterministic trapezoidal quadrature of the closed-form Gaussian gap
/// integrand in log-SNR space; the oracle path of the MI identity.
pub fn gaussian_gap_quadrature(
    spec: &crate::gauss::JointGaussianSpec,
    lo: f64,
    hi: f64,
    nodes: usize,
) -> Result<f64> {
    let cov_xx = spec.cov_xx();
    let cov_xgy = spec.cov_x_given_y()?;
    let grid = uniform_grid(lo, hi, nodes);
    let mut vals = Vec::with_capacity(nodes);
    for &t in &grid {
        let gamma = t.exp();
        let gap = crate::gauss::gaussian_mmse(&cov_xx, gamma)?
            - crate::gauss::gaussian_mmse(&cov_xgy, gamma)?;
        vals.push(gamma * gap);
    }
    let mut integral = 0.0;
    for i in 0..nodes - 1 {
        integral += 0.5 * (vals[i] + vals[i + 1]) * (grid[i + 1] - grid[i]);
    }
    Ok(0.5 * integral)
}
