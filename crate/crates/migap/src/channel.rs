//! Gaussian SNR channel and the truncated-logistic log-SNR proposal.
//!
//! The channel is `z = sqrt(g/(1+g)) x + sqrt(1/(1+g)) eps` with SNR `g` and
//! standard normal noise. Log-SNR values for Monte-Carlo integration are drawn
//! from a logistic distribution truncated to `loc +/- clip*scale` (sampled by
//! inverse CDF, no rejection), and each draw carries its renormalized density
//! so integrals over SNR can be importance-weighted.

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// One draw from the noise channel.
#[derive(Debug, Clone)]
pub struct ChannelSample {
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
    pub gamma: f64,
    pub noise: Vec<f64>,
    pub z: Vec<f64>,
}

/// Log-SNR proposal distribution and Monte-Carlo budgets.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    /// Logistic location in log-SNR.
    pub loc: f64,
    /// Logistic scale.
    pub scale: f64,
    /// Truncation half-width in units of scale.
    pub clip: f64,
    /// Monte-Carlo samples per estimation pass.
    pub n_points: usize,
    /// Number of independent estimation passes (mean and std are reported
    /// across them).
    pub inference_times: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            loc: 2.0,
            scale: 3.0,
            clip: 4.0,
            n_points: 10_000,
            inference_times: 10,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scale <= 0.0 || self.clip <= 0.0 {
            return Err(Error::Config("scale and clip must be positive".into()));
        }
        if self.n_points == 0 || self.inference_times == 0 {
            return Err(Error::Config("n_points and inference_times must be >= 1".into()));
        }
        Ok(())
    }

    pub fn bounds(&self) -> (f64, f64) {
        (
            self.loc - self.clip * self.scale,
            self.loc + self.clip * self.scale,
        )
    }

    /// Probability mass of the untruncated logistic inside the bounds.
    fn truncation_mass(&self) -> f64 {
        logistic_cdf(self.clip) - logistic_cdf(-self.clip)
    }

    /// Renormalized density of the truncated logistic at `log_snr`.
    pub fn density(&self, log_snr: f64) -> f64 {
        let (lo, hi) = self.bounds();
        if log_snr < lo || log_snr > hi {
            return 0.0;
        }
        let u = (log_snr - self.loc) / self.scale;
        let s = logistic_cdf(u);
        s * (1.0 - s) / self.scale / self.truncation_mass()
    }
}

#[inline]
fn logistic_cdf(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn logistic_quantile(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Pushes `x` through the channel at SNR `gamma` with fresh standard normal noise.
pub fn add_noise<R: Rng>(x: &[f64], gamma: f64, rng: &mut R) -> Result<ChannelSample> {
    if gamma <= 0.0 || !gamma.is_finite() {
        return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Domain("x must be finite".into()));
    }
    let a = (gamma / (1.0 + gamma)).sqrt();
    let b = (1.0 / (1.0 + gamma)).sqrt();
    let noise: Vec<f64> = (0..x.len()).map(|_| StandardNormal.sample(rng)).collect();
    let z = x
        .iter()
        .zip(&noise)
        .map(|(xv, nv)| a * xv + b * nv)
        .collect();
    Ok(ChannelSample {
        x: x.to_vec(),
        y: None,
        gamma,
        noise,
        z,
    })
}

/// Channel mixing coefficients `(sqrt(g/(1+g)), sqrt(1/(1+g)))`.
/// `g/(1+g)` is computed as `1 - 1/(1+g)` so the pair stays finite and
/// exactly unit-norm even for enormous gamma.
#[inline]
pub fn channel_coefficients(gamma: f64) -> (f64, f64) {
    let b2 = 1.0 / (1.0 + gamma);
    ((1.0 - b2).sqrt(), b2.sqrt())
}

/// Draws a log-SNR from the truncated logistic by inverse CDF and returns it
/// together with its renormalized density.
pub fn sample_log_snr<R: Rng>(cfg: &SamplingConfig, rng: &mut R) -> (f64, f64) {
    let p_lo = logistic_cdf(-cfg.clip);
    let p_hi = logistic_cdf(cfg.clip);
    let u: f64 = rng.random_range(0.0..1.0);
    let p = p_lo + u * (p_hi - p_lo);
    let t = cfg.loc + cfg.scale * logistic_quantile(p);
    // clamp guards against the last-ulp excursions of the inverse CDF
    let (lo, hi) = cfg.bounds();
    let t = t.clamp(lo, hi);
    (t, cfg.density(t))
}

/// Importance weight `1/q(gamma)` for a draw at `log_snr` with proposal
/// density `density` in log-SNR space. Under the change of variables
/// `gamma = exp(t)` this is `gamma / f_T(t)`.
pub fn importance_weight(log_snr: f64, density: f64) -> Result<f64> {
    if density <= 0.0 {
        return Err(Error::Domain("proposal density must be positive".into()));
    }
    Ok(log_snr.exp() / density)
}
