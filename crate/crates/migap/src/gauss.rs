//! Closed-form Gaussian oracles: exact MMSE, conditional MMSE, mutual
//! information, and the optimal linear denoiser for jointly Gaussian (x, y).
//!
//! These are the independent reference path for everything the trained
//! denoisers estimate: the oracle MI integral can be checked end-to-end with
//! deterministic quadrature and no neural network involved.

use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Joint zero-mean Gaussian over (x, y) described by the full covariance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointGaussianSpec {
    pub dim_x: usize,
    pub dim_y: usize,
    /// Row-major (dim_x + dim_y)^2 covariance entries.
    pub cov: Vec<f64>,
}

impl JointGaussianSpec {
    pub fn new(dim_x: usize, dim_y: usize, cov: Vec<f64>) -> Result<Self> {
        let spec = JointGaussianSpec { dim_x, dim_y, cov };
        spec.validate()?;
        Ok(spec)
    }

    fn dim(&self) -> usize {
        self.dim_x + self.dim_y
    }

    pub fn cov_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim(), self.dim(), &self.cov)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.cov.len() != d * d {
            return Err(Error::Config("covariance size mismatch".into()));
        }
        let m = self.cov_matrix();
        for i in 0..d {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-10 {
                    return Err(Error::Domain("covariance must be symmetric".into()));
                }
            }
        }
        Cholesky::new(m)
            .ok_or_else(|| Error::Domain("covariance must be positive definite".into()))?;
        Ok(())
    }

    pub fn cov_xx(&self) -> DMatrix<f64> {
        self.cov_matrix().view((0, 0), (self.dim_x, self.dim_x)).into()
    }

    pub fn cov_yy(&self) -> DMatrix<f64> {
        self.cov_matrix()
            .view((self.dim_x, self.dim_x), (self.dim_y, self.dim_y))
            .into()
    }

    pub fn cov_xy(&self) -> DMatrix<f64> {
        self.cov_matrix().view((0, self.dim_x), (self.dim_x, self.dim_y)).into()
    }

    /// Schur complement `cov_xx - cov_xy cov_yy^-1 cov_yx`.
    pub fn cov_x_given_y(&self) -> Result<DMatrix<f64>> {
        let syy = Cholesky::new(self.cov_yy())
            .ok_or_else(|| Error::Domain("cov_yy must be positive definite".into()))?;
        let sxy = self.cov_xy();
        Ok(self.cov_xx() - &sxy * syy.solve(&sxy.transpose()))
    }
}

fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Cholesky::new(m.clone())
        .ok_or_else(|| Error::Domain("matrix is not positive definite".into()))
        .map(|c| c.inverse())
}

fn spd_log_det(m: &DMatrix<f64>) -> Result<f64> {
    let c = Cholesky::new(m.clone())
        .ok_or_else(|| Error::Domain("matrix is not positive definite".into()))?;
    Ok(2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// Exact MMSE of a zero-mean Gaussian with covariance `cov_x` in the SNR-`gamma`
/// channel: `trace((cov_x^-1 + gamma I)^-1)`.
pub fn gaussian_mmse(cov_x: &DMatrix<f64>, gamma: f64) -> Result<f64> {
    if gamma < 0.0 {
        return Err(Error::Domain("gamma must be nonnegative".into()));
    }
    let d = cov_x.nrows();
    let mut prec = spd_inverse(cov_x)?;
    for i in 0..d {
        prec[(i, i)] += gamma;
    }
    Ok(spd_inverse(&prec)?.trace())
}

/// Conditional MMSE: the unconditional formula applied to the Schur complement.
pub fn gaussian_conditional_mmse(spec: &JointGaussianSpec, gamma: f64) -> Result<f64> {
    gaussian_mmse(&spec.cov_x_given_y()?, gamma)
}

/// Exact mutual information in nats: `1/2 (ln det cov_xx - ln det cov_x|y)`.
pub fn gaussian_mi(spec: &JointGaussianSpec) -> Result<f64> {
    Ok(0.5 * (spd_log_det(&spec.cov_xx())? - spd_log_det(&spec.cov_x_given_y()?)?))
}

/// Optimal (posterior-mean) denoiser for jointly Gaussian data; linear in z
/// and y. Serves as the exact oracle in place of a trained network.
pub struct GaussianDenoiser {
    prec_x: DMatrix<f64>,        // cov_xx^-1
    prec_x_given_y: DMatrix<f64>, // cov_x|y^-1
    y_to_mean: DMatrix<f64>,     // cov_xy cov_yy^-1
    dim_x: usize,
    dim_y: usize,
}

impl GaussianDenoiser {
    pub fn new(spec: &JointGaussianSpec) -> Result<Self> {
        spec.validate()?;
        let cxy = spec.cov_x_given_y()?;
        let syy_inv = spd_inverse(&spec.cov_yy())?;
        Ok(GaussianDenoiser {
            prec_x: spd_inverse(&spec.cov_xx())?,
            prec_x_given_y: spd_inverse(&cxy)?,
            y_to_mean: spec.cov_xy() * syy_inv,
            dim_x: spec.dim_x,
            dim_y: spec.dim_y,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim_x
    }

    pub fn dim_cond(&self) -> usize {
        self.dim_y
    }

    /// Posterior mean `E[x | z]` or `E[x | z, y]` at SNR `gamma = exp(log_snr)`.
    ///
    /// The channel contributes precision `gamma I` and information
    /// `sqrt(gamma (1+gamma)) z`; the prior is N(0, cov_xx) or
    /// N(cov_xy cov_yy^-1 y, cov_x|y).
    pub fn denoise(&self, z: &[f64], log_snr: f64, y: Option<&[f64]>) -> Vec<f64> {
        let gamma = log_snr.exp();
        let info_scale = (gamma * (1.0 + gamma)).sqrt();
        let zv = DVector::from_row_slice(z);
        let (prec, mut info) = match y {
            None => (&self.prec_x, DVector::zeros(self.dim_x)),
            Some(yv) => {
                let mean = &self.y_to_mean * DVector::from_row_slice(yv);
                (&self.prec_x_given_y, &self.prec_x_given_y * mean)
            }
        };
        info += info_scale * zv;
        let mut post_prec = prec.clone();
        for i in 0..self.dim_x {
            post_prec[(i, i)] += gamma;
        }
        let ch = Cholesky::new(post_prec).expect("posterior precision is SPD");
        ch.solve(&info).iter().copied().collect()
    }
}
