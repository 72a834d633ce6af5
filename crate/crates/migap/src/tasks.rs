//! Synthetic joint distributions with known ground-truth mutual information,
//! plus MI-preserving per-variable transforms and a per-coordinate affine
//! standardizer.
//!
//! Family parameters are chosen so the analytic ground truths line up with
//! the tabulated benchmark values (e.g. the 2-pair sparse multinormal at
//! rho = 0.8 has MI = -ln(1 - 0.64) = 1.0217 nats).

use crate::error::{Error, Result};
use crate::gauss::JointGaussianSpec;
use crate::linalg::Matrix;
use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Family {
    /// Standard bivariate normal with correlation rho.
    BivariateNormal { rho: f64 },
    /// x and y each `dim`-dimensional; every off-diagonal entry of the full
    /// 2*dim covariance equals `strength`.
    MultinormalDense { dim: usize, strength: f64 },
    /// Exactly two coordinate pairs (x_i, y_i) carry correlation `strength`;
    /// everything else is independent.
    MultinormalSparseTwoPair { dim: usize, strength: f64 },
    /// Multivariate Student-t with identity dispersion and a shared scale
    /// mixing variable; dependence comes only through the shared scale, so
    /// the ground truth is tabulated rather than analytic.
    StudentT { dim: usize, dof: f64 },
    /// x ~ U(0,1), y = x + U(-noise, noise).
    UniformAdditive { noise: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Transform {
    /// h(v) = v * |v|^(1/2) per coordinate.
    HalfCube,
    /// asinh per coordinate.
    Asinh,
    /// Standard normal CDF per coordinate.
    NormalCdf,
    /// Rotation of consecutive coordinate pairs within each variable block by
    /// an angle proportional to the block norm.
    Spiral { speed: f64 },
}

// no deny_unknown_fields here: serde cannot combine it with flatten.
// Unknown keys inside the family table are still rejected by the enum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSpec {
    #[serde(flatten)]
    pub family: Family,
    #[serde(default)]
    pub transform: Option<Transform>,
    /// Known MI in nats. Filled automatically for analytic families; must be
    /// supplied for Student-t tasks when a ground truth is needed.
    #[serde(default)]
    pub ground_truth_nats: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

/// Row-aligned joint draws.
#[derive(Debug, Clone)]
pub struct Batch {
    pub xs: Matrix,
    pub ys: Matrix,
}

impl TaskSpec {
    pub fn new(family: Family) -> Result<Self> {
        let mut task = TaskSpec {
            family,
            transform: None,
            ground_truth_nats: None,
            seed: 0,
        };
        task.validate()?;
        task.ground_truth_nats = task.analytic_mi();
        Ok(task)
    }

    pub fn with_transform(mut self, t: Transform) -> Self {
        self.transform = Some(t);
        self
    }

    pub fn validate(&self) -> Result<()> {
        match &self.family {
            Family::BivariateNormal { rho } => {
                if !(-1.0..1.0).contains(rho) {
                    return Err(Error::Domain("rho must lie in (-1, 1)".into()));
                }
            }
            Family::MultinormalDense { dim, strength } => {
                if *dim == 0 {
                    return Err(Error::Domain("dim must be >= 1".into()));
                }
                // full covariance (1-s)I + sJ is PD iff s in (-1/(2dim-1), 1)
                let lo = -1.0 / (2 * dim - 1) as f64;
                if *strength <= lo || *strength >= 1.0 {
                    return Err(Error::Domain("dense strength makes covariance non-PD".into()));
                }
            }
            Family::MultinormalSparseTwoPair { dim, strength } => {
                if *dim < 2 {
                    return Err(Error::Domain("2-pair family needs dim >= 2".into()));
                }
                if !(-1.0..1.0).contains(strength) {
                    return Err(Error::Domain("pair correlation must lie in (-1, 1)".into()));
                }
            }
            Family::StudentT { dim, dof } => {
                if *dim == 0 || *dof <= 0.0 {
                    return Err(Error::Domain("student-t needs dim >= 1 and dof > 0".into()));
                }
            }
            Family::UniformAdditive { noise } => {
                if *noise <= 0.0 {
                    return Err(Error::Domain("additive noise level must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn dim_x(&self) -> usize {
        match &self.family {
            Family::BivariateNormal { .. } | Family::UniformAdditive { .. } => 1,
            Family::MultinormalDense { dim, .. }
            | Family::MultinormalSparseTwoPair { dim, .. }
            | Family::StudentT { dim, .. } => *dim,
        }
    }

    pub fn dim_y(&self) -> usize {
        self.dim_x()
    }

    /// Analytic ground truth where one exists.
    pub fn analytic_mi(&self) -> Option<f64> {
        match &self.family {
            Family::BivariateNormal { rho } => Some(-0.5 * (1.0 - rho * rho).ln()),
            Family::MultinormalDense { .. } | Family::MultinormalSparseTwoPair { .. } => {
                let spec = self.gaussian_spec()?;
                crate::gauss::gaussian_mi(&spec).ok()
            }
            Family::StudentT { .. } => None,
            Family::UniformAdditive { noise } => {
                let a = *noise;
                if a <= 0.5 {
                    Some(a - (2.0 * a).ln())
                } else {
                    Some(1.0 / (4.0 * a))
                }
            }
        }
    }

    pub fn ground_truth(&self) -> Option<f64> {
        self.ground_truth_nats.or_else(|| self.analytic_mi())
    }

    /// Joint Gaussian description of the *base* distribution, when the family
    /// is Gaussian. Transforms do not change the MI but do break Gaussianity,
    /// so oracle denoisers built from this are exact only for untransformed tasks.
    pub fn gaussian_spec(&self) -> Option<JointGaussianSpec> {
        match &self.family {
            Family::BivariateNormal { rho } => {
                JointGaussianSpec::new(1, 1, vec![1.0, *rho, *rho, 1.0]).ok()
            }
            Family::MultinormalDense { dim, strength } => {
                let d = 2 * dim;
                let mut cov = vec![*strength; d * d];
                for i in 0..d {
                    cov[i * d + i] = 1.0;
                }
                JointGaussianSpec::new(*dim, *dim, cov).ok()
            }
            Family::MultinormalSparseTwoPair { dim, strength } => {
                let d = 2 * dim;
                let mut cov = vec![0.0; d * d];
                for i in 0..d {
                    cov[i * d + i] = 1.0;
                }
                for pair in 0..2 {
                    let (i, j) = (pair, dim + pair);
                    cov[i * d + j] = *strength;
                    cov[j * d + i] = *strength;
                }
                JointGaussianSpec::new(*dim, *dim, cov).ok()
            }
            _ => None,
        }
    }

    /// Canonical benchmark-style row label.
    pub fn canonical_name(&self) -> String {
        let base = match &self.family {
            Family::BivariateNormal { rho } => format!("1v1-normal-{rho}"),
            Family::UniformAdditive { noise } => format!("1v1-additive-{noise}"),
            Family::MultinormalDense { dim, strength } => {
                format!("multinormal-dense-{dim}-{dim}-{strength}")
            }
            Family::MultinormalSparseTwoPair { dim, strength } => {
                format!("multinormal-sparse-{dim}-{dim}-{strength}")
            }
            Family::StudentT { dim, dof } => format!("student-identity-{dim}-{dim}-{dof}"),
        };
        match &self.transform {
            None => base,
            Some(Transform::HalfCube) => format!("half-cube-{base}"),
            Some(Transform::Asinh) => format!("asinh-{base}"),
            Some(Transform::NormalCdf) => format!("normal-cdf-{base}"),
            Some(Transform::Spiral { .. }) => format!("spiral-{base}"),
        }
    }

    /// Draws `n` i.i.d. joint samples, applying the transform afterwards.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Result<Batch> {
        if n == 0 {
            return Err(Error::Domain("n must be >= 1".into()));
        }
        self.validate()?;
        let dx = self.dim_x();
        let dy = self.dim_y();
        let mut xs = Matrix::zeros(n, dx);
        let mut ys = Matrix::zeros(n, dy);
        match &self.family {
            Family::BivariateNormal { rho } => {
                let c = (1.0 - rho * rho).sqrt();
                for i in 0..n {
                    let u: f64 = StandardNormal.sample(rng);
                    let v: f64 = StandardNormal.sample(rng);
                    xs.row_mut(i)[0] = u;
                    ys.row_mut(i)[0] = rho * u + c * v;
                }
            }
            Family::MultinormalDense { dim, .. } => {
                let spec = self.gaussian_spec().expect("gaussian family");
                let chol = Cholesky::new(spec.cov_matrix())
                    .ok_or_else(|| Error::Domain("covariance must be positive definite".into()))?;
                let l: DMatrix<f64> = chol.l();
                let d = 2 * dim;
                let mut g = vec![0.0; d];
                for i in 0..n {
                    for gv in g.iter_mut() {
                        *gv = StandardNormal.sample(rng);
                    }
                    for r in 0..d {
                        let mut acc = 0.0;
                        for k in 0..=r {
                            acc += l[(r, k)] * g[k];
                        }
                        if r < *dim {
                            xs.row_mut(i)[r] = acc;
                        } else {
                            ys.row_mut(i)[r - dim] = acc;
                        }
                    }
                }
            }
            Family::MultinormalSparseTwoPair { dim, strength } => {
                let c = (1.0 - strength * strength).sqrt();
                for i in 0..n {
                    for j in 0..*dim {
                        xs.row_mut(i)[j] = StandardNormal.sample(rng);
                    }
                    for j in 0..*dim {
                        let v: f64 = StandardNormal.sample(rng);
                        ys.row_mut(i)[j] = if j < 2 {
                            strength * xs.row(i)[j] + c * v
                        } else {
                            v
                        };
                    }
                }
            }
            Family::StudentT { dim, dof } => {
                let chi = ChiSquared::new(*dof).map_err(|e| Error::Domain(e.to_string()))?;
                for i in 0..n {
                    let w: f64 = chi.sample(rng);
                    let scale = (dof / w).sqrt();
                    for j in 0..*dim {
                        let g: f64 = StandardNormal.sample(rng);
                        xs.row_mut(i)[j] = scale * g;
                    }
                    for j in 0..*dim {
                        let g: f64 = StandardNormal.sample(rng);
                        ys.row_mut(i)[j] = scale * g;
                    }
                }
            }
            Family::UniformAdditive { noise } => {
                for i in 0..n {
                    let x: f64 = rng.random_range(0.0..1.0);
                    let e: f64 = rng.random_range(-noise..*noise);
                    xs.row_mut(i)[0] = x;
                    ys.row_mut(i)[0] = x + e;
                }
            }
        }
        if let Some(t) = &self.transform {
            apply_transform(t, &mut xs);
            apply_transform(t, &mut ys);
        }
        Ok(Batch { xs, ys })
    }
}

fn apply_transform(t: &Transform, m: &mut Matrix) {
    match t {
        Transform::HalfCube => {
            for v in m.data_mut() {
                *v = *v * v.abs().sqrt();
            }
        }
        Transform::Asinh => {
            for v in m.data_mut() {
                *v = v.asinh();
            }
        }
        Transform::NormalCdf => {
            for v in m.data_mut() {
                *v = normal_cdf(*v);
            }
        }
        Transform::Spiral { speed } => {
            let cols = m.cols();
            if cols < 2 {
                return;
            }
            for i in 0..m.rows() {
                let row = m.row_mut(i);
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                let theta = speed * norm;
                let (s, c) = theta.sin_cos();
                let mut j = 0;
                while j + 1 < cols {
                    let (a, b) = (row[j], row[j + 1]);
                    row[j] = c * a - s * b;
                    row[j + 1] = s * a + c * b;
                    j += 2;
                }
            }
        }
    }
}

/// Standard normal CDF via the Abramowitz-Stegun 7.1.26 erf approximation
/// (absolute error below 1.5e-7; monotone in practice, which is all an
/// MI-preserving reparameterization needs).
pub fn normal_cdf(x: f64) -> f64 {
    let t = x / std::f64::consts::SQRT_2;
    0.5 * (1.0 + erf(t))
}

fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// Per-coordinate affine standardization. MI is invariant to it, and it keeps
/// the default log-SNR window appropriate for tasks whose raw scale is far
/// from unit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn fit(m: &Matrix) -> Self {
        let n = m.rows() as f64;
        let d = m.cols();
        let mut mean = vec![0.0; d];
        let mut var = vec![0.0; d];
        for i in 0..m.rows() {
            for (j, v) in m.row(i).iter().enumerate() {
                mean[j] += v;
            }
        }
        for mj in mean.iter_mut() {
            *mj /= n;
        }
        for i in 0..m.rows() {
            for (j, v) in m.row(i).iter().enumerate() {
                var[j] += (v - mean[j]) * (v - mean[j]);
            }
        }
        let std = var
            .iter()
            .map(|v| (v / n).sqrt().max(1e-12))
            .collect();
        Standardizer { mean, std }
    }

    pub fn apply(&self, m: &mut Matrix) {
        for i in 0..m.rows() {
            for (j, v) in m.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
    }

    pub fn apply_row(&self, row: &mut [f64]) {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - self.mean[j]) / self.std[j];
        }
    }
}
