//! Gaussian-process regression with an RBF kernel.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Action, DataSequence};
use crate::error::{Error, Result};
use crate::inference::gaussian::{psd_sqrt, symmetrize};
use crate::SimRng;

pub const JITTER: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfKernel {
    pub lengthscales: Vec<f64>,
    pub variance: f64,
}

impl RbfKernel {
    pub fn new(lengthscales: Vec<f64>, variance: f64) -> Result<Self> {
        if lengthscales.is_empty() || lengthscales.iter().any(|&l| !(l > 0.0)) || !(variance > 0.0)
        {
            return Err(Error::InvalidConfig("kernel hyperparameters must be positive".into()));
        }
        Ok(Self {
            lengthscales,
            variance,
        })
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| {
                let d = (x - y) / l;
                d * d
            })
            .sum();
        self.variance * (-0.5 * r2).exp()
    }

    pub fn gram(&self, points: &[Vec<f64>]) -> DMatrix<f64> {
        let n = points.len();
        DMatrix::from_fn(n, n, |i, j| self.eval(&points[i], &points[j]))
    }

    pub fn cross(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(a.len(), b.len(), |i, j| self.eval(&a[i], &b[j]))
    }
}

/// Lower Cholesky factor of `k + JITTER * I`.
pub fn jittered_cholesky(mut k: DMatrix<f64>, ctx: &'static str) -> Result<DMatrix<f64>> {
    for i in 0..k.nrows() {
        k[(i, i)] += JITTER;
    }
    k.cholesky().map(|c| c.l()).ok_or(Error::NotPsd(ctx))
}

#[derive(Debug, Clone)]
pub struct GpPosterior {
    pub kernel: RbfKernel,
    pub noise_variance: f64,
    pub prior_mean: f64,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    // lower factor of K + (noise + jitter) I over the inputs
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
}

impl GpPosterior {
    pub fn new(kernel: RbfKernel, noise_variance: f64, prior_mean: f64) -> Result<Self> {
        if !(noise_variance > 0.0) {
            return Err(Error::InvalidConfig("noise variance must be positive".into()));
        }
        Ok(Self {
            kernel,
            noise_variance,
            prior_mean,
            inputs: Vec::new(),
            targets: Vec::new(),
            chol: DMatrix::zeros(0, 0),
            alpha: DVector::zeros(0),
        })
    }

    /// Posterior given the real outcomes of `d` on one channel.
    pub fn from_data(
        kernel: RbfKernel,
        noise_variance: f64,
        prior_mean: f64,
        d: &DataSequence,
        channel: usize,
    ) -> Result<Self> {
        let mut gp = Self::new(kernel, noise_variance, prior_mean)?;
        for (a, y) in d.iter() {
            let y = y
                .channel(channel)
                .ok_or_else(|| Error::InvalidConfig("gp training data must be real".into()))?;
            gp = gp.with_point(&a.coords, y)?;
        }
        Ok(gp)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    /// Append one training point, extending the Cholesky factor by a row.
    pub fn with_point(&self, x: &[f64], y: f64) -> Result<Self> {
        let n = self.inputs.len();
        let k_new = DVector::from_fn(n, |i, _| self.kernel.eval(&self.inputs[i], x));
        let l_row = if n > 0 {
            self.chol
                .solve_lower_triangular(&k_new)
                .ok_or(Error::NotPsd("gp gram"))?
        } else {
            DVector::zeros(0)
        };
        let diag2 = self.kernel.eval(x, x) + self.noise_variance + JITTER - l_row.norm_squared();
        if !(diag2 > 0.0) {
            return Err(Error::NotPsd("gp gram"));
        }
        let mut chol = DMatrix::zeros(n + 1, n + 1);
        chol.view_mut((0, 0), (n, n)).copy_from(&self.chol);
        for j in 0..n {
            chol[(n, j)] = l_row[j];
        }
        chol[(n, n)] = diag2.sqrt();
        let mut inputs = self.inputs.clone();
        inputs.push(x.to_vec());
        let mut targets = self.targets.clone();
        targets.push(y);
        let resid = DVector::from_iterator(n + 1, targets.iter().map(|t| t - self.prior_mean));
        let alpha = solve_chol(&chol, &resid)?;
        Ok(Self {
            kernel: self.kernel.clone(),
            noise_variance: self.noise_variance,
            prior_mean: self.prior_mean,
            inputs,
            targets,
            chol,
            alpha,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        let prior_var = self.kernel.eval(x, x);
        if self.inputs.is_empty() {
            return Ok((self.prior_mean, prior_var));
        }
        let k = DVector::from_fn(self.inputs.len(), |i, _| self.kernel.eval(&self.inputs[i], x));
        let mean = self.prior_mean + k.dot(&self.alpha);
        let v = self
            .chol
            .solve_lower_triangular(&k)
            .ok_or(Error::NotPsd("gp gram"))?;
        Ok((mean, (prior_var - v.norm_squared()).max(0.0)))
    }

    /// Posterior mean vector and covariance matrix over `points`.
    pub fn predict_joint(&self, points: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let kgg = self.kernel.gram(points);
        if self.inputs.is_empty() {
            return Ok((DVector::from_element(points.len(), self.prior_mean), kgg));
        }
        let kxg = self.kernel.cross(&self.inputs, points);
        let mean = DVector::from_element(points.len(), self.prior_mean) + kxg.transpose() * &self.alpha;
        let v = self
            .chol
            .solve_lower_triangular(&kxg)
            .ok_or(Error::NotPsd("gp gram"))?;
        let mut cov = kgg - v.transpose() * v;
        symmetrize(&mut cov);
        Ok((mean, cov))
    }

    /// Posterior mean over `points` together with `L^-1 K(inputs, points)`, from which the
    /// posterior covariance between any two points follows as `k(p, q) - v_p . v_q`.
    pub fn mean_and_factor(&self, points: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if self.inputs.is_empty() {
            return Ok((
                DVector::from_element(points.len(), self.prior_mean),
                DMatrix::zeros(0, points.len()),
            ));
        }
        let kxg = self.kernel.cross(&self.inputs, points);
        let mean = DVector::from_element(points.len(), self.prior_mean) + kxg.transpose() * &self.alpha;
        let v = self
            .chol
            .solve_lower_triangular(&kxg)
            .ok_or(Error::NotPsd("gp gram"))?;
        Ok((mean, v))
    }

    /// One coherent function draw at every point of `points`.
    pub fn sample_joint(&self, points: &[Vec<f64>], rng: &mut SimRng) -> Result<Vec<f64>> {
        let (mean, cov) = self.predict_joint(points)?;
        let root = match jittered_cholesky(cov.clone(), "gp posterior") {
            Ok(l) => l,
            Err(_) => psd_sqrt(&cov),
        };
        let z = DVector::from_fn(points.len(), |_, _| StandardNormal.sample(rng));
        Ok((mean + root * z).iter().copied().collect())
    }
}

pub fn gp_predict(gp: &GpPosterior, x: &Action) -> Result<(f64, f64)> {
    gp.predict(&x.coords)
}

fn solve_chol(l: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let z = l.solve_lower_triangular(b).ok_or(Error::NotPsd("gp gram"))?;
    l.transpose()
        .solve_upper_triangular(&z)
        .ok_or(Error::NotPsd("gp gram"))
}
