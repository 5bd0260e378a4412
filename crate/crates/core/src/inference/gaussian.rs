use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::SimRng;

/// Multivariate normal over a real parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianPosterior {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::InvalidConfig("covariance shape mismatch".into()));
        }
        if (&cov - cov.transpose()).amax() > 1e-10 {
            return Err(Error::InvalidConfig("covariance is not symmetric".into()));
        }
        if SymmetricEigen::new(cov.clone()).eigenvalues.min() < -1e-10 {
            return Err(Error::NotPsd("gaussian covariance"));
        }
        Ok(Self { mean, cov })
    }

    pub fn isotropic(d: usize, var: f64) -> Self {
        Self {
            mean: DVector::zeros(d),
            cov: DMatrix::from_diagonal_element(d, d, var),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Draw via a symmetric square root so singular covariances are allowed.
    pub fn sample(&self, rng: &mut SimRng) -> DVector<f64> {
        let root = psd_sqrt(&self.cov);
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        &self.mean + root * z
    }

    /// Condition on one observation y = phi . theta + N(0, noise_var).
    pub fn observe(&self, phi: &DVector<f64>, y: f64, noise_var: f64) -> Self {
        let s_phi = &self.cov * phi;
        let denom = noise_var + phi.dot(&s_phi);
        let resid = y - phi.dot(&self.mean);
        let mean = &self.mean + &s_phi * (resid / denom);
        let mut cov = &self.cov - &s_phi * s_phi.transpose() / denom;
        symmetrize(&mut cov);
        Self { mean, cov }
    }
}

/// Conjugate Bayesian linear regression update.
pub fn blr_update(
    prior_mean: &DVector<f64>,
    prior_cov: &DMatrix<f64>,
    noise_var: f64,
    features: &DMatrix<f64>,
    targets: &DVector<f64>,
) -> Result<GaussianPosterior> {
    let d = prior_mean.len();
    if !(noise_var > 0.0) {
        return Err(Error::InvalidConfig("noise variance must be positive".into()));
    }
    if prior_cov.shape() != (d, d)
        || features.ncols() != d
        || features.nrows() != targets.len()
    {
        return Err(Error::InvalidConfig("inconsistent regression dimensions".into()));
    }
    let prior_prec = prior_cov
        .clone()
        .cholesky()
        .ok_or(Error::Singular("prior covariance"))?
        .inverse();
    if features.nrows() == 0 {
        return Ok(GaussianPosterior {
            mean: prior_mean.clone(),
            cov: prior_cov.clone(),
        });
    }
    let prec = &prior_prec + features.transpose() * features / noise_var;
    let mut cov = prec
        .cholesky()
        .ok_or(Error::Singular("posterior precision"))?
        .inverse();
    symmetrize(&mut cov);
    let mean = &cov * (&prior_prec * prior_mean + features.transpose() * targets / noise_var);
    Ok(GaussianPosterior { mean, cov })
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Symmetric PSD square root with negative eigenvalues clamped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose()
}
