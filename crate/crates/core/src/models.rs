//! Continuous-parameter observation models with additive Gaussian noise.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Action;
use crate::env::ActionGrid;
use crate::error::{Error, Result};
use crate::inference::gp::{jittered_cholesky, RbfKernel};
use crate::SimRng;

/// Which parameter of IG(shape, b) multiplies `1/x` in the exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IgConvention {
    /// density proportional to x^(-shape-1) exp(-b / x)
    #[default]
    ShapeScale,
    /// density proportional to x^(-shape-1) exp(-1 / (b x))
    ShapeRate,
}

/// y ~ N(a / (1 + exp(b (x - c))), eta2) with independent normal priors on (a, b, c)
/// and an inverse-gamma prior on eta2.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticModel {
    pub prior_mean: [f64; 3],
    /// Variances, not standard deviations.
    pub prior_var: [f64; 3],
    pub ig_shape: f64,
    pub ig_param: f64,
    #[serde(default)]
    pub ig_convention: IgConvention,
}

impl Default for LogisticModel {
    fn default() -> Self {
        Self {
            prior_mean: [2.0, 5.0, 5.0],
            prior_var: [1.0, 3.0, 3.0],
            ig_shape: 20.0,
            ig_param: 1.0,
            ig_convention: IgConvention::ShapeScale,
        }
    }
}

impl LogisticModel {
    #[inline]
    pub fn curve(a: f64, b: f64, c: f64, x: f64) -> f64 {
        a / (1.0 + (b * (x - c)).exp())
    }

    fn ig_rate_of_precision(&self) -> f64 {
        // precision = 1/eta2 ~ Gamma(shape, rate)
        match self.ig_convention {
            IgConvention::ShapeScale => self.ig_param,
            IgConvention::ShapeRate => 1.0 / self.ig_param,
        }
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        let mut lp = 0.0;
        for i in 0..3 {
            let d = theta[i] - self.prior_mean[i];
            lp += -0.5 * d * d / self.prior_var[i] - 0.5 * (2.0 * PI * self.prior_var[i]).ln();
        }
        let v = theta[3];
        if v <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let rate = self.ig_rate_of_precision();
        lp + self.ig_shape * rate.ln() - ln_gamma(self.ig_shape) - (self.ig_shape + 1.0) * v.ln()
            - rate / v
    }
}

/// y ~ N(sum_i theta_i phi(x - c_i), noise_var), phi(v) = scale * exp(-width ||v||^2).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RbfLinearModel {
    pub centers: Vec<Vec<f64>>,
    pub width: f64,
    pub scale: f64,
    pub noise_var: f64,
    pub prior_var: f64,
}

impl RbfLinearModel {
    /// 16 centres on a 4x4 lattice inside the unit square.
    pub fn unit_square_4x4() -> Self {
        let ticks = [0.125, 0.375, 0.625, 0.875];
        let centers = ticks
            .iter()
            .flat_map(|&u| ticks.iter().map(move |&v| vec![u, v]))
            .collect();
        Self {
            centers,
            width: 5.0,
            scale: 1.0 / (0.2 * PI).sqrt(),
            noise_var: 0.01,
            prior_var: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.centers.len()
    }

    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        self.centers
            .iter()
            .map(|c| {
                let d2: f64 = c.iter().zip(x).map(|(ci, xi)| (xi - ci) * (xi - ci)).sum();
                self.scale * (-self.width * d2).exp()
            })
            .collect()
    }

    pub fn feature_matrix(&self, grid: &ActionGrid) -> DMatrix<f64> {
        let rows: Vec<Vec<f64>> = grid.actions().iter().map(|a| self.features(&a.coords)).collect();
        DMatrix::from_fn(rows.len(), self.dim(), |i, j| rows[i][j])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpChannel {
    pub kernel: RbfKernel,
    pub mean: f64,
    pub noise_var: f64,
}

/// Functions drawn from independent GP priors, represented by their values on the grid.
/// The parameter vector concatenates the channels.
#[derive(Debug, Clone)]
pub struct GpGridModel {
    pub channels: Vec<GpChannel>,
    points: Arc<Vec<Vec<f64>>>,
    prior_chol: Vec<DMatrix<f64>>,
}

impl GpGridModel {
    pub fn new(grid: &ActionGrid, channels: Vec<GpChannel>) -> Result<Self> {
        let points: Vec<Vec<f64>> = grid.actions().iter().map(|a| a.coords.to_vec()).collect();
        let mut prior_chol = Vec::with_capacity(channels.len());
        for ch in &channels {
            let k = ch.kernel.gram(&points);
            prior_chol.push(jittered_cholesky(k, "gp prior")?);
        }
        Ok(Self {
            channels,
            points: Arc::new(points),
            prior_chol,
        })
    }

    pub fn grid_len(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &Arc<Vec<Vec<f64>>> {
        &self.points
    }

    pub fn channel_slice<'a>(&self, theta: &'a [f64], c: usize) -> &'a [f64] {
        let g = self.points.len();
        &theta[c * g..(c + 1) * g]
    }
}

#[derive(Debug, Clone)]
pub enum ContinuousModel {
    Logistic(LogisticModel),
    RbfLinear(RbfLinearModel),
    GpGrid(GpGridModel),
}

impl ContinuousModel {
    pub fn theta_dim(&self) -> usize {
        match self {
            ContinuousModel::Logistic(_) => 4,
            ContinuousModel::RbfLinear(m) => m.dim(),
            ContinuousModel::GpGrid(m) => m.channels.len() * m.grid_len(),
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            ContinuousModel::GpGrid(m) => m.channels.len(),
            _ => 1,
        }
    }

    pub fn validate(&self, grid: &ActionGrid) -> Result<()> {
        let ok = match self {
            ContinuousModel::Logistic(m) => {
                grid.dim() == 1 && m.prior_var.iter().all(|&v| v > 0.0) && m.ig_shape > 0.0
            }
            ContinuousModel::RbfLinear(m) => {
                m.noise_var > 0.0 && m.centers.iter().all(|c| c.len() == grid.dim())
            }
            ContinuousModel::GpGrid(m) => {
                m.grid_len() == grid.len()
                    && m.channels.iter().all(|c| c.noise_var > 0.0)
                    && grid
                        .actions()
                        .iter()
                        .zip(m.points.iter())
                        .all(|(a, p)| &*a.coords == p.as_slice())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidEnvironment(
                "continuous model does not match its grid".into(),
            ))
        }
    }

    pub fn sample_prior(&self, rng: &mut SimRng) -> Vec<f64> {
        match self {
            ContinuousModel::Logistic(m) => {
                let mut t: Vec<f64> = (0..3)
                    .map(|i| {
                        let z: f64 = StandardNormal.sample(rng);
                        m.prior_mean[i] + m.prior_var[i].sqrt() * z
                    })
                    .collect();
                let g = Gamma::new(m.ig_shape, 1.0 / m.ig_rate_of_precision())
                    .expect("positive gamma parameters")
                    .sample(rng);
                t.push(1.0 / g);
                t
            }
            ContinuousModel::RbfLinear(m) => (0..m.dim())
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    m.prior_var.sqrt() * z
                })
                .collect(),
            ContinuousModel::GpGrid(m) => {
                let mut out = Vec::with_capacity(self.theta_dim());
                for (ch, l) in m.channels.iter().zip(&m.prior_chol) {
                    let z = DVector::from_fn(m.grid_len(), |_, _| StandardNormal.sample(rng));
                    let f = l * z;
                    out.extend(f.iter().map(|v| v + ch.mean));
                }
                out
            }
        }
    }

    pub fn mean_response(&self, theta: &[f64], action: &Action) -> Vec<f64> {
        match self {
            ContinuousModel::Logistic(_) => vec![LogisticModel::curve(
                theta[0],
                theta[1],
                theta[2],
                action.coords[0],
            )],
            ContinuousModel::RbfLinear(m) => vec![m
                .features(&action.coords)
                .iter()
                .zip(theta)
                .map(|(p, t)| p * t)
                .sum()],
            ContinuousModel::GpGrid(m) => (0..m.channels.len())
                .map(|c| m.channel_slice(theta, c)[action.index])
                .collect(),
        }
    }

    pub fn noise_variance(&self, theta: &[f64], channel: usize) -> f64 {
        match self {
            ContinuousModel::Logistic(_) => theta[3],
            ContinuousModel::RbfLinear(m) => m.noise_var,
            ContinuousModel::GpGrid(m) => m.channels[channel].noise_var,
        }
    }

    pub fn outcome_from_noise(&self, theta: &[f64], action: &Action, noise: &[f64]) -> Vec<f64> {
        self.mean_response(theta, action)
            .into_iter()
            .enumerate()
            .map(|(c, f)| f + self.noise_variance(theta, c).sqrt() * noise[c])
            .collect()
    }

    pub fn log_likelihood(&self, theta: &[f64], action: &Action, y: &[f64]) -> f64 {
        self.mean_response(theta, action)
            .into_iter()
            .enumerate()
            .map(|(c, f)| {
                let v = self.noise_variance(theta, c);
                if v <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let r = y[c] - f;
                -0.5 * (2.0 * PI * v).ln() - 0.5 * r * r / v
            })
            .sum()
    }

    pub fn response_on_grid(&self, theta: &[f64], grid: &ActionGrid, channel: usize) -> Vec<f64> {
        match self {
            ContinuousModel::GpGrid(m) => m.channel_slice(theta, channel).to_vec(),
            _ => grid
                .actions()
                .iter()
                .map(|a| self.mean_response(theta, a)[channel])
                .collect(),
        }
    }

    /// Coordinates in which random-walk moves are made (noise variance in log space).
    pub fn to_unconstrained(&self, theta: &[f64]) -> Vec<f64> {
        match self {
            ContinuousModel::Logistic(_) => vec![theta[0], theta[1], theta[2], theta[3].ln()],
            _ => theta.to_vec(),
        }
    }

    pub fn from_unconstrained(&self, u: &[f64]) -> Vec<f64> {
        match self {
            ContinuousModel::Logistic(_) => vec![u[0], u[1], u[2], u[3].exp()],
            _ => u.to_vec(),
        }
    }

    /// Prior log-density of the unconstrained coordinates, Jacobian included, up to a
    /// constant.
    pub fn log_prior_unconstrained(&self, u: &[f64]) -> f64 {
        match self {
            ContinuousModel::Logistic(m) => m.log_prior(&self.from_unconstrained(u)) + u[3],
            ContinuousModel::RbfLinear(m) => {
                -0.5 * u.iter().map(|t| t * t).sum::<f64>() / m.prior_var
            }
            ContinuousModel::GpGrid(m) => {
                let mut lp = 0.0;
                for (c, (ch, l)) in m.channels.iter().zip(&m.prior_chol).enumerate() {
                    let d = DVector::from_iterator(
                        m.grid_len(),
                        m.channel_slice(u, c).iter().map(|v| v - ch.mean),
                    );
                    let z = l.solve_lower_triangular(&d).expect("cholesky factor is invertible");
                    lp -= 0.5 * z.norm_squared();
                }
                lp
            }
        }
    }
}

/// Lanczos approximation of ln Gamma(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}
