//! Named environments: the two desk-scale experiments, the lower-bound instance, finite
//! bandits and the small instances used by the theory checks.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::data::Theta;
use crate::env::{ActionGrid, Environment, FiniteModel, Model};
use crate::error::{Error, Result};
use crate::inference::RbfKernel;
use crate::models::{ContinuousModel, GpChannel, GpGridModel, IgConvention, LogisticModel, RbfLinearModel};
use crate::penalties::{
    DefaultRule, Estimator, LogisticMle, Normalization, PenaltySpec, TablePenalty, Transform, Weighted,
};
use crate::SimRng;

pub const CATALOG: &[(&str, &str)] = &[
    ("prop1", "two parameters, two actions; choosing the wrong action is permanently penalised"),
    ("bandit", "finite-parameter Bernoulli bandit with instantaneous regret"),
    ("bo_finite", "finite-parameter Bernoulli bandit with simple regret"),
    ("exp1", "logistic curve on [0, 10], parameter estimation with regularised maximum likelihood"),
    ("exp2", "16 RBF features on [0, 1]^2, estimation of the linear weights"),
    ("gp_logdensity", "GP on [0, 1] with an L2 penalty on exp(f)"),
    ("combined", "three GP channels: two L2 estimation terms and a simple-regret term"),
    ("coverage", "finite coverage instance (monotone, adaptive submodular penalty)"),
    ("deception", "two-step instance where the myopic first action is suboptimal"),
];

/// Optional changes to a catalog environment's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvOverrides {
    /// Logistic truth.
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
    pub eta2: Option<f64>,
    /// Draw the true parameter from the prior for each run instead of using the fixed one.
    #[serde(default)]
    pub random_truth: bool,
    /// Points per grid axis.
    pub grid_points: Option<usize>,
    pub noise_var: Option<f64>,
    /// Seed for randomly generated finite instances.
    pub instance_seed: Option<u64>,
    pub thetas: Option<usize>,
    pub actions: Option<usize>,
    pub ig_convention: Option<IgConvention>,
    /// Replace the penalty's normaliser.
    pub normalizer: Option<f64>,
    /// Use the fixed-step gradient-ascent estimator for exp1.
    #[serde(default)]
    pub gradient_ascent: bool,
    /// Component weights for `combined`.
    pub weights: Option<Vec<f64>>,
}

pub fn catalog_environment(id: &str, o: &EnvOverrides) -> Result<Environment> {
    match id {
        "prop1" => prop1(),
        "bandit" | "bo_finite" => {
            let mut rng = SimRng::seed_from_u64(o.instance_seed.unwrap_or(0));
            let spec = if id == "bandit" {
                PenaltySpec::BanditRegret { channel: 0 }
            } else {
                PenaltySpec::BoSimpleRegret { channel: 0 }
            };
            bernoulli_bandit(&mut rng, o.thetas.unwrap_or(8), o.actions.unwrap_or(4), spec)
        }
        "exp1" => exp1(o),
        "exp2" => exp2(o),
        "gp_logdensity" => gp_logdensity(o),
        "combined" => combined(o),
        "coverage" => {
            let mut rng = SimRng::seed_from_u64(o.instance_seed.unwrap_or(0));
            coverage(&mut rng, o.thetas.unwrap_or(2), o.actions.unwrap_or(4), 6)
        }
        "deception" => deception(),
        other => Err(Error::UnknownEnvironment(other.to_string())),
    }
}

/// Uniform prior over two parameters and two actions. Action `X1` is forbidden under
/// `theta0` and `X0` under `theta1`; every outcome reveals the parameter.
pub fn prop1() -> Result<Environment> {
    let lik = vec![vec![vec![1.0, 0.0]; 2], vec![vec![0.0, 1.0]; 2]];
    Environment::new(
        "prop1",
        ActionGrid::indexed(2),
        Model::Finite(FiniteModel::new(vec![0.5, 0.5], lik, None)?),
        PenaltySpec::Table(TablePenalty::with_default(DefaultRule::ForbiddenAction {
            forbidden: vec![1, 0],
        })),
    )
}

/// `k` parameters, each a vector of success probabilities over `a` arms; outcomes are
/// Bernoulli and the response function is the success probability.
pub fn bernoulli_bandit(rng: &mut SimRng, k: usize, a: usize, penalty: PenaltySpec) -> Result<Environment> {
    if k == 0 || a == 0 {
        return Err(Error::InvalidConfig("bandit needs parameters and actions".into()));
    }
    let values: Vec<Vec<f64>> = (0..k).map(|_| (0..a).map(|_| rng.random::<f64>()).collect()).collect();
    let lik = values
        .iter()
        .map(|row| row.iter().map(|&p| vec![1.0 - p, p]).collect())
        .collect();
    Environment::new(
        "bandit",
        ActionGrid::indexed(a),
        Model::Finite(FiniteModel::new(vec![1.0 / k as f64; k], lik, Some(values))?),
        penalty,
    )
}

pub fn exp1(o: &EnvOverrides) -> Result<Environment> {
    let mut model = LogisticModel::default();
    if let Some(c) = o.ig_convention {
        model.ig_convention = c;
    }
    let estimator = if o.gradient_ascent {
        LogisticMle::gradient_ascent(model.prior_mean)
    } else {
        LogisticMle::gauss_newton(model.prior_mean)
    };
    let truth = vec![o.a.unwrap_or(2.1), o.b.unwrap_or(7.0), o.c.unwrap_or(6.0), o.eta2.unwrap_or(0.01)];
    let env = Environment::new(
        "exp1",
        ActionGrid::regular(&[0.0], &[10.0], &[o.grid_points.unwrap_or(100)])?,
        Model::Continuous(Arc::new(ContinuousModel::Logistic(model))),
        PenaltySpec::EstimationError {
            estimator: Estimator::LogisticMle(estimator),
            normalization: Normalization::new(o.normalizer.unwrap_or(10.0)),
        },
    )?
    .with_horizon_hint(100);
    if o.random_truth {
        Ok(env)
    } else {
        env.with_truth(Theta::Vector(truth))
    }
}

/// The function whose values at the feature centres define the true weights.
pub fn exp2_truth_fn(v: &[f64]) -> f64 {
    (3.9 * std::f64::consts::PI * ((v[0] - 0.1).powi(2) + v[1] + 0.1)).sin()
}

pub fn exp2(o: &EnvOverrides) -> Result<Environment> {
    let mut model = RbfLinearModel::unit_square_4x4();
    if let Some(v) = o.noise_var {
        model.noise_var = v;
    }
    let truth: Vec<f64> = model.centers.iter().map(|c| exp2_truth_fn(c)).collect();
    let g = o.grid_points.unwrap_or(50);
    let env = Environment::new(
        "exp2",
        ActionGrid::regular(&[0.0, 0.0], &[1.0, 1.0], &[g, g])?,
        Model::Continuous(Arc::new(ContinuousModel::RbfLinear(model))),
        PenaltySpec::EstimationError {
            estimator: Estimator::PosteriorMean,
            normalization: Normalization::new(o.normalizer.unwrap_or(16.0)),
        },
    )?
    .with_horizon_hint(100);
    if o.random_truth {
        Ok(env)
    } else {
        env.with_truth(Theta::Vector(truth))
    }
}

fn gp_channel(lengthscale: f64, noise_var: f64) -> Result<GpChannel> {
    Ok(GpChannel {
        kernel: RbfKernel::new(vec![lengthscale], 1.0)?,
        mean: 0.0,
        noise_var,
    })
}

pub fn gp_logdensity(o: &EnvOverrides) -> Result<Environment> {
    let grid = ActionGrid::regular(&[0.0], &[1.0], &[o.grid_points.unwrap_or(100)])?;
    let model = GpGridModel::new(&grid, vec![gp_channel(0.1, o.noise_var.unwrap_or(0.01))?])?;
    Environment::new(
        "gp_logdensity",
        grid,
        Model::Continuous(Arc::new(ContinuousModel::GpGrid(model))),
        PenaltySpec::TransformedL2 {
            channel: 0,
            transform: Transform::Exp,
            normalization: Normalization::new(o.normalizer.unwrap_or(10.0)),
        },
    )
}

pub fn combined(o: &EnvOverrides) -> Result<Environment> {
    let grid = ActionGrid::regular(&[0.0], &[1.0], &[o.grid_points.unwrap_or(100)])?;
    let noise = o.noise_var.unwrap_or(0.01);
    let model = GpGridModel::new(
        &grid,
        vec![gp_channel(0.2, noise)?, gp_channel(0.1, noise)?, gp_channel(0.15, noise)?],
    )?;
    let w = o.weights.clone().unwrap_or_else(|| vec![1.0 / 3.0; 3]);
    if w.len() != 3 {
        return Err(Error::InvalidConfig("combined takes three weights".into()));
    }
    let l2 = |channel| PenaltySpec::TransformedL2 {
        channel,
        transform: Transform::Identity,
        normalization: Normalization::new(o.normalizer.unwrap_or(2.0)),
    };
    Environment::new(
        "combined",
        grid,
        Model::Continuous(Arc::new(ContinuousModel::GpGrid(model))),
        PenaltySpec::Combined {
            components: vec![
                Weighted {
                    weight: w[0],
                    penalty: l2(0),
                },
                Weighted {
                    weight: w[1],
                    penalty: l2(1),
                },
                Weighted {
                    weight: w[2],
                    penalty: PenaltySpec::BoSimpleRegret { channel: 2 },
                },
            ],
        },
    )
}

/// Each (action, outcome) pair covers a random subset of a ground set; the penalty is the
/// uncovered fraction. Outcome probabilities depend on the parameter.
pub fn coverage(rng: &mut SimRng, k: usize, a: usize, universe: usize) -> Result<Environment> {
    let y = 2;
    let sets = (0..k)
        .map(|_| {
            (0..a)
                .map(|_| {
                    (0..y)
                        .map(|_| (0..universe).filter(|_| rng.random::<f64>() < 0.35).collect())
                        .collect()
                })
                .collect()
        })
        .collect();
    let lik = (0..k)
        .map(|_| {
            (0..a)
                .map(|_| {
                    let p = rng.random_range(0.1..0.9);
                    vec![1.0 - p, p]
                })
                .collect()
        })
        .collect();
    Environment::new(
        "coverage",
        ActionGrid::indexed(a),
        Model::Finite(FiniteModel::new(vec![1.0 / k as f64; k], lik, None)?),
        PenaltySpec::Table(TablePenalty::with_default(DefaultRule::Coverage { universe, sets })),
    )
}

/// Two actions, one outcome, horizon two. Action 1 looks better after one step, but only
/// action 0 followed by action 1 reaches zero penalty.
pub fn deception() -> Result<Environment> {
    let table = TablePenalty::with_default(DefaultRule::Constant { value: 1.0 })
        .entry(0, vec![(0, 0)], 0.6)
        .entry(0, vec![(1, 0)], 0.4)
        .entry(0, vec![(0, 0), (0, 0)], 0.6)
        .entry(0, vec![(0, 0), (1, 0)], 0.0)
        .entry(0, vec![(1, 0), (0, 0)], 0.4)
        .entry(0, vec![(1, 0), (1, 0)], 0.4);
    Environment::new(
        "deception",
        ActionGrid::indexed(2),
        Model::Finite(FiniteModel::new(vec![1.0], vec![vec![vec![1.0]; 2]], None)?),
        PenaltySpec::Table(table),
    )
}

/// A random finite environment with `k` parameters, `a` actions and `y` outcomes whose
/// penalty is an exponentially smoothed per-pair loss.
pub fn random_smoothed(rng: &mut SimRng, k: usize, a: usize, y: usize, decay: f64) -> Result<Environment> {
    let lik = random_likelihood(rng, k, a, y);
    let loss = (0..k)
        .map(|_| (0..a).map(|_| (0..y).map(|_| rng.random::<f64>()).collect()).collect())
        .collect();
    Environment::new(
        "smoothed",
        ActionGrid::indexed(a),
        Model::Finite(FiniteModel::new(vec![1.0 / k as f64; k], lik, None)?),
        PenaltySpec::Table(TablePenalty::with_default(DefaultRule::Smoothed {
            decay,
            initial: rng.random(),
            loss,
        })),
    )
}

pub fn random_likelihood(rng: &mut SimRng, k: usize, a: usize, y: usize) -> Vec<Vec<Vec<f64>>> {
    (0..k)
        .map(|_| {
            (0..a)
                .map(|_| {
                    let w: Vec<f64> = (0..y).map(|_| rng.random_range(0.05..1.0)).collect();
                    let s: f64 = w.iter().sum();
                    w.into_iter().map(|v| v / s).collect()
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LogisticModel;

    #[test]
    fn every_id_builds() {
        for (id, _) in CATALOG {
            catalog_environment(id, &EnvOverrides::default()).unwrap();
        }
        assert!(matches!(
            catalog_environment("nope", &EnvOverrides::default()),
            Err(Error::UnknownEnvironment(_))
        ));
    }

    #[test]
    fn prop1_shape() {
        let env = prop1().unwrap();
        let m = env.finite().unwrap();
        assert_eq!((m.n_thetas(), m.n_actions()), (2, 2));
        assert_eq!(m.prior(), &[0.5, 0.5]);
        assert!(matches!(env.penalty, PenaltySpec::Table(_)));
    }

    #[test]
    fn exp2_shape() {
        let env = exp2(&EnvOverrides::default()).unwrap();
        assert_eq!(env.grid.len(), 2500);
        assert_eq!(env.continuous().unwrap().theta_dim(), 16);
        let t = env.truth.as_ref().unwrap().vector().unwrap();
        assert!((t[0] - exp2_truth_fn(&[0.125, 0.125])).abs() < 1e-15);
    }

    #[test]
    fn exp1_plateau_override() {
        let env = exp1(&EnvOverrides {
            a: Some(1.0),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(env.grid.len(), 100);
        let t = env.truth.as_ref().unwrap().vector().unwrap().to_vec();
        assert_eq!(t, vec![1.0, 7.0, 6.0, 0.01]);
        // far left of the transition the curve sits at the plateau
        assert!((LogisticModel::curve(t[0], t[1], t[2], 0.0) - 1.0).abs() < 1e-12);
    }
}
