//! Posterior representations and their updates.

pub mod discrete;
pub mod gaussian;
pub mod gp;
pub mod particle;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Action, Outcome, Theta};
use crate::env::{Environment, Model};
use crate::error::{Error, Result};
use crate::models::ContinuousModel;
use crate::SimRng;

pub use discrete::{discrete_update, DiscretePosterior};
pub use gaussian::{blr_update, GaussianPosterior};
pub use gp::{gp_predict, GpPosterior, RbfKernel};
pub use particle::{smc_update, ParticleConfig, ParticlePosterior};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub particles: ParticleConfig,
}

/// The posterior a sampling policy carries between steps, matched to the environment's
/// model: exact Bayes for finite parameter sets, conjugate updates for the linear model,
/// per-channel GP regression for grid GP models and particles otherwise.
#[derive(Debug, Clone)]
pub enum Belief {
    Discrete(DiscretePosterior),
    Linear {
        posterior: GaussianPosterior,
        features: Arc<DMatrix<f64>>,
        noise_var: f64,
    },
    Gp {
        channels: Vec<GpPosterior>,
        points: Arc<Vec<Vec<f64>>>,
    },
    Particle(ParticlePosterior),
}

impl Belief {
    pub fn prior(env: &Environment, cfg: &InferenceConfig, rng: &mut SimRng) -> Result<Self> {
        match &env.model {
            Model::Finite(m) => Ok(Belief::Discrete(DiscretePosterior::new(m.prior().to_vec())?)),
            Model::Continuous(m) => match m.as_ref() {
                ContinuousModel::Logistic(_) => Ok(Belief::Particle(
                    ParticlePosterior::from_prior(env, &cfg.particles, rng)?,
                )),
                ContinuousModel::RbfLinear(lm) => Ok(Belief::Linear {
                    posterior: GaussianPosterior::isotropic(lm.dim(), lm.prior_var),
                    features: Arc::new(lm.feature_matrix(&env.grid)),
                    noise_var: lm.noise_var,
                }),
                ContinuousModel::GpGrid(gm) => Ok(Belief::Gp {
                    channels: gm
                        .channels
                        .iter()
                        .map(|c| GpPosterior::new(c.kernel.clone(), c.noise_var, c.mean))
                        .collect::<Result<_>>()?,
                    points: gm.points().clone(),
                }),
            },
        }
    }

    /// Particle approximation regardless of the model (used to cross-check exact updates).
    pub fn particles(env: &Environment, cfg: &ParticleConfig, rng: &mut SimRng) -> Result<Self> {
        Ok(Belief::Particle(ParticlePosterior::from_prior(env, cfg, rng)?))
    }

    pub fn sample(&self, env: &Environment, rng: &mut SimRng) -> Result<Theta> {
        match self {
            Belief::Discrete(p) => Ok(Theta::Index(p.sample(rng))),
            Belief::Linear { posterior, .. } => {
                Ok(Theta::Vector(posterior.sample(rng).iter().copied().collect()))
            }
            Belief::Gp { channels, points } => {
                let mut out = Vec::with_capacity(channels.len() * points.len());
                for gp in channels {
                    out.extend(gp.sample_joint(points, rng)?);
                }
                Ok(Theta::Vector(out))
            }
            Belief::Particle(p) => Ok(p.sample(env, rng)),
        }
    }

    pub fn update(
        &self,
        env: &Environment,
        action: &Action,
        outcome: &Outcome,
        rng: &mut SimRng,
    ) -> Result<Self> {
        match self {
            Belief::Discrete(p) => {
                let m = env.require_finite()?;
                let y = outcome
                    .discrete()
                    .filter(|&y| y < m.n_outcomes())
                    .ok_or_else(|| Error::InvalidEnvironment(format!("invalid outcome {outcome:?}")))?;
                let mut next = p.clone();
                next.absorb((0..m.n_thetas()).map(|k| m.lik(k, action.index, y)))?;
                Ok(Belief::Discrete(next))
            }
            Belief::Linear {
                posterior,
                features,
                noise_var,
            } => {
                let y = real_channel(outcome, 0)?;
                let phi: DVector<f64> = features.row(action.index).transpose();
                Ok(Belief::Linear {
                    posterior: posterior.observe(&phi, y, *noise_var),
                    features: features.clone(),
                    noise_var: *noise_var,
                })
            }
            Belief::Gp { channels, points } => {
                let channels = channels
                    .iter()
                    .enumerate()
                    .map(|(c, gp)| gp.with_point(&action.coords, real_channel(outcome, c)?))
                    .collect::<Result<_>>()?;
                Ok(Belief::Gp {
                    channels,
                    points: points.clone(),
                })
            }
            Belief::Particle(p) => Ok(Belief::Particle(smc_update(p, env, (action, outcome), rng)?)),
        }
    }
}

fn real_channel(y: &Outcome, c: usize) -> Result<f64> {
    y.channel(c)
        .ok_or_else(|| Error::InvalidEnvironment(format!("expected a real outcome, got {y:?}")))
}
