//! Action-selection policies: myopic posterior sampling, uniform random sampling and the
//! two oracles that know the true parameter.

pub mod exact;
pub mod global;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Action, DataSequence, Outcome, Theta};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::inference::Belief;
use crate::lookahead::{argmin_lookahead, LookaheadConfig};
use crate::SimRng;

pub use exact::{q_value, value_decomposition, ExactEvaluator, ExactPolicy, PolicyValue};
pub use global::{check_enumeration_bound, GlobalOracle, ENUMERATION_BOUND};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Mps,
    Rand,
    MyopicOracle,
    GlobalOracle,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Mps => "mps",
            PolicyKind::Rand => "rand",
            PolicyKind::MyopicOracle => "myopic_oracle",
            PolicyKind::GlobalOracle => "global_oracle",
        }
    }
}

/// Which horizon objective the global oracle optimises.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Expected penalty after the last step.
    #[default]
    Final,
    /// Expected sum of the per-step penalties.
    Cumulative,
}

/// A policy together with whatever it carries between steps.
#[derive(Debug)]
pub enum PolicyState {
    Mps { belief: Belief, lookahead: LookaheadConfig },
    Rand,
    MyopicOracle { theta_star: Theta, lookahead: LookaheadConfig },
    GlobalOracle { oracle: GlobalOracle, horizon: usize },
}

#[derive(Debug, Clone)]
pub struct Decision {
    pub action: Action,
    /// The parameter MPS sampled for this decision.
    pub sampled: Option<Theta>,
}

impl PolicyState {
    pub fn kind(&self) -> PolicyKind {
        match self {
            PolicyState::Mps { .. } => PolicyKind::Mps,
            PolicyState::Rand => PolicyKind::Rand,
            PolicyState::MyopicOracle { .. } => PolicyKind::MyopicOracle,
            PolicyState::GlobalOracle { .. } => PolicyKind::GlobalOracle,
        }
    }

    pub fn global(
        env: &Environment,
        theta_star: Theta,
        horizon: usize,
        criterion: Criterion,
    ) -> Result<Self> {
        check_enumeration_bound(env, horizon)?;
        Ok(PolicyState::GlobalOracle {
            oracle: GlobalOracle::new(env, theta_star, criterion)?,
            horizon,
        })
    }

    /// Choose the next action given the data so far.
    pub fn step(&mut self, env: &Environment, d: &DataSequence, rng: &mut SimRng) -> Result<Decision> {
        match self {
            PolicyState::Mps { belief, lookahead } => {
                let (action, theta) = mps_step(env, belief, d, lookahead, rng)?;
                Ok(Decision {
                    action,
                    sampled: Some(theta),
                })
            }
            PolicyState::Rand => Ok(Decision {
                action: rand_step(env, rng),
                sampled: None,
            }),
            PolicyState::MyopicOracle {
                theta_star,
                lookahead,
            } => Ok(Decision {
                action: myopic_oracle_step(env, theta_star, d, lookahead, rng)?,
                sampled: None,
            }),
            PolicyState::GlobalOracle { oracle, horizon } => {
                let remaining = horizon.checked_sub(d.len()).filter(|&r| r > 0).ok_or_else(|| {
                    Error::InvalidConfig(format!("global oracle planned for {horizon} steps only"))
                })?;
                Ok(Decision {
                    action: oracle.step(env, d, remaining)?,
                    sampled: None,
                })
            }
        }
    }

    /// Absorb an observation (only MPS keeps state that depends on data).
    pub fn observe(
        &mut self,
        env: &Environment,
        action: &Action,
        outcome: &Outcome,
        rng: &mut SimRng,
    ) -> Result<()> {
        if let PolicyState::Mps { belief, .. } = self {
            *belief = belief.update(env, action, outcome, rng)?;
        }
        Ok(())
    }
}

/// Sample a parameter from the posterior and minimise the look-ahead penalty under it.
/// The posterior is not updated here.
pub fn mps_step(
    env: &Environment,
    belief: &Belief,
    d: &DataSequence,
    cfg: &LookaheadConfig,
    rng: &mut SimRng,
) -> Result<(Action, Theta)> {
    let theta = belief.sample(env, rng)?;
    let r = argmin_lookahead(env, &theta, d, cfg, rng)?;
    Ok((r.action, theta))
}

pub fn myopic_oracle_step(
    env: &Environment,
    theta_star: &Theta,
    d: &DataSequence,
    cfg: &LookaheadConfig,
    rng: &mut SimRng,
) -> Result<Action> {
    Ok(argmin_lookahead(env, theta_star, d, cfg, rng)?.action)
}

/// Expectimax over the remaining `remaining` steps.
pub fn global_oracle_step(
    env: &Environment,
    theta_star: &Theta,
    d: &DataSequence,
    remaining: usize,
    criterion: Criterion,
) -> Result<Action> {
    check_enumeration_bound(env, remaining)?;
    GlobalOracle::new(env, theta_star.clone(), criterion)?.step(env, d, remaining)
}

pub fn rand_step(env: &Environment, rng: &mut SimRng) -> Action {
    env.action(rng.random_range(0..env.grid.len())).clone()
}
