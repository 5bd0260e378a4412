//! Exact evaluation of policies on small finite environments: action distributions,
//! Q-values, expected criteria and the value-decomposition identity
//!
//! `J(pi1) - J(pi2) = sum_t E_{D_{t-1} ~ pi1} [ E_{X ~ pi1} Q^{pi2}(D, X, Y) - E_{X ~ pi2} Q^{pi2}(D, X, Y) ]`.

use std::collections::HashMap;

use rand::SeedableRng;

use crate::data::{DataSequence, Outcome, Theta};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::inference::{discrete_update, DiscretePosterior};
use crate::lookahead::{Lookahead, LookaheadConfig};
use crate::penalties::BoundPenalty;
use crate::SimRng;

use super::global::{argmin, check_enumeration_bound, GlobalOracle};
use super::Criterion;

/// A policy whose action distribution given the data can be written down exactly.
#[derive(Debug, Clone, PartialEq)]
pub enum ExactPolicy {
    Rand,
    MyopicOracle,
    GlobalOracle(Criterion),
    /// Posterior sampling from this prior over the finite parameter set.
    Mps { prior: Vec<f64> },
}

/// Expected criteria of a policy under the true parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyValue {
    pub cumulative: f64,
    pub final_penalty: f64,
}

pub struct ExactEvaluator<'a> {
    env: &'a Environment,
    theta_star: Theta,
    n: usize,
    bound: BoundPenalty,
    per_theta: Vec<BoundPenalty>,
    global: HashMap<Criterion, GlobalOracle>,
}

impl<'a> ExactEvaluator<'a> {
    pub fn new(env: &'a Environment, theta_star: Theta, n: usize) -> Result<Self> {
        check_enumeration_bound(env, n)?;
        let m = env.require_finite()?;
        let bound = env.penalty.bind(env, &theta_star)?;
        let per_theta = (0..m.n_thetas())
            .map(|k| env.penalty.bind(env, &Theta::Index(k)))
            .collect::<Result<_>>()?;
        Ok(Self {
            env,
            theta_star,
            n,
            bound,
            per_theta,
            global: HashMap::new(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.n
    }

    /// Myopic oracle action for parameter index `k`, with exact look-ahead.
    pub fn myopic_action(&self, k: usize, d: &DataSequence) -> Result<usize> {
        let theta = Theta::Index(k);
        let mut rng = SimRng::seed_from_u64(0);
        let cfg = LookaheadConfig::default();
        Ok(Lookahead::new(self.env, &theta, &self.per_theta[k], d, &cfg, &mut rng)?
            .argmin()?
            .action
            .index)
    }

    pub fn action_distribution(&mut self, policy: &ExactPolicy, d: &DataSequence) -> Result<Vec<f64>> {
        let a = self.env.grid.len();
        let mut dist = vec![0.0; a];
        match policy {
            ExactPolicy::Rand => dist.iter_mut().for_each(|p| *p = 1.0 / a as f64),
            ExactPolicy::MyopicOracle => {
                let k = self.theta_star.index().ok_or(Error::NotFinite)?;
                dist[self.myopic_action(k, d)?] = 1.0;
            }
            ExactPolicy::GlobalOracle(criterion) => {
                let remaining = self.n.checked_sub(d.len()).filter(|&r| r > 0).ok_or_else(|| {
                    Error::InvalidConfig("no steps remain for the global oracle".into())
                })?;
                let oracle = match self.global.entry(*criterion) {
                    std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                    std::collections::hash_map::Entry::Vacant(e) => {
                        e.insert(GlobalOracle::new(self.env, self.theta_star.clone(), *criterion)?)
                    }
                };
                let q = oracle.action_values(self.env, d, remaining)?;
                dist[argmin(&q)] = 1.0;
            }
            ExactPolicy::Mps { prior } => {
                let post = discrete_update(&DiscretePosterior::new(prior.clone())?, self.env, d)?;
                for (k, &w) in post.weights().iter().enumerate() {
                    if w > 0.0 {
                        dist[self.myopic_action(k, d)?] += w;
                    }
                }
            }
        }
        Ok(dist)
    }

    fn outcome_probs(&self, x: usize) -> Result<Vec<f64>> {
        let m = self.env.require_finite()?;
        let k = self.theta_star.index().ok_or(Error::NotFinite)?;
        Ok(m.outcome_probs(k, x).to_vec())
    }

    /// Sum of `lambda(theta*, D_j)` over the non-empty prefixes of `d`.
    pub fn incurred(&self, d: &DataSequence) -> Result<f64> {
        (1..=d.len()).try_fold(0.0, |acc, t| Ok(acc + self.bound.eval(&d.prefix(t)?)?.value))
    }

    /// Expected sum of the penalties still to come when following `policy` from `d` up to
    /// the horizon.
    pub fn future(&mut self, policy: &ExactPolicy, d: &DataSequence) -> Result<f64> {
        if d.len() >= self.n {
            return Ok(0.0);
        }
        let dist = self.action_distribution(policy, d)?;
        let mut total = 0.0;
        for (x, &px) in dist.iter().enumerate() {
            if px == 0.0 {
                continue;
            }
            for (y, py) in self.outcome_probs(x)?.into_iter().enumerate() {
                if py == 0.0 {
                    continue;
                }
                let next = d.concat(self.env.action(x).clone(), Outcome::Discrete(y));
                let now = self.bound.eval(&next)?.value;
                total += px * py * (now + self.future(policy, &next)?);
            }
        }
        Ok(total)
    }

    /// Penalty already incurred on `d`, plus the penalty of `d ++ (x, y)`, plus the expected
    /// future penalty when following `policy` afterwards.
    pub fn q_value(&mut self, policy: &ExactPolicy, d: &DataSequence, x: usize, y: usize) -> Result<f64> {
        let next = d.concat(self.env.action(x).clone(), Outcome::Discrete(y));
        Ok(self.incurred(d)? + self.bound.eval(&next)?.value + self.future(policy, &next)?)
    }

    /// Distribution over histories of each length `0..=n` when following `policy`.
    fn trajectories(&mut self, policy: &ExactPolicy) -> Result<Vec<Vec<(DataSequence, f64)>>> {
        let mut levels = vec![vec![(DataSequence::empty(), 1.0)]];
        for _ in 0..self.n {
            let mut next = Vec::new();
            for (d, p) in levels.last().expect("level zero exists").clone() {
                let dist = self.action_distribution(policy, &d)?;
                for (x, &px) in dist.iter().enumerate() {
                    if px == 0.0 {
                        continue;
                    }
                    for (y, py) in self.outcome_probs(x)?.into_iter().enumerate() {
                        if py > 0.0 {
                            next.push((d.concat(self.env.action(x).clone(), Outcome::Discrete(y)), p * px * py));
                        }
                    }
                }
            }
            levels.push(next);
        }
        Ok(levels)
    }

    /// Expected criteria by forward enumeration of every trajectory.
    pub fn value(&mut self, policy: &ExactPolicy) -> Result<PolicyValue> {
        let levels = self.trajectories(policy)?;
        let mut cumulative = 0.0;
        let mut final_penalty = 0.0;
        for (t, level) in levels.iter().enumerate().skip(1) {
            for (d, p) in level {
                let v = self.bound.eval(d)?.value;
                cumulative += p * v;
                if t == self.n {
                    final_penalty += p * v;
                }
            }
        }
        Ok(PolicyValue {
            cumulative,
            final_penalty,
        })
    }

    /// Returns `(J(pi1) - J(pi2), decomposition sum)` for the cumulative criterion.
    pub fn decomposition(&mut self, pi1: &ExactPolicy, pi2: &ExactPolicy) -> Result<(f64, f64)> {
        let lhs = self.value(pi1)?.cumulative - self.value(pi2)?.cumulative;
        let levels = self.trajectories(pi1)?;
        let mut rhs = 0.0;
        for level in levels.iter().take(self.n) {
            for (d, p) in level {
                let d1 = self.action_distribution(pi1, d)?;
                let d2 = self.action_distribution(pi2, d)?;
                for x in 0..d1.len() {
                    let w = d1[x] - d2[x];
                    if w == 0.0 {
                        continue;
                    }
                    let mut eq = 0.0;
                    for (y, py) in self.outcome_probs(x)?.into_iter().enumerate() {
                        if py > 0.0 {
                            eq += py * self.q_value(pi2, d, x, y)?;
                        }
                    }
                    rhs += p * w * eq;
                }
            }
        }
        Ok((lhs, rhs))
    }
}

/// `Q^pi(D, x, y)` under `theta_star` for a horizon of `n` steps.
pub fn q_value(
    env: &Environment,
    theta_star: &Theta,
    d: &DataSequence,
    x: usize,
    y: usize,
    policy: &ExactPolicy,
    n: usize,
) -> Result<f64> {
    ExactEvaluator::new(env, theta_star.clone(), n)?.q_value(policy, d, x, y)
}

/// `(J(pi1) - J(pi2), decomposition sum)` on the cumulative criterion.
pub fn value_decomposition(
    env: &Environment,
    theta_star: &Theta,
    pi1: &ExactPolicy,
    pi2: &ExactPolicy,
    n: usize,
) -> Result<(f64, f64)> {
    ExactEvaluator::new(env, theta_star.clone(), n)?.decomposition(pi1, pi2)
}
