//! Exhaustive expectimax for the globally optimal oracle on finite environments.

use std::collections::HashMap;
use std::sync::Arc;

use crate::data::{Action, DataSequence, Outcome, Theta};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::penalties::{BoundPenalty, SeqKey};

use super::Criterion;

/// Largest number of action/outcome leaves any exhaustive search may visit.
pub const ENUMERATION_BOUND: f64 = 1e7;

/// Fails when `(|X| |Y|)^horizon` exceeds [`ENUMERATION_BOUND`].
pub fn check_enumeration_bound(env: &Environment, horizon: usize) -> Result<()> {
    let m = env.require_finite()?;
    let required = ((m.n_actions() * m.n_outcomes()) as f64).powi(horizon as i32);
    if required > ENUMERATION_BOUND {
        return Err(Error::EnumerationBound {
            required,
            bound: ENUMERATION_BOUND,
            hint: "; shorten the horizon or shrink the environment",
        });
    }
    Ok(())
}

#[derive(Debug)]
pub struct GlobalOracle {
    theta: Theta,
    bound: Arc<BoundPenalty>,
    criterion: Criterion,
    // optimal values of internal nodes, keyed by the full history
    memo: HashMap<(SeqKey, usize), f64>,
}

impl GlobalOracle {
    pub fn new(env: &Environment, theta: Theta, criterion: Criterion) -> Result<Self> {
        env.require_finite()?;
        let bound = Arc::new(env.penalty.bind(env, &theta)?);
        Ok(Self {
            theta,
            bound,
            criterion,
            memo: HashMap::new(),
        })
    }

    pub fn theta(&self) -> &Theta {
        &self.theta
    }

    pub fn criterion(&self) -> Criterion {
        self.criterion
    }

    /// Expected value of taking each action now and acting optimally for the remaining
    /// `remaining - 1` steps. Includes the incurred penalty under the cumulative criterion.
    pub fn action_values(&mut self, env: &Environment, d: &DataSequence, remaining: usize) -> Result<Vec<f64>> {
        if remaining == 0 {
            return Err(Error::InvalidConfig("no steps remain".into()));
        }
        let m = env.require_finite()?;
        let k = self.theta.index().ok_or(Error::NotFinite)?;
        let bound = self.bound.clone();
        let prepared = bound.prepare(d)?;
        let mut out = Vec::with_capacity(m.n_actions());
        for a in env.grid.actions() {
            let mut q = 0.0;
            for (y, &p) in m.outcome_probs(k, a.index).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let now = prepared.extend(a, &Outcome::Discrete(y))?.value;
                let v = match (self.criterion, remaining) {
                    (_, 1) => now,
                    (Criterion::Final, r) => self.value(env, &d.concat(a.clone(), Outcome::Discrete(y)), r - 1)?,
                    (Criterion::Cumulative, r) => {
                        now + self.value(env, &d.concat(a.clone(), Outcome::Discrete(y)), r - 1)?
                    }
                };
                q += p * v;
            }
            out.push(q);
        }
        Ok(out)
    }

    /// Optimal expected objective from `d` with `remaining` steps to go (excluding
    /// penalties already incurred).
    pub fn value(&mut self, env: &Environment, d: &DataSequence, remaining: usize) -> Result<f64> {
        if remaining == 0 {
            return match self.criterion {
                Criterion::Final => Ok(self.bound.eval(d)?.value),
                Criterion::Cumulative => Ok(0.0),
            };
        }
        let key = (d.discrete_key().ok_or(Error::NotFinite)?, remaining);
        if let Some(v) = self.memo.get(&key) {
            return Ok(*v);
        }
        let v = self
            .action_values(env, d, remaining)?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if remaining >= 2 {
            self.memo.insert(key, v);
        }
        Ok(v)
    }

    pub fn step(&mut self, env: &Environment, d: &DataSequence, remaining: usize) -> Result<Action> {
        let q = self.action_values(env, d, remaining)?;
        Ok(env.action(argmin(&q)).clone())
    }
}

/// Lowest index attaining the minimum.
pub(crate) fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best
}
