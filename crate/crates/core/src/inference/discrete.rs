use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::DataSequence;
use crate::env::{sample_categorical, Environment};
use crate::error::{Error, Result};
use crate::SimRng;

/// Posterior over a finite parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePosterior {
    weights: Vec<f64>,
}

impl DiscretePosterior {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let s: f64 = weights.iter().sum();
        if weights.is_empty() || weights.iter().any(|&w| !(w >= 0.0)) || (s - 1.0).abs() > 1e-12 {
            return Err(Error::DegeneratePosterior(
                "weights must be non-negative and sum to 1".into(),
            ));
        }
        Ok(Self { weights })
    }

    pub fn uniform(k: usize) -> Self {
        Self {
            weights: vec![1.0 / k as f64; k],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sample(&self, rng: &mut SimRng) -> usize {
        sample_categorical(&self.weights, rng.random())
    }

    /// Multiply in one observation's likelihood column and renormalize.
    pub(crate) fn absorb(&mut self, column: impl Iterator<Item = f64>) -> Result<()> {
        let mut total = 0.0;
        for (w, l) in self.weights.iter_mut().zip(column) {
            *w *= l;
            total += *w;
        }
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::DegeneratePosterior(
                "observed data has zero probability under every parameter".into(),
            ));
        }
        self.weights.iter_mut().for_each(|w| *w /= total);
        Ok(())
    }
}

/// Exact Bayes update of `prior` with every pair of `d`.
pub fn discrete_update(
    prior: &DiscretePosterior,
    env: &Environment,
    d: &DataSequence,
) -> Result<DiscretePosterior> {
    let m = env.require_finite()?;
    if prior.weights.len() != m.n_thetas() {
        return Err(Error::InvalidEnvironment(
            "posterior size does not match the parameter set".into(),
        ));
    }
    let mut post = prior.clone();
    for (a, y) in d.iter() {
        let y = y
            .discrete()
            .filter(|&y| y < m.n_outcomes())
            .ok_or_else(|| Error::InvalidEnvironment(format!("invalid outcome {y:?}")))?;
        post.absorb((0..m.n_thetas()).map(|k| m.lik(k, a.index, y)))?;
    }
    Ok(post)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Outcome;
    use crate::env::{ActionGrid, FiniteModel, Model};
    use crate::penalties::PenaltySpec;
    use rand::SeedableRng;

    fn env(lik: Vec<Vec<Vec<f64>>>, prior: Vec<f64>) -> Environment {
        let n_actions = lik[0].len();
        Environment::new(
            "t",
            ActionGrid::indexed(n_actions),
            Model::Finite(FiniteModel::new(prior, lik, None).unwrap()),
            PenaltySpec::constant(0.0),
        )
        .unwrap()
    }

    fn obs(env: &Environment, items: &[(usize, usize)]) -> DataSequence {
        DataSequence::from_pairs(
            items
                .iter()
                .map(|&(x, y)| (env.action(x).clone(), Outcome::Discrete(y)))
                .collect(),
        )
    }

    #[test]
    fn symmetric_likelihood_keeps_uniform() {
        let e = env(
            vec![vec![vec![0.3, 0.7]], vec![vec![0.3, 0.7]]],
            vec![0.5, 0.5],
        );
        let p = discrete_update(&DiscretePosterior::uniform(2), &e, &obs(&e, &[(0, 1), (0, 0)]))
            .unwrap();
        assert_eq!(p.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn single_observation_bayes_rule() {
        let e = env(
            vec![vec![vec![0.8, 0.2]], vec![vec![0.2, 0.8]]],
            vec![0.5, 0.5],
        );
        let p = discrete_update(&DiscretePosterior::uniform(2), &e, &obs(&e, &[(0, 0)])).unwrap();
        assert!((p.weights()[0] - 0.8).abs() < 1e-15);
        assert!((p.weights()[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn empty_data_is_identity() {
        let e = env(vec![vec![vec![1.0]], vec![vec![1.0]]], vec![0.25, 0.75]);
        let prior = DiscretePosterior::new(vec![0.25, 0.75]).unwrap();
        assert_eq!(
            discrete_update(&prior, &e, &DataSequence::empty()).unwrap(),
            prior
        );
    }

    #[test]
    fn impossible_data_is_degenerate() {
        let e = env(
            vec![vec![vec![1.0, 0.0]], vec![vec![1.0, 0.0]]],
            vec![0.5, 0.5],
        );
        let r = discrete_update(&DiscretePosterior::uniform(2), &e, &obs(&e, &[(0, 1)]));
        assert!(matches!(r, Err(Error::DegeneratePosterior(_))));
    }

    #[test]
    fn point_mass_always_sampled() {
        let p = DiscretePosterior::new(vec![1.0, 0.0]).unwrap();
        let mut rng = SimRng::seed_from_u64(1);
        assert!((0..1000).all(|_| p.sample(&mut rng) == 0));
    }

    #[test]
    fn sequential_equals_batched() {
        let mut rng = SimRng::seed_from_u64(7);
        for _ in 0..20 {
            let k = 4;
            let lik: Vec<Vec<Vec<f64>>> = (0..k)
                .map(|_| {
                    (0..3)
                        .map(|_| {
                            let a: f64 = rng.random_range(0.05..0.95);
                            vec![a, 1.0 - a]
                        })
                        .collect()
                })
                .collect();
            let e = env(lik, vec![0.25; 4]);
            let items: Vec<(usize, usize)> = (0..8)
                .map(|_| (rng.random_range(0..3), rng.random_range(0..2)))
                .collect();
            let d = obs(&e, &items);
            // one product over the whole batch, normalized once
            let m = e.finite().unwrap();
            let mut batched: Vec<f64> = (0..k)
                .map(|th| 0.25 * items.iter().map(|&(x, y)| m.lik(th, x, y)).product::<f64>())
                .collect();
            let z: f64 = batched.iter().sum();
            batched.iter_mut().for_each(|w| *w /= z);
            let mut seq = DiscretePosterior::uniform(k);
            for t in 0..d.len() {
                let step = DataSequence::from_pairs(vec![d.pairs()[t].clone()]);
                seq = discrete_update(&seq, &e, &step).unwrap();
            }
            for (a, b) in batched.iter().zip(seq.weights()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
