//! Expected one-step look-ahead penalty and its minimiser over the action grid.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Action, DataSequence, Outcome, Theta};
use crate::env::{Environment, Model};
use crate::error::{Error, Result};
use crate::penalties::{BoundPenalty, Prepared};
use crate::SimRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LookaheadConfig {
    pub mc_samples: usize,
    pub exact_when_finite: bool,
}

impl Default for LookaheadConfig {
    fn default() -> Self {
        Self {
            mc_samples: 50,
            exact_when_finite: true,
        }
    }
}

impl LookaheadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mc_samples == 0 {
            return Err(Error::InvalidConfig("mc_samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome noise drawn once per decision and shared by every candidate action: standard
/// normals for continuous models, uniforms for inverse-CDF sampling of finite ones.
#[derive(Debug, Clone)]
pub struct CommonNoise {
    draws: Vec<Vec<f64>>,
}

impl CommonNoise {
    pub fn draw(env: &Environment, samples: usize, rng: &mut SimRng) -> Self {
        let draws = (0..samples)
            .map(|_| match &env.model {
                Model::Finite(_) => vec![rng.random::<f64>()],
                Model::Continuous(m) => (0..m.channels()).map(|_| StandardNormal.sample(rng)).collect(),
            })
            .collect();
        Self { draws }
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// The outcomes these draws produce at `action` under `theta`.
    pub fn outcomes(&self, env: &Environment, theta: &Theta, action: &Action) -> Vec<Outcome> {
        self.draws
            .iter()
            .map(|z| noise_outcome(env, theta, action, z))
            .collect()
    }
}

fn noise_outcome(env: &Environment, theta: &Theta, action: &Action, z: &[f64]) -> Outcome {
    match (&env.model, theta) {
        (Model::Finite(m), Theta::Index(k)) => Outcome::Discrete(m.outcome_from_uniform(*k, action.index, z[0])),
        (Model::Continuous(m), Theta::Vector(v)) => Outcome::Real(m.outcome_from_noise(v, action, z)),
        _ => panic!("parameter kind does not match the environment model"),
    }
}

/// Look-ahead values for every action and the lowest-index minimiser.
#[derive(Debug, Clone)]
pub struct LookaheadResult {
    pub action: Action,
    pub values: Vec<f64>,
    /// Number of candidate actions whose look-ahead value was computed.
    pub evaluations: usize,
}

enum Mode {
    Independent,
    Exact,
    MonteCarlo(CommonNoise),
}

/// Evaluates `Lambda+(theta, D, x)` for many `x` with shared setup.
pub struct Lookahead<'a> {
    env: &'a Environment,
    theta: &'a Theta,
    prepared: Prepared<'a>,
    mode: Mode,
}

impl<'a> Lookahead<'a> {
    pub fn new(
        env: &'a Environment,
        theta: &'a Theta,
        bound: &'a BoundPenalty,
        d: &DataSequence,
        cfg: &LookaheadConfig,
        rng: &mut SimRng,
    ) -> Result<Self> {
        cfg.validate()?;
        let prepared = bound.prepare(d)?;
        let mode = if prepared.outcome_independent() {
            Mode::Independent
        } else if env.finite().is_some() && cfg.exact_when_finite {
            Mode::Exact
        } else {
            Mode::MonteCarlo(CommonNoise::draw(env, cfg.mc_samples, rng))
        };
        Ok(Self {
            env,
            theta,
            prepared,
            mode,
        })
    }

    pub fn value(&self, action: &Action) -> Result<f64> {
        match &self.mode {
            Mode::Independent => {
                let y = noise_outcome(self.env, self.theta, action, &vec![0.0; self.env.noise_dim()]);
                Ok(self.prepared.extend(action, &y)?.value)
            }
            Mode::Exact => {
                let m = self.env.require_finite()?;
                let k = self.theta.index().ok_or(Error::NotFinite)?;
                let probs = m.outcome_probs(k, action.index);
                let mut total = 0.0;
                for (y, &p) in probs.iter().enumerate() {
                    if p > 0.0 {
                        total += p * self.prepared.extend(action, &Outcome::Discrete(y))?.value;
                    }
                }
                Ok(total)
            }
            Mode::MonteCarlo(noise) => {
                let ys = noise.outcomes(self.env, self.theta, action);
                let vals = self.prepared.extend_many(action, &ys)?;
                Ok(vals.iter().map(|v| v.value).sum::<f64>() / vals.len() as f64)
            }
        }
    }

    pub fn argmin(&self) -> Result<LookaheadResult> {
        let actions = self.env.grid.actions();
        let mut values = Vec::with_capacity(actions.len());
        let mut best = 0;
        for (i, a) in actions.iter().enumerate() {
            let v = self.value(a)?;
            if v < values.get(best).copied().unwrap_or(f64::INFINITY) {
                best = i;
            }
            values.push(v);
        }
        Ok(LookaheadResult {
            action: actions[best].clone(),
            evaluations: values.len(),
            values,
        })
    }
}

/// `Lambda+(theta, D, x)`: exact over outcomes for finite models, otherwise a Monte-Carlo
/// mean over `cfg.mc_samples` outcome draws.
pub fn lookahead_penalty(
    env: &Environment,
    theta: &Theta,
    d: &DataSequence,
    x: &Action,
    cfg: &LookaheadConfig,
    rng: &mut SimRng,
) -> Result<f64> {
    let bound = env.penalty.bind(env, theta)?;
    Lookahead::new(env, theta, &bound, d, cfg, rng)?.value(x)
}

/// The action minimising the look-ahead penalty; ties go to the lowest index.
pub fn argmin_lookahead(
    env: &Environment,
    theta: &Theta,
    d: &DataSequence,
    cfg: &LookaheadConfig,
    rng: &mut SimRng,
) -> Result<LookaheadResult> {
    let bound = env.penalty.bind(env, theta)?;
    Lookahead::new(env, theta, &bound, d, cfg, rng)?.argmin()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::SeedableRng;

    use super::*;
    use crate::env::{ActionGrid, FiniteModel};
    use crate::models::{ContinuousModel, RbfLinearModel};
    use crate::penalties::{DefaultRule, PenaltySpec, TablePenalty};

    fn random_table_env(rng: &mut SimRng, a: usize, y: usize) -> Environment {
        let k = 3;
        let lik = (0..k)
            .map(|_| {
                (0..a)
                    .map(|_| {
                        let w: Vec<f64> = (0..y).map(|_| rng.random_range(0.05..1.0)).collect();
                        let s: f64 = w.iter().sum();
                        w.into_iter().map(|v| v / s).collect()
                    })
                    .collect()
            })
            .collect();
        let values = (0..k)
            .map(|_| (0..a).map(|_| (0..y).map(|_| rng.random::<f64>()).collect()).collect())
            .collect();
        Environment::new(
            "t",
            ActionGrid::indexed(a),
            Model::Finite(FiniteModel::new(vec![1.0 / 3.0; 3], lik, None).unwrap()),
            PenaltySpec::Table(TablePenalty::with_default(DefaultRule::Smoothed {
                decay: 0.3,
                initial: 0.5,
                loss: values,
            })),
        )
        .unwrap()
    }

    fn enumerate(env: &Environment, theta: &Theta, d: &DataSequence, x: usize) -> f64 {
        let m = env.finite().unwrap();
        let k = theta.index().unwrap();
        (0..m.n_outcomes())
            .map(|y| {
                let dd = d.concat(env.action(x).clone(), Outcome::Discrete(y));
                m.lik(k, x, y) * env.penalty.evaluate(env, theta, &dd).unwrap()
            })
            .sum()
    }

    #[test]
    fn point_mass_likelihood_is_exact() {
        let env = Environment::new(
            "pm",
            ActionGrid::indexed(2),
            Model::Finite(
                FiniteModel::new(vec![1.0], vec![vec![vec![0.0, 1.0], vec![1.0, 0.0]]], None).unwrap(),
            ),
            PenaltySpec::Table(TablePenalty::with_default(DefaultRule::LastPair {
                values: vec![vec![vec![0.9, 0.2], vec![0.4, 0.7]]],
                empty: 1.0,
            })),
        )
        .unwrap();
        let mut rng = SimRng::seed_from_u64(0);
        let th = Theta::Index(0);
        let cfg = LookaheadConfig::default();
        let d = DataSequence::empty();
        assert_eq!(lookahead_penalty(&env, &th, &d, env.action(0), &cfg, &mut rng).unwrap(), 0.2);
        assert_eq!(lookahead_penalty(&env, &th, &d, env.action(1), &cfg, &mut rng).unwrap(), 0.4);
        let mc = LookaheadConfig {
            mc_samples: 7,
            exact_when_finite: false,
        };
        assert!((lookahead_penalty(&env, &th, &d, env.action(0), &mc, &mut rng).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn monte_carlo_agrees_with_enumeration() {
        let mut rng = SimRng::seed_from_u64(1);
        let cfg = LookaheadConfig {
            mc_samples: 100_000,
            exact_when_finite: false,
        };
        for _ in 0..20 {
            let env = random_table_env(&mut rng, 3, 3);
            let th = Theta::Index(rng.random_range(0..3));
            let d = DataSequence::from_pairs(vec![(env.action(1).clone(), Outcome::Discrete(2))]);
            let x = rng.random_range(0..3);
            let exact = enumerate(&env, &th, &d, x);
            let mc = lookahead_penalty(&env, &th, &d, env.action(x), &cfg, &mut rng).unwrap();
            assert!((mc - exact).abs() < 0.01, "{mc} vs {exact}");
        }
    }

    #[test]
    fn monte_carlo_is_unbiased() {
        let mut rng = SimRng::seed_from_u64(2);
        let env = random_table_env(&mut rng, 2, 3);
        let th = Theta::Index(1);
        let d = DataSequence::empty();
        let exact = enumerate(&env, &th, &d, 0);
        let cfg = LookaheadConfig {
            mc_samples: 3,
            exact_when_finite: false,
        };
        let runs = 10_000;
        let est: Vec<f64> = (0..runs)
            .map(|_| lookahead_penalty(&env, &th, &d, env.action(0), &cfg, &mut rng).unwrap())
            .collect();
        let mean = est.iter().sum::<f64>() / runs as f64;
        let var = est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
        let se = (var / runs as f64).sqrt();
        assert!((mean - exact).abs() < 3.0 * se, "{mean} vs {exact} (se {se})");
    }

    #[test]
    fn exact_argmin_matches_brute_force() {
        let mut rng = SimRng::seed_from_u64(3);
        let cfg = LookaheadConfig::default();
        for _ in 0..50 {
            let env = random_table_env(&mut rng, 4, 2);
            let th = Theta::Index(rng.random_range(0..3));
            let d = DataSequence::from_pairs(vec![(env.action(rng.random_range(0..4)).clone(), Outcome::Discrete(1))]);
            let vals: Vec<f64> = (0..4).map(|x| enumerate(&env, &th, &d, x)).collect();
            let mut best = 0;
            for x in 1..4 {
                if vals[x] < vals[best] {
                    best = x;
                }
            }
            let r = argmin_lookahead(&env, &th, &d, &cfg, &mut rng).unwrap();
            assert_eq!(r.action.index, best);
            for (a, b) in r.values.iter().zip(&vals) {
                assert!((a - b).abs() < 1e-15);
            }
            let again = argmin_lookahead(&env, &th, &d, &cfg, &mut rng).unwrap();
            assert_eq!(again.action.index, best);
        }
    }

    #[test]
    fn single_action_grid() {
        let env = Environment::new(
            "one",
            ActionGrid::indexed(1),
            Model::Finite(FiniteModel::new(vec![1.0], vec![vec![vec![0.5, 0.5]]], None).unwrap()),
            PenaltySpec::constant(0.3),
        )
        .unwrap();
        let mut rng = SimRng::seed_from_u64(4);
        let r = argmin_lookahead(&env, &Theta::Index(0), &DataSequence::empty(), &LookaheadConfig::default(), &mut rng)
            .unwrap();
        assert_eq!(r.action.index, 0);
        assert_eq!(r.evaluations, 1);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let env = Environment::new(
            "tie",
            ActionGrid::indexed(5),
            Model::Finite(FiniteModel::new(vec![1.0], vec![vec![vec![1.0]; 5]], Some(vec![vec![0.0, 2.0, 1.0, 2.0, 2.0]])).unwrap()),
            PenaltySpec::BanditRegret { channel: 0 },
        )
        .unwrap();
        let mut rng = SimRng::seed_from_u64(5);
        let r = argmin_lookahead(&env, &Theta::Index(0), &DataSequence::empty(), &LookaheadConfig::default(), &mut rng)
            .unwrap();
        assert_eq!(r.action.index, 1);
        assert_eq!(r.values[0], 1.0);
    }

    #[test]
    fn every_action_evaluated_once_at_paper_grid_sizes() {
        let centers: Vec<Vec<f64>> = (0..16).map(|i| vec![(i % 4) as f64 / 3.0, (i / 4) as f64 / 3.0, 0.5]).collect();
        let lm = |centers: Vec<Vec<f64>>| RbfLinearModel {
            centers,
            ..RbfLinearModel::unit_square_4x4()
        };
        let cases: Vec<(ActionGrid, RbfLinearModel)> = vec![
            (
                ActionGrid::regular(&[0.0], &[1.0], &[100]).unwrap(),
                lm(centers.iter().map(|c| vec![c[0]]).collect()),
            ),
            (
                ActionGrid::regular(&[0.0, 0.0], &[1.0, 1.0], &[50, 50]).unwrap(),
                RbfLinearModel::unit_square_4x4(),
            ),
            (
                ActionGrid::regular(&[0.0; 3], &[1.0; 3], &[30, 30, 30]).unwrap(),
                lm(centers),
            ),
        ];
        let mut rng = SimRng::seed_from_u64(6);
        for (grid, model, expected) in cases.into_iter().zip([100, 2500, 27000]).map(|((g, m), e)| (g, m, e)) {
            let env = Environment::new(
                "grid",
                grid,
                Model::Continuous(Arc::new(ContinuousModel::RbfLinear(model))),
                PenaltySpec::BanditRegret { channel: 0 },
            )
            .unwrap();
            let th = env.sample_prior(&mut rng);
            let r = argmin_lookahead(&env, &th, &DataSequence::empty(), &LookaheadConfig::default(), &mut rng).unwrap();
            assert_eq!(r.evaluations, expected);
            assert_eq!(r.values.len(), expected);
            // Thompson reduction: the chosen action maximises the sampled function
            let f = env.response_on_grid(&th, 0).unwrap();
            let best = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(f[r.action.index], best);
        }
    }
}
