//! Weighted particle approximation of the posterior, updated one observation at a time.
//!
//! When the effective sample size drops below `ess_threshold * count` the cloud is
//! systematically resampled and each particle takes Metropolis-corrected Gaussian
//! random-walk steps in unconstrained coordinates. The step scale per coordinate is
//! `move_scale` times the weighted particle standard deviation before resampling.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Action, DataSequence, Outcome, Theta};
use crate::env::{sample_categorical, Environment, Model};
use crate::error::{Error, Result};
use crate::SimRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParticleConfig {
    pub count: usize,
    pub ess_threshold: f64,
    pub moves: usize,
    pub move_scale: f64,
}

impl Default for ParticleConfig {
    fn default() -> Self {
        Self {
            count: 2000,
            ess_threshold: 0.5,
            moves: 3,
            move_scale: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParticlePosterior {
    particles: Vec<Vec<f64>>,
    weights: Vec<f64>,
    pub ess_threshold: f64,
    moves: usize,
    move_scale: f64,
    history: DataSequence,
    resamples: usize,
}

impl ParticlePosterior {
    /// Equally weighted draws from the prior. Finite environments use parameter indices as
    /// one-dimensional atoms.
    pub fn from_prior(env: &Environment, cfg: &ParticleConfig, rng: &mut SimRng) -> Result<Self> {
        if cfg.count == 0 || !(cfg.ess_threshold > 0.0 && cfg.ess_threshold <= 1.0) {
            return Err(Error::InvalidConfig(
                "particle count must be positive and ess_threshold in (0, 1]".into(),
            ));
        }
        let particles = (0..cfg.count)
            .map(|_| match env.sample_prior(rng) {
                Theta::Index(k) => vec![k as f64],
                Theta::Vector(v) => v,
            })
            .collect();
        Ok(Self {
            particles,
            weights: vec![1.0 / cfg.count as f64; cfg.count],
            ess_threshold: cfg.ess_threshold,
            moves: cfg.moves,
            move_scale: cfg.move_scale,
            history: DataSequence::empty(),
            resamples: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[Vec<f64>] {
        &self.particles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn resamples(&self) -> usize {
        self.resamples
    }

    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    pub fn mean(&self) -> Vec<f64> {
        let d = self.particles[0].len();
        let mut m = vec![0.0; d];
        for (p, w) in self.particles.iter().zip(&self.weights) {
            for (mi, pi) in m.iter_mut().zip(p) {
                *mi += w * pi;
            }
        }
        m
    }

    pub fn sample(&self, env: &Environment, rng: &mut SimRng) -> Theta {
        let i = sample_categorical(&self.weights, rng.random());
        match env.model {
            Model::Finite(_) => Theta::Index(self.particles[i][0] as usize),
            Model::Continuous(_) => Theta::Vector(self.particles[i].clone()),
        }
    }

    /// Atom weights aggregated per parameter index (finite environments).
    pub fn atom_distribution(&self, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; k];
        for (p, w) in self.particles.iter().zip(&self.weights) {
            out[p[0] as usize] += w;
        }
        out
    }

    fn systematic_resample(&mut self, rng: &mut SimRng) {
        let n = self.particles.len();
        let step = 1.0 / n as f64;
        let mut u = rng.random::<f64>() * step;
        let mut cum = self.weights[0];
        let mut j = 0;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            while u > cum && j + 1 < n {
                j += 1;
                cum += self.weights[j];
            }
            out.push(self.particles[j].clone());
            u += step;
        }
        self.particles = out;
        self.weights = vec![step; n];
        self.resamples += 1;
    }
}

fn log_lik(env: &Environment, theta: &[f64], a: &Action, y: &Outcome) -> f64 {
    match (&env.model, y) {
        (Model::Finite(m), Outcome::Discrete(y)) => m.lik(theta[0] as usize, a.index, *y).ln(),
        (Model::Continuous(m), Outcome::Real(v)) => m.log_likelihood(theta, a, v),
        _ => f64::NEG_INFINITY,
    }
}

/// Reweight by the likelihood of `pair`, resampling and rejuvenating when the effective
/// sample size collapses.
pub fn smc_update(
    post: &ParticlePosterior,
    env: &Environment,
    pair: (&Action, &Outcome),
    rng: &mut SimRng,
) -> Result<ParticlePosterior> {
    let (a, y) = pair;
    let lls: Vec<f64> = post
        .particles
        .iter()
        .map(|p| log_lik(env, p, a, y))
        .collect();
    let max = lls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegeneratePosterior(
            "every particle assigns zero likelihood to the observation".into(),
        ));
    }
    let mut next = post.clone();
    next.history = post.history.concat(a.clone(), y.clone());
    let mut total = 0.0;
    for (w, ll) in next.weights.iter_mut().zip(&lls) {
        *w *= (ll - max).exp();
        total += *w;
    }
    if !(total > 0.0) {
        return Err(Error::DegeneratePosterior("particle weights underflowed".into()));
    }
    next.weights.iter_mut().for_each(|w| *w /= total);

    let n = next.particles.len() as f64;
    if next.ess() < next.ess_threshold * n {
        match &env.model {
            Model::Finite(_) => next.systematic_resample(rng),
            Model::Continuous(m) => {
                let scales = weighted_std_unconstrained(&next, m);
                next.systematic_resample(rng);
                rejuvenate(&mut next, env, m, &scales, rng);
            }
        }
    }
    Ok(next)
}

fn weighted_std_unconstrained(
    post: &ParticlePosterior,
    m: &crate::models::ContinuousModel,
) -> Vec<f64> {
    let us: Vec<Vec<f64>> = post.particles.iter().map(|p| m.to_unconstrained(p)).collect();
    let d = us[0].len();
    let mut mean = vec![0.0; d];
    for (u, w) in us.iter().zip(&post.weights) {
        for i in 0..d {
            mean[i] += w * u[i];
        }
    }
    let mut var = vec![0.0; d];
    for (u, w) in us.iter().zip(&post.weights) {
        for i in 0..d {
            var[i] += w * (u[i] - mean[i]).powi(2);
        }
    }
    var.into_iter().map(|v| v.sqrt().max(1e-8)).collect()
}

fn rejuvenate(
    post: &mut ParticlePosterior,
    env: &Environment,
    m: &crate::models::ContinuousModel,
    scales: &[f64],
    rng: &mut SimRng,
) {
    let history = post.history.clone();
    let log_target = |u: &[f64]| -> f64 {
        let lp = m.log_prior_unconstrained(u);
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        let theta = m.from_unconstrained(u);
        lp + history
            .iter()
            .map(|(a, y)| log_lik(env, &theta, a, y))
            .sum::<f64>()
    };
    let step: Vec<f64> = scales.iter().map(|s| post.move_scale * s).collect();
    for p in post.particles.iter_mut() {
        let mut u = m.to_unconstrained(p);
        let mut cur = log_target(&u);
        for _ in 0..post.moves {
            let prop: Vec<f64> = u
                .iter()
                .zip(&step)
                .map(|(ui, s)| {
                    let z: f64 = StandardNormal.sample(rng);
                    ui + s * z
                })
                .collect();
            let lt = log_target(&prop);
            let accept = rng.random::<f64>().ln();
            if lt.is_finite() && accept < lt - cur {
                u = prop;
                cur = lt;
            }
        }
        *p = m.from_unconstrained(&u);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ActionGrid, FiniteModel};
    use crate::inference::discrete::{discrete_update, DiscretePosterior};
    use crate::penalties::PenaltySpec;
    use rand::SeedableRng;

    fn finite_env(rng: &mut SimRng) -> Environment {
        let k = 5;
        let lik = (0..k)
            .map(|_| {
                (0..3)
                    .map(|_| {
                        let p: f64 = rng.random_range(0.1..0.9);
                        vec![p, 1.0 - p]
                    })
                    .collect()
            })
            .collect();
        Environment::new(
            "atoms",
            ActionGrid::indexed(3),
            Model::Finite(FiniteModel::new(vec![0.2; 5], lik, None).unwrap()),
            PenaltySpec::constant(0.0),
        )
        .unwrap()
    }

    #[test]
    fn flat_likelihood_keeps_weights() {
        let env = Environment::new(
            "flat",
            ActionGrid::indexed(1),
            Model::Finite(
                FiniteModel::new(vec![0.5, 0.5], vec![vec![vec![0.5, 0.5]], vec![vec![0.5, 0.5]]], None)
                    .unwrap(),
            ),
            PenaltySpec::constant(0.0),
        )
        .unwrap();
        let mut rng = SimRng::seed_from_u64(1);
        let cfg = ParticleConfig {
            count: 100,
            ..Default::default()
        };
        let p = ParticlePosterior::from_prior(&env, &cfg, &mut rng).unwrap();
        let q = smc_update(&p, &env, (env.action(0), &Outcome::Discrete(1)), &mut rng).unwrap();
        for (a, b) in p.weights().iter().zip(q.weights()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(p.particles(), q.particles());
    }

    #[test]
    fn resampling_restores_full_ess() {
        let mut rng = SimRng::seed_from_u64(2);
        let env = finite_env(&mut rng);
        let cfg = ParticleConfig {
            count: 500,
            ess_threshold: 1.0,
            ..Default::default()
        };
        let p = ParticlePosterior::from_prior(&env, &cfg, &mut rng).unwrap();
        let q = smc_update(&p, &env, (env.action(0), &Outcome::Discrete(0)), &mut rng).unwrap();
        assert_eq!(q.resamples(), 1);
        assert!((q.ess() - 500.0).abs() < 1e-9);
        assert_eq!(q.len(), 500);
    }

    #[test]
    fn atoms_track_exact_posterior() {
        let mut total_tv = 0.0;
        let seeds = 20;
        for s in 0..seeds {
            let mut rng = SimRng::seed_from_u64(100 + s);
            let env = finite_env(&mut rng);
            let cfg = ParticleConfig {
                count: 4000,
                ..Default::default()
            };
            let mut p = ParticlePosterior::from_prior(&env, &cfg, &mut rng).unwrap();
            let mut d = DataSequence::empty();
            for _ in 0..15 {
                let a = env.action(rng.random_range(0..3)).clone();
                let y = Outcome::Discrete(rng.random_range(0..2));
                p = smc_update(&p, &env, (&a, &y), &mut rng).unwrap();
                d = d.concat(a, y);
            }
            let exact = discrete_update(&DiscretePosterior::new(vec![0.2; 5]).unwrap(), &env, &d)
                .unwrap();
            let approx = p.atom_distribution(5);
            total_tv += 0.5
                * exact
                    .weights()
                    .iter()
                    .zip(&approx)
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>();
        }
        let tv = total_tv / seeds as f64;
        assert!(tv < 0.05, "mean total variation {tv}");
    }
}
