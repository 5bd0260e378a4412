//! Environments: parameter space and prior, likelihood, action grid and penalty.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Action, DataSequence, Outcome, Theta};
use crate::error::{Error, Result};
use crate::models::ContinuousModel;
use crate::penalties::PenaltySpec;
use crate::SimRng;

const SUM_TOL: f64 = 1e-12;

/// Finite action grid, optionally a regular lattice over a box.
#[derive(Debug, Clone)]
pub struct ActionGrid {
    actions: Vec<Action>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    counts: Option<Vec<usize>>,
}

impl ActionGrid {
    /// Regular lattice with `counts[i]` points per dimension, endpoints included.
    /// Index order is row-major (last coordinate varies fastest).
    pub fn regular(lower: &[f64], upper: &[f64], counts: &[usize]) -> Result<Self> {
        if lower.len() != upper.len() || lower.len() != counts.len() || lower.is_empty() {
            return Err(Error::InvalidEnvironment(
                "grid bounds and counts must share a non-zero dimension".into(),
            ));
        }
        if counts.iter().any(|&c| c == 0) || lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidEnvironment("empty grid or inverted bounds".into()));
        }
        let axes: Vec<Vec<f64>> = (0..lower.len())
            .map(|d| linspace(lower[d], upper[d], counts[d]))
            .collect();
        let total: usize = counts.iter().product();
        let mut actions = Vec::with_capacity(total);
        let mut idx = vec![0usize; counts.len()];
        for i in 0..total {
            let coords = idx.iter().enumerate().map(|(d, &k)| axes[d][k]).collect();
            actions.push(Action::new(i, coords));
            for d in (0..counts.len()).rev() {
                idx[d] += 1;
                if idx[d] < counts[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        Ok(Self {
            actions,
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            counts: Some(counts.to_vec()),
        })
    }

    /// `n` unlabeled actions at coordinates 0..n on the real line.
    pub fn indexed(n: usize) -> Self {
        let actions = (0..n).map(|i| Action::new(i, vec![i as f64])).collect();
        Self {
            actions,
            lower: vec![0.0],
            upper: vec![n.saturating_sub(1) as f64],
            counts: None,
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn get(&self, index: usize) -> Option<&Action> {
        self.actions.get(index)
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lower, &self.upper)
    }

    pub fn counts(&self) -> Option<&[usize]> {
        self.counts.as_deref()
    }

    /// Product trapezoid weights on a regular lattice; equal weights summing to the box
    /// volume otherwise.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        match &self.counts {
            Some(counts) => {
                let per_axis: Vec<Vec<f64>> = counts
                    .iter()
                    .enumerate()
                    .map(|(d, &c)| trapezoid_weights(self.lower[d], self.upper[d], c))
                    .collect();
                let mut w = vec![1.0; self.actions.len()];
                let mut idx = vec![0usize; counts.len()];
                for wi in w.iter_mut() {
                    for (d, &k) in idx.iter().enumerate() {
                        *wi *= per_axis[d][k];
                    }
                    for d in (0..counts.len()).rev() {
                        idx[d] += 1;
                        if idx[d] < counts[d] {
                            break;
                        }
                        idx[d] = 0;
                    }
                }
                w
            }
            None => {
                let vol: f64 = self
                    .lower
                    .iter()
                    .zip(&self.upper)
                    .map(|(l, u)| (u - l).max(1.0))
                    .product();
                vec![vol / self.actions.len() as f64; self.actions.len()]
            }
        }
    }

    pub fn contains(&self, action: &Action) -> bool {
        match self.actions.get(action.index) {
            Some(a) => a == action,
            None => false,
        }
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

fn trapezoid_weights(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![(hi - lo).max(1.0)];
    }
    let h = (hi - lo) / (n - 1) as f64;
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

/// Finite parameter set with an explicit likelihood table over finite outcomes.
#[derive(Debug, Clone)]
pub struct FiniteModel {
    prior: Vec<f64>,
    n_actions: usize,
    n_outcomes: usize,
    // [theta][action][outcome]
    likelihood: Vec<f64>,
    values: Option<Vec<Vec<f64>>>,
}

impl FiniteModel {
    /// `likelihood[k][x][y] = P(y | x, theta_k)`. `values[k][x] = f_theta_k(x)` feeds the
    /// regret penalties.
    pub fn new(
        prior: Vec<f64>,
        likelihood: Vec<Vec<Vec<f64>>>,
        values: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let k = prior.len();
        if k == 0 || likelihood.len() != k {
            return Err(Error::InvalidEnvironment(
                "likelihood table must have one block per parameter".into(),
            ));
        }
        if prior.iter().any(|&p| !(p >= 0.0)) || (prior.iter().sum::<f64>() - 1.0).abs() > SUM_TOL
        {
            return Err(Error::InvalidEnvironment(
                "prior weights must be non-negative and sum to 1".into(),
            ));
        }
        let n_actions = likelihood[0].len();
        let n_outcomes = likelihood[0].first().map_or(0, |r| r.len());
        if n_actions == 0 || n_outcomes == 0 {
            return Err(Error::InvalidEnvironment("empty likelihood table".into()));
        }
        let mut flat = Vec::with_capacity(k * n_actions * n_outcomes);
        for (ki, block) in likelihood.iter().enumerate() {
            if block.len() != n_actions {
                return Err(Error::InvalidEnvironment(format!(
                    "parameter {ki} has {} likelihood rows, expected {n_actions}",
                    block.len()
                )));
            }
            for (xi, row) in block.iter().enumerate() {
                if row.len() != n_outcomes || row.iter().any(|&p| !(p >= 0.0)) {
                    return Err(Error::InvalidEnvironment(format!(
                        "malformed likelihood row ({ki}, {xi})"
                    )));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > SUM_TOL {
                    return Err(Error::InvalidEnvironment(format!(
                        "likelihood row ({ki}, {xi}) sums to {s}"
                    )));
                }
                flat.extend_from_slice(row);
            }
        }
        if let Some(v) = &values {
            if v.len() != k || v.iter().any(|r| r.len() != n_actions) {
                return Err(Error::InvalidEnvironment(
                    "value table must be |Theta| x |X|".into(),
                ));
            }
        }
        Ok(Self {
            prior,
            n_actions,
            n_outcomes,
            likelihood: flat,
            values,
        })
    }

    pub fn n_thetas(&self) -> usize {
        self.prior.len()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_outcomes(&self) -> usize {
        self.n_outcomes
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    #[inline]
    pub fn lik(&self, k: usize, x: usize, y: usize) -> f64 {
        self.likelihood[(k * self.n_actions + x) * self.n_outcomes + y]
    }

    pub fn outcome_probs(&self, k: usize, x: usize) -> &[f64] {
        let start = (k * self.n_actions + x) * self.n_outcomes;
        &self.likelihood[start..start + self.n_outcomes]
    }

    pub fn values(&self) -> Option<&[Vec<f64>]> {
        self.values.as_deref()
    }

    /// Inverse-CDF draw; one uniform per outcome so common random numbers line up.
    pub fn outcome_from_uniform(&self, k: usize, x: usize, u: f64) -> usize {
        let probs = self.outcome_probs(k, x);
        let mut acc = 0.0;
        for (y, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return y;
            }
        }
        // u landed in the rounding slack above the cumulative sum
        probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub enum Model {
    Finite(FiniteModel),
    Continuous(Arc<ContinuousModel>),
}

#[derive(Debug, Clone)]
pub struct Environment {
    pub id: String,
    pub grid: ActionGrid,
    pub model: Model,
    pub penalty: PenaltySpec,
    pub horizon_hint: Option<usize>,
    /// Fixed true parameter used instead of a prior draw when present.
    pub truth: Option<Theta>,
}

impl Environment {
    pub fn new(
        id: impl Into<String>,
        grid: ActionGrid,
        model: Model,
        penalty: PenaltySpec,
    ) -> Result<Self> {
        let env = Self {
            id: id.into(),
            grid,
            model,
            penalty,
            horizon_hint: None,
            truth: None,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn with_truth(mut self, truth: Theta) -> Result<Self> {
        self.check_theta(&truth)?;
        self.truth = Some(truth);
        Ok(self)
    }

    pub fn with_horizon_hint(mut self, n: usize) -> Self {
        self.horizon_hint = Some(n);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidEnvironment("empty action grid".into()));
        }
        let (lo, hi) = self.grid.bounds();
        for a in self.grid.actions() {
            if a.dim() != lo.len()
                || a.coords
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .any(|(c, (l, h))| c < l || c > h)
            {
                return Err(Error::InvalidEnvironment(format!(
                    "action {} lies outside the grid box",
                    a.index
                )));
            }
        }
        match &self.model {
            Model::Finite(m) => {
                if m.n_actions() != self.grid.len() {
                    return Err(Error::InvalidEnvironment(format!(
                        "likelihood table covers {} actions but the grid has {}",
                        m.n_actions(),
                        self.grid.len()
                    )));
                }
            }
            Model::Continuous(m) => m.validate(&self.grid)?,
        }
        self.penalty.validate(self)
    }

    pub fn finite(&self) -> Option<&FiniteModel> {
        match &self.model {
            Model::Finite(m) => Some(m),
            Model::Continuous(_) => None,
        }
    }

    pub fn require_finite(&self) -> Result<&FiniteModel> {
        self.finite().ok_or(Error::NotFinite)
    }

    pub fn continuous(&self) -> Option<&ContinuousModel> {
        match &self.model {
            Model::Continuous(m) => Some(m),
            Model::Finite(_) => None,
        }
    }

    pub fn action(&self, index: usize) -> &Action {
        &self.grid.actions()[index]
    }

    pub fn check_theta(&self, theta: &Theta) -> Result<()> {
        match (&self.model, theta) {
            (Model::Finite(m), Theta::Index(k)) if *k < m.n_thetas() => Ok(()),
            (Model::Continuous(m), Theta::Vector(v)) if v.len() == m.theta_dim() => Ok(()),
            _ => Err(Error::InvalidEnvironment(format!(
                "parameter {theta:?} is not a member of the parameter space"
            ))),
        }
    }

    pub fn check_outcome(&self, y: &Outcome) -> Result<()> {
        match (&self.model, y) {
            (Model::Finite(m), Outcome::Discrete(i)) if *i < m.n_outcomes() => Ok(()),
            (Model::Continuous(m), Outcome::Real(v)) if v.len() == m.channels() => Ok(()),
            _ => Err(Error::InvalidEnvironment(format!("invalid outcome {y:?}"))),
        }
    }

    pub fn sample_prior(&self, rng: &mut SimRng) -> Theta {
        match &self.model {
            Model::Finite(m) => Theta::Index(sample_categorical(m.prior(), rng.random())),
            Model::Continuous(m) => Theta::Vector(m.sample_prior(rng)),
        }
    }

    pub fn true_parameter(&self, rng: &mut SimRng) -> Theta {
        match &self.truth {
            Some(t) => t.clone(),
            None => self.sample_prior(rng),
        }
    }

    /// Number of standard normals one outcome draw consumes (continuous models).
    pub fn noise_dim(&self) -> usize {
        match &self.model {
            Model::Finite(_) => 1,
            Model::Continuous(m) => m.channels(),
        }
    }

    pub fn sample_outcome(&self, theta: &Theta, action: &Action, rng: &mut SimRng) -> Outcome {
        match (&self.model, theta) {
            (Model::Finite(m), Theta::Index(k)) => {
                Outcome::Discrete(m.outcome_from_uniform(*k, action.index, rng.random()))
            }
            (Model::Continuous(m), Theta::Vector(v)) => {
                let noise: Vec<f64> = (0..m.channels())
                    .map(|_| StandardNormal.sample(rng))
                    .collect();
                Outcome::Real(m.outcome_from_noise(v, action, &noise))
            }
            _ => panic!("parameter kind does not match the environment model"),
        }
    }

    /// f_theta over the whole grid for one response channel.
    pub fn response_on_grid(&self, theta: &Theta, channel: usize) -> Result<Vec<f64>> {
        match (&self.model, theta) {
            (Model::Finite(m), Theta::Index(k)) => m
                .values()
                .map(|v| v[*k].clone())
                .ok_or_else(|| {
                    Error::InvalidEnvironment("finite model carries no value table".into())
                }),
            (Model::Continuous(m), Theta::Vector(v)) => {
                Ok(m.response_on_grid(v, &self.grid, channel))
            }
            _ => Err(Error::InvalidEnvironment(
                "parameter kind does not match the environment model".into(),
            )),
        }
    }

    pub fn validate_sequence(&self, d: &DataSequence) -> Result<()> {
        for (a, y) in d.iter() {
            if !self.grid.contains(a) {
                return Err(Error::InvalidEnvironment(format!(
                    "action {} is not on the grid",
                    a.index
                )));
            }
            self.check_outcome(y)?;
        }
        Ok(())
    }
}

pub fn sample_categorical(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}
