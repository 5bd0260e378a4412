//! Penalty functions `lambda(theta, D)` with values in [0, 1].
//!
//! A [`PenaltySpec`] is bound to a parameter with [`PenaltySpec::bind`], which precomputes
//! everything that depends on `theta` only. A bound penalty is then prepared for a data
//! sequence `D`, after which `lambda(theta, D ++ (x, y))` is cheap for any single pair.
//! Look-ahead evaluates thousands of one-pair extensions of the same `D`, so this split
//! is what keeps the estimation penalties tractable.

pub mod estimators;
pub mod table;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Action, DataSequence, Outcome, Theta};
use crate::env::{Environment, Model};
use crate::error::{Error, Result};
use crate::inference::gaussian::GaussianPosterior;
use crate::inference::gp::{GpPosterior, RbfKernel, JITTER};
use crate::models::ContinuousModel;

pub use estimators::{LogisticMle, MleSolver};
pub use table::{CompiledTable, DefaultRule, SeqKey, TableEntry, TablePenalty};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub scale: f64,
    #[serde(default = "yes")]
    pub clamp: bool,
}

fn yes() -> bool {
    true
}

impl Normalization {
    pub fn new(scale: f64) -> Self {
        Self { scale, clamp: true }
    }

    pub fn apply(&self, raw: f64) -> f64 {
        let v = raw / self.scale;
        if self.clamp {
            v.clamp(0.0, 1.0)
        } else {
            v
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    Exp,
}

impl Transform {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Transform::Identity => v,
            Transform::Exp => v.exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Estimator {
    /// Regularised maximum likelihood for the logistic curve parameters `(a, b, c)`.
    LogisticMle(LogisticMle),
    /// Posterior mean of the linear-Gaussian weights.
    PosteriorMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weighted {
    pub weight: f64,
    pub penalty: PenaltySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltySpec {
    /// Instantaneous regret of the last action.
    BanditRegret {
        #[serde(default)]
        channel: usize,
    },
    /// Regret of the best action visited so far.
    BoSimpleRegret {
        #[serde(default)]
        channel: usize,
    },
    EstimationError {
        estimator: Estimator,
        normalization: Normalization,
    },
    /// Integrated squared difference between the transformed true function and the
    /// transformed GP posterior mean over the action grid.
    TransformedL2 {
        #[serde(default)]
        channel: usize,
        transform: Transform,
        normalization: Normalization,
    },
    Combined { components: Vec<Weighted> },
    Table(TablePenalty),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PenaltyValue {
    /// Before normalisation.
    pub raw: f64,
    pub value: f64,
}

impl PenaltyValue {
    fn unit(value: f64) -> Self {
        Self { raw: value, value }
    }
}

impl PenaltySpec {
    pub fn constant(value: f64) -> Self {
        PenaltySpec::Table(TablePenalty::with_default(DefaultRule::Constant { value }))
    }

    pub fn validate(&self, env: &Environment) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("{msg} (environment {})", env.id)));
        match self {
            PenaltySpec::BanditRegret { channel } | PenaltySpec::BoSimpleRegret { channel } => {
                match &env.model {
                    Model::Finite(m) if m.values().is_none() => {
                        bad("regret penalties need a value table")
                    }
                    Model::Finite(_) if *channel > 0 => bad("finite models have one channel"),
                    Model::Continuous(m) if *channel >= m.channels() => bad("no such channel"),
                    _ => Ok(()),
                }
            }
            PenaltySpec::EstimationError {
                estimator,
                normalization,
            } => {
                check_normalization(normalization)?;
                match (estimator, env.continuous()) {
                    (Estimator::LogisticMle(_), Some(ContinuousModel::Logistic(_))) => Ok(()),
                    (Estimator::PosteriorMean, Some(ContinuousModel::RbfLinear(_))) => Ok(()),
                    _ => bad("estimator does not match the model"),
                }
            }
            PenaltySpec::TransformedL2 {
                channel,
                normalization,
                ..
            } => {
                check_normalization(normalization)?;
                match env.continuous() {
                    Some(ContinuousModel::GpGrid(m)) if *channel < m.channels.len() => Ok(()),
                    _ => bad("transformed L2 penalties need a GP grid model"),
                }
            }
            PenaltySpec::Combined { components } => {
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if components.iter().any(|c| !(c.weight >= 0.0)) || total > 1.0 + 1e-12 {
                    return bad("combined weights must be non-negative and sum to at most 1");
                }
                components.iter().try_for_each(|c| c.penalty.validate(env))
            }
            PenaltySpec::Table(t) => t.validate(env.require_finite()?),
        }
    }

    /// Precompute everything that depends on `theta` alone.
    pub fn bind(&self, env: &Environment, theta: &Theta) -> Result<BoundPenalty> {
        env.check_theta(theta)?;
        let inner = match self {
            PenaltySpec::BanditRegret { channel } | PenaltySpec::BoSimpleRegret { channel } => {
                let f = env.response_on_grid(theta, *channel)?;
                let best = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let worst = f.iter().copied().fold(f64::INFINITY, f64::min);
                Bound::Regret {
                    f,
                    best,
                    range: best - worst,
                    simple: matches!(self, PenaltySpec::BoSimpleRegret { .. }),
                }
            }
            PenaltySpec::EstimationError {
                estimator,
                normalization,
            } => {
                let v = theta.vector().expect("checked above");
                match (estimator, env.continuous()) {
                    (Estimator::LogisticMle(est), _) => Bound::Logistic {
                        tau: [v[0], v[1], v[2]],
                        est: est.clone(),
                        norm: *normalization,
                    },
                    (Estimator::PosteriorMean, Some(ContinuousModel::RbfLinear(m))) => {
                        Bound::Linear {
                            tau: DVector::from_column_slice(v),
                            features: Arc::new(m.feature_matrix(&env.grid)),
                            prior: GaussianPosterior::isotropic(m.dim(), m.prior_var),
                            noise_var: m.noise_var,
                            norm: *normalization,
                        }
                    }
                    _ => return Err(Error::InvalidConfig("estimator does not match the model".into())),
                }
            }
            PenaltySpec::TransformedL2 {
                channel,
                transform,
                normalization,
            } => {
                let Some(ContinuousModel::GpGrid(m)) = env.continuous() else {
                    return Err(Error::InvalidConfig("transformed L2 needs a GP grid model".into()));
                };
                let ch = &m.channels[*channel];
                let truth = env.response_on_grid(theta, *channel)?;
                Bound::L2 {
                    target: truth.iter().map(|&v| transform.apply(v)).collect(),
                    weights: env.grid.quadrature_weights(),
                    points: m.points().clone(),
                    kernel: ch.kernel.clone(),
                    gram: Arc::new(ch.kernel.gram(m.points())),
                    noise_var: ch.noise_var,
                    prior_mean: ch.mean,
                    channel: *channel,
                    transform: *transform,
                    norm: *normalization,
                }
            }
            PenaltySpec::Combined { components } => Bound::Combined(
                components
                    .iter()
                    .map(|c| Ok((c.weight, c.penalty.bind(env, theta)?)))
                    .collect::<Result<_>>()?,
            ),
            PenaltySpec::Table(t) => Bound::Table {
                table: Arc::new(t.compile()),
                theta: theta.index().expect("checked above"),
            },
        };
        Ok(BoundPenalty { inner })
    }

    /// `lambda(theta, D)` in one call.
    pub fn evaluate(&self, env: &Environment, theta: &Theta, d: &DataSequence) -> Result<f64> {
        Ok(self.bind(env, theta)?.eval(d)?.value)
    }
}

fn check_normalization(n: &Normalization) -> Result<()> {
    if n.scale > 0.0 && n.scale.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig("normaliser must be positive".into()))
    }
}

#[derive(Debug, Clone)]
pub struct BoundPenalty {
    inner: Bound,
}

#[derive(Debug, Clone)]
enum Bound {
    Regret {
        f: Vec<f64>,
        best: f64,
        range: f64,
        simple: bool,
    },
    Logistic {
        tau: [f64; 3],
        est: LogisticMle,
        norm: Normalization,
    },
    Linear {
        tau: DVector<f64>,
        features: Arc<DMatrix<f64>>,
        prior: GaussianPosterior,
        noise_var: f64,
        norm: Normalization,
    },
    L2 {
        target: Vec<f64>,
        weights: Vec<f64>,
        points: Arc<Vec<Vec<f64>>>,
        kernel: RbfKernel,
        gram: Arc<DMatrix<f64>>,
        noise_var: f64,
        prior_mean: f64,
        channel: usize,
        transform: Transform,
        norm: Normalization,
    },
    Combined(Vec<(f64, BoundPenalty)>),
    Table {
        table: Arc<CompiledTable>,
        theta: usize,
    },
}

impl BoundPenalty {
    pub fn eval(&self, d: &DataSequence) -> Result<PenaltyValue> {
        match &self.inner {
            Bound::Regret {
                f,
                best,
                range,
                simple,
            } => {
                let reached = if *simple {
                    d.iter().map(|(a, _)| f[a.index]).fold(f64::NEG_INFINITY, f64::max)
                } else {
                    match d.last() {
                        Some((a, _)) => f[a.index],
                        None => {
                            return Err(Error::UndefinedPenalty(
                                "instantaneous regret needs at least one action".into(),
                            ))
                        }
                    }
                };
                Ok(regret_value(*best, *range, reached))
            }
            Bound::Logistic { tau, est, norm } => {
                let (xs, ys) = scalar_data(d)?;
                let fit = est.fit(&xs, &ys)?;
                Ok(estimation_error(tau, &fit, norm))
            }
            Bound::Linear {
                tau,
                features,
                prior,
                noise_var,
                norm,
            } => {
                let post = linear_posterior(prior, features, *noise_var, d)?;
                Ok(estimation_error(tau.as_slice(), post.mean.as_slice(), norm))
            }
            Bound::L2 {
                target,
                weights,
                points,
                kernel,
                noise_var,
                prior_mean,
                channel,
                transform,
                norm,
                ..
            } => {
                let gp = GpPosterior::from_data(kernel.clone(), *noise_var, *prior_mean, d, *channel)?;
                let (mean, _) = gp.mean_and_factor(points)?;
                Ok(transformed_l2(target, mean.as_slice(), weights, *transform, norm))
            }
            Bound::Combined(parts) => {
                let mut total = 0.0;
                for (w, p) in parts {
                    total += w * p.eval(d)?.value;
                }
                Ok(PenaltyValue::unit(total))
            }
            Bound::Table { table, theta } => {
                let key = finite_key(d)?;
                Ok(PenaltyValue::unit(table.eval(*theta, &key)))
            }
        }
    }

    /// Precompute the state that lets `lambda(theta, D ++ (x, y))` be evaluated quickly.
    pub fn prepare(&self, d: &DataSequence) -> Result<Prepared<'_>> {
        let state = match &self.inner {
            Bound::Regret { f, .. } => State::Regret {
                best_seen: d.iter().map(|(a, _)| f[a.index]).fold(f64::NEG_INFINITY, f64::max),
            },
            Bound::Logistic { est, .. } => {
                let (xs, ys) = scalar_data(d)?;
                let fit = est.fit(&xs, &ys)?;
                State::Logistic { xs, ys, fit }
            }
            Bound::Linear {
                tau,
                features,
                prior,
                noise_var,
                ..
            } => {
                let post = linear_posterior(prior, features, *noise_var, d)?;
                let resid = tau - &post.mean;
                State::Linear { post, resid }
            }
            Bound::L2 {
                points,
                kernel,
                noise_var,
                prior_mean,
                channel,
                ..
            } => {
                let gp = GpPosterior::from_data(kernel.clone(), *noise_var, *prior_mean, d, *channel)?;
                let (mean, factor) = gp.mean_and_factor(points)?;
                State::L2 { mean, factor }
            }
            Bound::Combined(parts) => State::Combined(
                parts
                    .iter()
                    .map(|(_, p)| p.prepare(d))
                    .collect::<Result<_>>()?,
            ),
            Bound::Table { .. } => State::Table { key: finite_key(d)? },
        };
        Ok(Prepared { bound: self, state })
    }

    /// True when `lambda(theta, D ++ (x, y))` does not depend on `y`.
    pub fn outcome_independent(&self) -> bool {
        match &self.inner {
            Bound::Regret { .. } => true,
            Bound::Combined(parts) => parts.iter().all(|(_, p)| p.outcome_independent()),
            _ => false,
        }
    }

    /// The parameter's response values, for regret penalties.
    pub fn regret_values(&self) -> Option<&[f64]> {
        match &self.inner {
            Bound::Regret { f, .. } => Some(f),
            _ => None,
        }
    }
}

pub struct Prepared<'a> {
    bound: &'a BoundPenalty,
    state: State<'a>,
}

enum State<'a> {
    Regret {
        best_seen: f64,
    },
    Logistic {
        xs: Vec<f64>,
        ys: Vec<f64>,
        fit: [f64; 3],
    },
    Linear {
        post: GaussianPosterior,
        resid: DVector<f64>,
    },
    L2 {
        mean: DVector<f64>,
        factor: DMatrix<f64>,
    },
    Combined(Vec<Prepared<'a>>),
    Table {
        key: SeqKey,
    },
}

impl Prepared<'_> {
    pub fn extend(&self, action: &Action, outcome: &Outcome) -> Result<PenaltyValue> {
        Ok(self.extend_many(action, std::slice::from_ref(outcome))?[0])
    }

    /// `lambda(theta, D ++ (action, y))` for each `y` in `outcomes`.
    pub fn extend_many(&self, action: &Action, outcomes: &[Outcome]) -> Result<Vec<PenaltyValue>> {
        match (&self.bound.inner, &self.state) {
            (
                Bound::Regret {
                    f,
                    best,
                    range,
                    simple,
                },
                State::Regret { best_seen },
            ) => {
                let reached = if *simple {
                    best_seen.max(f[action.index])
                } else {
                    f[action.index]
                };
                Ok(vec![regret_value(*best, *range, reached); outcomes.len()])
            }
            (Bound::Logistic { tau, est, norm }, State::Logistic { xs, ys, fit }) => {
                let mut xs = xs.clone();
                let mut ys = ys.clone();
                xs.push(action.coords[0]);
                ys.push(0.0);
                let last = ys.len() - 1;
                outcomes
                    .iter()
                    .map(|y| {
                        ys[last] = scalar(y)?;
                        let p = est.fit_extension(&xs, &ys, *fit)?;
                        Ok(estimation_error(tau, &p, norm))
                    })
                    .collect()
            }
            (
                Bound::Linear {
                    features,
                    noise_var,
                    norm,
                    ..
                },
                State::Linear { post, resid },
            ) => {
                // mean' = mean + gain * (y - phi.mean), so tau - mean' = resid - gain * innovation
                let phi: DVector<f64> = features.row(action.index).transpose();
                let s = &post.cov * &phi;
                let gain = &s / (noise_var + phi.dot(&s));
                let predicted = phi.dot(&post.mean);
                let r2 = resid.norm_squared();
                let rg = resid.dot(&gain);
                let g2 = gain.norm_squared();
                outcomes
                    .iter()
                    .map(|y| {
                        let c = scalar(y)? - predicted;
                        let raw = (r2 - 2.0 * c * rg + c * c * g2).max(0.0);
                        Ok(PenaltyValue {
                            raw,
                            value: norm.apply(raw),
                        })
                    })
                    .collect()
            }
            (
                Bound::L2 {
                    target,
                    weights,
                    gram,
                    noise_var,
                    channel,
                    transform,
                    norm,
                    ..
                },
                State::L2 { mean, factor },
            ) => {
                let i = action.index;
                let g = mean.len();
                let vi = factor.column(i);
                let kpost: Vec<f64> = (0..g)
                    .map(|j| gram[(j, i)] - factor.column(j).dot(&vi))
                    .collect();
                let denom = kpost[i] + noise_var + JITTER;
                let mut updated = vec![0.0; g];
                outcomes
                    .iter()
                    .map(|y| {
                        let y = y.channel(*channel).ok_or_else(|| {
                            Error::InvalidEnvironment(format!("expected a real outcome, got {y:?}"))
                        })?;
                        let c = (y - mean[i]) / denom;
                        for (u, (m, k)) in updated.iter_mut().zip(mean.iter().zip(&kpost)) {
                            *u = m + k * c;
                        }
                        Ok(transformed_l2(target, &updated, weights, *transform, norm))
                    })
                    .collect()
            }
            (Bound::Combined(parts), State::Combined(prepared)) => {
                let mut total = vec![0.0; outcomes.len()];
                for ((w, _), p) in parts.iter().zip(prepared) {
                    for (t, v) in total.iter_mut().zip(p.extend_many(action, outcomes)?) {
                        *t += w * v.value;
                    }
                }
                Ok(total.into_iter().map(PenaltyValue::unit).collect())
            }
            (Bound::Table { table, theta }, State::Table { key }) => {
                let mut key = key.clone();
                key.push((action.index, 0));
                let last = key.len() - 1;
                outcomes
                    .iter()
                    .map(|y| {
                        key[last].1 = y.discrete().ok_or(Error::NotFinite)?;
                        Ok(PenaltyValue::unit(table.eval(*theta, &key)))
                    })
                    .collect()
            }
            _ => unreachable!("prepared state always matches its bound penalty"),
        }
    }

    pub fn outcome_independent(&self) -> bool {
        self.bound.outcome_independent()
    }
}

fn regret_value(best: f64, range: f64, reached: f64) -> PenaltyValue {
    if reached == f64::NEG_INFINITY {
        // nothing visited yet
        return PenaltyValue {
            raw: range,
            value: 1.0,
        };
    }
    let raw = best - reached;
    let value = if range > 0.0 {
        (raw / range).clamp(0.0, 1.0)
    } else {
        0.0
    };
    PenaltyValue { raw, value }
}

fn scalar(y: &Outcome) -> Result<f64> {
    y.channel(0)
        .ok_or_else(|| Error::InvalidEnvironment(format!("expected a real outcome, got {y:?}")))
}

fn scalar_data(d: &DataSequence) -> Result<(Vec<f64>, Vec<f64>)> {
    let xs = d.iter().map(|(a, _)| a.coords[0]).collect();
    let ys = d.iter().map(|(_, y)| scalar(y)).collect::<Result<_>>()?;
    Ok((xs, ys))
}

fn finite_key(d: &DataSequence) -> Result<SeqKey> {
    d.discrete_key().ok_or(Error::NotFinite)
}

fn linear_posterior(
    prior: &GaussianPosterior,
    features: &DMatrix<f64>,
    noise_var: f64,
    d: &DataSequence,
) -> Result<GaussianPosterior> {
    let mut post = prior.clone();
    for (a, y) in d.iter() {
        post = post.observe(&features.row(a.index).transpose(), scalar(y)?, noise_var);
    }
    Ok(post)
}

/// Instantaneous regret `(max f - f(x_last)) / range(f)`; 0 for a constant `f`.
pub fn bandit_regret(f: &[f64], d: &DataSequence) -> Result<f64> {
    let (a, _) = d
        .last()
        .ok_or_else(|| Error::UndefinedPenalty("instantaneous regret needs at least one action".into()))?;
    let (best, range) = best_and_range(f);
    Ok(regret_value(best, range, f[a.index]).value)
}

/// Simple regret `(max f - max_t f(x_t)) / range(f)`; 1 for the empty sequence.
pub fn bo_simple_regret(f: &[f64], d: &DataSequence) -> f64 {
    let (best, range) = best_and_range(f);
    let reached = d.iter().map(|(a, _)| f[a.index]).fold(f64::NEG_INFINITY, f64::max);
    regret_value(best, range, reached).value
}

fn best_and_range(f: &[f64]) -> (f64, f64) {
    let best = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let worst = f.iter().copied().fold(f64::INFINITY, f64::min);
    (best, best - worst)
}

/// Squared Euclidean distance between `tau` and `estimate`, normalised.
pub fn estimation_error(tau: &[f64], estimate: &[f64], norm: &Normalization) -> PenaltyValue {
    let raw: f64 = tau.iter().zip(estimate).map(|(a, b)| (a - b).powi(2)).sum();
    PenaltyValue {
        raw,
        value: norm.apply(raw),
    }
}

/// Quadrature estimate of `int (s(target) - s(estimate))^2`, where `target` is already
/// transformed and `weights` are the grid's quadrature weights.
pub fn transformed_l2(
    target: &[f64],
    estimate: &[f64],
    weights: &[f64],
    transform: Transform,
    norm: &Normalization,
) -> PenaltyValue {
    let raw: f64 = target
        .iter()
        .zip(estimate)
        .zip(weights)
        .map(|((t, e), w)| w * (t - transform.apply(*e)).powi(2))
        .sum();
    PenaltyValue {
        raw,
        value: norm.apply(raw),
    }
}

/// Weighted sum of component penalty values.
pub fn combined_penalty(weights: &[f64], components: &[f64]) -> f64 {
    weights.iter().zip(components).map(|(w, c)| w * c).sum()
}

#[cfg(test)]
mod tests;
