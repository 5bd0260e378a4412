//! Exhaustive checks of the structural conditions behind the regret bounds, on finite
//! environments, by enumerating every data sequence up to a given length.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::{DataSequence, Outcome, Theta};
use crate::env::{Environment, FiniteModel};
use crate::error::{Error, Result};
use crate::penalties::{BoundPenalty, SeqKey};
use crate::policies::global::argmin;
use crate::policies::ENUMERATION_BOUND;

/// Absolute slack allowed in every comparison.
pub const TOLERANCE: f64 = 1e-12;

/// Recoverability slack below this is treated as zero; ratios over smaller slacks are
/// dominated by rounding.
pub const MIN_SLACK: f64 = 1e-9;

pub const DEFAULT_DEPTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    Episodic,
    Recoverability,
    MoreDataBetter,
    MonotoneSubmodular,
}

/// A counterexample. `lhs > rhs + TOLERANCE` (or `lhs != rhs` for the episodic check) is
/// the violated inequality; which sequences and action enter depends on the condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub theta: usize,
    pub first: SeqKey,
    pub second: Option<SeqKey>,
    pub action: Option<usize>,
    /// Recoverability: realised slack `lambda(D1) - lambda(D2)`.
    pub epsilon: Option<f64>,
    /// More-data-better: rollout length.
    pub steps: Option<usize>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: ConditionKind,
    pub holds: bool,
    pub witness: Option<Witness>,
    /// Smallest window for the episodic check; minimal alpha for recoverability.
    pub fitted_constant: Option<f64>,
    pub search_depth: usize,
    /// Window tested by the episodic check, rollout lengths `0..=k` otherwise.
    pub parameter: Option<usize>,
}

/// Every sequence of length at most `depth`, shortest first.
struct Lattice {
    keys: Vec<SeqKey>,
    seqs: Vec<DataSequence>,
    index: HashMap<SeqKey, usize>,
}

impl Lattice {
    fn build(env: &Environment, depth: usize, pairwise: bool) -> Result<Self> {
        let m = env.require_finite()?;
        let branch = (m.n_actions() * m.n_outcomes()) as f64;
        let count: f64 = (0..=depth).map(|t| branch.powi(t as i32)).sum();
        let required = if pairwise { count * count } else { count };
        if required > ENUMERATION_BOUND {
            return Err(Error::EnumerationBound {
                required,
                bound: ENUMERATION_BOUND,
                hint: "; reduce the search depth",
            });
        }
        let mut keys: Vec<SeqKey> = vec![Vec::new()];
        let mut start = 0;
        for _ in 0..depth {
            let end = keys.len();
            for i in start..end {
                for x in 0..m.n_actions() {
                    for y in 0..m.n_outcomes() {
                        let mut k = keys[i].clone();
                        k.push((x, y));
                        keys.push(k);
                    }
                }
            }
            start = end;
        }
        let seqs = keys.iter().map(|k| to_sequence(env, k)).collect();
        let index = keys.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        Ok(Self { keys, seqs, index })
    }

    fn len(&self) -> usize {
        self.keys.len()
    }
}

pub fn to_sequence(env: &Environment, key: &[(usize, usize)]) -> DataSequence {
    DataSequence::from_pairs(
        key.iter()
            .map(|&(x, y)| (env.action(x).clone(), Outcome::Discrete(y)))
            .collect(),
    )
}

/// Penalty of `d`, or `None` where the penalty is undefined (bandit regret of no data).
fn lambda(bound: &BoundPenalty, d: &DataSequence) -> Option<f64> {
    bound.eval(d).ok().map(|v| v.value)
}

/// `E_Y lambda(theta, d + (x, Y))` for every action.
fn one_step(env: &Environment, m: &FiniteModel, k: usize, bound: &BoundPenalty, d: &DataSequence) -> Result<Vec<f64>> {
    let prepared = bound.prepare(d)?;
    env.grid
        .actions()
        .iter()
        .map(|a| {
            let mut e = 0.0;
            for (y, &p) in m.outcome_probs(k, a.index).iter().enumerate() {
                if p > 0.0 {
                    e += p * prepared.extend(a, &Outcome::Discrete(y))?.value;
                }
            }
            Ok(e)
        })
        .collect()
}

fn bound_for(env: &Environment, k: usize) -> Result<BoundPenalty> {
    env.penalty.bind(env, &Theta::Index(k))
}

fn episodic_holds(lam: &[Option<f64>], lat: &Lattice, h: usize) -> Option<(usize, usize)> {
    for (i, key) in lat.keys.iter().enumerate() {
        let Some(v) = lam[i] else { continue };
        let j = lat.index[&key[key.len().saturating_sub(h)..].to_vec()];
        match lam[j] {
            Some(w) if (v - w).abs() <= TOLERANCE => {}
            _ => return Some((i, j)),
        }
    }
    None
}

/// Does the penalty depend only on the last `h` pairs, for every sequence up to `depth`?
/// The smallest window that works is reported as the fitted constant.
pub fn check_episodic(env: &Environment, h: usize, depth: usize) -> Result<ConditionReport> {
    let m = env.require_finite()?;
    let lat = Lattice::build(env, depth, false)?;
    let tables: Vec<Vec<Option<f64>>> = (0..m.n_thetas())
        .map(|k| {
            let bound = bound_for(env, k)?;
            Ok(lat.seqs.iter().map(|d| lambda(&bound, d)).collect())
        })
        .collect::<Result<_>>()?;
    let violation = |hh: usize| -> Option<Witness> {
        tables.iter().enumerate().find_map(|(k, lam)| {
            episodic_holds(lam, &lat, hh).map(|(i, j)| Witness {
                theta: k,
                first: lat.keys[i].clone(),
                second: Some(lat.keys[j].clone()),
                action: None,
                epsilon: None,
                steps: None,
                lhs: lam[i].unwrap_or(f64::NAN),
                rhs: lam[j].unwrap_or(f64::NAN),
            })
        })
    };
    let witness = violation(h);
    // windows at or beyond the depth hold trivially on the enumerated set
    let smallest = (0..=depth).find(|&hh| violation(hh).is_none());
    Ok(ConditionReport {
        condition: ConditionKind::Episodic,
        holds: witness.is_none(),
        witness,
        fitted_constant: smallest.map(|s| s as f64),
        search_depth: depth,
        parameter: Some(h),
    })
}

/// Minimal alpha with `min_x E lambda(D1 + x) <= min_x E lambda(D2 + x) + alpha * eps` for
/// every pair, where `eps = lambda(D1) - lambda(D2)` is the realised slack. Pairs with no
/// positive slack force `alpha = inf` whenever the left side exceeds the right.
pub fn check_recoverability(env: &Environment, depth: usize) -> Result<ConditionReport> {
    let m = env.require_finite()?;
    let lat = Lattice::build(env, depth, true)?;
    let mut alpha = 0.0f64;
    let mut witness: Option<Witness> = None;
    for k in 0..m.n_thetas() {
        let bound = bound_for(env, k)?;
        let lam: Vec<Option<f64>> = lat.seqs.iter().map(|d| lambda(&bound, d)).collect();
        let best: Vec<Option<f64>> = lat
            .seqs
            .iter()
            .map(|d| one_step(env, m, k, &bound, d).ok().map(|v| v.into_iter().fold(f64::INFINITY, f64::min)))
            .collect();
        for i in 0..lat.len() {
            let (Some(l1), Some(m1)) = (lam[i], best[i]) else { continue };
            for j in 0..lat.len() {
                if i == j {
                    continue;
                }
                let (Some(l2), Some(m2)) = (lam[j], best[j]) else { continue };
                let eps = l1 - l2;
                let ratio = if eps > MIN_SLACK {
                    (m1 - m2) / eps
                } else if m1 > m2 + MIN_SLACK {
                    f64::INFINITY
                } else {
                    continue;
                };
                if ratio > alpha || (witness.is_none() && ratio >= alpha) {
                    alpha = ratio;
                    witness = Some(Witness {
                        theta: k,
                        first: lat.keys[i].clone(),
                        second: Some(lat.keys[j].clone()),
                        action: None,
                        epsilon: Some(eps),
                        steps: None,
                        lhs: m1,
                        rhs: m2,
                    });
                }
            }
        }
    }
    let holds = alpha < 1.0;
    Ok(ConditionReport {
        condition: ConditionKind::Recoverability,
        holds,
        witness: if holds { None } else { witness },
        fitted_constant: Some(alpha),
        search_depth: depth,
        parameter: None,
    })
}

/// `E lambda(theta, D + k-step rollout of the myopic oracle)`.
struct Rollout<'a> {
    env: &'a Environment,
    m: &'a FiniteModel,
    k: usize,
    bound: BoundPenalty,
    memo: HashMap<(SeqKey, usize), f64>,
}

impl Rollout<'_> {
    fn value(&mut self, key: &SeqKey, steps: usize) -> Result<f64> {
        let d = to_sequence(self.env, key);
        if steps == 0 {
            return Ok(self.bound.eval(&d)?.value);
        }
        if let Some(v) = self.memo.get(&(key.clone(), steps)) {
            return Ok(*v);
        }
        let x = argmin(&one_step(self.env, self.m, self.k, &self.bound, &d)?);
        let mut v = 0.0;
        for y in 0..self.m.n_outcomes() {
            let p = self.m.lik(self.k, x, y);
            if p > 0.0 {
                let mut next = key.clone();
                next.push((x, y));
                v += p * self.value(&next, steps - 1)?;
            }
        }
        self.memo.insert((key.clone(), steps), v);
        Ok(v)
    }
}

/// For every `D` that is a prefix of `D'` (lengths up to `depth`) and every rollout length
/// `0..=k`: the expected penalty after continuing `D'` is no larger than after continuing `D`.
pub fn check_more_data_better(env: &Environment, depth: usize, k: usize) -> Result<ConditionReport> {
    let m = env.require_finite()?;
    let branch = (m.n_actions() * m.n_outcomes()) as f64;
    if branch.powi(k as i32) > ENUMERATION_BOUND {
        return Err(Error::EnumerationBound {
            required: branch.powi(k as i32),
            bound: ENUMERATION_BOUND,
            hint: "; reduce the rollout length",
        });
    }
    let lat = Lattice::build(env, depth, false)?;
    for t in 0..m.n_thetas() {
        let mut r = Rollout {
            env,
            m,
            k: t,
            bound: bound_for(env, t)?,
            memo: HashMap::new(),
        };
        for steps in 0..=k {
            for key in &lat.keys {
                let Ok(long) = r.value(key, steps) else { continue };
                for cut in 0..key.len() {
                    let prefix = key[..cut].to_vec();
                    let Ok(short) = r.value(&prefix, steps) else { continue };
                    if long > short + TOLERANCE {
                        return Ok(ConditionReport {
                            condition: ConditionKind::MoreDataBetter,
                            holds: false,
                            witness: Some(Witness {
                                theta: t,
                                first: prefix,
                                second: Some(key.clone()),
                                action: None,
                                epsilon: None,
                                steps: Some(steps),
                                lhs: long,
                                rhs: short,
                            }),
                            fitted_constant: None,
                            search_depth: depth,
                            parameter: Some(k),
                        });
                    }
                }
            }
        }
    }
    Ok(ConditionReport {
        condition: ConditionKind::MoreDataBetter,
        holds: true,
        witness: None,
        fitted_constant: None,
        search_depth: depth,
        parameter: Some(k),
    })
}

/// (i) no action raises the expected penalty; (ii) the expected one-step decrease of every
/// action shrinks as the sequence is extended.
pub fn check_monotone_submodular(env: &Environment, depth: usize) -> Result<ConditionReport> {
    let m = env.require_finite()?;
    let lat = Lattice::build(env, depth, false)?;
    let fail = |w: Witness| ConditionReport {
        condition: ConditionKind::MonotoneSubmodular,
        holds: false,
        witness: Some(w),
        fitted_constant: None,
        search_depth: depth,
        parameter: None,
    };
    for t in 0..m.n_thetas() {
        let bound = bound_for(env, t)?;
        let lam: Vec<Option<f64>> = lat.seqs.iter().map(|d| lambda(&bound, d)).collect();
        let next: Vec<Option<Vec<f64>>> = lat.seqs.iter().map(|d| one_step(env, m, t, &bound, d).ok()).collect();
        let gain = |i: usize| -> Option<Vec<f64>> {
            let l = lam[i]?;
            Some(next[i].as_ref()?.iter().map(|e| l - e).collect())
        };
        for i in 0..lat.len() {
            let (Some(l), Some(e)) = (lam[i], next[i].as_ref()) else { continue };
            for (x, &v) in e.iter().enumerate() {
                if v > l + TOLERANCE {
                    return Ok(fail(Witness {
                        theta: t,
                        first: lat.keys[i].clone(),
                        second: None,
                        action: Some(x),
                        epsilon: None,
                        steps: None,
                        lhs: v,
                        rhs: l,
                    }));
                }
            }
        }
        for i in 0..lat.len() {
            let Some(g_long) = gain(i) else { continue };
            let key = &lat.keys[i];
            for cut in 0..key.len() {
                let j = lat.index[&key[..cut].to_vec()];
                let Some(g_short) = gain(j) else { continue };
                for x in 0..m.n_actions() {
                    if g_long[x] > g_short[x] + TOLERANCE {
                        return Ok(fail(Witness {
                            theta: t,
                            first: lat.keys[j].clone(),
                            second: Some(key.clone()),
                            action: Some(x),
                            epsilon: None,
                            steps: None,
                            lhs: g_long[x],
                            rhs: g_short[x],
                        }));
                    }
                }
            }
        }
    }
    Ok(ConditionReport {
        condition: ConditionKind::MonotoneSubmodular,
        holds: true,
        witness: None,
        fitted_constant: None,
        search_depth: depth,
        parameter: None,
    })
}

/// Re-evaluates a witness from scratch; true when the violation is reproduced.
pub fn replay(env: &Environment, report: &ConditionReport) -> Result<bool> {
    let m = env.require_finite()?;
    let Some(w) = &report.witness else {
        return Ok(false);
    };
    let bound = bound_for(env, w.theta)?;
    let d1 = to_sequence(env, &w.first);
    let d2 = w.second.as_ref().map(|k| to_sequence(env, k));
    match report.condition {
        ConditionKind::Episodic => {
            let h = report.parameter.unwrap_or(0);
            let suffix = d1.suffix(h);
            Ok(match (lambda(&bound, &d1), lambda(&bound, &suffix)) {
                (Some(a), Some(b)) => (a - b).abs() > TOLERANCE,
                (Some(_), None) => true,
                _ => false,
            })
        }
        ConditionKind::Recoverability => {
            let d2 = d2.ok_or_else(|| Error::InvalidConfig("witness lacks a second sequence".into()))?;
            let eps = bound.eval(&d1)?.value - bound.eval(&d2)?.value;
            let best = |d: &DataSequence| -> Result<f64> {
                Ok(one_step(env, m, w.theta, &bound, d)?.into_iter().fold(f64::INFINITY, f64::min))
            };
            let (m1, m2) = (best(&d1)?, best(&d2)?);
            // violated for every alpha < 1
            Ok(if eps > MIN_SLACK { m1 - m2 >= eps - TOLERANCE } else { m1 > m2 + MIN_SLACK })
        }
        ConditionKind::MoreDataBetter => {
            let mut r = Rollout {
                env,
                m,
                k: w.theta,
                bound,
                memo: HashMap::new(),
            };
            let steps = w.steps.unwrap_or(0);
            let long = r.value(w.second.as_ref().unwrap_or(&w.first), steps)?;
            let short = r.value(&w.first, steps)?;
            Ok(long > short + TOLERANCE)
        }
        ConditionKind::MonotoneSubmodular => {
            let x = w.action.unwrap_or(0);
            let gain = |d: &DataSequence| -> Result<f64> {
                Ok(bound.eval(d)?.value - one_step(env, m, w.theta, &bound, d)?[x])
            };
            match d2 {
                None => Ok(gain(&d1)? < -TOLERANCE),
                Some(d2) => Ok(gain(&d2)? > gain(&d1)? + TOLERANCE),
            }
        }
    }
}

/// The constant `B` of the cumulative regret bound implied by a report that holds.
pub fn derive_b(report: &ConditionReport) -> Result<f64> {
    if !report.holds {
        return Err(Error::ConditionFails);
    }
    match report.condition {
        ConditionKind::Episodic => report
            .fitted_constant
            .or(report.parameter.map(|h| h as f64))
            .ok_or(Error::ConditionFails),
        ConditionKind::Recoverability => {
            let a = report.fitted_constant.ok_or(Error::ConditionFails)?;
            Ok(1.0 / (1.0 - a))
        }
        ConditionKind::MoreDataBetter => Ok(2.0),
        ConditionKind::MonotoneSubmodular => Err(Error::InvalidConfig(
            "monotone submodularity bounds the final penalty and carries no cumulative constant".into(),
        )),
    }
}

/// All four checks with one depth, window and rollout length.
pub fn check_all(env: &Environment, depth: usize, h: usize, k: usize) -> Result<Vec<ConditionReport>> {
    Ok(vec![
        check_episodic(env, h, depth)?,
        check_recoverability(env, depth)?,
        check_more_data_better(env, depth, k)?,
        check_monotone_submodular(env, depth)?,
    ])
}
