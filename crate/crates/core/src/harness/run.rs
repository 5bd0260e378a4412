//! Single runs and seeded campaigns.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DataSequence, Outcome, Theta};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::inference::Belief;
use crate::policies::{PolicyKind, PolicyState};

use super::catalog::catalog_environment;
use super::config::{CampaignConfig, PolicySpec};
use super::rng::{self, substream};
use super::summary::{summarize, Summary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub action: usize,
    pub outcome: Outcome,
    pub penalty_raw: f64,
    pub penalty: f64,
    pub cum_penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub seed: u64,
    pub policy: String,
    pub theta_star: Theta,
    pub trace: Vec<StepRecord>,
    pub cumulative: f64,
    #[serde(rename = "final")]
    pub final_penalty: f64,
    /// Seconds; the only field that is not reproducible.
    pub wall_time: f64,
}

impl RunRecord {
    pub fn penalties(&self) -> Vec<f64> {
        self.trace.iter().map(|s| s.penalty).collect()
    }

    /// The record with `wall_time` zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_time: 0.0,
            ..self.clone()
        }
    }
}

pub fn run_id(policy: &str, seed: u64) -> String {
    format!("{policy}-{seed}")
}

/// Runs one policy for `cfg.n` steps. The true parameter and the outcome noise depend only
/// on `(master_seed, seed)`, so every policy faces the same instance and, while their
/// actions agree, the same outcomes.
pub fn run_one(cfg: &CampaignConfig, env: &Environment, policy: &PolicySpec, seed: u64) -> Result<RunRecord> {
    let start = Instant::now();
    let label = policy.label();
    let id = run_id(&label, seed);
    let wrap = |step: usize| {
        let id = id.clone();
        move |e: Error| Error::Run {
            run_id: id,
            step,
            source: Box::new(e),
        }
    };
    let theta_star = env.true_parameter(&mut substream(cfg.master_seed, seed, rng::THETA));
    let mut outcome_rng = substream(cfg.master_seed, seed, rng::OUTCOME);
    let mut policy_rng = substream(cfg.master_seed, seed, rng::POLICY);
    let lookahead = policy.lookahead.clone().unwrap_or_else(|| cfg.lookahead.clone());
    let mut state = match policy.kind {
        PolicyKind::Mps => PolicyState::Mps {
            belief: Belief::prior(
                env,
                &cfg.inference,
                &mut substream(cfg.master_seed, seed, rng::PRIOR),
            )
            .map_err(wrap(0))?,
            lookahead,
        },
        PolicyKind::Rand => PolicyState::Rand,
        PolicyKind::MyopicOracle => PolicyState::MyopicOracle {
            theta_star: theta_star.clone(),
            lookahead,
        },
        PolicyKind::GlobalOracle => {
            PolicyState::global(env, theta_star.clone(), cfg.n, policy.criterion).map_err(wrap(0))?
        }
    };
    let bound = env.penalty.bind(env, &theta_star).map_err(wrap(0))?;
    let mut d = DataSequence::empty();
    let mut trace = Vec::with_capacity(cfg.n);
    let mut cum = 0.0;
    for t in 1..=cfg.n {
        let decision = state.step(env, &d, &mut policy_rng).map_err(wrap(t))?;
        let y = env.sample_outcome(&theta_star, &decision.action, &mut outcome_rng);
        d = d.concat(decision.action.clone(), y.clone());
        let pv = bound.eval(&d).map_err(wrap(t))?;
        cum += pv.value;
        state
            .observe(env, &decision.action, &y, &mut policy_rng)
            .map_err(wrap(t))?;
        trace.push(StepRecord {
            t,
            action: decision.action.index,
            outcome: y,
            penalty_raw: pv.raw,
            penalty: pv.value,
            cum_penalty: cum,
        });
    }
    let final_penalty = trace.last().map_or(0.0, |s| s.penalty);
    Ok(RunRecord {
        run_id: id,
        seed,
        policy: label,
        theta_star,
        trace,
        cumulative: cum,
        final_penalty,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run_id: String,
    pub policy: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub config: CampaignConfig,
    /// Ordered by policy (as configured), then seed.
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
    pub summary: Summary,
}

impl CampaignResult {
    pub fn policy_records(&self, label: &str) -> Vec<&RunRecord> {
        self.records.iter().filter(|r| r.policy == label).collect()
    }
}

pub fn campaign_environment(cfg: &CampaignConfig) -> Result<Environment> {
    catalog_environment(&cfg.environment.id, &cfg.environment.overrides)
}

/// Runs every (policy, seed) pair on a worker pool. Individual failures are collected
/// rather than aborting the campaign.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignResult> {
    cfg.validate()?;
    let env = campaign_environment(cfg)?;
    run_campaign_on(cfg, &env)
}

/// As [`run_campaign`] with an explicitly constructed environment.
pub fn run_campaign_on(cfg: &CampaignConfig, env: &Environment) -> Result<CampaignResult> {
    cfg.validate()?;
    let jobs: Vec<(usize, u64)> = (0..cfg.policies.len())
        .flat_map(|p| (0..cfg.seeds as u64).map(move |s| (p, s)))
        .collect();
    let exec = || -> Vec<Result<RunRecord>> {
        jobs.par_iter()
            .map(|&(p, s)| run_one(cfg, env, &cfg.policies[p], s))
            .collect()
    };
    let results = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .install(exec),
        None => exec(),
    };
    let mut records = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (&(p, s), r) in jobs.iter().zip(results) {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => {
                let policy = cfg.policies[p].label();
                failures.push(RunFailure {
                    run_id: run_id(&policy, s),
                    policy,
                    seed: s,
                    error: e.to_string(),
                })
            }
        }
    }
    let labels: Vec<String> = cfg.policies.iter().map(|p| p.label()).collect();
    let summary = summarize(&env.id, cfg, &labels, &records, &failures);
    Ok(CampaignResult {
        config: cfg.clone(),
        records,
        failures,
        summary,
    })
}
