//! Penalty criteria, Bayesian regret, information measures and the regret bounds.

pub mod info;

use serde::{Deserialize, Serialize};

use crate::data::{DataSequence, Theta};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::harness::{mean_stderr, run_one, CampaignConfig, PolicySpec};

pub use info::{
    blr_information, design_information, entropy, kl_divergence, mi_chain_rule, mi_chain_rule_check, mig_blr,
    mig_exact, mig_greedy, mutual_information, pinsker_bound, theorem1_bound, theorem2_rhs, total_variation,
    ChainRule, MigMethod, MigReport,
};

/// Criterion C: the sum of the penalties of every prefix of `d`.
pub fn cumulative_penalty(env: &Environment, theta_star: &Theta, d: &DataSequence) -> Result<f64> {
    if d.is_empty() {
        return Ok(0.0);
    }
    let bound = env.penalty.bind(env, theta_star)?;
    let mut total = 0.0;
    for t in 1..=d.len() {
        total += bound.eval(&d.prefix(t)?)?.value;
    }
    Ok(total)
}

/// Criterion F: the penalty of the whole sequence.
pub fn final_penalty(env: &Environment, theta_star: &Theta, d: &DataSequence) -> Result<f64> {
    Ok(env.penalty.bind(env, theta_star)?.eval(d)?.value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    /// Mean penalty of the evaluated policy after each step.
    pub per_step_penalty: Vec<f64>,
    pub cumulative: f64,
    #[serde(rename = "final")]
    pub final_penalty: f64,
    pub baseline_cumulative: f64,
    pub baseline_final: f64,
    pub seeds: usize,
    /// Mean paired difference (policy minus baseline).
    pub regret_cumulative: f64,
    pub regret_final: f64,
    pub stderr_cumulative: f64,
    pub stderr_final: f64,
}

/// Runs `policy` and `baseline` on the same true parameters (one per seed) and reports
/// the paired differences of both criteria.
pub fn bayes_regret(
    env: &Environment,
    base: &CampaignConfig,
    policy: &PolicySpec,
    baseline: &PolicySpec,
    n: usize,
    seeds: usize,
) -> Result<RegretReport> {
    if n == 0 || seeds == 0 {
        return Err(Error::InvalidConfig("n and seeds must be at least 1".into()));
    }
    let mut cfg = base.clone();
    cfg.n = n;
    cfg.seeds = seeds;
    let mut steps = vec![0.0; n];
    let (mut cum, mut fin, mut bcum, mut bfin) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for s in 0..seeds as u64 {
        let a = run_one(&cfg, env, policy, s)?;
        let b = run_one(&cfg, env, baseline, s)?;
        for (acc, st) in steps.iter_mut().zip(&a.trace) {
            *acc += st.penalty;
        }
        cum.push(a.cumulative);
        fin.push(a.final_penalty);
        bcum.push(b.cumulative);
        bfin.push(b.final_penalty);
    }
    let diff = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(a, b)| a - b).collect() };
    let (rc, sc) = mean_stderr(&diff(&cum, &bcum));
    let (rf, sf) = mean_stderr(&diff(&fin, &bfin));
    let per_step_penalty: Vec<f64> = steps.iter().map(|v| v / seeds as f64).collect();
    Ok(RegretReport {
        cumulative: per_step_penalty.iter().sum(),
        final_penalty: *per_step_penalty.last().unwrap(),
        per_step_penalty,
        baseline_cumulative: mean_stderr(&bcum).0,
        baseline_final: mean_stderr(&bfin).0,
        seeds,
        regret_cumulative: rc,
        regret_final: rf,
        stderr_cumulative: sc,
        stderr_final: sf,
    })
}
