//! Discrete information measures (nats), maximum information gain and the regret bounds.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{DataSequence, Outcome, Theta};
use crate::env::{Environment, FiniteModel};
use crate::error::{Error, Result};
use crate::policies::{ExactEvaluator, ExactPolicy, ENUMERATION_BOUND};

pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

/// `KL(p || q)`; infinite when `p` puts mass where `q` has none.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (a, b) in p.iter().zip(q) {
        if *a > 0.0 {
            if *b <= 0.0 {
                return f64::INFINITY;
            }
            total += a * (a / b).ln();
        }
    }
    total
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Pinsker: `|E_p f - E_q f| <= B sqrt(KL(p || q) / 2)` for `f` with values in `[0, B]`.
pub fn pinsker_bound(p: &[f64], q: &[f64], b: f64) -> f64 {
    b * (kl_divergence(p, q) / 2.0).sqrt()
}

/// Mutual information of a joint table `joint[i][j]`.
pub fn mutual_information(joint: &[Vec<f64>]) -> f64 {
    let rows: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let cols = joint.first().map_or(0, |r| r.len());
    let col_sums: Vec<f64> = (0..cols).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
    let mut mi = 0.0;
    for (i, r) in joint.iter().enumerate() {
        for (j, &p) in r.iter().enumerate() {
            if p > 0.0 {
                mi += p * (p / (rows[i] * col_sums[j])).ln();
            }
        }
    }
    mi.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MigMethod {
    ExactEnumeration,
    Greedy,
    ClosedFormBlr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigReport {
    pub n: usize,
    pub psi_n: f64,
    pub method: MigMethod,
    /// Action indices of the maximising (or greedily chosen) design.
    pub argmax_sequence: Vec<usize>,
    /// True when `psi_n` is only a lower bound on the maximum.
    pub lower_bound: bool,
    /// `ln |Theta|` for finite parameter sets.
    pub log_theta_count: Option<f64>,
}

/// `I(theta; Y_1..Y_n)` for the non-adaptive design that queries action `x` `counts[x]`
/// times. Outcome counts per action are sufficient, so the sum runs over multinomial count
/// vectors rather than over outcome sequences.
pub fn design_information(m: &FiniteModel, counts: &[usize]) -> f64 {
    let k = m.n_thetas();
    // (joint probability per theta) for every combination of per-action count vectors
    let mut states: Vec<Vec<f64>> = vec![m.prior().to_vec()];
    for (x, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let comps = compositions(c, m.n_outcomes());
        let mut next = Vec::with_capacity(states.len() * comps.len());
        for s in &states {
            for comp in &comps {
                let coef = ln_multinomial(c, comp);
                let p: Vec<f64> = (0..k)
                    .map(|t| {
                        if s[t] == 0.0 {
                            return 0.0;
                        }
                        let mut lp = coef;
                        for (y, &cy) in comp.iter().enumerate() {
                            if cy > 0 {
                                let q = m.lik(t, x, y);
                                if q == 0.0 {
                                    return 0.0;
                                }
                                lp += cy as f64 * q.ln();
                            }
                        }
                        s[t] * lp.exp()
                    })
                    .collect();
                if p.iter().any(|&v| v > 0.0) {
                    next.push(p);
                }
            }
        }
        states = next;
    }
    let prior = m.prior();
    let mut mi = 0.0;
    for s in &states {
        let marg: f64 = s.iter().sum();
        for (t, &p) in s.iter().enumerate() {
            if p > 0.0 {
                mi += p * (p / (prior[t] * marg)).ln();
            }
        }
    }
    mi.max(0.0)
}

fn compositions(n: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![n]];
    }
    let mut out = Vec::new();
    for first in 0..=n {
        for mut rest in compositions(n - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn ln_multinomial(n: usize, comp: &[usize]) -> f64 {
    let lf = |k: usize| (1..=k).map(|i| (i as f64).ln()).sum::<f64>();
    lf(n) - comp.iter().map(|&c| lf(c)).sum::<f64>()
}

fn counts_of(seq: &[usize], a: usize) -> Vec<usize> {
    let mut c = vec![0; a];
    for &x in seq {
        c[x] += 1;
    }
    c
}

/// Exhaustive maximum of `I(theta; D_n)` over non-adaptive action sequences.
pub fn mig_exact(env: &Environment, n: usize) -> Result<MigReport> {
    let m = env.require_finite()?;
    let a = m.n_actions();
    let required = ((a * m.n_outcomes()) as f64).powi(n as i32);
    if required > ENUMERATION_BOUND {
        return Err(Error::EnumerationBound {
            required,
            bound: ENUMERATION_BOUND,
            hint: "; use mig_greedy for a lower bound",
        });
    }
    // information depends only on how often each action is used
    let mut best = (0.0, vec![0; n]);
    let mut seq = vec![0usize; n];
    loop {
        let mi = design_information(m, &counts_of(&seq, a));
        if mi > best.0 + 1e-15 {
            best = (mi, seq.clone());
        }
        // next non-decreasing sequence
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(MigReport {
                    n,
                    psi_n: best.0,
                    method: MigMethod::ExactEnumeration,
                    argmax_sequence: best.1,
                    lower_bound: false,
                    log_theta_count: Some((m.n_thetas() as f64).ln()),
                });
            }
            i -= 1;
            if seq[i] + 1 < a {
                let v = seq[i] + 1;
                for s in seq.iter_mut().skip(i) {
                    *s = v;
                }
                break;
            }
        }
    }
}

/// Greedy lower bound on the maximum information gain.
pub fn mig_greedy(env: &Environment, n: usize) -> Result<MigReport> {
    let m = env.require_finite()?;
    let a = m.n_actions();
    let mut counts = vec![0; a];
    let mut seq = Vec::with_capacity(n);
    let mut psi = 0.0;
    for _ in 0..n {
        let mut best = (f64::NEG_INFINITY, 0);
        for x in 0..a {
            counts[x] += 1;
            let mi = design_information(m, &counts);
            counts[x] -= 1;
            if mi > best.0 + 1e-15 {
                best = (mi, x);
            }
        }
        counts[best.1] += 1;
        seq.push(best.1);
        psi = best.0.max(psi);
    }
    Ok(MigReport {
        n,
        psi_n: psi,
        method: MigMethod::Greedy,
        argmax_sequence: seq,
        lower_bound: true,
        log_theta_count: Some((m.n_thetas() as f64).ln()),
    })
}

/// Greedy D-optimal design for Bayesian linear regression with features as rows of
/// `features`; `psi_n = 1/2 ln det(I + Phi Sigma0 Phi^T / noise_var)` of the chosen rows.
pub fn mig_blr(features: &DMatrix<f64>, prior_cov: &DMatrix<f64>, noise_var: f64, n: usize) -> Result<MigReport> {
    if !(noise_var > 0.0) {
        return Err(Error::InvalidConfig("noise variance must be positive".into()));
    }
    if features.ncols() != prior_cov.nrows() || features.nrows() == 0 {
        return Err(Error::InvalidConfig("feature and covariance dimensions disagree".into()));
    }
    let mut cov = prior_cov.clone();
    let mut seq = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best = (f64::NEG_INFINITY, 0);
        for i in 0..features.nrows() {
            let phi = features.row(i).transpose();
            let v = phi.dot(&(&cov * &phi));
            if v > best.0 + 1e-15 {
                best = (v, i);
            }
        }
        let phi: DVector<f64> = features.row(best.1).transpose();
        let s = &cov * &phi;
        cov -= &s * s.transpose() / (noise_var + phi.dot(&s));
        seq.push(best.1);
    }
    Ok(MigReport {
        n,
        psi_n: blr_information(features, prior_cov, noise_var, &seq)?,
        method: MigMethod::ClosedFormBlr,
        argmax_sequence: seq,
        lower_bound: true,
        log_theta_count: None,
    })
}

/// `1/2 ln det(I + Phi Sigma0 Phi^T / noise_var)` for the rows `rows` of `features`.
pub fn blr_information(features: &DMatrix<f64>, prior_cov: &DMatrix<f64>, noise_var: f64, rows: &[usize]) -> Result<f64> {
    if rows.is_empty() {
        return Ok(0.0);
    }
    let phi = DMatrix::from_fn(rows.len(), features.ncols(), |i, j| features[(rows[i], j)]);
    let d = features.ncols();
    // Sylvester: det(I_n + Phi S Phi^T / s2) = det(I_d + S Phi^T Phi / s2); use the smaller side
    let m = if rows.len() <= d {
        DMatrix::identity(rows.len(), rows.len()) + &phi * prior_cov * phi.transpose() / noise_var
    } else {
        let l = prior_cov.clone().cholesky().ok_or(Error::NotPsd("prior covariance"))?.l();
        DMatrix::identity(d, d) + l.transpose() * phi.transpose() * &phi * &l / noise_var
    };
    let chol = m.cholesky().ok_or(Error::NotPsd("information matrix"))?;
    Ok(chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

pub fn theorem1_bound(b: f64, n: usize, action_count: usize, psi_n: f64) -> f64 {
    b * (n as f64 * action_count as f64 * psi_n / 2.0).sqrt()
}

/// `(1 - gamma) * reward - B sqrt(|X| psi_n / (2 n))`.
pub fn theorem2_rhs(reward_opt_gamma_n: f64, gamma: f64, b: f64, n: usize, action_count: usize, psi_n: f64) -> f64 {
    (1.0 - gamma) * reward_opt_gamma_n - b * (action_count as f64 * psi_n / (2.0 * n as f64)).sqrt()
}

/// Both sides of the chain rule `sum_t I(theta; (X_t, Y_t) | D_{t-1}) = I(theta; D_n)`
/// when `theta` is drawn from the prior and actions follow `policy`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainRule {
    pub sum_of_increments: f64,
    pub total: f64,
    pub entropy: f64,
}

pub fn mi_chain_rule(env: &Environment, policy: &ExactPolicy, n: usize) -> Result<ChainRule> {
    let m = env.require_finite()?;
    let k = m.n_thetas();
    let prior = m.prior().to_vec();
    let mut evaluators: Vec<ExactEvaluator> = (0..k)
        .map(|t| ExactEvaluator::new(env, Theta::Index(t), n.max(1)))
        .collect::<Result<_>>()?;
    // level t: histories of length t with their joint probability under each theta
    let mut level: Vec<(DataSequence, Vec<f64>)> = vec![(DataSequence::empty(), prior.clone())];
    let mut increments = 0.0;
    for _ in 0..n {
        let mut next = Vec::new();
        for (d, joint) in &level {
            let dists: Vec<Vec<f64>> = evaluators
                .iter_mut()
                .map(|e| e.action_distribution(policy, d))
                .collect::<Result<_>>()?;
            let before: f64 = joint.iter().sum();
            for x in 0..m.n_actions() {
                for y in 0..m.n_outcomes() {
                    let p: Vec<f64> = (0..k).map(|t| joint[t] * dists[t][x] * m.lik(t, x, y)).collect();
                    let after: f64 = p.iter().sum();
                    if after == 0.0 {
                        continue;
                    }
                    for t in 0..k {
                        if p[t] > 0.0 {
                            increments += p[t] * (p[t] * before / (joint[t] * after)).ln();
                        }
                    }
                    next.push((d.concat(env.action(x).clone(), Outcome::Discrete(y)), p));
                }
            }
        }
        level = next;
    }
    let mut total = 0.0;
    for (_, joint) in &level {
        let marg: f64 = joint.iter().sum();
        for t in 0..k {
            if joint[t] > 0.0 {
                total += joint[t] * (joint[t] / (prior[t] * marg)).ln();
            }
        }
    }
    Ok(ChainRule {
        sum_of_increments: increments,
        total,
        entropy: entropy(&prior),
    })
}

pub fn mi_chain_rule_check(env: &Environment, policy: &ExactPolicy, n: usize, tolerance: f64) -> Result<bool> {
    let c = mi_chain_rule(env, policy, n)?;
    Ok((c.sum_of_increments - c.total).abs() <= tolerance)
}
