//! Penalties over finite environments given by explicit values plus a default rule.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::env::FiniteModel;
use crate::error::{Error, Result};

/// `(action index, outcome index)` pairs identifying a finite data sequence.
pub type SeqKey = Vec<(usize, usize)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub theta: usize,
    pub sequence: SeqKey,
    pub value: f64,
}

/// Value used for sequences that have no explicit entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DefaultRule {
    Constant { value: f64 },
    /// 1 if `forbidden[theta]` occurs anywhere in the sequence, else 0.
    ForbiddenAction { forbidden: Vec<usize> },
    /// `values[theta][x][y]` of the final pair; `empty` for the empty sequence.
    LastPair { values: Vec<Vec<Vec<f64>>>, empty: f64 },
    /// Exponential smoothing `s <- decay * s + (1 - decay) * loss[theta][x][y]` from `initial`.
    Smoothed {
        decay: f64,
        initial: f64,
        loss: Vec<Vec<Vec<f64>>>,
    },
    /// One minus the covered fraction of a ground set of `universe` elements, where the pair
    /// `(x, y)` covers `sets[theta][x][y]`.
    Coverage {
        universe: usize,
        sets: Vec<Vec<Vec<Vec<usize>>>>,
    },
    /// `min(1, per_step * |D|)`: longer histories are penalised.
    HistoryLength { per_step: f64 },
}

impl DefaultRule {
    pub fn eval(&self, theta: usize, seq: &[(usize, usize)]) -> f64 {
        match self {
            DefaultRule::Constant { value } => *value,
            DefaultRule::ForbiddenAction { forbidden } => {
                if seq.iter().any(|&(x, _)| x == forbidden[theta]) {
                    1.0
                } else {
                    0.0
                }
            }
            DefaultRule::LastPair { values, empty } => match seq.last() {
                Some(&(x, y)) => values[theta][x][y],
                None => *empty,
            },
            DefaultRule::Smoothed {
                decay,
                initial,
                loss,
            } => seq
                .iter()
                .fold(*initial, |s, &(x, y)| decay * s + (1.0 - decay) * loss[theta][x][y]),
            DefaultRule::Coverage { universe, sets } => {
                let mut covered = vec![false; *universe];
                for &(x, y) in seq {
                    for &e in &sets[theta][x][y] {
                        covered[e] = true;
                    }
                }
                let n = covered.iter().filter(|&&c| c).count();
                1.0 - n as f64 / *universe as f64
            }
            DefaultRule::HistoryLength { per_step } => (per_step * seq.len() as f64).min(1.0),
        }
    }

    fn validate(&self, m: &FiniteModel) -> Result<()> {
        let (k, a, y) = (m.n_thetas(), m.n_actions(), m.n_outcomes());
        let shape_ok = |t: &Vec<Vec<Vec<f64>>>| {
            t.len() == k
                && t.iter().all(|r| {
                    r.len() == a && r.iter().all(|c| c.len() == y && c.iter().all(|v| unit(*v)))
                })
        };
        let ok = match self {
            DefaultRule::Constant { value } => unit(*value),
            DefaultRule::ForbiddenAction { forbidden } => {
                forbidden.len() == k && forbidden.iter().all(|&x| x < a)
            }
            DefaultRule::LastPair { values, empty } => shape_ok(values) && unit(*empty),
            DefaultRule::Smoothed {
                decay,
                initial,
                loss,
            } => (0.0..=1.0).contains(decay) && unit(*initial) && shape_ok(loss),
            DefaultRule::Coverage { universe, sets } => {
                *universe > 0
                    && sets.len() == k
                    && sets.iter().all(|r| {
                        r.len() == a
                            && r.iter()
                                .all(|c| c.len() == y && c.iter().flatten().all(|&e| e < *universe))
                    })
            }
            DefaultRule::HistoryLength { per_step } => *per_step >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "table default rule does not match the environment".into(),
            ))
        }
    }
}

fn unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TablePenalty {
    #[serde(default)]
    pub entries: Vec<TableEntry>,
    pub default: DefaultRule,
}

impl TablePenalty {
    pub fn with_default(default: DefaultRule) -> Self {
        Self {
            entries: Vec::new(),
            default,
        }
    }

    pub fn entry(mut self, theta: usize, sequence: SeqKey, value: f64) -> Self {
        self.entries.push(TableEntry {
            theta,
            sequence,
            value,
        });
        self
    }

    pub(crate) fn validate(&self, m: &FiniteModel) -> Result<()> {
        for e in &self.entries {
            if e.theta >= m.n_thetas()
                || !unit(e.value)
                || e
                    .sequence
                    .iter()
                    .any(|&(x, y)| x >= m.n_actions() || y >= m.n_outcomes())
            {
                return Err(Error::InvalidConfig(format!(
                    "table entry {:?} for parameter {} is out of range",
                    e.sequence, e.theta
                )));
            }
        }
        self.default.validate(m)
    }

    pub fn compile(&self) -> CompiledTable {
        CompiledTable {
            entries: self
                .entries
                .iter()
                .map(|e| ((e.theta, e.sequence.clone()), e.value))
                .collect(),
            default: self.default.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompiledTable {
    entries: HashMap<(usize, SeqKey), f64>,
    default: DefaultRule,
}

impl CompiledTable {
    pub fn eval(&self, theta: usize, seq: &[(usize, usize)]) -> f64 {
        if !self.entries.is_empty() {
            if let Some(v) = self.entries.get(&(theta, seq.to_vec())) {
                return *v;
            }
        }
        self.default.eval(theta, seq)
    }
}
