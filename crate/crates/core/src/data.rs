//! Actions, outcomes and the ordered data sequences every other module works on.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the action grid: its position in the grid and the coordinates it denotes.
#[derive(Debug, Clone)]
pub struct Action {
    pub index: usize,
    pub coords: Arc<[f64]>,
}

impl Action {
    pub fn new(index: usize, coords: Vec<f64>) -> Self {
        Self {
            index,
            coords: coords.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

// Two actions of the same grid are equal iff they occupy the same slot.
impl PartialEq for Action {
    fn eq(&self, other: &Self) -> bool {
        self.index == other.index && self.coords == other.coords
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Outcome {
    Discrete(usize),
    Real(Vec<f64>),
}

impl Outcome {
    pub fn discrete(&self) -> Option<usize> {
        match self {
            Outcome::Discrete(i) => Some(*i),
            Outcome::Real(_) => None,
        }
    }

    pub fn channel(&self, c: usize) -> Option<f64> {
        match self {
            Outcome::Real(v) => v.get(c).copied(),
            Outcome::Discrete(_) => None,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Discrete(i) => write!(f, "{i}"),
            Outcome::Real(v) => {
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str(";")?;
                    }
                    write!(f, "{x:?}")?;
                }
                Ok(())
            }
        }
    }
}

/// A parameter value: an index into a finite parameter set or a real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Theta {
    Index(usize),
    Vector(Vec<f64>),
}

impl Theta {
    pub fn index(&self) -> Option<usize> {
        match self {
            Theta::Index(k) => Some(*k),
            Theta::Vector(_) => None,
        }
    }

    pub fn vector(&self) -> Option<&[f64]> {
        match self {
            Theta::Vector(v) => Some(v),
            Theta::Index(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueInstance {
    pub theta_star: Theta,
    pub rng_seed: u64,
}

/// Ordered multiset of (action, outcome) pairs. Never mutated in place.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataSequence {
    pairs: Vec<(Action, Outcome)>,
}

impl DataSequence {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: Vec<(Action, Outcome)>) -> Self {
        Self { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(Action, Outcome)] {
        &self.pairs
    }

    pub fn last(&self) -> Option<&(Action, Outcome)> {
        self.pairs.last()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(Action, Outcome)> {
        self.pairs.iter()
    }

    pub fn concat(&self, action: Action, outcome: Outcome) -> DataSequence {
        let mut pairs = Vec::with_capacity(self.pairs.len() + 1);
        pairs.extend_from_slice(&self.pairs);
        pairs.push((action, outcome));
        DataSequence { pairs }
    }

    pub fn append(&self, other: &DataSequence) -> DataSequence {
        let mut pairs = self.pairs.clone();
        pairs.extend_from_slice(&other.pairs);
        DataSequence { pairs }
    }

    pub fn prefix(&self, t: usize) -> Result<DataSequence> {
        if t > self.pairs.len() {
            return Err(Error::OutOfRange {
                requested: t,
                len: self.pairs.len(),
            });
        }
        Ok(DataSequence {
            pairs: self.pairs[..t].to_vec(),
        })
    }

    /// The last `h` pairs (or the whole sequence if it is shorter).
    pub fn suffix(&self, h: usize) -> DataSequence {
        let start = self.pairs.len().saturating_sub(h);
        DataSequence {
            pairs: self.pairs[start..].to_vec(),
        }
    }

    pub fn is_prefix_of(&self, other: &DataSequence) -> bool {
        self.pairs.len() <= other.pairs.len()
            && self.pairs.iter().zip(&other.pairs).all(|(a, b)| a == b)
    }

    pub fn contains_action(&self, index: usize) -> bool {
        self.pairs.iter().any(|(a, _)| a.index == index)
    }

    /// `(action index, outcome index)` pairs; `None` if any outcome is real-valued.
    pub fn discrete_key(&self) -> Option<Vec<(usize, usize)>> {
        self.pairs
            .iter()
            .map(|(a, y)| y.discrete().map(|y| (a.index, y)))
            .collect()
    }

    pub fn to_records(&self) -> Vec<PairRecord> {
        self.pairs
            .iter()
            .map(|(a, y)| PairRecord {
                action_index: a.index,
                outcome: y.clone(),
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_records()).expect("pair records serialize")
    }
}

pub fn is_prefix(d: &DataSequence, dp: &DataSequence) -> bool {
    d.is_prefix_of(dp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub action_index: usize,
    pub outcome: Outcome,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn a(i: usize) -> Action {
        Action::new(i, vec![i as f64])
    }

    fn y(i: usize) -> Outcome {
        Outcome::Discrete(i)
    }

    fn seq(items: &[(usize, usize)]) -> DataSequence {
        DataSequence::from_pairs(items.iter().map(|&(x, o)| (a(x), y(o))).collect())
    }

    #[test]
    fn concat_onto_empty() {
        let d = DataSequence::empty().concat(a(0), y(0));
        assert_eq!(d, seq(&[(0, 0)]));
    }

    #[test]
    fn concat_appends() {
        let d = seq(&[(0, 0)]).concat(a(1), y(1));
        assert_eq!(d, seq(&[(0, 0), (1, 1)]));
    }

    #[test]
    fn prefix_cases() {
        let d = seq(&[(0, 0), (1, 1), (2, 2)]);
        assert!(d.prefix(0).unwrap().is_empty());
        assert_eq!(d.prefix(3).unwrap(), d);
        assert_eq!(d.prefix(2).unwrap(), seq(&[(0, 0), (1, 1)]));
        assert_eq!(
            d.prefix(4),
            Err(Error::OutOfRange {
                requested: 4,
                len: 3
            })
        );
    }

    #[test]
    fn is_prefix_cases() {
        let d = seq(&[(0, 0), (1, 1)]);
        assert!(is_prefix(&DataSequence::empty(), &d));
        assert!(is_prefix(&d, &d));
        assert!(!is_prefix(&seq(&[(0, 0)]), &seq(&[(1, 0), (0, 0)])));
        assert!(!is_prefix(&d, &seq(&[(0, 0)])));
    }

    #[test]
    fn json_records() {
        let d = DataSequence::from_pairs(vec![
            (a(3), y(1)),
            (a(0), Outcome::Real(vec![0.5, -1.0])),
        ]);
        assert_eq!(
            d.to_json(),
            r#"[{"action_index":3,"outcome":1},{"action_index":0,"outcome":[0.5,-1.0]}]"#
        );
    }

    fn arb_seq(max: usize) -> impl Strategy<Value = DataSequence> {
        prop::collection::vec((0usize..3, 0usize..2), 0..max).prop_map(|v| seq(&v))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn prefix_concat_round_trip(d in arb_seq(8), x in 0usize..3, o in 0usize..2) {
            let e = d.concat(a(x), y(o));
            prop_assert_eq!(e.len(), d.len() + 1);
            prop_assert_eq!(e.prefix(d.len()).unwrap(), d.clone());
            for t in 0..=e.len() {
                prop_assert_eq!(e.prefix(t).unwrap().len(), t);
            }
        }

        #[test]
        fn is_prefix_partial_order(d1 in arb_seq(4), d2 in arb_seq(4), d3 in arb_seq(4)) {
            prop_assert!(is_prefix(&d1, &d1));
            if d1.len() == d2.len() && is_prefix(&d1, &d2) && is_prefix(&d2, &d1) {
                prop_assert_eq!(&d1, &d2);
            }
            // Build a chain so transitivity is exercised non-vacuously.
            let b = d1.append(&d2);
            let c = b.append(&d3);
            prop_assert!(is_prefix(&d1, &b) && is_prefix(&b, &c) && is_prefix(&d1, &c));
            if is_prefix(&d1, &d2) && is_prefix(&d2, &d3) {
                prop_assert!(is_prefix(&d1, &d3));
            }
        }
    }
}
