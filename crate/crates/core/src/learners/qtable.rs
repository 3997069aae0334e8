//! Tabular action values over a discretized state space.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bin indices, one per state dimension.
pub type StateKey = Vec<u16>;

/// Interior bin edges per dimension; a value `v` falls in bin
/// `#{edges <= v}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    pub edges: Vec<Vec<f64>>,
}

impl Discretizer {
    pub fn new(edges: Vec<Vec<f64>>) -> Self {
        Discretizer { edges }
    }

    /// Two bins per dimension split at 0.5, for one-hot observations.
    pub fn binary(dim: usize) -> Self {
        Discretizer {
            edges: vec![vec![0.5]; dim],
        }
    }

    pub fn key(&self, x: &[f64]) -> Result<StateKey> {
        if x.len() != self.edges.len() {
            return Err(Error::Shape(format!(
                "state has {} dims, discretizer expects {}",
                x.len(),
                self.edges.len()
            )));
        }
        Ok(x.iter()
            .zip(&self.edges)
            .map(|(v, e)| e.partition_point(|edge| edge <= v) as u16)
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QEntry {
    pub value: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QTableRepr", into = "QTableRepr")]
pub struct QTable {
    pub n_actions: usize,
    pub discretizer: Discretizer,
    entries: HashMap<StateKey, Vec<QEntry>>,
}

impl QTable {
    pub fn new(n_actions: usize, discretizer: Discretizer) -> Self {
        QTable {
            n_actions,
            discretizer,
            entries: HashMap::new(),
        }
    }

    pub fn key(&self, x: &[f64]) -> Result<StateKey> {
        self.discretizer.key(x)
    }

    /// Action values at `s`; unseen states are all zero.
    pub fn values(&self, s: &StateKey) -> Vec<f64> {
        match self.entries.get(s) {
            Some(e) => e.iter().map(|q| q.value).collect(),
            None => vec![0.0; self.n_actions],
        }
    }

    pub fn entry(&self, s: &StateKey, a: usize) -> QEntry {
        self.entries.get(s).map(|e| e[a]).unwrap_or_default()
    }

    pub fn entry_mut(&mut self, s: &StateKey, a: usize) -> &mut QEntry {
        let n = self.n_actions;
        &mut self.entries.entry(s.clone()).or_insert_with(|| vec![QEntry::default(); n])[a]
    }

    pub fn max_value(&self, s: &StateKey) -> f64 {
        self.values(s).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StateKey, &Vec<QEntry>)> {
        self.entries.iter()
    }

    /// One-step Q-learning update:
    /// `Q(s,a) += lr * (r + gamma * max_a' Q(s',a') * (1 - done) - Q(s,a))`.
    #[allow(clippy::too_many_arguments)]
    pub fn q_update(
        &mut self,
        s: &StateKey,
        a: usize,
        reward: f64,
        next: &StateKey,
        done: bool,
        lr: f64,
        gamma: f64,
    ) -> Result<()> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::malformed("gamma", format!("must lie in [0, 1), got {gamma}")));
        }
        if !(0.0..=1.0).contains(&lr) {
            return Err(Error::malformed("lr", format!("must lie in [0, 1], got {lr}")));
        }
        if a >= self.n_actions {
            return Err(Error::Shape(format!("action {a} out of range")));
        }
        let bootstrap = if done { 0.0 } else { gamma * self.max_value(next) };
        let target = reward + bootstrap;
        let e = self.entry_mut(s, a);
        e.value += lr * (target - e.value);
        e.count += 1;
        if !e.value.is_finite() {
            return Err(Error::NonFinite("q-value".into()));
        }
        Ok(())
    }

    /// Entries sorted by state key, for stable serialization.
    pub fn to_sorted_entries(&self) -> Vec<(StateKey, Vec<QEntry>)> {
        let mut v: Vec<_> = self.entries.iter().map(|(k, e)| (k.clone(), e.clone())).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }

    pub fn from_entries(n_actions: usize, discretizer: Discretizer, entries: Vec<(StateKey, Vec<QEntry>)>) -> Result<Self> {
        if entries.iter().any(|(_, e)| e.len() != n_actions) {
            return Err(Error::Shape("q-table entry width differs from n_actions".into()));
        }
        Ok(QTable {
            n_actions,
            discretizer,
            entries: entries.into_iter().collect(),
        })
    }
}

/// Serialized form: entries sorted by state key.
#[derive(Serialize, Deserialize)]
struct QTableRepr {
    n_actions: usize,
    discretizer: Discretizer,
    entries: Vec<(StateKey, Vec<QEntry>)>,
}

impl From<QTable> for QTableRepr {
    fn from(t: QTable) -> Self {
        QTableRepr {
            entries: t.to_sorted_entries(),
            n_actions: t.n_actions,
            discretizer: t.discretizer,
        }
    }
}

impl TryFrom<QTableRepr> for QTable {
    type Error = Error;

    fn try_from(r: QTableRepr) -> Result<Self> {
        QTable::from_entries(r.n_actions, r.discretizer, r.entries)
    }
}
