use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::Activation;
use crate::taxonomy::Branch;

/// Training knobs shared by the built-in methods. Every field is always
/// present in stored configs; defaults depend on the method and branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparameters {
    pub lr: f64,
    pub batch_size: usize,
    /// Passes over each phase's training stream (passive branch).
    pub epochs_per_task: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub activation: Activation,
    /// `None` means: multi-head iff task labels are observed or task
    /// inference is enabled.
    pub multi_head: Option<bool>,
    pub task_inference: bool,
    /// EWC penalty strength; 0 disables consolidation.
    pub ewc_lambda: f64,
    /// Samples of each finished task used for the Fisher estimate.
    pub ewc_samples: usize,
    /// Visit count at which a Q-table entry reaches half its maximum
    /// consolidation weight.
    pub ewc_count_scale: f64,
    /// Reservoir capacity; 0 disables replay.
    pub replay_capacity: usize,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of each phase over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
}

impl Hyperparameters {
    pub fn defaults(method: &str, branch: Branch) -> Self {
        let active = branch == Branch::Active;
        Hyperparameters {
            lr: if active { 0.1 } else { 0.05 },
            batch_size: 32,
            epochs_per_task: 5,
            hidden_width: 64,
            hidden_layers: 1,
            activation: Activation::Tanh,
            multi_head: None,
            task_inference: false,
            ewc_lambda: match (method, active) {
                ("ewc", false) => 100.0,
                ("ewc", true) => 1.0,
                _ => 0.0,
            },
            ewc_samples: 512,
            ewc_count_scale: 10.0,
            replay_capacity: match (method, active) {
                ("replay", false) => 500,
                ("replay", true) => 5000,
                _ => 0,
            },
            gamma: 0.95,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.5,
        }
    }

    /// Defaults for `method` overlaid with the user's values. Unknown keys are
    /// rejected.
    pub fn resolve(method: &str, branch: Branch, overrides: &BTreeMap<String, serde_json::Value>) -> Result<Self> {
        let mut value = serde_json::to_value(Self::defaults(method, branch))?;
        let obj = value.as_object_mut().expect("struct serializes to an object");
        for (k, v) in overrides {
            if !obj.contains_key(k) {
                return Err(Error::malformed(format!("hyperparameters.{k}"), "unknown hyperparameter"));
            }
            obj.insert(k.clone(), v.clone());
        }
        let hp: Hyperparameters =
            serde_json::from_value(value).map_err(|e| Error::malformed("hyperparameters", e.to_string()))?;
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, r: &str| Err(Error::malformed(format!("hyperparameters.{f}"), r));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be > 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be > 0");
        }
        if self.epochs_per_task == 0 {
            return bad("epochs_per_task", "must be > 0");
        }
        if self.hidden_layers > 0 && self.hidden_width == 0 {
            return bad("hidden_width", "must be > 0");
        }
        if !(self.ewc_lambda >= 0.0 && self.ewc_lambda.is_finite()) {
            return bad("ewc_lambda", "must be finite and >= 0");
        }
        if self.ewc_samples == 0 {
            return bad("ewc_samples", "must be > 0");
        }
        if !(self.ewc_count_scale > 0.0) {
            return bad("ewc_count_scale", "must be > 0");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma", "must lie in [0, 1)");
        }
        for (f, v) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(f, "must lie in [0, 1]");
            }
        }
        if !(self.epsilon_decay_fraction > 0.0 && self.epsilon_decay_fraction <= 1.0) {
            return bad("epsilon_decay_fraction", "must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn to_map(&self) -> BTreeMap<String, serde_json::Value> {
        match serde_json::to_value(self).expect("serializable") {
            serde_json::Value::Object(m) => m.into_iter().collect(),
            _ => unreachable!(),
        }
    }

    /// Epsilon after `step` steps of a phase of `phase_len` steps.
    pub fn epsilon_at(&self, step: usize, phase_len: usize) -> f64 {
        let horizon = (self.epsilon_decay_fraction * phase_len as f64).max(1.0);
        let frac = (step as f64 / horizon).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}
