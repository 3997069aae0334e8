//! Method lifecycle and the shipped methods.
//!
//! A method is configured against a [`SettingDescription`], then driven by the
//! evaluation loop through `fit` (once per training phase), `get_actions`
//! (test time) and `on_task_switch` (only in settings that signal
//! boundaries). Everything a method sees comes through masked environments,
//! so it cannot read information its target setting does not expose.

mod base;
mod hyper;
pub mod plugin;
mod random;
mod registry;
mod replay;

use serde::{Deserialize, Serialize};

use crate::envsim::{ActionSpace, Environment, Family, Observation};
use crate::error::Result;
use crate::learners::Discretizer;
use crate::taxonomy::{AssumptionVector, ContextObservability, MethodDescriptor};

pub use base::{BaseMethod, Checkpoint, EwcAnchor};
pub use hyper::Hyperparameters;
pub use random::RandomMethod;
pub use registry::{BuiltinMethod, MethodEntry, MethodKind, PluginManifest, Registry};
pub use replay::ReplayBuffer;

/// What a method may know about the setting it is configured for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingDescription {
    pub name: String,
    pub assumptions: AssumptionVector,
    pub family: Family,
    pub observation_dim: usize,
    pub action_space: ActionSpace,
    pub num_tasks: usize,
    /// Training steps per phase.
    pub phase_len: usize,
    /// State discretization for tabular learners (active families only).
    pub discretizer: Option<Discretizer>,
}

impl SettingDescription {
    pub fn task_observed(&self) -> bool {
        self.assumptions.context_observed == ContextObservability::Observed
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub steps: u64,
    pub updates: u64,
    /// Mean feedback reward on the validation stream, if evaluated.
    pub validation: Option<f64>,
}

pub trait Method: Send {
    fn descriptor(&self) -> &MethodDescriptor;

    /// Trains on one phase. The validation environment is for reporting only.
    fn fit(&mut self, train: &mut dyn Environment, valid: &mut dyn Environment) -> Result<FitReport>;

    fn get_actions(&mut self, observations: &[Observation], action_space: &ActionSpace) -> Result<Vec<usize>>;

    fn on_task_switch(&mut self, task_id: Option<usize>) -> Result<()>;

    /// Number of parameter updates performed so far.
    fn update_count(&self) -> u64;
}
