//! Nonstationary environments as restricted hidden-mode MDPs.
//!
//! A [`ContextSchedule`] realizes how the hidden context evolves, a family
//! (Gaussian clusters, CSV splits, cart-pole, gridworld) realizes dynamics and
//! feedback for a given context, and [`wrap_for_setting`] hides whatever the
//! setting's assumption vector does not expose.

pub mod cartpole;
pub mod gridworld;
pub mod passive;
pub mod schedule;
mod world;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::taxonomy::Branch;

pub use schedule::{context_at, make_schedule, ContextSchedule, ScheduleKind};
pub use world::{wrap_for_setting, MaskedEnv, RawEnv, World};

/// Realized value of the hidden context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextVector {
    pub values: Vec<f64>,
    /// Only defined for discrete schedules.
    pub task_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub task_id: Option<usize>,
    pub boundary: Option<bool>,
    pub episode_done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub reward: f64,
    /// Present only in passive (full-feedback) environments.
    pub label: Option<usize>,
}

/// Discrete action space. With disjoint actions each task owns a contiguous
/// block of `block` actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpace {
    pub n: usize,
    pub block: Option<usize>,
}

impl ActionSpace {
    pub fn discrete(n: usize) -> Self {
        ActionSpace { n, block: None }
    }

    /// Actions belonging to `task` (the whole space when actions are joint).
    pub fn task_range(&self, task: usize) -> std::ops::Range<usize> {
        match self.block {
            Some(b) => task * b..(task + 1) * b,
            None => 0..self.n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    SyntheticGaussianSl,
    SplitCsvSl,
    CartPoleVariant,
    MultiLayoutGridworld,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::SyntheticGaussianSl,
        Family::SplitCsvSl,
        Family::CartPoleVariant,
        Family::MultiLayoutGridworld,
    ];

    pub fn branch(self) -> Branch {
        match self {
            Family::SyntheticGaussianSl | Family::SplitCsvSl => Branch::Passive,
            Family::CartPoleVariant | Family::MultiLayoutGridworld => Branch::Active,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::SyntheticGaussianSl => "synthetic_gaussian_sl",
            Family::SplitCsvSl => "split_csv_sl",
            Family::CartPoleVariant => "cart_pole_variant",
            Family::MultiLayoutGridworld => "multi_layout_gridworld",
        }
    }

    /// Whether tasks are parameterized by real values that can be interpolated.
    pub fn supports_drift(self) -> bool {
        matches!(self, Family::SyntheticGaussianSl | Family::CartPoleVariant)
    }

    pub fn default_max_episode_len(self) -> usize {
        match self {
            Family::CartPoleVariant => cartpole::MAX_EPISODE_LEN,
            Family::MultiLayoutGridworld => gridworld::MAX_EPISODE_LEN,
            _ => 1,
        }
    }
}

/// Serializable description of an environment family instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub family: Family,
    pub num_tasks: usize,
    pub steps_per_phase: usize,
    pub schedule: ScheduleKind,
    pub disjoint_actions: bool,
    pub max_episode_len: usize,
    /// Synthetic Gaussian: classes per task.
    pub classes_per_task: usize,
    /// Synthetic Gaussian: input dimension.
    pub input_dim: usize,
    /// Synthetic Gaussian: per-coordinate noise standard deviation.
    pub noise_std: f64,
    pub dataset_path: Option<PathBuf>,
    pub layout_dir: Option<PathBuf>,
}

impl EnvironmentSpec {
    /// Spec with every optional knob at its default for `family`.
    pub fn new(family: Family, schedule: ScheduleKind, num_tasks: usize, steps_per_phase: usize) -> Self {
        EnvironmentSpec {
            family,
            num_tasks,
            steps_per_phase,
            schedule,
            disjoint_actions: false,
            max_episode_len: family.default_max_episode_len(),
            classes_per_task: passive::DEFAULT_CLASSES_PER_TASK,
            input_dim: passive::DEFAULT_INPUT_DIM,
            noise_std: passive::DEFAULT_NOISE_STD,
            dataset_path: None,
            layout_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        use crate::error::Error;
        if self.num_tasks == 0 {
            return Err(Error::malformed("num_tasks", "must be >= 1"));
        }
        if self.steps_per_phase == 0 {
            return Err(Error::malformed("steps_per_phase", "must be > 0"));
        }
        if self.disjoint_actions && self.family.branch() != Branch::Passive {
            return Err(Error::malformed(
                "disjoint_actions",
                "only passive families support disjoint action spaces",
            ));
        }
        if self.disjoint_actions && self.schedule == ScheduleKind::ContinuousDrift {
            return Err(Error::malformed(
                "disjoint_actions",
                "disjoint action blocks need a discrete task index",
            ));
        }
        if self.schedule == ScheduleKind::ContinuousDrift && !self.family.supports_drift() {
            return Err(Error::malformed(
                "schedule",
                format!("{} has no continuous task parameters", self.family.name()),
            ));
        }
        if self.family.branch() == Branch::Active && self.max_episode_len == 0 {
            return Err(Error::malformed("max_episode_len", "must be > 0"));
        }
        if self.family == Family::SyntheticGaussianSl {
            if self.classes_per_task < 2 {
                return Err(Error::malformed("classes_per_task", "must be >= 2"));
            }
            if self.input_dim == 0 {
                return Err(Error::malformed("input_dim", "must be > 0"));
            }
            if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
                return Err(Error::malformed("noise_std", "must be finite and >= 0"));
            }
        }
        if self.family == Family::SplitCsvSl && self.dataset_path.is_none() {
            return Err(Error::malformed("dataset_path", "required for split_csv_sl"));
        }
        Ok(())
    }
}

/// Step-based interaction surface shared by passive and active worlds.
pub trait Environment {
    fn reset(&mut self) -> Result<Observation>;
    fn step(&mut self, action: usize) -> Result<(Observation, Feedback)>;
    fn observation_dim(&self) -> usize;
    fn action_space(&self) -> ActionSpace;
    fn branch(&self) -> Branch;
    /// True once a budgeted stream has no steps left.
    fn is_exhausted(&self) -> bool;
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn reset(&mut self) -> Result<Observation> {
        (**self).reset()
    }
    fn step(&mut self, action: usize) -> Result<(Observation, Feedback)> {
        (**self).step(action)
    }
    fn observation_dim(&self) -> usize {
        (**self).observation_dim()
    }
    fn action_space(&self) -> ActionSpace {
        (**self).action_space()
    }
    fn branch(&self) -> Branch {
        (**self).branch()
    }
    fn is_exhausted(&self) -> bool {
        (**self).is_exhausted()
    }
}
