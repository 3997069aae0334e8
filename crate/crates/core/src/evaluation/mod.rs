//! The train/test protocol that turns a (setting, method) pair into
//! [`Results`], and the metrics computed from them.
//!
//! Each training phase is followed by an evaluation row over every task, on
//! fresh held-out environments masked exactly like the training stream.

mod metrics;

use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envsim::cartpole;
use crate::envsim::{
    wrap_for_setting, ActionSpace, Environment, EnvironmentSpec, Family, Feedback, Observation, ScheduleKind,
    World,
};
use crate::error::{Error, Result};
use crate::learners::Discretizer;
use crate::methods::{Method, Registry, SettingDescription};
use crate::rng;
use crate::taxonomy::{
    AssumptionVector, BoundarySignal, Branch, Catalog, ContextContinuity, ContextObservability, MethodDescriptor,
    SettingNode, Stationarity,
};

pub use metrics::{
    backward_transfer, final_performance, forward_transfer, mean_std, online_performance, CurvePoint, MetricKind,
    Scalars, TransferMatrix,
};

/// Steps per online-performance window.
pub const ONLINE_WINDOW: u64 = 100;

/// Schedule used when a config does not name one.
pub fn default_schedule(assumptions: &AssumptionVector, num_tasks: usize) -> ScheduleKind {
    match (assumptions.context_continuity, assumptions.stationarity) {
        (ContextContinuity::Continuous, _) => ScheduleKind::ContinuousDrift,
        (_, Stationarity::NonStationary) => ScheduleKind::IncrementalSequence,
        (_, Stationarity::Stationary) if num_tasks == 1 => ScheduleKind::SingleTask,
        _ => ScheduleKind::StationaryMixture,
    }
}

/// Default environment family for a branch.
pub fn default_family(branch: Branch) -> Family {
    match branch {
        Branch::Active => Family::CartPoleVariant,
        _ => Family::SyntheticGaussianSl,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub test_samples_per_task: usize,
    pub test_episodes_per_task: usize,
    /// Episodes of the uniform policy used to estimate active-branch chance.
    pub chance_episodes: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            test_samples_per_task: 1000,
            test_episodes_per_task: 20,
            chance_episodes: 100,
        }
    }
}

/// A concrete setting bound to an environment family instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub node: SettingNode,
    pub env: EnvironmentSpec,
}

impl Setting {
    pub fn new(catalog: &Catalog, name: &str, env: EnvironmentSpec) -> Result<Self> {
        let node = catalog.get(name)?.clone();
        if node.is_abstract() {
            return Err(Error::AbstractSetting(node.name));
        }
        env.validate()?;
        let a = node.assumptions;
        if env.family.branch() != a.branch {
            return Err(Error::Config(format!(
                "family {} belongs to the {:?} branch but {} is {:?}",
                env.family.name(),
                env.family.branch(),
                node.name,
                a.branch
            )));
        }
        if !env.schedule.compatible_with(a.context_continuity, a.stationarity) {
            return Err(Error::Config(format!(
                "schedule {:?} is incompatible with {}",
                env.schedule, node.name
            )));
        }
        Ok(Setting { node, env })
    }

    pub fn assumptions(&self) -> &AssumptionVector {
        &self.node.assumptions
    }

    pub fn metric_kind(&self) -> MetricKind {
        match self.node.assumptions.branch {
            Branch::Active => MetricKind::MeanEpisodeReturn,
            _ => MetricKind::Accuracy,
        }
    }

    /// Everything a method may learn about the setting before training.
    pub fn describe(&self, world: &World) -> SettingDescription {
        let discretizer = match self.env.family {
            Family::CartPoleVariant => Some(Discretizer::new(cartpole::default_bin_edges().to_vec())),
            Family::MultiLayoutGridworld => Some(Discretizer::binary(world.observation_dim())),
            _ => None,
        };
        SettingDescription {
            name: self.node.name.clone(),
            assumptions: self.node.assumptions,
            family: self.env.family,
            observation_dim: world.observation_dim(),
            action_space: world.action_space(),
            num_tasks: world.num_tasks(),
            phase_len: world.schedule.phase_len(),
            discretizer,
        }
    }
}

/// Run-level bookkeeping checked by the protocol.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub task_switch_calls: usize,
    /// Parameter updates made during test loops; always 0 in a valid run.
    pub test_updates: u64,
    pub train_updates: u64,
    pub validation: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Results {
    /// Echo of the experiment config, filled in by the harness.
    pub config: serde_json::Value,
    pub seed: u64,
    pub matrix: TransferMatrix,
    /// Per-task performance of a uniform random policy.
    pub chance: Vec<f64>,
    pub online_curve: Vec<CurvePoint>,
    pub scalars: Scalars,
    pub diagnostics: Diagnostics,
    pub wall_time_seconds: f64,
}

impl Results {
    /// Confirms the stored scalars equal a recomputation from the matrix and
    /// curve.
    pub fn verify(&self) -> Result<()> {
        let again = Scalars::compute(&self.matrix, &self.chance, &self.online_curve)?;
        if again != self.scalars {
            return Err(Error::Report(format!(
                "stored scalars {:?} differ from recomputed {:?}",
                self.scalars, again
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Results = serde_json::from_str(text)?;
        r.verify()?;
        Ok(r)
    }
}

/// Configures the named method through `registry` and runs the protocol.
pub fn apply(
    setting: &Setting,
    registry: &Registry,
    descriptor: &MethodDescriptor,
    seed: u64,
    opts: &EvalOptions,
) -> Result<Results> {
    registry.catalog().check_applicable(descriptor, &setting.node.name)?;
    let world = World::build(&setting.env, seed)?;
    let description = setting.describe(&world);
    let mut method = registry.configure(descriptor, &description, seed)?;
    apply_with(setting, &world, method.as_mut(), seed, opts)
}

/// Runs the protocol with an already configured method.
pub fn apply_with(
    setting: &Setting,
    world: &Arc<World>,
    method: &mut dyn Method,
    seed: u64,
    opts: &EvalOptions,
) -> Result<Results> {
    let started = Instant::now();
    let a = *setting.assumptions();
    let num_tasks = world.num_tasks();
    let mut diag = Diagnostics::default();
    let mut online = OnlineAccumulator::new(world.branch());
    let mut rows = Vec::new();

    for phase in 0..world.schedule.num_phases() {
        if phase > 0 && a.boundary_signal == BoundarySignal::Signaled {
            let task_id = match a.context_observed {
                ContextObservability::Observed => world.schedule.phase_task(phase),
                ContextObservability::Hidden => None,
            };
            method.on_task_switch(task_id)?;
            diag.task_switch_calls += 1;
        }
        let before = method.update_count();
        let mut train = Recorder {
            inner: wrap_for_setting(world.train_env(phase)?, &a)?,
            acc: &mut online,
        };
        let mut valid = wrap_for_setting(world.valid_env(phase)?, &a)?;
        let report = method.fit(&mut train, &mut valid)?;
        diag.train_updates += method.update_count() - before;
        diag.validation.push(report.validation);

        let frozen = method.update_count();
        let row = (0..num_tasks)
            .map(|task| {
                let mut env = wrap_for_setting(world.test_env(task, phase, opts.test_samples_per_task)?, &a)?;
                evaluate(method, &mut env, opts)
            })
            .collect::<Result<Vec<f64>>>()?;
        diag.test_updates += method.update_count() - frozen;
        if diag.test_updates > 0 {
            return Err(Error::Method("parameters changed during a test loop".into()));
        }
        rows.push(row);
    }
    online.flush();

    let matrix = TransferMatrix::new(setting.metric_kind(), rows)?;
    let chance = chance_levels(world, seed, opts)?;
    let curve = online.curve;
    let scalars = Scalars::compute(&matrix, &chance, &curve)?;
    if let Some((i, j)) = matrix
        .rows
        .iter()
        .enumerate()
        .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, v)| (i, j, *v)))
        .find(|(_, _, v)| !v.is_finite())
        .map(|(i, j, _)| (i, j))
    {
        return Err(Error::NonFinite(format!("transfer matrix entry ({i}, {j})")));
    }
    if !scalars.all_finite() {
        return Err(Error::NonFinite(format!("derived metrics {scalars:?}")));
    }
    Ok(Results {
        config: serde_json::Value::Null,
        seed,
        matrix,
        chance,
        online_curve: curve,
        scalars,
        diagnostics: diag,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Mean reward per sample (passive) or mean episode return (active) under the
/// method's current policy.
pub fn evaluate(method: &mut dyn Method, env: &mut dyn Environment, opts: &EvalOptions) -> Result<f64> {
    let space = env.action_space();
    match env.branch() {
        Branch::Active => {
            let mut total = 0.0;
            for _ in 0..opts.test_episodes_per_task {
                total += run_episode(env, &space, |obs| Ok(method.get_actions(std::slice::from_ref(obs), &space)?[0]))?;
            }
            Ok(total / opts.test_episodes_per_task as f64)
        }
        _ => {
            let mut obs = env.reset()?;
            let (mut correct, mut n) = (0.0, 0usize);
            while !obs.episode_done {
                let action = method.get_actions(std::slice::from_ref(&obs), &space)?[0];
                let (next, fb) = env.step(action)?;
                correct += fb.reward;
                n += 1;
                obs = next;
            }
            Ok(correct / n as f64)
        }
    }
}

fn run_episode(
    env: &mut dyn Environment,
    space: &ActionSpace,
    mut policy: impl FnMut(&Observation) -> Result<usize>,
) -> Result<f64> {
    let mut obs = env.reset()?;
    let mut ret = 0.0;
    while !obs.episode_done {
        let action = policy(&obs)?;
        if action >= space.n {
            return Err(Error::Method(format!("action {action} outside the action space")));
        }
        let (next, fb) = env.step(action)?;
        ret += fb.reward;
        obs = next;
    }
    Ok(ret)
}

/// Expected performance of a uniform random policy on each task.
pub fn chance_levels(world: &Arc<World>, seed: u64, opts: &EvalOptions) -> Result<Vec<f64>> {
    let space = world.action_space();
    match world.branch() {
        Branch::Active => (0..world.num_tasks())
            .map(|task| {
                let mut env = world.test_env(task, u32::MAX as usize, 0)?;
                let mut r = rng::stream(seed, "chance", task as u64);
                let mut total = 0.0;
                for _ in 0..opts.chance_episodes {
                    total += run_episode(&mut env, &space, |_| Ok(r.random_range(0..space.n)))?;
                }
                Ok(total / opts.chance_episodes as f64)
            })
            .collect(),
        _ => Ok(vec![1.0 / space.n as f64; world.num_tasks()]),
    }
}

/// Collects per-window training performance from the feedback stream.
struct OnlineAccumulator {
    branch: Branch,
    steps: u64,
    window_start: u64,
    rewards: f64,
    episode_return: f64,
    returns: Vec<f64>,
    curve: Vec<CurvePoint>,
}

impl OnlineAccumulator {
    fn new(branch: Branch) -> Self {
        OnlineAccumulator {
            branch,
            steps: 0,
            window_start: 0,
            rewards: 0.0,
            episode_return: 0.0,
            returns: Vec::new(),
            curve: Vec::new(),
        }
    }

    fn record(&mut self, fb: &Feedback, done: bool) {
        self.steps += 1;
        self.rewards += fb.reward;
        self.episode_return += fb.reward;
        if done {
            self.returns.push(self.episode_return);
            self.episode_return = 0.0;
        }
        if self.steps - self.window_start == ONLINE_WINDOW {
            self.flush();
        }
    }

    /// Closes the current window. Active windows without a finished episode
    /// are merged into the next one.
    fn flush(&mut self) {
        let len = self.steps - self.window_start;
        if len == 0 {
            return;
        }
        let performance = match self.branch {
            Branch::Active if self.returns.is_empty() => return,
            Branch::Active => self.returns.iter().sum::<f64>() / self.returns.len() as f64,
            _ => self.rewards / len as f64,
        };
        self.curve.push(CurvePoint {
            step: self.steps,
            performance,
        });
        self.window_start = self.steps;
        self.rewards = 0.0;
        self.returns.clear();
    }
}

/// Training-stream wrapper that feeds the online accumulator.
struct Recorder<'a, E> {
    inner: E,
    acc: &'a mut OnlineAccumulator,
}

impl<E: Environment> Environment for Recorder<'_, E> {
    fn reset(&mut self) -> Result<Observation> {
        self.acc.episode_return = 0.0;
        self.inner.reset()
    }

    fn step(&mut self, action: usize) -> Result<(Observation, Feedback)> {
        let (obs, fb) = self.inner.step(action)?;
        self.acc.record(&fb, obs.episode_done && self.inner.branch() == Branch::Active);
        Ok((obs, fb))
    }

    fn observation_dim(&self) -> usize {
        self.inner.observation_dim()
    }

    fn action_space(&self) -> ActionSpace {
        self.inner.action_space()
    }

    fn branch(&self) -> Branch {
        self.inner.branch()
    }

    fn is_exhausted(&self) -> bool {
        self.inner.is_exhausted()
    }
}
