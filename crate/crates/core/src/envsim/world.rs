use std::sync::Arc;

use super::cartpole::{self, CartPole, CartPoleParams};
use super::gridworld::{self, GridState, Layout};
use super::passive::{self, CsvTasks};
use super::schedule::{context_at, make_schedule, ContextSchedule, TaskSampler};
use super::{ActionSpace, ContextVector, Environment, EnvironmentSpec, Family, Feedback, Observation};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::taxonomy::{AssumptionVector, BoundarySignal, Branch, ContextObservability};

/// Family-specific assets needed to sample tasks and step the dynamics.
#[derive(Debug, Clone)]
pub enum FamilyModel {
    Gaussian { classes: usize, dim: usize, noise: f64 },
    Csv(Arc<CsvTasks>),
    CartPole,
    Gridworld(Arc<Vec<Layout>>),
}

struct Sampler<'a> {
    family: Family,
    model: &'a FamilyModel,
}

impl TaskSampler for Sampler<'_> {
    fn family(&self) -> Family {
        self.family
    }

    fn sample_task(&self, task: usize, rng: &mut StreamRng) -> Result<ContextVector> {
        Ok(match self.model {
            FamilyModel::Gaussian { classes, dim, .. } => passive::sample_gaussian_task(rng, *classes, *dim),
            FamilyModel::Csv(tasks) => tasks.context(task),
            FamilyModel::CartPole => cartpole::sample_task_cartpole(rng),
            FamilyModel::Gridworld(layouts) => ContextVector {
                values: vec![(task % layouts.len()) as f64],
                task_index: Some(task),
            },
        })
    }
}

/// A fully realized environment family for one experiment seed: assets plus
/// the context schedule. Environments for every phase and task are cut from it.
#[derive(Debug, Clone)]
pub struct World {
    pub spec: EnvironmentSpec,
    pub model: FamilyModel,
    pub schedule: ContextSchedule,
    pub seed: u64,
}

impl World {
    pub fn build(spec: &EnvironmentSpec, seed: u64) -> Result<Arc<World>> {
        spec.validate()?;
        let model = match spec.family {
            Family::SyntheticGaussianSl => FamilyModel::Gaussian {
                classes: spec.classes_per_task,
                dim: spec.input_dim,
                noise: spec.noise_std,
            },
            Family::SplitCsvSl => {
                let path = spec.dataset_path.as_ref().expect("validated");
                let data = passive::load_csv_dataset(path)?;
                FamilyModel::Csv(Arc::new(CsvTasks::build(&data, spec.num_tasks, seed)?))
            }
            Family::CartPoleVariant => FamilyModel::CartPole,
            Family::MultiLayoutGridworld => {
                let layouts = match &spec.layout_dir {
                    Some(dir) => gridworld::load_layouts(dir)?,
                    None => gridworld::builtin_layouts(),
                };
                FamilyModel::Gridworld(Arc::new(layouts))
            }
        };
        let sampler = Sampler {
            family: spec.family,
            model: &model,
        };
        let schedule = make_schedule(spec.schedule, spec.num_tasks, spec.steps_per_phase, &sampler, seed)?;
        Ok(Arc::new(World {
            spec: spec.clone(),
            model,
            schedule,
            seed,
        }))
    }

    pub fn branch(&self) -> Branch {
        self.spec.family.branch()
    }

    pub fn observation_dim(&self) -> usize {
        match &self.model {
            FamilyModel::Gaussian { dim, .. } => *dim,
            FamilyModel::Csv(t) => t.dim,
            FamilyModel::CartPole => 4,
            FamilyModel::Gridworld(l) => l[0].cells(),
        }
    }

    pub fn action_space(&self) -> ActionSpace {
        let disjoint = self.spec.disjoint_actions;
        match &self.model {
            FamilyModel::Gaussian { classes, .. } if disjoint => ActionSpace {
                n: classes * self.spec.num_tasks,
                block: Some(*classes),
            },
            FamilyModel::Gaussian { classes, .. } => ActionSpace::discrete(*classes),
            FamilyModel::Csv(t) if disjoint => ActionSpace {
                n: t.num_classes,
                block: Some(t.classes_per_task),
            },
            FamilyModel::Csv(t) => ActionSpace::discrete(t.classes_per_task),
            FamilyModel::CartPole => ActionSpace::discrete(2),
            FamilyModel::Gridworld(_) => ActionSpace::discrete(gridworld::NUM_ACTIONS),
        }
    }

    /// Number of evaluation columns (tasks / anchors).
    pub fn num_tasks(&self) -> usize {
        self.schedule.anchors.len()
    }

    /// Training stream for `phase`.
    pub fn train_env(self: &Arc<Self>, phase: usize) -> Result<RawEnv> {
        let start = self.schedule.phase_start(phase);
        let len = self.schedule.phase_len();
        RawEnv::stream(self.clone(), start, len, 1, rng::stream(self.seed, "train", phase as u64))
    }

    /// Validation stream spanning the same window as `train_env(phase)` at a
    /// fifth of the density, drawn from an independent generator.
    pub fn valid_env(self: &Arc<Self>, phase: usize) -> Result<RawEnv> {
        let start = self.schedule.phase_start(phase);
        let len = (self.schedule.phase_len() / 5).max(1);
        RawEnv::stream(self.clone(), start, len, 5, rng::stream(self.seed, "valid", phase as u64))
    }

    /// Held-out environment for task `task`, drawn fresh for evaluation row `row`.
    pub fn test_env(self: &Arc<Self>, task: usize, row: usize, samples: usize) -> Result<RawEnv> {
        if task >= self.num_tasks() {
            return Err(Error::Env(format!("task {task} out of range")));
        }
        let index = ((row as u64) << 32) | task as u64;
        RawEnv::fixed(self.clone(), task, samples, rng::stream(self.seed, "test", index))
    }

    fn sample_passive(&self, ctx: &ContextVector, task: Option<usize>, held_out: bool, r: &mut StreamRng) -> Result<(Vec<f64>, usize)> {
        match &self.model {
            FamilyModel::Gaussian { classes, noise, .. } => {
                passive::sample_gaussian(ctx, *classes, *noise, self.spec.disjoint_actions, r)
            }
            FamilyModel::Csv(tasks) => {
                let t = task.ok_or_else(|| Error::Env("csv tasks need a discrete index".into()))?;
                Ok(tasks.sample(t, held_out, self.spec.disjoint_actions, r))
            }
            _ => Err(Error::Env("not a passive family".into())),
        }
    }
}

#[derive(Debug, Clone)]
struct PassiveSample {
    x: Vec<f64>,
    label: usize,
    task: Option<usize>,
    boundary: bool,
}

#[derive(Debug, Clone)]
enum ActiveSim {
    Cart(CartPole),
    Grid { state: GridState, layout: usize },
}

#[derive(Debug, Clone)]
enum Mode {
    /// Budgeted window of the global schedule.
    Stream { start: u64, len: usize },
    /// One task's anchor context, unlimited episodes.
    Fixed { task: usize },
}

/// Unmasked environment: every observation carries the task index and the
/// boundary flag. Use [`wrap_for_setting`] before handing it to a method.
#[derive(Debug, Clone)]
pub struct RawEnv {
    world: Arc<World>,
    mode: Mode,
    rng: StreamRng,
    passive: Vec<PassiveSample>,
    cursor: usize,
    consumed: usize,
    sim: Option<ActiveSim>,
    episode_ctx: Option<ContextVector>,
    episode_task: Option<usize>,
}

impl RawEnv {
    fn stream(world: Arc<World>, start: u64, len: usize, stride: u64, mut rng: StreamRng) -> Result<Self> {
        let mut passive = Vec::new();
        if world.branch() == Branch::Passive {
            passive.reserve(len);
            for t in 0..len as u64 {
                let g = start + t * stride;
                let ctx = context_at(&world.schedule, g);
                let task = world.schedule.task_at(g);
                let (x, label) = world.sample_passive(&ctx, task, false, &mut rng)?;
                passive.push(PassiveSample {
                    x,
                    label,
                    task,
                    boundary: world.schedule.is_boundary(g),
                });
            }
        }
        Ok(RawEnv {
            world,
            mode: Mode::Stream { start, len },
            rng,
            passive,
            cursor: usize::MAX,
            consumed: 0,
            sim: None,
            episode_ctx: None,
            episode_task: None,
        })
    }

    fn fixed(world: Arc<World>, task: usize, samples: usize, mut rng: StreamRng) -> Result<Self> {
        let mut passive = Vec::new();
        if world.branch() == Branch::Passive {
            let ctx = world.schedule.anchors[task].clone();
            for _ in 0..samples {
                let (x, label) = world.sample_passive(&ctx, Some(task), true, &mut rng)?;
                passive.push(PassiveSample {
                    x,
                    label,
                    task: ctx.task_index,
                    boundary: false,
                });
            }
        }
        Ok(RawEnv {
            world,
            mode: Mode::Fixed { task },
            rng,
            passive,
            cursor: usize::MAX,
            consumed: 0,
            sim: None,
            episode_ctx: None,
            episode_task: None,
        })
    }

    pub fn world(&self) -> &Arc<World> {
        &self.world
    }

    /// Number of samples per pass (passive) or step budget (active streams).
    pub fn len(&self) -> Option<usize> {
        match (&self.mode, self.world.branch()) {
            (_, Branch::Passive) => Some(self.passive.len()),
            (Mode::Stream { len, .. }, _) => Some(*len),
            (Mode::Fixed { .. }, _) => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }

    fn global_step(&self) -> Option<u64> {
        match self.mode {
            Mode::Stream { start, .. } => Some(start + self.consumed as u64),
            Mode::Fixed { .. } => None,
        }
    }

    fn passive_obs(&self, i: usize, done: bool) -> Observation {
        let s = &self.passive[i];
        Observation {
            x: s.x.clone(),
            task_id: s.task,
            boundary: Some(s.boundary && !done),
            episode_done: done,
        }
    }

    fn active_obs(&self, done: bool) -> Observation {
        let x = match self.sim.as_ref().expect("episode in progress") {
            ActiveSim::Cart(c) => c.state.to_vec(),
            ActiveSim::Grid { state, layout } => self.layouts()[*layout].observe(state),
        };
        let boundary = self.global_step().is_some_and(|g| self.world.schedule.is_boundary(g));
        Observation {
            x,
            task_id: self.episode_task,
            boundary: Some(boundary && !done),
            episode_done: done,
        }
    }

    fn layouts(&self) -> &[Layout] {
        match &self.world.model {
            FamilyModel::Gridworld(l) => l,
            _ => &[],
        }
    }

    fn context_now(&self) -> (ContextVector, Option<usize>) {
        match self.mode {
            Mode::Stream { start, .. } => {
                let g = start + self.consumed as u64;
                (context_at(&self.world.schedule, g), self.world.schedule.task_at(g))
            }
            Mode::Fixed { task } => {
                let ctx = self.world.schedule.anchors[task].clone();
                let t = ctx.task_index;
                (ctx, t)
            }
        }
    }

    fn check_action(&self, action: usize) -> Result<()> {
        let n = self.world.action_space().n;
        if action >= n {
            return Err(Error::Env(format!("action {action} outside action space of size {n}")));
        }
        Ok(())
    }
}

impl Environment for RawEnv {
    fn reset(&mut self) -> Result<Observation> {
        if self.world.branch() == Branch::Passive {
            if self.passive.is_empty() {
                return Err(Error::Env("empty passive stream".into()));
            }
            self.cursor = 0;
            return Ok(self.passive_obs(0, false));
        }
        if self.is_exhausted() {
            return Err(Error::Env("stream budget exhausted".into()));
        }
        let (ctx, task) = self.context_now();
        let max_len = self.world.spec.max_episode_len;
        let sim = match &self.world.model {
            FamilyModel::CartPole => ActiveSim::Cart(CartPole::random_start(&mut self.rng, max_len)),
            FamilyModel::Gridworld(layouts) => {
                let layout = gridworld::layout_for(layouts, &ctx)?;
                let index = ctx.values[0] as usize;
                ActiveSim::Grid {
                    state: layout.initial_state(),
                    layout: index,
                }
            }
            _ => unreachable!("active branch"),
        };
        self.sim = Some(sim);
        self.episode_ctx = Some(ctx);
        self.episode_task = task;
        Ok(self.active_obs(false))
    }

    fn step(&mut self, action: usize) -> Result<(Observation, Feedback)> {
        self.check_action(action)?;
        if self.world.branch() == Branch::Passive {
            if self.cursor >= self.passive.len() {
                return Err(Error::Env("pass finished; call reset".into()));
            }
            let label = self.passive[self.cursor].label;
            let feedback = Feedback {
                reward: if action == label { 1.0 } else { 0.0 },
                label: Some(label),
            };
            self.cursor += 1;
            let obs = if self.cursor == self.passive.len() {
                self.passive_obs(self.cursor - 1, true)
            } else {
                self.passive_obs(self.cursor, false)
            };
            return Ok((obs, feedback));
        }

        if self.sim.is_none() {
            return Err(Error::Env("episode finished; call reset".into()));
        }
        let drifting = self.world.schedule.kind.is_continuous() && matches!(self.mode, Mode::Stream { .. });
        let ctx = if drifting {
            self.context_now().0
        } else {
            self.episode_ctx.clone().expect("episode context")
        };
        let (reward, mut done) = match self.sim.as_mut().expect("checked") {
            ActiveSim::Cart(c) => c.step(action, &CartPoleParams::from_context(&ctx)?)?,
            ActiveSim::Grid { state, layout } => {
                let layouts = match &self.world.model {
                    FamilyModel::Gridworld(l) => l.clone(),
                    _ => unreachable!(),
                };
                let (next, r, d) =
                    gridworld::step_layout(&layouts[*layout], state, action, self.world.spec.max_episode_len)?;
                *state = next;
                (r, d)
            }
        };
        self.consumed += 1;
        if self.is_exhausted() {
            done = true;
        }
        let obs = self.active_obs(done);
        if done {
            self.sim = None;
        }
        Ok((obs, Feedback { reward, label: None }))
    }

    fn observation_dim(&self) -> usize {
        self.world.observation_dim()
    }

    fn action_space(&self) -> ActionSpace {
        self.world.action_space()
    }

    fn branch(&self) -> Branch {
        self.world.branch()
    }

    fn is_exhausted(&self) -> bool {
        match self.mode {
            Mode::Stream { len, .. } if self.world.branch() == Branch::Active => self.consumed >= len,
            _ => false,
        }
    }
}

/// Environment restricted to what a setting's assumptions expose.
#[derive(Debug, Clone)]
pub struct MaskedEnv {
    inner: RawEnv,
    assumptions: AssumptionVector,
}

impl MaskedEnv {
    pub fn assumptions(&self) -> &AssumptionVector {
        &self.assumptions
    }

    pub fn inner(&self) -> &RawEnv {
        &self.inner
    }

    fn mask(&self, mut obs: Observation) -> Observation {
        if self.assumptions.context_observed != ContextObservability::Observed {
            obs.task_id = None;
        }
        if self.assumptions.boundary_signal != BoundarySignal::Signaled {
            obs.boundary = None;
        }
        obs
    }
}

/// Wraps `env` for a setting, rejecting branch or schedule mismatches.
pub fn wrap_for_setting(env: RawEnv, assumptions: &AssumptionVector) -> Result<MaskedEnv> {
    if assumptions.is_abstract() {
        return Err(Error::AbstractSetting(format!("{assumptions:?}")));
    }
    let world = env.world();
    if world.branch() != assumptions.branch {
        return Err(Error::Config(format!(
            "family {} is {:?} but the setting is {:?}",
            world.spec.family.name(),
            world.branch(),
            assumptions.branch
        )));
    }
    let kind = world.schedule.kind;
    if !kind.compatible_with(assumptions.context_continuity, assumptions.stationarity) {
        return Err(Error::Config(format!(
            "schedule {kind:?} does not match {:?} / {:?} context assumptions",
            assumptions.context_continuity, assumptions.stationarity
        )));
    }
    Ok(MaskedEnv {
        inner: env,
        assumptions: *assumptions,
    })
}

impl Environment for MaskedEnv {
    fn reset(&mut self) -> Result<Observation> {
        let obs = self.inner.reset()?;
        Ok(self.mask(obs))
    }

    fn step(&mut self, action: usize) -> Result<(Observation, Feedback)> {
        let (obs, fb) = self.inner.step(action)?;
        Ok((self.mask(obs), fb))
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
