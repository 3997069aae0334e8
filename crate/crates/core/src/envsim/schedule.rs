//! Context schedules: how the hidden task evolves over global training steps.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ContextVector, Family};
use crate::error::{Error, Result};
use crate::rng;
use crate::taxonomy::{ContextContinuity, Stationarity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    ContinuousDrift,
    DiscreteChain,
    IncrementalSequence,
    StationaryMixture,
    SingleTask,
}

impl ScheduleKind {
    pub fn is_stationary(self) -> bool {
        matches!(self, ScheduleKind::StationaryMixture | ScheduleKind::SingleTask)
    }

    pub fn is_continuous(self) -> bool {
        self == ScheduleKind::ContinuousDrift
    }

    /// Whether a setting with these assumptions can run on this schedule.
    /// Continuous settings admit discrete schedules as a special case;
    /// stationarity must match exactly.
    pub fn compatible_with(self, continuity: ContextContinuity, stationarity: Stationarity) -> bool {
        let stationarity_ok = self.is_stationary() == (stationarity == Stationarity::Stationary);
        let continuity_ok = !self.is_continuous() || continuity == ContextContinuity::Continuous;
        stationarity_ok && continuity_ok
    }
}

/// Source of task contexts for a family.
pub trait TaskSampler {
    fn family(&self) -> Family;
    fn sample_task(&self, task: usize, rng: &mut rng::StreamRng) -> Result<ContextVector>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSchedule {
    pub kind: ScheduleKind,
    pub num_tasks: usize,
    pub steps_per_phase: usize,
    pub anchors: Vec<ContextVector>,
    /// Row-stochastic task transition matrix (discrete chains only).
    pub transition: Option<Vec<Vec<f64>>>,
    /// Task visited in each phase (discrete chains only).
    pub chain: Option<Vec<usize>>,
    pub seed: u64,
}

pub fn make_schedule(
    kind: ScheduleKind,
    num_tasks: usize,
    steps_per_phase: usize,
    sampler: &dyn TaskSampler,
    seed: u64,
) -> Result<ContextSchedule> {
    if num_tasks == 0 {
        return Err(Error::malformed("num_tasks", "must be >= 1"));
    }
    if steps_per_phase == 0 {
        return Err(Error::malformed("steps_per_phase", "must be > 0"));
    }
    if kind == ScheduleKind::SingleTask && num_tasks != 1 {
        return Err(Error::malformed("num_tasks", "single_task schedules take exactly one task"));
    }
    if kind.is_continuous() && !sampler.family().supports_drift() {
        return Err(Error::malformed(
            "schedule",
            format!("{} has no continuous task parameters to drift", sampler.family().name()),
        ));
    }
    let mut anchors = Vec::with_capacity(num_tasks);
    for k in 0..num_tasks {
        let mut r = rng::stream(seed, "task-anchor", k as u64);
        let mut ctx = sampler.sample_task(k, &mut r)?;
        ctx.task_index = if kind.is_continuous() { None } else { Some(k) };
        anchors.push(ctx);
    }
    let (transition, chain) = if kind == ScheduleKind::DiscreteChain {
        let t = default_transition(num_tasks);
        let chain = sample_chain(&t, num_tasks, seed)?;
        (Some(t), Some(chain))
    } else {
        (None, None)
    };
    Ok(ContextSchedule {
        kind,
        num_tasks,
        steps_per_phase,
        anchors,
        transition,
        chain,
        seed,
    })
}

/// Uniform jumps to any other task (self-loop when there is only one).
fn default_transition(n: usize) -> Vec<Vec<f64>> {
    if n == 1 {
        return vec![vec![1.0]];
    }
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 / (n - 1) as f64 }).collect())
        .collect()
}

fn sample_chain(transition: &[Vec<f64>], phases: usize, seed: u64) -> Result<Vec<usize>> {
    for (i, row) in transition.iter().enumerate() {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-9 || row.iter().any(|p| *p < 0.0) {
            return Err(Error::malformed("transition", format!("row {i} is not a distribution")));
        }
    }
    let mut r = rng::stream(seed, "chain", 0);
    let mut chain = vec![0];
    while chain.len() < phases {
        let row = &transition[*chain.last().expect("non-empty")];
        let u: f64 = r.random();
        let mut acc = 0.0;
        let mut next = row.len() - 1;
        for (j, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = j;
                break;
            }
        }
        chain.push(next);
    }
    Ok(chain)
}

impl ContextSchedule {
    /// Number of train/evaluate phases.
    pub fn num_phases(&self) -> usize {
        if self.kind.is_stationary() {
            1
        } else {
            self.num_tasks
        }
    }

    /// Training steps in one phase.
    pub fn phase_len(&self) -> usize {
        match self.kind {
            ScheduleKind::StationaryMixture => self.steps_per_phase * self.num_tasks,
            _ => self.steps_per_phase,
        }
    }

    pub fn phase_start(&self, phase: usize) -> u64 {
        (phase * self.phase_len()) as u64
    }

    /// Discrete task active at `step`, if the schedule has one.
    pub fn task_at(&self, step: u64) -> Option<usize> {
        let p = self.steps_per_phase as u64;
        let last = self.num_tasks - 1;
        match self.kind {
            ScheduleKind::SingleTask => Some(0),
            ScheduleKind::IncrementalSequence => Some(((step / p) as usize).min(last)),
            ScheduleKind::DiscreteChain => {
                let chain = self.chain.as_ref().expect("chains carry their sequence");
                Some(chain[((step / p) as usize).min(chain.len() - 1)])
            }
            ScheduleKind::StationaryMixture => {
                Some(rng::stream(self.seed, "mixture", step).random_range(0..self.num_tasks))
            }
            ScheduleKind::ContinuousDrift => None,
        }
    }

    /// Task that phase `phase` trains on (the starting anchor under drift).
    pub fn phase_task(&self, phase: usize) -> Option<usize> {
        match self.kind {
            ScheduleKind::ContinuousDrift => Some(phase.min(self.num_tasks - 1)),
            ScheduleKind::StationaryMixture => None,
            _ => self.task_at(self.phase_start(phase)),
        }
    }

    /// Whether the context switched between `step - 1` and `step`. Only
    /// sequential discrete schedules have boundaries.
    pub fn is_boundary(&self, step: u64) -> bool {
        match self.kind {
            ScheduleKind::IncrementalSequence | ScheduleKind::DiscreteChain if step > 0 => {
                self.task_at(step) != self.task_at(step - 1)
            }
            _ => false,
        }
    }
}

/// Context in effect at global `step`.
pub fn context_at(schedule: &ContextSchedule, step: u64) -> ContextVector {
    match schedule.kind {
        ScheduleKind::ContinuousDrift => {
            let p = schedule.steps_per_phase as u64;
            let k = (step / p) as usize;
            let last = schedule.anchors.len() - 1;
            if k >= last {
                return schedule.anchors[last].clone();
            }
            let alpha = (step % p) as f64 / p as f64;
            let (a, b) = (&schedule.anchors[k].values, &schedule.anchors[k + 1].values);
            ContextVector {
                values: a.iter().zip(b).map(|(u, v)| (1.0 - alpha) * u + alpha * v).collect(),
                task_index: None,
            }
        }
        _ => {
            let t = schedule.task_at(step).expect("discrete schedules have a task");
            schedule.anchors[t].clone()
        }
    }
}
