use rand::Rng;

use super::{FitReport, Method};
use crate::envsim::{ActionSpace, Environment, Observation};
use crate::error::Result;
use crate::rng::{self, StreamRng};
use crate::taxonomy::{Branch, MethodDescriptor};

/// Uniform random policy that never learns. Training streams are still
/// consumed so the online curve is populated.
#[derive(Debug, Clone)]
pub struct RandomMethod {
    descriptor: MethodDescriptor,
    rng: StreamRng,
}

impl RandomMethod {
    pub fn new(descriptor: MethodDescriptor, seed: u64) -> Self {
        RandomMethod {
            descriptor,
            rng: rng::stream(seed, "random-policy", 0),
        }
    }
}

impl Method for RandomMethod {
    fn descriptor(&self) -> &MethodDescriptor {
        &self.descriptor
    }

    fn fit(&mut self, train: &mut dyn Environment, _valid: &mut dyn Environment) -> Result<FitReport> {
        let n = train.action_space().n;
        let mut steps = 0;
        loop {
            let mut obs = train.reset()?;
            while !obs.episode_done {
                obs = train.step(self.rng.random_range(0..n))?.0;
                steps += 1;
            }
            if train.branch() == Branch::Passive || train.is_exhausted() {
                break;
            }
        }
        Ok(FitReport {
            steps,
            updates: 0,
            validation: None,
        })
    }

    fn get_actions(&mut self, observations: &[Observation], action_space: &ActionSpace) -> Result<Vec<usize>> {
        Ok(observations
            .iter()
            .map(|_| self.rng.random_range(0..action_space.n))
            .collect())
    }

    fn on_task_switch(&mut self, _task_id: Option<usize>) -> Result<()> {
        Ok(())
    }

    fn update_count(&self) -> u64 {
        0
    }
}
