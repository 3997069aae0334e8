//! Numeric core: a small dense classifier with analytic gradients, SGD,
//! diagonal Fisher estimates, and tabular Q-learning.

pub mod dense;
pub mod qtable;

use rand::Rng;

pub use dense::{fisher_diagonal, sgd_step, softmax, Activation, DenseNet, GradientBundle, NamedTensor};
pub use qtable::{Discretizer, QEntry, QTable, StateKey};

/// Index of the maximum; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// With probability `epsilon` a uniform action, otherwise the greedy one.
pub fn epsilon_greedy<R: Rng + ?Sized>(values: &[f64], epsilon: f64, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    if u < epsilon {
        rng.random_range(0..values.len())
    } else {
        argmax(values)
    }
}
