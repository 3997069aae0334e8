#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use lattice_cl::learners::{Activation, DenseNet};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRID_HORIZON: usize = 100;

/// Best achievable return on a layout, by breadth-first search over
/// (cell, coins still on the board). Written against the layout text only.
pub fn bfs_optimal_return(text: &str) -> f64 {
    let grid: Vec<Vec<char>> = text.lines().filter(|l| !l.trim().is_empty()).map(|l| l.chars().collect()).collect();
    let find = |ch: char| -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (r, row) in grid.iter().enumerate() {
            for (c, &x) in row.iter().enumerate() {
                if x == ch {
                    out.push((r, c));
                }
            }
        }
        out
    };
    let start = find('S')[0];
    let goal = find('G')[0];
    let coins = find('C');
    let full: u64 = (1u64 << coins.len()) - 1;
    let mut dist: HashMap<((usize, usize), u64), usize> = HashMap::new();
    let mut queue = VecDeque::new();
    dist.insert((start, full), 0);
    queue.push_back((start, full));
    let mut best = f64::NEG_INFINITY;
    while let Some((pos, mask)) = queue.pop_front() {
        let d = dist[&(pos, mask)];
        let collected = (full & !mask).count_ones() as f64;
        if pos == goal {
            best = best.max(10.0 + collected - 0.01 * d as f64);
            continue;
        }
        if d == GRID_HORIZON {
            best = best.max(collected - 0.01 * d as f64);
            continue;
        }
        for (dr, dc) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            let (r, c) = (pos.0 as i64 + dr, pos.1 as i64 + dc);
            let mut next = (r as usize, c as usize);
            if grid[next.0][next.1] == '#' {
                next = pos;
            }
            let mut m = mask;
            if let Some(i) = coins.iter().position(|&p| p == next) {
                m &= !(1 << i);
            }
            if let std::collections::hash_map::Entry::Vacant(e) = dist.entry((next, m)) {
                e.insert(d + 1);
                queue.push_back((next, m));
            }
        }
    }
    best
}

/// Deterministic finite MDP.
pub struct Mdp {
    pub next: Vec<Vec<usize>>,
    pub reward: Vec<Vec<f64>>,
    pub terminal: Vec<bool>,
}

impl Mdp {
    pub fn random(states: usize, actions: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut terminal = vec![false; states];
        terminal[states - 1] = true;
        let next = (0..states)
            .map(|_| (0..actions).map(|_| rng.random_range(0..states)).collect())
            .collect();
        let reward = (0..states)
            .map(|_| (0..actions).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        Mdp { next, reward, terminal }
    }

    /// Exact optimal action values by value iteration to machine precision.
    pub fn value_iteration(&self, gamma: f64) -> Vec<Vec<f64>> {
        let n = self.next.len();
        let mut v = vec![0.0; n];
        loop {
            let q = self.q_from(&v, gamma);
            let nv: Vec<f64> = q.iter().map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect();
            let delta = nv.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = nv;
            if delta < 1e-13 {
                return self.q_from(&v, gamma);
            }
        }
    }

    fn q_from(&self, v: &[f64], gamma: f64) -> Vec<Vec<f64>> {
        (0..self.next.len())
            .map(|s| {
                (0..self.next[s].len())
                    .map(|a| {
                        let s2 = self.next[s][a];
                        self.reward[s][a] + if self.terminal[s2] { 0.0 } else { gamma * v[s2] }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Mean softmax cross-entropy computed directly from the parameters.
pub fn ce_loss(net: &DenseNet, x: &Array2<f64>, labels: &[usize]) -> f64 {
    let logits = net.forward(x.view()).unwrap();
    let mut total = 0.0;
    for (row, &y) in logits.rows().into_iter().zip(labels) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    total / labels.len() as f64
}

/// Random small network and batch for gradient checks.
pub fn random_instance(seed: u64) -> (DenseNet, Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = rng.random_range(1..=3);
    let mut sizes = vec![rng.random_range(1..=20)];
    for _ in 0..layers {
        sizes.push(rng.random_range(2..=20));
    }
    let act = [Activation::Tanh, Activation::Relu][rng.random_range(0..2)];
    let net = DenseNet::new(&sizes, act, &mut rng).unwrap();
    let batch = rng.random_range(1..=8);
    let x = Array2::from_shape_fn((batch, sizes[0]), |_| rng.random_range(-1.0..1.0));
    let k = *sizes.last().unwrap();
    let labels = (0..batch).map(|_| rng.random_range(0..k)).collect();
    (net, x, labels)
}

/// Largest relative error between analytic and central-difference gradients.
pub fn max_relative_error(net: &DenseNet, x: &Array2<f64>, labels: &[usize]) -> f64 {
    let (_, grads) = net.backward_ce(x.view(), labels, None).unwrap();
    let analytic = grads.flat();
    let theta = net.params_flat();
    let eps = 1e-5;
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in 0..theta.len() {
        let mut t = theta.clone();
        t[i] = theta[i] + eps;
        probe.set_params_flat(&t).unwrap();
        let up = ce_loss(&probe, x, labels);
        t[i] = theta[i] - eps;
        probe.set_params_flat(&t).unwrap();
        let down = ce_loss(&probe, x, labels);
        let numeric = (up - down) / (2.0 * eps);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}
