use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reservoir-sampled buffer: after `n` inserts every item seen so far is
/// retained with probability `capacity / n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    seen: u64,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::malformed("replay_capacity", "must be > 0"));
        }
        Ok(ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            seen: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn items(&self) -> &[T] {
        &self.items
    }

    pub fn insert<R: Rng + ?Sized>(&mut self, item: T, rng: &mut R) {
        self.seen += 1;
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            let j = rng.random_range(0..self.seen);
            if (j as usize) < self.capacity {
                self.items[j as usize] = item;
            }
        }
    }

    /// `n` distinct items drawn uniformly without replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&T>> {
        if self.items.is_empty() {
            return Err(Error::Method("cannot sample from an empty replay buffer".into()));
        }
        if n > self.items.len() {
            return Err(Error::Method(format!(
                "requested {n} items from a buffer holding {}",
                self.items.len()
            )));
        }
        Ok(index::sample(rng, self.items.len(), n)
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn under_capacity_keeps_everything() {
        let mut rng = stream(0, "t", 0);
        let mut b = ReplayBuffer::new(10).unwrap();
        for i in 0..7 {
            b.insert(i, &mut rng);
        }
        assert_eq!(b.items(), &[0, 1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn exhaustive_sample_is_the_contents() {
        let mut rng = stream(1, "t", 0);
        let mut b = ReplayBuffer::new(5).unwrap();
        for i in 0..50 {
            b.insert(i, &mut rng);
        }
        let mut s: Vec<i32> = b.sample(5, &mut rng).unwrap().into_iter().copied().collect();
        let mut all = b.items().to_vec();
        s.sort();
        all.sort();
        assert_eq!(s, all);
    }

    #[test]
    fn errors() {
        assert!(ReplayBuffer::<u8>::new(0).is_err());
        let b = ReplayBuffer::<u8>::new(3).unwrap();
        assert!(b.sample(1, &mut stream(0, "t", 0)).is_err());
    }
}
