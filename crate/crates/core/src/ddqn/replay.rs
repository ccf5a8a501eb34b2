//! Fixed-capacity experience replay with FIFO eviction.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::TrainError;

#[derive(Debug)]
pub struct ReplayBuffer<T> {
    items: Vec<T>,
    capacity: usize,
    /// Next ring slot to overwrite once full.
    write: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> ReplayBuffer<T> {
        assert!(capacity > 0, "capacity must be positive");
        ReplayBuffer { items: Vec::with_capacity(capacity.min(1 << 20)), capacity, write: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Append, overwriting the oldest entry at capacity.
    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.write] = item;
            self.write = (self.write + 1) % self.capacity;
        }
    }

    pub fn get(&self, i: usize) -> &T {
        &self.items[i]
    }

    /// `k` distinct uniform indices; rejects underfilled buffers.
    pub fn sample_indices(&self, k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>, TrainError> {
        let n = self.items.len();
        if k == 0 || k > n {
            return Err(TrainError::BufferTooSmall { have: n, want: k });
        }
        if k == n {
            // Full permutation via Fisher-Yates.
            let mut idx: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.gen_range(0..=i);
                idx.swap(i, j);
            }
            return Ok(idx);
        }
        let mut out: Vec<usize> = Vec::with_capacity(k);
        while out.len() < k {
            let i = rng.gen_range(0..n);
            if !out.contains(&i) {
                out.push(i);
            }
        }
        Ok(out)
    }

    pub fn sample(&self, k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<&T>, TrainError> {
        Ok(self.sample_indices(k, rng)?.into_iter().map(|i| &self.items[i]).collect())
    }
}
