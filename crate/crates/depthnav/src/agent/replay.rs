//! Uniform experience replay over a fixed-capacity ring.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::sensor::Observation;
use crate::sim::ActionPair;
use crate::{Error, Result};

/// One replay record. `terminal` marks bootstrap cutoff (collision);
/// step-limit truncation keeps bootstrapping.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub action: ActionPair,
    pub reward: f64,
    pub next_obs: Observation,
    pub terminal: bool,
}

/// FIFO ring buffer with uniform without-replacement batch sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be > 0");
        ReplayBuffer {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            cursor: 0,
        }
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

    /// Append a transition, evicting the oldest once full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
    }

    /// Sample `n` distinct indices uniformly (Floyd's algorithm) and clone
    /// the transitions in draw order.
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Transition>> {
        if n == 0 {
            return Err(Error::Usage("sample size must be > 0".into()));
        }
        if self.items.len() < n {
            return Err(Error::Usage(format!(
                "cannot sample {n} transitions from a buffer of {}",
                self.items.len()
            )));
        }
        let len = self.items.len();
        let mut chosen: Vec<usize> = Vec::with_capacity(n);
        for j in (len - n)..len {
            let t = rng.gen_range(0..=j);
            if chosen.contains(&t) {
                chosen.push(j);
            } else {
                chosen.push(t);
            }
        }
        Ok(chosen.into_iter().map(|i| self.items[i].clone()).collect())
    }

    /// Oldest-to-newest iteration (test support).
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (wrapped, head) = self.items.split_at(self.cursor);
        head.iter().chain(wrapped.iter())
    }
}
