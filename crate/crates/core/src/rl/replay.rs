use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dialog::{ActionMask, Features};
use crate::error::{Error, Result};

pub const REPLAY_CAPACITY: usize = 15_000;

/// One agent decision. States are stored as categorical features rather
/// than input vectors because embedding-mode inputs change as the
/// embeddings learn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Features,
    pub action: usize,
    pub reward: f64,
    pub next_state: Features,
    pub next_mask: ActionMask,
    pub done: bool,
}

/// FIFO ring: pushing into a full buffer evicts the oldest transition.
#[derive(Debug, Clone, Default)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity),
        }
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

    pub fn push(&mut self, t: Transition) {
        if self.capacity == 0 {
            return;
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform draw with replacement.
    pub fn sample(&self, batch_size: usize, rng: &mut impl Rng) -> Result<Vec<&Transition>> {
        if batch_size == 0 || batch_size > self.items.len() {
            return Err(Error::InsufficientBuffer {
                size: self.items.len(),
                requested: batch_size,
            });
        }
        Ok((0..batch_size)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect())
    }
}
