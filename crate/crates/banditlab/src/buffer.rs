//! Bounded replay memory with per-arm FIFO eviction.
//!
//! Each arm owns an independent queue of at most `capacity_per_arm`
//! experiences; storing into a full queue evicts that arm's oldest tuple, so
//! one arm's traffic never erases another's history. Minibatch sampling is
//! uniform with replacement over the union of all queues, with one special
//! case: when the buffer holds fewer tuples than the requested batch, the
//! whole buffer is returned once (in arm-major insertion order) so training
//! can begin from the first round.

use crate::linalg::Vector;
use crate::mlp::Minibatch;
use rand::Rng;
use std::collections::VecDeque;
use thiserror::Error;

/// Failure modes of buffer operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BufferError {
    /// An arm index is out of range.
    #[error("arm {arm} out of range for {num_arms} arms")]
    ArmOutOfRange { arm: usize, num_arms: usize },
    /// Sampling from a buffer with no stored experience.
    #[error("cannot sample from an empty buffer")]
    Empty,
    /// A constructor or call argument was outside its domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// One stored interaction: context shown, arm played, reward observed.
#[derive(Debug, Clone)]
pub struct Experience {
    pub context: Vector,
    pub arm: usize,
    pub reward: f64,
}

/// Per-arm FIFO replay memory.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity_per_arm: usize,
    queues: Vec<VecDeque<Experience>>,
}

impl ReplayBuffer {
    pub fn new(num_arms: usize, capacity_per_arm: usize) -> Result<Self, BufferError> {
        if num_arms == 0 {
            return Err(BufferError::InvalidArgument("num_arms must be >= 1".into()));
        }
        if capacity_per_arm == 0 {
            return Err(BufferError::InvalidArgument("capacity_per_arm must be >= 1".into()));
        }
        Ok(ReplayBuffer {
            capacity_per_arm,
            queues: (0..num_arms).map(|_| VecDeque::new()).collect(),
        })
    }

    pub fn num_arms(&self) -> usize {
        self.queues.len()
    }

    pub fn capacity_per_arm(&self) -> usize {
        self.capacity_per_arm
    }

    /// Total tuples stored across all arms.
    pub fn len(&self) -> usize {
        self.queues.iter().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of tuples currently held for one arm.
    pub fn arm_len(&self, arm: usize) -> Result<usize, BufferError> {
        self.check_arm(arm)?;
        Ok(self.queues[arm].len())
    }

    fn check_arm(&self, arm: usize) -> Result<(), BufferError> {
        if arm >= self.queues.len() {
            return Err(BufferError::ArmOutOfRange { arm, num_arms: self.queues.len() });
        }
        Ok(())
    }

    /// Appends to the experience's arm queue, evicting that arm's oldest
    /// tuple first if the queue is at capacity. Returns the evicted tuple so
    /// callers can fold its evidence into longer-lived state before it is
    /// forgotten.
    pub fn store(&mut self, e: Experience) -> Result<Option<Experience>, BufferError> {
        self.check_arm(e.arm)?;
        let q = &mut self.queues[e.arm];
        let evicted =
            if q.len() == self.capacity_per_arm { q.pop_front() } else { None };
        q.push_back(e);
        Ok(evicted)
    }

    /// One arm's queue in insertion order (oldest first).
    pub fn all_for_arm(&self, arm: usize) -> Result<Vec<&Experience>, BufferError> {
        self.check_arm(arm)?;
        Ok(self.queues[arm].iter().collect())
    }

    /// Draws a training batch.
    ///
    /// If at least `batch_size` tuples are stored, draws exactly that many
    /// uniformly with replacement from the union of all queues; otherwise
    /// returns every stored tuple once, in arm-major insertion order.
    pub fn sample<R: Rng>(&self, batch_size: usize, rng: &mut R) -> Result<Minibatch, BufferError> {
        if batch_size == 0 {
            return Err(BufferError::InvalidArgument("batch_size must be >= 1".into()));
        }
        let total = self.len();
        if total == 0 {
            return Err(BufferError::Empty);
        }
        let mut contexts = Vec::new();
        let mut arms = Vec::new();
        let mut rewards = Vec::new();
        if total < batch_size {
            for q in &self.queues {
                for e in q {
                    contexts.push(e.context.clone());
                    arms.push(e.arm);
                    rewards.push(e.reward);
                }
            }
        } else {
            for _ in 0..batch_size {
                let mut idx = rng.random_range(0..total);
                for q in &self.queues {
                    if idx < q.len() {
                        let e = &q[idx];
                        contexts.push(e.context.clone());
                        arms.push(e.arm);
                        rewards.push(e.reward);
                        break;
                    }
                    idx -= q.len();
                }
            }
        }
        Minibatch::new(contexts, arms, rewards)
            .map_err(|e| BufferError::InvalidArgument(e.to_string()))
    }
}

// ── Tests ───────────────────────────────────────────────────────────────────
