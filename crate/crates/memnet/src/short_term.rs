//! Class-balanced short-term memory.
//!
//! One bounded FIFO queue per object class. Batch sampling draws the class
//! uniformly among non-empty queues first and the element second, so a
//! 1000:1 skew in the input stream still yields class-balanced batches.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

/// One observation tagged with its class.
#[derive(Debug, Clone)]
pub struct Sample {
    pub class_id: usize,
    pub payload: Tensor,
}

/// A sampled training batch. `keys` holds one-hot rows matching `class_ids`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub payloads: Tensor,
    pub class_ids: Vec<usize>,
    pub keys: Tensor,
}

/// Per-class bounded FIFO queues.
#[derive(Debug, Clone)]
pub struct ShortTermMemory {
    capacity: usize,
    queues: Vec<VecDeque<Tensor>>,
    payload_dim: Option<usize>,
}

impl ShortTermMemory {
    /// `capacity` is the per-queue bound; insertion beyond it evicts the
    /// oldest element. Both arguments must be positive.
    pub fn new(num_classes: usize, capacity: usize) -> Self {
        assert!(
            num_classes > 0 && capacity > 0,
            "memory needs at least one class and capacity 1"
        );
        ShortTermMemory {
            capacity,
            queues: vec![VecDeque::new(); num_classes],
            payload_dim: None,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.queues.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Flattened payload width, once at least one sample has been inserted.
    pub fn payload_dim(&self) -> Option<usize> {
        self.payload_dim
    }

    pub fn is_empty(&self) -> bool {
        self.queues.iter().all(|q| q.is_empty())
    }

    /// Total stored samples across classes.
    pub fn len(&self) -> usize {
        self.queues.iter().map(|q| q.len()).sum()
    }

    /// Queue lengths in class order.
    pub fn class_counts(&self) -> Vec<usize> {
        self.queues.iter().map(|q| q.len()).collect()
    }

    /// Oldest-first view of one class queue.
    pub fn queue(&self, class_id: usize) -> Result<impl Iterator<Item = &Tensor>> {
        if class_id >= self.queues.len() {
            return Err(Error::IndexOutOfRange {
                what: "class queue",
                index: class_id,
                len: self.queues.len(),
            });
        }
        Ok(self.queues[class_id].iter())
    }

    pub fn insert(&mut self, sample: Sample) -> Result<()> {
        if sample.class_id >= self.queues.len() {
            return Err(Error::IndexOutOfRange {
                what: "class queue",
                index: sample.class_id,
                len: self.queues.len(),
            });
        }
        let dim = sample.payload.numel();
        match self.payload_dim {
            None => self.payload_dim = Some(dim),
            Some(d) if d != dim => {
                return Err(Error::dimension("insert", &[d], sample.payload.shape()))
            }
            _ => {}
        }
        let queue = &mut self.queues[sample.class_id];
        if queue.len() == self.capacity {
            queue.pop_front();
        }
        queue.push_back(sample.payload);
        Ok(())
    }

    /// Draws `batch_size` samples with replacement: class uniform over
    /// non-empty queues, then element uniform within the queue.
    pub fn sample_batch(&self, batch_size: usize, rng: &mut Rng) -> Result<Batch> {
        let non_empty: Vec<usize> = (0..self.queues.len())
            .filter(|&i| !self.queues[i].is_empty())
            .collect();
        if non_empty.is_empty() {
            return Err(Error::EmptyMemory);
        }
        let dim = self.payload_dim.unwrap_or(0);
        let mut payloads = Vec::with_capacity(batch_size * dim);
        let mut class_ids = Vec::with_capacity(batch_size);
        let mut keys = Vec::with_capacity(batch_size * self.queues.len());
        for _ in 0..batch_size {
            let class = non_empty[rng.below(non_empty.len())];
            let queue = &self.queues[class];
            let element = &queue[rng.below(queue.len())];
            payloads.extend_from_slice(element.data());
            class_ids.push(class);
            let key = onehot(class, self.queues.len())?;
            keys.extend_from_slice(key.data());
        }
        Ok(Batch {
            payloads: Tensor::new(vec![batch_size, dim], payloads)?,
            class_ids,
            keys: Tensor::new(vec![batch_size, self.queues.len()], keys)?,
        })
    }
}

/// Zeros of length `dim` with 1.0 at index `i`.
pub fn onehot(i: usize, dim: usize) -> Result<Tensor> {
    if i >= dim {
        return Err(Error::IndexOutOfRange {
            what: "onehot",
            index: i,
            len: dim,
        });
    }
    let mut t = Tensor::zeros(vec![dim]);
    t.data_mut()[i] = 1.0;
    Ok(t)
}
