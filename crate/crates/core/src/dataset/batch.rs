use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ActionPair, DatasetError};
use crate::motion::Motion;
use crate::rng::derive_seed;

/// Per-item frame counts, carried alongside each batch so variable-length
/// items are never truncated to a common length.
pub trait FrameCounts {
    fn frame_counts(&self) -> Vec<usize>;
}

impl FrameCounts for ActionPair {
    fn frame_counts(&self) -> Vec<usize> {
        vec![self.motion_1.len(), self.motion_2.len()]
    }
}

impl FrameCounts for Motion {
    fn frame_counts(&self) -> Vec<usize> {
        vec![self.len()]
    }
}

impl<T: FrameCounts> FrameCounts for (String, T) {
    fn frame_counts(&self) -> Vec<usize> {
        self.1.frame_counts()
    }
}

#[derive(Debug)]
pub struct Batch<'a, T> {
    pub indices: Vec<usize>,
    pub items: Vec<&'a T>,
    pub lengths: Vec<Vec<usize>>,
}

impl<T> Batch<'_, T> {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// One epoch over `items` in a seeded random order; the last batch may be
/// short.
#[derive(Debug)]
pub struct Batches<'a, T> {
    items: &'a [T],
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
}

impl<'a, T> Batches<'a, T> {
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn num_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

impl<'a, T: FrameCounts> Iterator for Batches<'a, T> {
    type Item = Batch<'a, T>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let indices = self.order[self.pos..end].to_vec();
        self.pos = end;
        let items: Vec<&T> = indices.iter().map(|&i| &self.items[i]).collect();
        let lengths = items.iter().map(|it| it.frame_counts()).collect();
        Some(Batch { indices, items, lengths })
    }
}

pub fn batch_iterator<T: FrameCounts>(
    items: &[T],
    batch_size: usize,
    shuffle_seed: u64,
    epoch: u64,
) -> Result<Batches<'_, T>, DatasetError> {
    if batch_size == 0 {
        return Err(DatasetError::BatchSize);
    }
    if items.is_empty() {
        return Err(DatasetError::Empty);
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(shuffle_seed, &[epoch]));
    order.shuffle(&mut rng);
    Ok(Batches { items, order, pos: 0, batch_size })
}
