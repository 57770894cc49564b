use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::Result;
use crate::nn::{targets, LossKind, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub features: Matrix,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn targets(&self, kind: LossKind, class_count: usize) -> Result<Matrix> {
        targets(kind, &self.labels, class_count)
    }
}

/// One epoch over a dataset in fixed-size batches; the last batch may be short.
pub struct BatchIter<'a> {
    ds: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

pub fn batch_iter(ds: &Dataset, batch_size: usize, shuffle: bool, seed: u64) -> BatchIter<'_> {
    let mut order: Vec<usize> = (0..ds.len()).collect();
    if shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    BatchIter {
        ds,
        order,
        batch_size: batch_size.max(1),
        pos: 0,
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let idx = &self.order[self.pos..end];
        self.pos = end;
        Some(Batch {
            features: self.ds.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.ds.labels[i]).collect(),
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.pos).div_ceil(self.batch_size);
        (left, Some(left))
    }
}

impl ExactSizeIterator for BatchIter<'_> {}
