//! Dataset ingestion and preparation.

mod batch;
mod csv;
mod digest;
mod scale;
mod split;
mod synth;

pub use self::csv::{load_csv, LabelColumn};
pub use batch::{batch_iter, Batch, BatchIter};
pub use digest::{canonical_bytes, hash_partition, verify_partition, PartitionDigest};
pub use scale::{standard_scale_apply, standard_scale_fit, ScalerParams, STD_FLOOR};
pub use split::{stratified_partition, train_test_split};
pub use synth::synth_blobs;

use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Features plus class-index labels.
///
/// `row_ids` tracks each row's position in the dataset it was first built
/// from, so splits and partitions can be checked for exhaustiveness.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub feature_names: Option<Vec<String>>,
    pub row_ids: Vec<usize>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::Data("dataset needs at least one row".into()));
        }
        if features.rows() != labels.len() {
            return Err(Error::dim("dataset labels", features.rows(), labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Data(format!(
                "label {bad} outside [0, {class_count})"
            )));
        }
        let row_ids = (0..labels.len()).collect();
        Ok(Dataset {
            features,
            labels,
            class_count,
            feature_names: None,
            row_ids,
        })
    }

    /// Zero-row dataset with `cols` feature columns.
    pub fn empty(cols: usize, class_count: usize) -> Self {
        Dataset {
            features: Matrix::zeros(0, cols),
            labels: Vec::new(),
            class_count,
            feature_names: None,
            row_ids: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            feature_names: self.feature_names.clone(),
            row_ids: indices.iter().map(|&i| self.row_ids[i]).collect(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Row indices of each class, in row order.
    pub(crate) fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.class_count];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        by_class
    }
}
