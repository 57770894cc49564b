use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};

/// Stratified train/test split. Each class contributes
/// `round(train_fraction * class_size)` rows to train, clamped so both sides
/// keep at least one row of every class. Both outputs keep original row order.
pub fn train_test_split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction {train_fraction} not in (0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut idx) in ds.indices_by_class().into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 2 {
            return Err(Error::Data(format!(
                "class {class} has {} sample(s); need at least 2 to split",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let n_train = ((train_fraction * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(&train), ds.subset(&test)))
}

/// Deals each class's shuffled rows round-robin across clients. The deal
/// position carries over between classes, so client sizes differ by at most
/// one and per-class counts by at most one. Each partition keeps original
/// row order.
pub fn stratified_partition(ds: &Dataset, n_clients: usize, seed: u64) -> Result<Vec<Dataset>> {
    if n_clients == 0 {
        return Err(Error::InvalidArgument("n_clients must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts = vec![Vec::new(); n_clients];
    let mut cursor = 0;
    for (class, mut idx) in ds.indices_by_class().into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        if idx.len() < n_clients {
            return Err(Error::Data(format!(
                "class {class} has {} samples, fewer than {n_clients} clients",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for i in idx {
            parts[cursor % n_clients].push(i);
            cursor += 1;
        }
    }
    Ok(parts
        .into_iter()
        .map(|mut p| {
            p.sort_unstable();
            ds.subset(&p)
        })
        .collect())
}
