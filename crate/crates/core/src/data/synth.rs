use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::Matrix;

const CENTER_RETRIES: usize = 1000;

/// Unit-variance Gaussian clusters around seeded centers that sit at least
/// `separation` apart. Labels are balanced (row `i` has class `i % classes`).
pub fn synth_blobs(n: usize, d: usize, classes: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if classes == 0 || n < classes || d == 0 || separation.is_nan() || separation <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "synth_blobs(n={n}, d={d}, classes={classes}, separation={separation})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Centers are drawn from N(0, spread^2 I); spread grows with the number
    // of classes so that rejection sampling stays cheap.
    let spread = separation * (classes as f64).sqrt();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(classes);
    for _ in 0..classes {
        let mut placed = false;
        for _ in 0..CENTER_RETRIES {
            let c: Vec<f64> = (0..d)
                .map(|_| spread * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect();
            let far_enough = centers.iter().all(|o| {
                o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= separation
            });
            if far_enough {
                centers.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Data(format!(
                "could not place {classes} centers {separation} apart in {d} dimensions"
            )));
        }
    }
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(&mut rng);
    let mut data = Vec::with_capacity(n * d);
    for &l in &labels {
        for c in &centers[l] {
            let noise: f64 = StandardNormal.sample(&mut rng);
            data.push(c + noise);
        }
    }
    Dataset::new(Matrix::new(n, d, data)?, labels, classes)
}
