//! Importance-weighted client sampling: normalization, the selection count
//! and the empirical draw frequencies.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wssl::selection::{normalize_weights, select_count, select_with_betas, weighted_sample_without_replacement};

fn main() -> wssl::Result<()> {
    // inverse validation losses of four clients
    let betas = [1.0 / 0.31, 1.0 / 0.45, 1.0 / 0.52, 1.0 / 0.90];
    let gammas = normalize_weights(&betas)?;
    println!("gammas: {:?}", gammas.iter().map(|g| format!("{g:.4}")).collect::<Vec<_>>());
    println!("count from the formula: {}", select_count(4, &gammas, None)?.k);
    println!("count with an override of 3: {}", select_count(4, &gammas, Some(3))?.k);

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut hits = [0usize; 4];
    let trials = 50_000;
    for _ in 0..trials {
        let pick = weighted_sample_without_replacement(&[0, 1, 2, 3], &gammas, 1, &mut rng)?;
        hits[pick[0] as usize] += 1;
    }
    for (id, (&h, g)) in hits.iter().zip(&gammas).enumerate() {
        println!("client {id}: drawn {:.4} of the time, gamma {g:.4}", h as f64 / trials as f64);
    }

    for round in 1..4 {
        let out = select_with_betas(round, &betas, Some(2), &mut rng)?;
        println!("round {round}: selected {:?}", out.selected_ids);
    }
    Ok(())
}
