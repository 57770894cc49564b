//! Trains the same blob task with split learning and with a single
//! centralized model, then prints per-round accuracy for both.
//!
//! ```text
//! cargo run --release --example wssl_vs_centralized
//! ```

use wssl::experiment::{run_centralized, run_wssl, ExperimentConfig};

fn main() -> wssl::Result<()> {
    let cfg = ExperimentConfig {
        seed: 7,
        clients_per_round: Some(4),
        ..ExperimentConfig::default()
    };
    let split = run_wssl(&cfg)?;
    let central = run_centralized(&cfg)?;
    println!("round  wssl_acc  central_acc  selected");
    for (w, c) in split.iter().zip(&central) {
        println!(
            "{:>5}  {:>8.4}  {:>11.4}  {:?}",
            w.round_index, w.val_accuracy, c.val_accuracy, w.selected_ids
        );
    }
    Ok(())
}
