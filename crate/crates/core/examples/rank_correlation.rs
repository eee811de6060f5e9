//! Kendall tau-b and tau-c on a small example with ties.
//!
//!     cargo run --example rank_correlation

use polos::eval::{kendall_tau_b, kendall_tau_c, pair_counts, ScoredPair};

fn main() -> polos::Result<()> {
    let metric = [0.1, 0.4, 0.4, 0.7, 0.9, 0.2];
    let human = [0.0, 0.5, 0.25, 0.75, 0.75, 0.25];
    let pairs: Vec<ScoredPair> = metric
        .iter()
        .zip(&human)
        .map(|(&m, &h)| ScoredPair::new(m, h))
        .collect();

    let c = pair_counts(&pairs)?;
    println!("{c:?}");
    println!("tau-b = {:.4}", kendall_tau_b(&pairs)?);
    println!("tau-c = {:.4}", kendall_tau_c(&pairs)?);

    // A constant metric has no defined correlation.
    let flat: Vec<ScoredPair> = human.iter().map(|&h| ScoredPair::new(0.5, h)).collect();
    println!("constant metric: {}", kendall_tau_b(&flat).unwrap_err());
    Ok(())
}
