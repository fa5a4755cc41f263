//! Robustness to corrupted training facts: train the full model and the
//! causal-enhancement ablation at several noise rates. Evaluation always uses
//! the clean test split, so the table shows how gracefully each variant
//! degrades.
//!
//! Run with: cargo run --release --example noise_curve

use tkgr::config::TrainConfig;
use tkgr::experiments::{format_table, run_noise_suite};
use tkgr::synthetic::periodic_bundle;

fn main() {
    let bundle = periodic_bundle();
    let cfg = TrainConfig {
        dim: 32,
        layers: 2,
        history_len: 5,
        channels: 8,
        epochs: 20,
        patience: 20,
        lr: 0.01,
        seed: 1,
        ..Default::default()
    };
    let mut log = |line: &str| println!("{line}");
    let rows =
        run_noise_suite(&bundle, &cfg, &[0.0, 0.1, 0.2], &mut log).expect("noise suite failed");
    println!("\n{}", format_table(&rows));
}
