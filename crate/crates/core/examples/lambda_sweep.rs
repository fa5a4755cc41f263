//! Sweep the mutual-information loss weight over a small grid on the periodic
//! benchmark, holding everything else fixed.
//!
//! Run with: cargo run --release --example lambda_sweep

use tkgr::config::TrainConfig;
use tkgr::experiments::{format_table, sweep_lambda};
use tkgr::synthetic::periodic_bundle;

fn main() {
    let bundle = periodic_bundle();
    let cfg = TrainConfig {
        dim: 32,
        layers: 2,
        history_len: 5,
        channels: 8,
        epochs: 10,
        patience: 10,
        lr: 0.01,
        seed: 1,
        ..Default::default()
    };
    let mut log = |line: &str| println!("{line}");
    let rows = sweep_lambda(&bundle, &cfg, "lambda2", &[0.0, 0.1, 0.5, 1.0], &mut log)
        .expect("sweep failed");
    println!("\n{}", format_table(&rows));
}
