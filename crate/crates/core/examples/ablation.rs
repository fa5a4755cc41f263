//! Component ablation on the periodic benchmark: the full model against the
//! no-time-vector and no-causal-enhancement variants, one table at the end.
//!
//! Run with: cargo run --release --example ablation

use tkgr::config::TrainConfig;
use tkgr::experiments::{format_table, run_ablation};
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
    let rows = run_ablation(&bundle, &cfg, &mut log).expect("ablation failed");
    println!("\n{}", format_table(&rows));
}
