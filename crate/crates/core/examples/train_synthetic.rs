//! Train the full model on the built-in periodic benchmark and report
//! time-aware filtered metrics on the held-out future timestamps.
//!
//! Run with: cargo run --release --example train_synthetic

use tkgr::config::TrainConfig;
use tkgr::synthetic::periodic_bundle;
use tkgr::train::run_training;

fn main() {
    let bundle = periodic_bundle();
    let cfg = TrainConfig {
        dim: 32,
        layers: 2,
        history_len: 5,
        channels: 8,
        epochs: 30,
        patience: 30,
        lr: 0.01,
        seed: 1,
        ..Default::default()
    };
    let start = std::time::Instant::now();
    let mut log = |line: &str| println!("{line}");
    let out = run_training(&bundle, &cfg, &mut log).expect("training failed");
    let test = out.test.expect("test split is non-empty");
    println!("final {}", test.log_line("test"));
    println!("elapsed {:.1?}", start.elapsed());
}
