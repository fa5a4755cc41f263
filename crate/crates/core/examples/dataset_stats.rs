//! Print the statistics table for a dataset directory (train.txt, valid.txt,
//! test.txt with tab-separated integer quadruples), or for the built-in
//! synthetic benchmark when no directory is given.
//!
//! Run with: cargo run --example dataset_stats [-- /path/to/dataset]

use std::path::PathBuf;

use tkgr::dataset::{load_bundle, stats};
use tkgr::synthetic::periodic_bundle;

fn main() {
    let bundle = match std::env::args().nth(1) {
        Some(dir) => load_bundle(&PathBuf::from(dir), None).expect("failed to load dataset"),
        None => periodic_bundle(),
    };
    let s = stats(&bundle);
    println!("entities\t{}", s.num_entities);
    println!("relations\t{}", s.num_relations);
    println!("train_facts\t{}", s.train_facts);
    println!("valid_facts\t{}", s.valid_facts);
    println!("test_facts\t{}", s.test_facts);
    println!("timestamps\t{}", s.num_timestamps);
    println!("time_unit\t{}", s.time_unit);
}
