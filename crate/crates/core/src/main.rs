use clap::Parser;

use tkgr::cli::{self, Cli};

fn main() {
    let cli = Cli::parse();
    let mut out = |line: &str| println!("{line}");
    if let Err(err) = cli::run(cli, &mut out) {
        eprintln!("error: {err}");
        std::process::exit(cli::exit_code_for(&err));
    }
}
