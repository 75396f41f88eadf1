use clap::Parser;

use plate2d::cli::{self, Cli};

fn main() {
    let args = Cli::parse();
    if let Err(err) = cli::run(args) {
        eprintln!("error: {err}");
        std::process::exit(1);
    }
}
