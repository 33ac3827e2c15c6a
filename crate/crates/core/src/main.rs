use clap::Parser;
use torus_spde::cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    std::process::exit(execute(&cli.command));
}
