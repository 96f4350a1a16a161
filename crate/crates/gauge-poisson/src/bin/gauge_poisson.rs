use clap::Parser;
use gauge_poisson::cli;

fn main() {
    let args = cli::Cli::parse();
    std::process::exit(cli::run(args));
}
