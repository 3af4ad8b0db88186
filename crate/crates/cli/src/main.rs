use clap::Parser;
use crossdiff_cli::{execute, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let inv = Cli::parse().invocation();
    std::process::exit(execute(&inv));
}
