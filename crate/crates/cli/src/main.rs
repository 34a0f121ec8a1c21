use clap::Parser;
use lampo_cli::cli::{run, Cli};
use lampo_cli::exit::exit_code;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(err) = run(Cli::parse()) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}
