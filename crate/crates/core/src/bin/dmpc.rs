use std::process::ExitCode;

use clap::Parser;
use drifting_mpc::cli::{run, Cli};
use drifting_mpc::error::ErrorCategory;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.category() {
                ErrorCategory::Config => 2,
                ErrorCategory::Io => 3,
                ErrorCategory::Numeric => 4,
                ErrorCategory::Usage => 1,
            })
        }
    }
}
