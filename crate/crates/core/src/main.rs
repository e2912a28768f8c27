use std::process::ExitCode;

use clap::Parser;
use inertial_deriv::cli::{main_with, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    main_with(Cli::parse())
}
