use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    argus_service::cli::run(argus_service::cli::Cli::parse())
}
