use std::process::ExitCode;

use clap::Parser;
use servo_cli::Cli;

#[tokio::main]
async fn main() -> ExitCode {
    servo_cli::main_with(Cli::parse()).await
}
