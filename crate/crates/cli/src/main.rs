use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = gatekeep_cli::Cli::parse();
    let stdin = std::io::stdin();
    gatekeep_cli::run(cli, &mut std::io::stdout(), &mut std::io::stderr(), &mut stdin.lock())
}
