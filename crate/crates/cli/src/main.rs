use std::process::ExitCode;

use clap::Parser;
use vslam_cli::config::Cli;

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors, matching configuration errors.
    let cli = Cli::parse();
    match vslam_cli::run(&cli) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
