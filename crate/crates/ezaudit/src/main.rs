use std::io::{stdin, stdout};
use std::process::ExitCode;

use clap::Parser;
use ezaudit::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = stdout().lock();
    match run(cli, stdin().lock(), &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}
