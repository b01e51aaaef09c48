use std::process::ExitCode;

use clap::Parser;
use thetaexp_cli::{execute, write_result, Cli};

// Thread count follows RAYON_NUM_THREADS; results do not depend on it.
fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = execute(&cli.command).and_then(|r| write_result(&r, &cli.command).map(|_| r));
    match result {
        Ok(r) => {
            eprint!("{}", r.report());
            ExitCode::from(if r.passed { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
