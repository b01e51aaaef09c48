//! Command-line experiments. Each command returns an [`ExperimentResult`]
//! that the binary writes as CSV or JSON.

pub mod commands;
pub mod output;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::time::Instant;

use thiserror::Error;

pub use commands::{Cli, Command, Format};
pub use output::{Cell, ExperimentResult};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] thetaexp::Error),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for bad input, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        use thetaexp::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(
                E::InvalidField(_)
                | E::FieldMismatch { .. }
                | E::OutOfDomain { .. }
                | E::DigitBelowFloor { .. }
                | E::DivisionByZero
                | E::BudgetExceeded { .. }
                | E::DegenerateEvent(_)
                | E::InvalidConfig(_),
            ) => 2,
            CliError::Core(_) | CliError::Io(_) | CliError::Csv(_) => 1,
        }
    }
}

/// Runs the command and times it.
pub fn execute(cmd: &Command) -> Result<ExperimentResult, CliError> {
    let start = Instant::now();
    let mut r = cmd.execute()?;
    r.duration_seconds = start.elapsed().as_secs_f64();
    Ok(r)
}

pub fn write_result(r: &ExperimentResult, cmd: &Command) -> Result<(), CliError> {
    let out = cmd.output();
    let sink: Box<dyn Write> = match &out.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    match out.format {
        Format::Csv => r.write_csv(sink)?,
        Format::Json => r.write_json(sink)?,
    }
    Ok(())
}
