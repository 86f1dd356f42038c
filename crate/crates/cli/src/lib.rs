//! Experiment harness for the `sinkhorn` binary.

pub mod args;
pub mod commands;
pub mod record;

use std::fs::File;
use std::io::{self, BufWriter, Write};

use anyhow::{Context, Result};
use sinkhorn_core::Error as CoreError;

use crate::args::{Cli, Command};
use crate::commands::SolverFailure;
use crate::record::RecordSink;

/// Process exit status for an error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<SolverFailure>().is_some() {
        return 1;
    }
    match err.downcast_ref::<CoreError>() {
        Some(
            CoreError::InvalidConfig(_)
            | CoreError::InvalidArgument(_)
            | CoreError::EmptyInput
            | CoreError::DimensionMismatch { .. },
        ) => 2,
        _ => 1,
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let global = &cli.global;
    if let Some(workers) = global.workers {
        // only the first call in a process can size the global pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
    let outputs = match &cli.command {
        Command::Bench(a) => commands::bench(global, a)?,
        Command::Scale(a) => commands::scale(global, a)?,
        Command::Ablate(a) => commands::ablate(global, a)?,
        Command::Stability(a) => commands::stability(global, a)?,
        Command::Convergence(a) => commands::convergence(global, a)?,
        Command::ColorTransfer(a) => commands::color_transfer_cmd(global, a)?,
        Command::Pointcloud(a) => commands::pointcloud(global, a)?,
    };

    let out: Box<dyn Write> = match &global.out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    let mut sink = RecordSink::new(out, global.json);
    for record in outputs.iter().flat_map(|o| &o.records) {
        sink.write(record)?;
    }
    sink.finish()?;

    match outputs.into_iter().find_map(|o| o.failed) {
        Some(what) => Err(SolverFailure(what).into()),
        None => Ok(()),
    }
}
