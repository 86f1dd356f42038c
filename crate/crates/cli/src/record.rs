//! Experiment records and their CSV / JSON-lines encodings.

use std::io::{BufRead, Write};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sinkhorn_core::{Precision, SinkhornConfig, SolveReport, TracePoint};

/// One row of experiment output.
///
/// CSV columns appear in field order. Non-finite error or cost values are
/// written as empty fields (`null` in JSON), as is `max_cost` for problems
/// whose cost is not rescaled. `trace` holds the convergence
/// checks as `iteration:error` pairs separated by `;`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub experiment: String,
    pub variant: String,
    pub solver: String,
    pub n: usize,
    pub m: usize,
    pub epsilon: f64,
    pub max_cost: Option<f64>,
    pub seed: u64,
    pub precision: Precision,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub check_interval: usize,
    pub chunk_width: usize,
    pub group_size: usize,
    pub status: String,
    pub iterations: usize,
    pub marginal_checks: usize,
    pub marginal_error: Option<f64>,
    pub transport_cost: Option<f64>,
    pub matrix_bytes: usize,
    pub repetitions: usize,
    pub elapsed_ms: f64,
    pub elapsed_std_ms: f64,
    pub slowdown: Option<f64>,
    pub accuracy: Option<f64>,
    pub trace: String,
}

/// Column names of the CSV encoding, in order.
pub const CSV_HEADER: [&str; 26] = [
    "experiment",
    "variant",
    "solver",
    "n",
    "m",
    "epsilon",
    "max_cost",
    "seed",
    "precision",
    "tolerance",
    "max_iterations",
    "check_interval",
    "chunk_width",
    "group_size",
    "status",
    "iterations",
    "marginal_checks",
    "marginal_error",
    "transport_cost",
    "matrix_bytes",
    "repetitions",
    "elapsed_ms",
    "elapsed_std_ms",
    "slowdown",
    "accuracy",
    "trace",
];

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

pub fn encode_trace(trace: &[TracePoint]) -> String {
    trace
        .iter()
        .map(|p| format!("{}:{:e}", p.iteration, p.error))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn decode_trace(text: &str) -> Result<Vec<TracePoint>> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(';')
        .map(|pair| {
            let (it, err) = pair
                .split_once(':')
                .with_context(|| format!("bad trace entry {pair:?}"))?;
            Ok(TracePoint {
                iteration: it.parse()?,
                error: err.parse()?,
            })
        })
        .collect()
}

impl ExperimentRecord {
    /// Record for a solve of an `n x m` problem; timing fields start from the
    /// report's own elapsed time.
    #[allow(clippy::too_many_arguments)]
    pub fn from_report(
        experiment: &str,
        variant: &str,
        solver: &str,
        (n, m): (usize, usize),
        max_cost: Option<f64>,
        seed: u64,
        config: &SinkhornConfig,
        report: &SolveReport,
    ) -> Self {
        Self {
            experiment: experiment.to_string(),
            variant: variant.to_string(),
            solver: solver.to_string(),
            n,
            m,
            epsilon: config.epsilon,
            max_cost,
            seed,
            precision: config.precision,
            tolerance: config.tolerance,
            max_iterations: config.max_iterations,
            check_interval: config.check_interval,
            chunk_width: config.chunk_width,
            group_size: config.group_size,
            status: report.status.label().to_string(),
            iterations: report.iterations,
            marginal_checks: report.marginal_checks(),
            marginal_error: finite(report.final_marginal_error),
            transport_cost: finite(report.transport_cost),
            matrix_bytes: n * m * config.precision.bytes(),
            repetitions: 1,
            elapsed_ms: report.elapsed.as_secs_f64() * 1e3,
            elapsed_std_ms: 0.0,
            slowdown: None,
            accuracy: None,
            trace: String::new(),
        }
    }

    /// Equality of every field except the timing columns.
    pub fn same_numbers(&self, other: &Self) -> bool {
        let strip = |r: &Self| Self {
            elapsed_ms: 0.0,
            elapsed_std_ms: 0.0,
            slowdown: None,
            ..r.clone()
        };
        strip(self) == strip(other)
    }
}

/// Destination for records: CSV with a header row, or one JSON object per line.
#[allow(clippy::large_enum_variant)]
pub enum RecordSink<'a> {
    Csv(csv::Writer<Box<dyn Write + 'a>>),
    Json(Box<dyn Write + 'a>),
}

impl<'a> RecordSink<'a> {
    pub fn new(out: Box<dyn Write + 'a>, json: bool) -> Self {
        if json {
            RecordSink::Json(out)
        } else {
            RecordSink::Csv(csv::Writer::from_writer(out))
        }
    }

    pub fn write(&mut self, record: &ExperimentRecord) -> Result<()> {
        match self {
            RecordSink::Csv(w) => w.serialize(record)?,
            RecordSink::Json(w) => {
                serde_json::to_writer(&mut *w, record)?;
                w.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        match self {
            RecordSink::Csv(mut w) => w.flush()?,
            RecordSink::Json(mut w) => w.flush()?,
        }
        Ok(())
    }
}

/// Parses output written by [`RecordSink`].
pub fn read_records<R: BufRead>(reader: R, json: bool) -> Result<Vec<ExperimentRecord>> {
    if json {
        reader
            .lines()
            .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
            .map(|l| Ok(serde_json::from_str(&l?)?))
            .collect()
    } else {
        csv::Reader::from_reader(reader)
            .deserialize()
            .map(|r| Ok(r?))
            .collect()
    }
}
