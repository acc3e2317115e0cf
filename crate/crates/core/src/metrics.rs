//! Per-epoch metric rows and their CSV encoding.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column order of every metrics CSV.
pub const CSV_COLUMNS: [&str; 12] = [
    "run_id",
    "epoch",
    "step",
    "wall_seconds",
    "loss_total",
    "loss_rec",
    "loss_con",
    "momentum_m",
    "swd_to_prior",
    "swd_samples_vs_test",
    "entropy_est",
    "svd_dispersion",
];

/// One row of a training trace. Metrics that were not computed are `None` and
/// serialize as empty CSV fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub run_id: String,
    pub epoch: u64,
    /// Optimizer steps taken so far.
    pub step: u64,
    /// Left empty in traces so reruns are byte-identical; timings go to the run sidecar.
    pub wall_seconds: Option<f64>,
    pub loss_total: f64,
    /// Absent when the objective has no reconstruction term.
    pub loss_rec: Option<f64>,
    /// Unweighted matching term (contrastive loss or baseline divergence).
    pub loss_con: f64,
    /// Momentum used by the last key-encoder update; absent for baselines.
    pub momentum_m: Option<f64>,
    pub swd_to_prior: Option<f64>,
    pub swd_samples_vs_test: Option<f64>,
    pub entropy_est: Option<f64>,
    pub svd_dispersion: Option<f64>,
}

fn csv_err(e: csv::Error) -> Error {
    let offset = e.position().map(|p| p.byte()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::format(offset, format!("{other:?}")),
    }
}

pub fn write_csv<W: Write>(out: W, records: &[MetricRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(records: &[MetricRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(&mut buf, records)?;
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}

/// Parses a metrics CSV, checking the header against [`CSV_COLUMNS`].
pub fn read_csv<R: Read>(input: R) -> Result<Vec<MetricRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(Error::format(0, format!("unexpected metrics header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}
