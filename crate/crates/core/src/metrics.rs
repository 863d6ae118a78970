//! `metrics.csv`: one row per outer iteration with a fixed header. Floats are
//! written with 17 significant digits so a read-back is bit-exact; absent
//! values are `NaN`.

use std::io::{Read, Write};

use crate::bilevel::RunRecord;
use crate::error::{Error, Result};

pub const METRICS_HEADER: [&str; 7] = [
    "t",
    "upper_value_est",
    "upper_value_exact",
    "j_true_exact",
    "pref_accuracy",
    "grad_norm_dt",
    "bellman_residual",
];

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("metrics csv: {e}"))
}

/// `{:.16e}` for finite values, `NaN`/`inf`/`-inf` otherwise.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> MetricsWriter<W> {
    /// Wraps `out` and writes the header row.
    pub fn new(out: W) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        inner.write_record(METRICS_HEADER).map_err(csv_err)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, r: &RunRecord) -> Result<()> {
        let fields = [
            r.t.to_string(),
            format_float(r.upper_value_est),
            format_float(r.upper_value_exact),
            format_float(r.j_true_exact),
            format_float(r.pref_accuracy),
            format_float(r.grad_norm_dt),
            format_float(r.bellman_residual),
        ];
        self.inner.write_record(&fields).map_err(csv_err)
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::Format(format!("metrics csv: {e}")))
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner.into_inner().map_err(|e| Error::Format(format!("metrics csv: {}", e.error())))
    }
}

/// Parses a file written by [`MetricsWriter`]; the header must match exactly.
pub fn read_metrics<R: Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers().map_err(csv_err)?;
    if header.iter().ne(METRICS_HEADER) {
        return Err(Error::Format(format!("unexpected metrics header: {header:?}")));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let float = |i: usize| -> Result<f64> {
            row[i].parse().map_err(|_| Error::Format(format!("bad {} value {:?}", METRICS_HEADER[i], &row[i])))
        };
        out.push(RunRecord {
            t: row[0].parse().map_err(|_| Error::Format(format!("bad t value {:?}", &row[0])))?,
            upper_value_est: float(1)?,
            upper_value_exact: float(2)?,
            j_true_exact: float(3)?,
            pref_accuracy: float(4)?,
            grad_norm_dt: float(5)?,
            bellman_residual: float(6)?,
        });
    }
    Ok(out)
}
