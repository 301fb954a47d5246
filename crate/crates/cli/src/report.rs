use std::io::{self, Write};

use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "schema_version,stage,n,b,nb,workers,seconds,gflops,residual,seed";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Dbr,
    Chase,
    Eig,
    Total,
    Syr2k,
    Direct,
}

impl Stage {
    fn name(self) -> &'static str {
        match self {
            Stage::Dbr => "dbr",
            Stage::Chase => "chase",
            Stage::Eig => "eig",
            Stage::Total => "total",
            Stage::Syr2k => "syr2k",
            Stage::Direct => "direct",
        }
    }
}

/// One timed stage. `gflops` and `residual` are NaN when not applicable and
/// serialize to `null` in JSON.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub stage: Stage,
    pub n: usize,
    pub b: usize,
    pub nb: usize,
    pub workers: usize,
    pub seconds: f64,
    pub gflops: f64,
    pub residual: f64,
    pub seed: u64,
}

/// Flop models, per stage.
pub fn dbr_flops(n: usize) -> f64 {
    4.0 / 3.0 * (n as f64).powi(3)
}

pub fn rate(flops: f64, seconds: f64) -> f64 {
    if seconds > 0.0 && flops > 0.0 {
        flops / seconds / 1e9
    } else {
        f64::NAN
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

pub fn csv_row(r: &RunReport) -> String {
    format!(
        "{},{},{},{},{},{},{:.6},{:.3},{:e},{}",
        r.schema_version,
        r.stage.name(),
        r.n,
        r.b,
        r.nb,
        r.workers,
        r.seconds,
        r.gflops,
        r.residual,
        r.seed
    )
}

pub fn emit(reports: &[RunReport], format: Format, mut out: impl Write) -> io::Result<()> {
    match format {
        Format::Csv => {
            writeln!(out, "{CSV_HEADER}")?;
            for r in reports {
                writeln!(out, "{}", csv_row(r))?;
            }
        }
        Format::Json => {
            for r in reports {
                serde_json::to_writer(&mut out, r)?;
                writeln!(out)?;
            }
        }
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunReport {
        RunReport {
            schema_version: SCHEMA_VERSION,
            stage: Stage::Chase,
            n: 64,
            b: 4,
            nb: 16,
            workers: 2,
            seconds: 0.5,
            gflops: 1.25,
            residual: f64::NAN,
            seed: 9,
        }
    }

    #[test]
    fn csv_columns_line_up() {
        let row = csv_row(&sample());
        assert_eq!(row, "1,chase,64,4,16,2,0.500000,1.250,NaN,9");
        assert_eq!(row.split(',').count(), CSV_HEADER.split(',').count());
    }

    #[test]
    fn json_uses_null_for_nan() {
        let mut buf = Vec::new();
        emit(&[sample()], Format::Json, &mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["stage"], "chase");
        assert!(v["residual"].is_null());
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        let mut expected: Vec<_> = CSV_HEADER.split(',').map(String::from).collect();
        expected.sort();
        assert_eq!(keys, expected);
    }

    #[test]
    fn rate_handles_zero_time() {
        assert!(rate(1e9, 0.0).is_nan());
        assert_eq!(rate(2e9, 1.0), 2.0);
    }
}
