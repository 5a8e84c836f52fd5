use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::spec::{ExperimentSpec, Scheme};
use crate::error::Result;

/// One solver run: a scheme at one SNR on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub scheme: Scheme,
    pub users: usize,
    pub delta: f64,
    pub snr_db: f64,
    pub trial: usize,
    /// Worst-case max-min rate (bits) or transmit power, by mode.
    pub value: f64,
    pub status: String,
    pub certified: bool,
    pub outer_iterations: usize,
    pub ao_iterations: usize,
    pub max_violation: f64,
    /// Wall time, kept out of `records.csv`.
    pub seconds: f64,
}

impl TrialRecord {
    fn key(&self) -> (Scheme, usize, u64, u64, usize) {
        (self.scheme, self.users, ordered(self.delta), ordered(self.snr_db), self.trial)
    }
}

fn ordered(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

pub fn sort_records(records: &mut [TrialRecord]) {
    records.sort_by_key(TrialRecord::key);
}

fn fmt(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.9}")
    } else {
        "nan".into()
    }
}

/// Column order of `records.csv`.
pub const RECORD_COLUMNS: [&str; 11] = [
    "scheme",
    "users",
    "delta",
    "snr_db",
    "trial",
    "value",
    "status",
    "certified",
    "outer_iterations",
    "ao_iterations",
    "max_violation",
];

pub fn write_records<W: Write>(out: W, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        w.write_record([
            r.scheme.label().to_string(),
            r.users.to_string(),
            fmt(r.delta),
            fmt(r.snr_db),
            r.trial.to_string(),
            fmt(r.value),
            r.status.clone(),
            r.certified.to_string(),
            r.outer_iterations.to_string(),
            r.ao_iterations.to_string(),
            fmt(r.max_violation),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timings<W: Write>(out: W, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scheme", "users", "delta", "snr_db", "trial", "seconds"])?;
    for r in records {
        w.write_record([
            r.scheme.label().to_string(),
            r.users.to_string(),
            fmt(r.delta),
            fmt(r.snr_db),
            r.trial.to_string(),
            format!("{:.6}", r.seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Mean over certified rows of one (scheme, users, delta, snr) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scheme: Scheme,
    pub users: usize,
    pub delta: f64,
    pub snr_db: f64,
    pub mean: Option<f64>,
    pub certified: usize,
    pub excluded: usize,
    pub mean_seconds: f64,
}

pub fn aggregate(records: &[TrialRecord]) -> Vec<Aggregate> {
    let mut cells: BTreeMap<(Scheme, usize, u64, u64), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        cells
            .entry((r.scheme, r.users, ordered(r.delta), ordered(r.snr_db)))
            .or_default()
            .push(r);
    }
    cells
        .into_values()
        .map(|rows| {
            let good: Vec<f64> = rows.iter().filter(|r| r.certified && r.value.is_finite()).map(|r| r.value).collect();
            let first = rows[0];
            Aggregate {
                scheme: first.scheme,
                users: first.users,
                delta: first.delta,
                snr_db: first.snr_db,
                mean: (!good.is_empty()).then(|| good.iter().sum::<f64>() / good.len() as f64),
                certified: good.len(),
                excluded: rows.len() - good.len(),
                mean_seconds: rows.iter().map(|r| r.seconds).sum::<f64>() / rows.len() as f64,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a, S: Serialize> {
    pub version: &'static str,
    pub spec: &'a ExperimentSpec,
    pub columns: &'static [&'static str],
    pub aggregates: Vec<Aggregate>,
    pub summary: S,
}

/// Writes `records.csv`, `timings.csv` and `manifest.json` into `dir`.
pub fn write_outputs<S: Serialize>(dir: &Path, spec: &ExperimentSpec, records: &[TrialRecord], summary: S) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_records(std::fs::File::create(dir.join("records.csv"))?, records)?;
    write_timings(std::fs::File::create(dir.join("timings.csv"))?, records)?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        spec,
        columns: &RECORD_COLUMNS,
        aggregates: aggregate(records),
        summary,
    };
    let file = std::fs::File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(file, &manifest)?;
    Ok(())
}
