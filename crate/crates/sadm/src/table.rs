//! Schedule tables as CSV or JSON.
//!
//! CSV columns are `t,k,a,b_sq,signal_coef,noise_std`, each float written in
//! scientific notation with 17 significant digits so that values round-trip
//! exactly. The JSON form adds the log-domain signal coefficient, which stays
//! meaningful where the linear one underflows.

use std::io::Write;

use sadm_core::schedule::{NoiseSchedule, ScheduleRow, SweepEntry};
use serde::{Deserialize, Serialize};

use crate::config::ScheduleSettings;
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 6] = ["t", "k", "a", "b_sq", "signal_coef", "noise_std"];

fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(schedule: &NoiseSchedule, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in schedule.rows() {
        w.write_record([
            r.t.to_string(),
            sci(r.k),
            sci(r.a),
            sci(r.b_sq),
            sci(r.signal_coef),
            sci(r.noise_std),
        ])?;
    }
    w.flush().map_err(Error::io("<csv>"))?;
    Ok(())
}

pub fn csv_string(schedule: &NoiseSchedule) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(schedule, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is ASCII"))
}

/// One parsed CSV row; `log_signal_coef` is not part of the CSV form.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct CsvRow {
    pub t: usize,
    pub k: f64,
    pub a: f64,
    pub b_sq: f64,
    pub signal_coef: f64,
    pub noise_std: f64,
}

pub fn read_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(Error::Usage(format!("unexpected CSV header {header:?}")));
    }
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JsonRow {
    pub t: usize,
    pub k: f64,
    pub a: f64,
    pub b_sq: f64,
    pub signal_coef: f64,
    pub noise_std: f64,
    pub log_signal_coef: f64,
}

impl From<ScheduleRow> for JsonRow {
    fn from(r: ScheduleRow) -> Self {
        Self {
            t: r.t,
            k: r.k,
            a: r.a,
            b_sq: r.b_sq,
            signal_coef: r.signal_coef,
            noise_std: r.noise_std,
            log_signal_coef: r.log_signal_coef,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonTable {
    pub schedule_config: ScheduleSettings,
    /// First step at which the recurrence had no solution; the table stops
    /// one step earlier.
    pub breakdown: Option<usize>,
    pub rows: Vec<JsonRow>,
}

impl JsonTable {
    pub fn new(schedule: &NoiseSchedule, breakdown: Option<usize>) -> Self {
        Self {
            schedule_config: (*schedule.config()).into(),
            breakdown,
            rows: schedule.rows().map(JsonRow::from).collect(),
        }
    }
}

impl From<&SweepEntry> for JsonTable {
    fn from(e: &SweepEntry) -> Self {
        Self::new(&e.schedule, e.breakdown)
    }
}

pub fn json_string(table: &JsonTable) -> Result<String> {
    Ok(serde_json::to_string_pretty(table)? + "\n")
}
