//! Delimited-text trip files in the NYC TLC yellow-taxi layout.

use std::io::{Read, Write};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use urbanflow_core::trips::{CleanReport, TripRecord};

use crate::tz::Zone;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing column `{0}` in header")]
    MissingColumn(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A row that could not be turned into a valid record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseError {
    /// 1-based line in the source, header included.
    pub line: u64,
    pub message: String,
}

/// Header names for each trip field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub pickup_time: String,
    pub dropoff_time: String,
    pub pickup_lon: String,
    pub pickup_lat: String,
    pub dropoff_lon: String,
    pub dropoff_lat: String,
    pub trip_distance: String,
    pub passenger_count: String,
    pub fare_amount: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            pickup_time: "tpep_pickup_datetime".into(),
            dropoff_time: "tpep_dropoff_datetime".into(),
            pickup_lon: "pickup_longitude".into(),
            pickup_lat: "pickup_latitude".into(),
            dropoff_lon: "dropoff_longitude".into(),
            dropoff_lat: "dropoff_latitude".into(),
            trip_distance: "trip_distance".into(),
            passenger_count: "passenger_count".into(),
            fare_amount: "fare_amount".into(),
        }
    }
}

impl ColumnMap {
    fn names(&self) -> [&str; 9] {
        [
            &self.pickup_time,
            &self.dropoff_time,
            &self.pickup_lon,
            &self.pickup_lat,
            &self.dropoff_lon,
            &self.dropoff_lat,
            &self.trip_distance,
            &self.passenger_count,
            &self.fare_amount,
        ]
    }
}

#[derive(Debug, Default)]
pub struct ParseOutput {
    pub records: Vec<TripRecord>,
    pub errors: Vec<ParseError>,
    /// Data rows seen (header excluded).
    pub rows: usize,
}

const TIME_FORMATS: [&str; 3] = ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%m/%d/%Y %I:%M:%S %p"];

fn parse_time(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    TIME_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%.f").ok())
}

fn parse_num(field: &str, s: &str) -> Result<f64, String> {
    let t = s.trim();
    if t.is_empty() {
        return Err(format!("{field}: missing value"));
    }
    t.parse::<f64>().map_err(|_| format!("{field}: not a number: `{t}`"))
}

fn parse_row(row: &csv::StringRecord, idx: &[usize; 9], zone: &Zone) -> Result<TripRecord, String> {
    let get = |i: usize| row.get(idx[i]).unwrap_or("");
    let pickup = parse_time(get(0)).ok_or_else(|| format!("pickup time: cannot parse `{}`", get(0)))?;
    let dropoff = parse_time(get(1)).ok_or_else(|| format!("dropoff time: cannot parse `{}`", get(1)))?;
    let pc = parse_num("passenger_count", get(7))?;
    if pc.fract() != 0.0 || !(0.0..=u32::MAX as f64).contains(&pc) {
        return Err(format!("passenger_count: not a count: {pc}"));
    }
    let r = TripRecord {
        pickup_time: zone.local_to_utc(pickup),
        dropoff_time: zone.local_to_utc(dropoff),
        pickup_lon: parse_num("pickup_longitude", get(2))?,
        pickup_lat: parse_num("pickup_latitude", get(3))?,
        dropoff_lon: parse_num("dropoff_longitude", get(4))?,
        dropoff_lat: parse_num("dropoff_latitude", get(5))?,
        trip_distance: parse_num("trip_distance", get(6))?,
        passenger_count: pc as u32,
        fare_amount: parse_num("fare_amount", get(8))?,
    };
    r.validate().map_err(|e| e.to_string())?;
    Ok(r)
}

/// Reads every data row. Bad rows become [`ParseError`]s; only a header
/// lacking a mapped column is fatal. Local times are read in `zone`.
pub fn parse_trips<R: Read>(source: R, schema: &ColumnMap, zone: &Zone) -> Result<ParseOutput, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    let header = rdr.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name.trim()))
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let mut idx = [0usize; 9];
    for (slot, name) in idx.iter_mut().zip(schema.names()) {
        *slot = find(name)?;
    }

    let mut out = ParseOutput::default();
    let mut row = csv::StringRecord::new();
    loop {
        let line = rdr.position().line();
        match rdr.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                // malformed quoting or encoding: report the row and keep going
                out.rows += 1;
                out.errors.push(ParseError {
                    line: e.position().map_or(line, |p| p.line()),
                    message: e.to_string(),
                });
                continue;
            }
        }
        if row.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        out.rows += 1;
        let line = row.position().map_or(line, |p| p.line());
        match parse_row(&row, &idx, zone) {
            Ok(r) => out.records.push(r),
            Err(message) => out.errors.push(ParseError { line, message }),
        }
    }
    Ok(out)
}

/// Writes records in the default TLC layout with local times in `zone`.
pub fn write_trips<W: Write>(sink: W, records: &[TripRecord], zone: &Zone) -> Result<(), IngestError> {
    let cols = ColumnMap::default();
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        cols.pickup_time.as_str(),
        &cols.dropoff_time,
        &cols.passenger_count,
        &cols.trip_distance,
        &cols.pickup_lon,
        &cols.pickup_lat,
        &cols.dropoff_lon,
        &cols.dropoff_lat,
        &cols.fare_amount,
    ])?;
    let fmt = |t: i64| zone.utc_to_local(t).format("%Y-%m-%d %H:%M:%S").to_string();
    for r in records {
        w.write_record([
            fmt(r.pickup_time),
            fmt(r.dropoff_time),
            r.passenger_count.to_string(),
            r.trip_distance.to_string(),
            r.pickup_lon.to_string(),
            r.pickup_lat.to_string(),
            r.dropoff_lon.to_string(),
            r.dropoff_lat.to_string(),
            r.fare_amount.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Clean report for a whole file: rows that failed to parse are charged to a
/// `parse_error` rule so that `rows_in` equals the number of data rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    #[serde(flatten)]
    pub clean: CleanReport,
    /// First few parse errors, for diagnosis.
    pub parse_error_samples: Vec<ParseError>,
}

pub const PARSE_ERROR_RULE: &str = "parse_error";
const ERROR_SAMPLES: usize = 20;

pub fn ingest_report(parsed: &ParseOutput, clean: CleanReport) -> IngestReport {
    let mut c = clean;
    c.rows_in += parsed.errors.len();
    c.dropped_by_rule.insert(PARSE_ERROR_RULE.to_string(), parsed.errors.len());
    IngestReport {
        clean: c,
        parse_error_samples: parsed.errors.iter().take(ERROR_SAMPLES).cloned().collect(),
    }
}
