//! CSV exchange format: `customer_id,timestamp_iso8601,kwh,type`.
//!
//! Rows with a missing or non-numeric reading and rows with a negative
//! reading are dropped and counted; the corresponding hour stays empty.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use super::CustomerRecord;
use crate::customer::CustomerType;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const HEADER: [&str; 4] = ["customer_id", "timestamp_iso8601", "kwh", "type"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub dropped_missing: usize,
    pub dropped_negative: usize,
    pub duplicates: usize,
    /// Hours absent from each customer's grid after cleaning.
    pub gaps: Vec<(String, usize)>,
}

impl IngestReport {
    pub fn dropped(&self) -> usize {
        self.dropped_missing + self.dropped_negative
    }
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
        .ok()
        .or_else(|| DateTime::parse_from_rfc3339(s).ok().map(|d| d.naive_utc()))
}

pub fn ingest_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<(Vec<CustomerRecord<T>>, IngestReport)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file)
}

/// Parses the CSV format from any reader. Customers keep their order of
/// first appearance.
pub fn read_csv<T: Scalar, R: Read>(reader: R) -> Result<(Vec<CustomerRecord<T>>, IngestReport)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols != HEADER {
        return Err(Error::Schema(format!(
            "expected header `{}`, found `{}`",
            HEADER.join(","),
            cols.join(",")
        )));
    }

    struct Acc<T> {
        kind: CustomerType,
        readings: Vec<(NaiveDateTime, T)>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, Acc<T>> = HashMap::new();
    let mut report = IngestReport::default();

    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        report.rows += 1;
        if row.len() != 4 {
            return Err(Error::Schema(format!("row {}: expected 4 fields", line + 2)));
        }
        let id = row[0].to_string();
        let ts = parse_timestamp(&row[1])
            .ok_or_else(|| Error::Schema(format!("row {}: bad timestamp `{}`", line + 2, &row[1])))?;
        if ts.minute() != 0 || ts.second() != 0 {
            return Err(Error::Schema(format!("row {}: timestamp not on the hour", line + 2)));
        }
        let kind: CustomerType = row[3].parse()?;
        let acc = by_id.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Acc {
                kind,
                readings: Vec::new(),
            }
        });
        if acc.kind != kind {
            return Err(Error::Schema(format!("customer {id} changes type at row {}", line + 2)));
        }
        let value = match row[2].parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ => {
                report.dropped_missing += 1;
                continue;
            }
        };
        if value < 0.0 {
            log::warn!("row {}: negative reading {value} for {id} rejected", line + 2);
            report.dropped_negative += 1;
            continue;
        }
        acc.readings.push((ts, T::lit(value)));
    }
    if report.rows == 0 {
        return Err(Error::Schema("file has no data rows".into()));
    }

    let mut records = Vec::with_capacity(order.len());
    for id in order {
        let mut acc = by_id.remove(&id).expect("recorded id");
        acc.readings.sort_by_key(|r| r.0);
        let Some(&(start, _)) = acc.readings.first() else {
            report.gaps.push((id.clone(), 0));
            continue;
        };
        let end = acc.readings.last().expect("nonempty").0;
        let len = ((end - start).num_hours() + 1) as usize;
        let mut hourly = vec![None; len];
        for (ts, v) in acc.readings {
            let h = (ts - start).num_hours() as usize;
            if hourly[h].is_some() {
                report.duplicates += 1;
            }
            hourly[h] = Some(v);
        }
        let missing = hourly.iter().filter(|v| v.is_none()).count();
        if missing > 0 {
            report.gaps.push((id.clone(), missing));
        }
        records.push(CustomerRecord {
            id,
            kind: acc.kind,
            start,
            hourly_kwh: hourly,
            true_class: None,
        });
    }
    Ok((records, report))
}

/// Writes records in the ingest format; empty hours become empty fields.
pub fn write_csv<T: Scalar, W: Write>(records: &[CustomerRecord<T>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for r in records {
        for (h, v) in r.hourly_kwh.iter().enumerate() {
            let ts = (r.start + Duration::hours(h as i64)).format("%Y-%m-%dT%H:%M:%S").to_string();
            let value = v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([r.id.as_str(), ts.as_str(), value.as_str(), r.kind.as_str()])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
