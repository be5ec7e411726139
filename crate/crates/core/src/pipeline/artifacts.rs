//! File names and CSV formats of the pipeline's intermediate artifacts.

use std::collections::HashMap;
use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::bcse::{Measurement, MeasurementKind};
use crate::customer::{CustomerType, PlantedClass};
use crate::error::{Error, Result};

pub const POPULATION_CSV: &str = "population.csv";
pub const FEEDER_LOADS_CSV: &str = "feeder_loads.csv";
pub const PLANTED_CSV: &str = "planted_classes.csv";
pub const FEEDER_FILE: &str = "feeder.toml";
pub const BILLS_CSV: &str = "bills.csv";
pub const HEAD_MEASUREMENTS_CSV: &str = "head_measurements.csv";
pub const TRUE_VOLTAGES_CSV: &str = "true_voltages.csv";
pub const CORRELATION_CSV: &str = "timescale_correlation.csv";
pub const BANK_JSON: &str = "pattern_bank.json";
pub const DBI_CSV: &str = "dbi.csv";
pub const CENTROIDS_CSV: &str = "centroids.csv";
pub const MODELS_JSON: &str = "mtsl_models.json";
pub const TRAINING_CSV: &str = "mtsl_training.csv";
pub const IDENTIFICATION_JSON: &str = "identification.json";
pub const TRAJECTORIES_CSV: &str = "posterior_trajectories.csv";
pub const ASSIGNMENTS_CSV: &str = "assignments.csv";
pub const PSEUDO_LOADS_CSV: &str = "pseudo_loads.csv";
pub const MEASUREMENTS_CSV: &str = "measurements.csv";
pub const ESTIMATES_CSV: &str = "estimated_voltages.csv";
pub const RESIDUALS_CSV: &str = "residuals.csv";
pub const LOAD_ESTIMATES_CSV: &str = "load_estimates.csv";
pub const METRICS_JSON: &str = "metrics.json";

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn rows<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>> {
    let mut rdr = reader(path)?;
    rdr.deserialize()
        .map(|r| {
            r.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        })
        .collect()
}

fn write_rows<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedRow {
    pub customer_id: String,
    #[serde(rename = "type")]
    pub kind: CustomerType,
    pub weekday: usize,
    pub weekend: usize,
}

pub fn write_planted(path: &Path, rows: &[PlantedRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn read_planted(path: &Path) -> Result<HashMap<String, PlantedClass>> {
    Ok(rows::<PlantedRow>(path)?
        .into_iter()
        .map(|r| {
            (
                r.customer_id,
                PlantedClass {
                    weekday: r.weekday,
                    weekend: r.weekend,
                },
            )
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BillRow {
    pub customer_id: String,
    pub month: usize,
    pub energy_kwh: f64,
}

pub fn write_bills(path: &Path, rows: &[BillRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn read_bills(path: &Path) -> Result<Vec<BillRow>> {
    rows(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MeasurementRow {
    step: usize,
    kind: String,
    location: usize,
    re: f64,
    im: f64,
    weight: f64,
}

/// Measurements of every step, in order.
pub fn write_measurements(path: &Path, steps: &[(usize, Vec<Measurement<f64>>)]) -> Result<()> {
    write_rows(
        path,
        steps.iter().flat_map(|(step, ms)| {
            ms.iter().map(move |m| MeasurementRow {
                step: *step,
                kind: m.kind.as_str().to_string(),
                location: m.location,
                re: m.value.re,
                im: m.value.im,
                weight: m.weight,
            })
        }),
    )
}

/// Reads measurements grouped by step, steps in ascending order.
pub fn read_measurements(path: &Path) -> Result<Vec<(usize, Vec<Measurement<f64>>)>> {
    let mut out: Vec<(usize, Vec<Measurement<f64>>)> = Vec::new();
    for r in rows::<MeasurementRow>(path)? {
        let m = Measurement {
            kind: r.kind.parse::<MeasurementKind>()?,
            location: r.location,
            value: Complex::new(r.re, r.im),
            weight: r.weight,
        };
        match out.last_mut() {
            Some((s, ms)) if *s == r.step => ms.push(m),
            _ => out.push((r.step, vec![m])),
        }
    }
    out.sort_by_key(|(s, _)| *s);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageRow {
    pub step: usize,
    pub node: usize,
    pub re: f64,
    pub im: f64,
}

pub fn write_voltages(path: &Path, rows: &[VoltageRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn read_voltages(path: &Path) -> Result<HashMap<(usize, usize), Complex<f64>>> {
    Ok(rows::<VoltageRow>(path)?
        .into_iter()
        .map(|r| ((r.step, r.node), Complex::new(r.re, r.im)))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRow {
    pub customer_id: String,
    #[serde(rename = "type")]
    pub kind: CustomerType,
    pub weekday_class: usize,
    pub weekend_class: usize,
}

pub fn write_assignments(path: &Path, rows: &[AssignmentRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn read_assignments(path: &Path) -> Result<Vec<AssignmentRow>> {
    rows(path)
}

pub(crate) fn write_table<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    write_rows(path, rows)
}
