//! Customer consumption records: synthetic generation, CSV ingestion,
//! partitioning into the six type/day-kind subsets, and monthly billing.

mod billing;
mod generate;
mod ingest;
mod partition;

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::calendar::{self, HOURS_PER_MONTH};
use crate::customer::{CustomerType, PlantedClass};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use billing::{bill_from_truth, bills_for, MonthlyBill};
pub use generate::{
    generate_customers, generate_population, ClassLibrary, ClassShape, PopulationSpec, SiteSpec, TypeSpec,
};
pub use ingest::{ingest_csv, read_csv, write_csv, IngestReport};
pub use partition::{average_profile, partition_subsets, DataSubset};

/// Hourly consumption of one customer on a contiguous hourly grid starting
/// at `start`. Missing or rejected readings are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CustomerRecord<T> {
    pub id: String,
    #[serde(rename = "type")]
    pub kind: CustomerType,
    pub start: NaiveDateTime,
    pub hourly_kwh: Vec<Option<T>>,
    #[serde(default)]
    pub true_class: Option<PlantedClass>,
}

impl<T: Scalar> CustomerRecord<T> {
    pub fn timestamp(&self, hour: usize) -> NaiveDateTime {
        self.start + Duration::hours(hour as i64)
    }

    /// Offset of the first Monday 00:00 on the grid.
    pub fn month_offset(&self) -> usize {
        calendar::hours_to_first_monday(self.start)
    }

    /// Number of whole normalized months covered by the grid.
    pub fn n_months(&self) -> usize {
        calendar::whole_months(self.start, self.hourly_kwh.len())
    }

    /// Raw readings of normalized month `month`, if the grid covers it.
    pub fn month_slice(&self, month: usize) -> Option<&[Option<T>]> {
        let begin = self.month_offset() + month * HOURS_PER_MONTH;
        self.hourly_kwh.get(begin..begin + HOURS_PER_MONTH)
    }

    /// The 672 hourly values of `month`; fails if any reading is missing.
    pub fn month_values(&self, month: usize) -> Result<Vec<T>> {
        let incomplete = || Error::IncompleteMonth {
            customer: self.id.clone(),
            month,
        };
        let slice = self.month_slice(month).ok_or_else(incomplete)?;
        slice.iter().map(|v| v.ok_or_else(incomplete)).collect()
    }

    /// Months whose readings are all present.
    pub fn complete_months(&self) -> Vec<usize> {
        (0..self.n_months())
            .filter(|&m| self.month_slice(m).is_some_and(|s| s.iter().all(Option::is_some)))
            .collect()
    }
}
