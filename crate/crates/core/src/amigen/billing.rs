use serde::{Deserialize, Serialize};

use super::CustomerRecord;
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MonthlyBill<T> {
    pub customer_id: String,
    pub month: usize,
    pub energy_kwh: T,
}

/// Bill for a normalized month: the exact sum of its 672 hourly readings.
pub fn bill_from_truth<T: Scalar>(record: &CustomerRecord<T>, month: usize) -> Result<MonthlyBill<T>> {
    let values = record.month_values(month)?;
    Ok(MonthlyBill {
        customer_id: record.id.clone(),
        month,
        energy_kwh: values.into_iter().sum(),
    })
}

/// Bills for every complete month of a record.
pub fn bills_for<T: Scalar>(record: &CustomerRecord<T>) -> Vec<MonthlyBill<T>> {
    record
        .complete_months()
        .into_iter()
        .filter_map(|m| bill_from_truth(record, m).ok())
        .collect()
}
