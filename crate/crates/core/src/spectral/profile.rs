use serde::{Deserialize, Serialize};

use crate::calendar::{DayKind, HOURS_PER_DAY};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Average consumption at each hour of the day (kWh per hour).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DailyProfile<T> {
    pub owner: String,
    pub day_kind: DayKind,
    pub values: [T; HOURS_PER_DAY],
}

impl<T: Scalar> DailyProfile<T> {
    pub fn new(owner: impl Into<String>, day_kind: DayKind, values: &[T]) -> Result<Self> {
        if values.len() != HOURS_PER_DAY {
            return Err(Error::invalid(format!(
                "daily profile needs {HOURS_PER_DAY} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::invalid("daily profile values must be finite and nonnegative"));
        }
        let mut arr = [T::zero(); HOURS_PER_DAY];
        arr.copy_from_slice(values);
        Ok(Self {
            owner: owner.into(),
            day_kind,
            values: arr,
        })
    }

    pub fn daily_total(&self) -> T {
        self.values.iter().copied().sum()
    }

    /// Shape of the profile: values divided by the daily total. A zero
    /// profile maps to the flat shape.
    pub fn shape(&self) -> [T; HOURS_PER_DAY] {
        let total = self.daily_total();
        let mut out = [T::zero(); HOURS_PER_DAY];
        if total > T::zero() {
            for (o, &v) in out.iter_mut().zip(&self.values) {
                *o = v / total;
            }
        } else {
            out.fill(T::one() / T::from_count(HOURS_PER_DAY));
        }
        out
    }
}
