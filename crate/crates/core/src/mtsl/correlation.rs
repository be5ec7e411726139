use serde::{Deserialize, Serialize};

use super::dataset::MonthEnergies;
use crate::amigen::CustomerRecord;
use crate::calendar::{DayKind, DAYS_PER_WEEK, HOURS_PER_DAY, HOURS_PER_WEEK, WEEKS_PER_MONTH};
use crate::customer::CustomerType;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Absolute Pearson correlation of two equally long samples.
pub fn abs_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid("samples differ in length"));
    }
    if x.len() < 2 {
        return Err(Error::invalid("at least two samples required"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Numerical("zero-variance variable".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).abs().min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    #[serde(rename = "type")]
    pub kind: CustomerType,
    /// Coarser and finer timescale, e.g. `monthly` and `weekly`.
    pub coarse: String,
    pub fine: String,
    pub samples: usize,
    pub rho: Option<f64>,
    pub error: Option<String>,
}

const PAIRS: [(&str, &str); 5] = [
    ("monthly", "weekly"),
    ("weekly", "weekday_daily"),
    ("weekly", "weekend_daily"),
    ("weekday_daily", "weekday_hourly"),
    ("weekend_daily", "weekend_hourly"),
];

/// Correlation between consumption at adjacent timescales, per customer type.
/// Each sample pairs a parent energy with one of its children.
pub fn timescale_correlation<T: Scalar>(records: &[CustomerRecord<T>]) -> Vec<CorrelationEntry> {
    let mut out = Vec::new();
    for kind in CustomerType::ALL {
        let mut samples: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); PAIRS.len()];
        for record in records.iter().filter(|r| r.kind == kind) {
            for m in record.complete_months() {
                let Ok(hours) = record.month_values(m) else { continue };
                let hours: Vec<f64> = hours.iter().map(|v| v.as_f64()).collect();
                let e = MonthEnergies::from_hours(&hours);
                for w in 0..WEEKS_PER_MONTH {
                    samples[0].0.push(e.month);
                    samples[0].1.push(e.weeks[w]);
                    for d in 0..DAYS_PER_WEEK {
                        let dk = DayKind::of_position(d);
                        let (week_pair, hour_pair) = match dk {
                            DayKind::Weekday => (1, 3),
                            DayKind::Weekend => (2, 4),
                        };
                        samples[week_pair].0.push(e.weeks[w]);
                        samples[week_pair].1.push(e.days[w][d]);
                        let base = w * HOURS_PER_WEEK + d * HOURS_PER_DAY;
                        for h in 0..HOURS_PER_DAY {
                            samples[hour_pair].0.push(e.days[w][d]);
                            samples[hour_pair].1.push(hours[base + h]);
                        }
                    }
                }
            }
        }
        for ((coarse, fine), (x, y)) in PAIRS.iter().zip(samples) {
            let (rho, error) = match abs_correlation(&x, &y) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            out.push(CorrelationEntry {
                kind,
                coarse: coarse.to_string(),
                fine: fine.to_string(),
                samples: x.len(),
                rho,
                error,
            });
        }
    }
    out
}
