use serde::{Deserialize, Serialize};

use super::regressor::Pairs;
use crate::amigen::CustomerRecord;
use crate::calendar::{DayKind, DAYS_PER_WEEK, HOURS_PER_DAY, HOURS_PER_WEEK, WEEKS_PER_MONTH};
use crate::error::Result;
use crate::scalar::Scalar;

/// Weekly, daily and hourly energies of one normalized month.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthEnergies<T> {
    pub month: T,
    pub weeks: [T; WEEKS_PER_MONTH],
    /// Indexed by week, then position within the week (Monday first).
    pub days: [[T; DAYS_PER_WEEK]; WEEKS_PER_MONTH],
}

impl<T: Scalar> MonthEnergies<T> {
    pub fn from_hours(hours: &[T]) -> Self {
        let mut days = [[T::zero(); DAYS_PER_WEEK]; WEEKS_PER_MONTH];
        let mut weeks = [T::zero(); WEEKS_PER_MONTH];
        for (w, week) in hours.chunks_exact(HOURS_PER_WEEK).enumerate() {
            for (d, day) in week.chunks_exact(HOURS_PER_DAY).enumerate() {
                days[w][d] = day.iter().copied().sum();
            }
            weeks[w] = week.iter().copied().sum();
        }
        Self {
            month: hours.iter().copied().sum(),
            weeks,
            days,
        }
    }
}

/// Input/target pairs for every regressor of one cascade.
///
/// Inputs are `(parent energy, previous sibling)`; the first sibling sees 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrainingSets<T> {
    /// One per week of the month.
    pub weekly: Vec<Pairs<T>>,
    /// One per position within the week.
    pub daily: Vec<Pairs<T>>,
    /// One per hour of the day, per day kind (weekday first).
    pub hourly: [Vec<Pairs<T>>; 2],
    pub months: usize,
}

impl<T: Scalar> TrainingSets<T> {
    pub fn empty() -> Self {
        Self {
            weekly: vec![Pairs::default(); WEEKS_PER_MONTH],
            daily: vec![Pairs::default(); DAYS_PER_WEEK],
            hourly: [vec![Pairs::default(); HOURS_PER_DAY], vec![Pairs::default(); HOURS_PER_DAY]],
            months: 0,
        }
    }

    /// Adds one month of hourly truth (672 values).
    pub fn add_month(&mut self, hours: &[T]) {
        let e = MonthEnergies::from_hours(hours);
        for w in 0..WEEKS_PER_MONTH {
            let prev = if w == 0 { T::zero() } else { e.weeks[w - 1] };
            self.weekly[w].push(vec![e.month, prev], e.weeks[w]);
            for d in 0..DAYS_PER_WEEK {
                let prev = if d == 0 { T::zero() } else { e.days[w][d - 1] };
                self.daily[d].push(vec![e.weeks[w], prev], e.days[w][d]);
                let base = w * HOURS_PER_WEEK + d * HOURS_PER_DAY;
                let bank = &mut self.hourly[DayKind::of_position(d).index()];
                for h in 0..HOURS_PER_DAY {
                    let prev = if h == 0 { T::zero() } else { hours[base + h - 1] };
                    bank[h].push(vec![e.days[w][d], prev], hours[base + h]);
                }
            }
        }
        self.months += 1;
    }
}

/// Training pairs from every complete month of `records`.
///
/// Partial months are skipped; a record with no complete month is an error.
pub fn build_training_sets<T: Scalar>(records: &[&CustomerRecord<T>]) -> Result<TrainingSets<T>> {
    let mut sets = TrainingSets::empty();
    for record in records {
        let months = record.complete_months();
        if months.is_empty() {
            return Err(crate::error::Error::IncompleteMonth {
                customer: record.id.clone(),
                month: 0,
            });
        }
        for m in months {
            sets.add_month(&record.month_values(m)?);
        }
    }
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::HOURS_PER_MONTH;
    use crate::customer::CustomerType;
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn record(values: Vec<Option<f64>>) -> CustomerRecord<f64> {
        CustomerRecord {
            id: "c".into(),
            kind: CustomerType::Residential,
            start: NaiveDate::from_ymd_opt(2015, 1, 5).unwrap().and_hms_opt(0, 0, 0).unwrap(),
            hourly_kwh: values,
            true_class: None,
        }
    }

    #[test]
    fn constant_load_arithmetic() {
        let r = record(vec![Some(1.0); HOURS_PER_MONTH]);
        let s = build_training_sets(&[&r]).unwrap();
        assert_eq!(s.months, 1);
        assert_eq!(s.weekly[0].inputs[0], vec![672.0, 0.0]);
        assert_eq!(s.weekly[2].inputs[0], vec![672.0, 168.0]);
        assert!(s.weekly.iter().all(|p| p.targets == vec![168.0]));
        assert!(s.daily.iter().all(|p| p.targets.iter().all(|&t| t == 24.0)));
        assert_eq!(s.daily[0].inputs[0], vec![168.0, 0.0]);
        for bank in &s.hourly {
            assert!(bank.iter().all(|p| p.targets.iter().all(|&t| t == 1.0)));
        }
        assert_eq!(s.hourly[0][0].len(), 20);
        assert_eq!(s.hourly[1][0].len(), 8);
        assert_eq!(s.hourly[0][0].inputs[0], vec![24.0, 0.0]);
    }

    #[test]
    fn targets_match_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values: Vec<f64> = (0..2 * HOURS_PER_MONTH).map(|_| rng.random_range(0.0..5.0)).collect();
        let r = record(values.iter().copied().map(Some).collect());
        let s = build_training_sets(&[&r]).unwrap();
        for m in 0..2 {
            let month = &values[m * 672..(m + 1) * 672];
            let mut total = 0.0;
            for w in 0..4 {
                let mut week = 0.0;
                for d in 0..7 {
                    let mut day = 0.0;
                    for h in 0..24 {
                        day += month[w * 168 + d * 24 + h];
                    }
                    assert_eq!(s.daily[d].targets[m * 4 + w], day);
                    week += day;
                }
                assert!((s.weekly[w].targets[m] - week).abs() < 1e-9);
                total += week;
            }
            assert!((s.weekly[0].inputs[m][0] - total).abs() < 1e-9);
        }
    }

    #[test]
    fn incomplete_months_are_rejected() {
        let mut v = vec![Some(1.0); HOURS_PER_MONTH];
        v[10] = None;
        assert!(build_training_sets(&[&record(v)]).is_err());
    }
}
