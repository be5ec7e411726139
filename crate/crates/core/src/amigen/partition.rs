use chrono::Datelike;
use serde::{Deserialize, Serialize};

use super::CustomerRecord;
use crate::calendar::{DayKind, HOURS_PER_DAY};
use crate::customer::{CustomerType, SubsetKey};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::spectral::DailyProfile;

/// Average daily profiles of one customer type on one day kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DataSubset<T> {
    pub kind: CustomerType,
    pub day_kind: DayKind,
    pub profiles: Vec<DailyProfile<T>>,
}

impl<T: Scalar> DataSubset<T> {
    pub fn key(&self) -> SubsetKey {
        SubsetKey::new(self.kind, self.day_kind)
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }
}

/// Mean of the available readings at each hour of the day over all days of
/// `day_kind`. `None` if some hour of the day has no reading at all.
pub fn average_profile<T: Scalar>(record: &CustomerRecord<T>, day_kind: DayKind) -> Option<DailyProfile<T>> {
    let mut sums = [T::zero(); HOURS_PER_DAY];
    let mut counts = [0usize; HOURS_PER_DAY];
    for (h, reading) in record.hourly_kwh.iter().enumerate() {
        let Some(v) = reading else { continue };
        let ts = record.timestamp(h);
        if DayKind::of_weekday(ts.weekday()) != day_kind {
            continue;
        }
        let hod = h_of_day(record, h);
        sums[hod] = sums[hod] + *v;
        counts[hod] += 1;
    }
    if counts.iter().any(|&c| c == 0) {
        return None;
    }
    let values: Vec<T> = sums.iter().zip(&counts).map(|(&s, &c)| s / T::from_count(c)).collect();
    DailyProfile::new(record.id.clone(), day_kind, &values).ok()
}

fn h_of_day<T: Scalar>(record: &CustomerRecord<T>, h: usize) -> usize {
    use chrono::Timelike;
    record.timestamp(h).hour() as usize
}

/// Splits records into the six (type, day kind) subsets, in canonical
/// order. Each customer contributes one weekday and one weekend profile.
pub fn partition_subsets<T: Scalar>(records: &[CustomerRecord<T>]) -> Result<Vec<DataSubset<T>>> {
    let mut subsets: Vec<DataSubset<T>> = SubsetKey::all()
        .map(|k| DataSubset {
            kind: k.kind,
            day_kind: k.day_kind,
            profiles: Vec::new(),
        })
        .collect();
    for record in records {
        for dk in DayKind::ALL {
            if let Some(p) = average_profile(record, dk) {
                let slot = subsets
                    .iter_mut()
                    .find(|s| s.kind == record.kind && s.day_kind == dk)
                    .expect("all six subsets present");
                slot.profiles.push(p);
            } else {
                log::warn!("customer {} has no complete {dk} profile", record.id);
            }
        }
    }
    Ok(subsets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amigen::{generate_population, PopulationSpec, TypeSpec};
    use chrono::NaiveDate;

    #[test]
    fn constant_load_gives_all_ones() {
        let r = CustomerRecord {
            id: "flat".into(),
            kind: CustomerType::Commercial,
            start: NaiveDate::from_ymd_opt(2015, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap(),
            hourly_kwh: vec![Some(1.0f64); 24 * 10],
            true_class: None,
        };
        let subsets = partition_subsets(&[r]).unwrap();
        for s in &subsets {
            if s.kind == CustomerType::Commercial {
                assert_eq!(s.profiles.len(), 1);
                assert!(s.profiles[0].values.iter().all(|&v| v == 1.0));
            } else {
                assert!(s.is_empty());
            }
        }
    }

    #[test]
    fn six_subsets_cover_every_customer_twice() {
        let spec = PopulationSpec {
            residential: TypeSpec {
                count: 7,
                ..PopulationSpec::default().residential
            },
            commercial: TypeSpec {
                count: 5,
                ..PopulationSpec::default().commercial
            },
            industrial: TypeSpec {
                count: 3,
                ..PopulationSpec::default().industrial
            },
            months: 1,
            ..PopulationSpec::default()
        };
        let recs = generate_population::<f64>(&spec).unwrap();
        let subsets = partition_subsets(&recs).unwrap();
        assert_eq!(subsets.len(), 6);
        assert_eq!(subsets.iter().map(|s| s.len()).sum::<usize>(), 2 * recs.len());
        for r in &recs {
            for dk in DayKind::ALL {
                let hits: usize = subsets
                    .iter()
                    .map(|s| s.profiles.iter().filter(|p| p.owner == r.id && p.day_kind == dk).count())
                    .sum();
                assert_eq!(hits, 1);
            }
        }
    }

    #[test]
    fn all_residential_leaves_other_subsets_empty() {
        let spec = PopulationSpec {
            commercial: TypeSpec {
                count: 0,
                ..PopulationSpec::default().commercial
            },
            industrial: TypeSpec {
                count: 0,
                ..PopulationSpec::default().industrial
            },
            residential: TypeSpec {
                count: 5,
                ..PopulationSpec::default().residential
            },
            months: 1,
            ..PopulationSpec::default()
        };
        let subsets = partition_subsets(&generate_population::<f64>(&spec).unwrap()).unwrap();
        for s in subsets {
            assert_eq!(s.is_empty(), s.kind != CustomerType::Residential);
        }
    }
}
