use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::TrainingSets;
use super::regressor::{Pairs, Regressor, TrainConfig};
use crate::amigen::CustomerRecord;
use crate::calendar::{DayKind, DAYS_PER_WEEK, HOURS_PER_DAY, HOURS_PER_MONTH, WEEKS_PER_MONTH};
use crate::customer::ClassId;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectral::PatternBank;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Fewest member-months a class needs before a cascade is trained for it.
pub const MIN_MEMBER_MONTHS: usize = 20;

/// Held-out error of one trained regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorReport {
    pub layer: String,
    pub position: usize,
    pub epochs: usize,
    pub best_epoch: usize,
    pub test_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MtslModel<T> {
    pub schema_version: u32,
    pub class: ClassId,
    pub member_months: usize,
    /// Month to week, one per week.
    pub weekly: Vec<Regressor<T>>,
    /// Week to day, one per position within the week.
    pub daily: Vec<Regressor<T>>,
    /// Day to hour, one per hour, for weekdays.
    pub hourly_weekday: Vec<Regressor<T>>,
    /// Day to hour, one per hour, for weekend days.
    pub hourly_weekend: Vec<Regressor<T>>,
    pub reports: Vec<RegressorReport>,
}

/// Output of every cascade layer for one bill.
#[derive(Debug, Clone, PartialEq)]
pub struct Cascade<T> {
    pub weeks: Vec<T>,
    /// Daily energies in month order (28 values).
    pub days: Vec<T>,
    /// Hourly energies in month order (672 values).
    pub hours: Vec<T>,
}

/// Clamps `raw` at zero and scales it to sum to `parent`; falls back to an
/// even split when every child is zero.
fn conserve<T: Scalar>(parent: T, raw: &mut [T]) {
    for v in raw.iter_mut() {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    }
    let total: T = raw.iter().copied().sum();
    if total > T::zero() {
        let f = parent / total;
        raw.iter_mut().for_each(|v| *v = *v * f);
    } else {
        let even = parent / T::from_count(raw.len());
        raw.iter_mut().for_each(|v| *v = even);
    }
}

fn chain<T: Scalar>(parent: T, bank: &[Regressor<T>]) -> Vec<T> {
    let mut out = Vec::with_capacity(bank.len());
    let mut prev = T::zero();
    for r in bank {
        let y = r.predict(&[parent, prev]).max(T::zero());
        out.push(y);
        prev = y;
    }
    conserve(parent, &mut out);
    out
}

impl<T: Scalar> MtslModel<T> {
    fn hourly_bank(&self, day_kind: DayKind) -> &[Regressor<T>] {
        match day_kind {
            DayKind::Weekday => &self.hourly_weekday,
            DayKind::Weekend => &self.hourly_weekend,
        }
    }

    /// Runs the cascade on a monthly energy. Negative or non-finite bills are
    /// treated as zero.
    pub fn cascade(&self, bill_kwh: T) -> Cascade<T> {
        let bill = if bill_kwh > T::zero() && bill_kwh.is_finite() { bill_kwh } else { T::zero() };
        let weeks = chain(bill, &self.weekly);
        let mut days = Vec::with_capacity(WEEKS_PER_MONTH * DAYS_PER_WEEK);
        for &w in &weeks {
            days.extend(chain(w, &self.daily));
        }
        let mut hours = Vec::with_capacity(HOURS_PER_MONTH);
        for (i, &d) in days.iter().enumerate() {
            let kind = DayKind::of_position(i % DAYS_PER_WEEK);
            hours.extend(chain(d, self.hourly_bank(kind)));
        }
        Cascade { weeks, days, hours }
    }

    /// The 672 hourly values for a monthly bill.
    pub fn disaggregate(&self, bill_kwh: T) -> Vec<T> {
        self.cascade(bill_kwh).hours
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Self = serde_json::from_str(&text)?;
        if model.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Version {
                kind: "mtsl model".into(),
                found: model.schema_version,
                expected: MODEL_SCHEMA_VERSION,
            });
        }
        Ok(model)
    }
}

/// Hourly values for a customer whose weekday and weekend patterns belong to
/// different classes: weekday hours come from `weekday`, weekend hours from
/// `weekend`, and the spliced month is rescaled to the bill.
pub fn disaggregate_pair<T: Scalar>(weekday: &MtslModel<T>, weekend: &MtslModel<T>, bill_kwh: T) -> Vec<T> {
    let a = weekday.disaggregate(bill_kwh);
    if std::ptr::eq(weekday, weekend) {
        return a;
    }
    let b = weekend.disaggregate(bill_kwh);
    let mut hours: Vec<T> = (0..HOURS_PER_MONTH)
        .map(|h| match crate::calendar::day_kind_of_month_hour(h) {
            DayKind::Weekday => a[h],
            DayKind::Weekend => b[h],
        })
        .collect();
    let bill = a.iter().copied().sum::<T>();
    conserve(bill, &mut hours);
    hours
}

fn train_bank<T: Scalar>(
    layer: &str,
    sets: &[Pairs<T>],
    config: &TrainConfig,
    seed_base: u64,
) -> Result<(Vec<Regressor<T>>, Vec<RegressorReport>)> {
    let trained: Vec<Result<Regressor<T>>> = sets
        .par_iter()
        .enumerate()
        .map(|(i, pairs)| {
            let cfg = TrainConfig {
                seed: seed_base.wrapping_add(i as u64),
                ..config.clone()
            };
            Regressor::train(pairs, &cfg)
        })
        .collect();
    let mut bank = Vec::with_capacity(sets.len());
    let mut reports = Vec::with_capacity(sets.len());
    for (i, r) in trained.into_iter().enumerate() {
        let r = r?;
        reports.push(RegressorReport {
            layer: layer.to_string(),
            position: i,
            epochs: r.log.validation_loss.len(),
            best_epoch: r.log.best_epoch,
            test_rmse: r.log.test_rmse,
        });
        bank.push(r);
    }
    Ok((bank, reports))
}

/// Trains all 4 + 7 + 2x24 regressors of a cascade from prepared pairs.
pub fn train_from_sets<T: Scalar>(class: ClassId, sets: &TrainingSets<T>, config: &TrainConfig) -> Result<MtslModel<T>> {
    if sets.months < MIN_MEMBER_MONTHS {
        return Err(Error::invalid(format!(
            "class {class} has {} member-months; at least {MIN_MEMBER_MONTHS} required",
            sets.months
        )));
    }
    let seed = config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let (weekly, mut reports) = train_bank("weekly", &sets.weekly, config, seed)?;
    let (daily, r) = train_bank("daily", &sets.daily, config, seed.wrapping_add(100))?;
    reports.extend(r);
    let (hourly_weekday, r) = train_bank("hourly_weekday", &sets.hourly[0], config, seed.wrapping_add(200))?;
    reports.extend(r);
    let (hourly_weekend, r) = train_bank("hourly_weekend", &sets.hourly[1], config, seed.wrapping_add(300))?;
    reports.extend(r);
    debug_assert_eq!(hourly_weekday.len(), HOURS_PER_DAY);
    Ok(MtslModel {
        schema_version: MODEL_SCHEMA_VERSION,
        class,
        member_months: sets.months,
        weekly,
        daily,
        hourly_weekday,
        hourly_weekend,
        reports,
    })
}

/// Trains the cascade of one pattern class on its members' complete months.
/// When `months` is given, only those month indices are used.
pub fn train_mtsl<T: Scalar>(
    bank: &PatternBank<T>,
    class: ClassId,
    records: &[CustomerRecord<T>],
    months: Option<&[usize]>,
    config: &TrainConfig,
) -> Result<MtslModel<T>> {
    let members = &bank
        .class(class)
        .ok_or_else(|| Error::invalid(format!("class {class} is not in the pattern bank")))?
        .member_ids;
    let by_id: HashMap<&str, &CustomerRecord<T>> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut sets = TrainingSets::empty();
    for id in members {
        let record = by_id
            .get(id.as_str())
            .ok_or_else(|| Error::invalid(format!("member {id} of class {class} has no record")))?;
        for m in record.complete_months() {
            if months.is_none_or(|allowed| allowed.contains(&m)) {
                sets.add_month(&record.month_values(m)?);
            }
        }
    }
    train_from_sets(class, &sets, config)
}

/// Versioned collection of per-class cascades.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ModelSet<T> {
    pub schema_version: u32,
    pub models: Vec<MtslModel<T>>,
}

impl<T: Scalar> ModelSet<T> {
    pub fn get(&self, class: ClassId) -> Option<&MtslModel<T>> {
        self.models.iter().find(|m| m.class == class)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let set: Self = serde_json::from_str(&text)?;
        if set.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Version {
                kind: "mtsl model set".into(),
                found: set.schema_version,
                expected: MODEL_SCHEMA_VERSION,
            });
        }
        Ok(set)
    }
}

/// Trains one cascade per class of the bank.
pub fn train_all<T: Scalar>(
    bank: &PatternBank<T>,
    records: &[CustomerRecord<T>],
    months: Option<&[usize]>,
    config: &TrainConfig,
) -> Result<ModelSet<T>> {
    let models = bank
        .class_ids()
        .into_par_iter()
        .map(|id| train_mtsl(bank, id, records, months, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelSet {
        schema_version: MODEL_SCHEMA_VERSION,
        models,
    })
}
