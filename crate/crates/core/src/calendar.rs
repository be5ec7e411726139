//! Normalized billing calendar.
//!
//! A billing month is four consecutive Monday-aligned weeks (28 days, 672
//! hours). Week position 0 is Monday; positions 5 and 6 are the weekend.

use chrono::{Datelike, Duration, NaiveDateTime, Timelike, Weekday};
use serde::{Deserialize, Serialize};

pub const HOURS_PER_DAY: usize = 24;
pub const DAYS_PER_WEEK: usize = 7;
pub const WEEKS_PER_MONTH: usize = 4;
pub const DAYS_PER_MONTH: usize = DAYS_PER_WEEK * WEEKS_PER_MONTH;
pub const HOURS_PER_WEEK: usize = HOURS_PER_DAY * DAYS_PER_WEEK;
pub const HOURS_PER_MONTH: usize = HOURS_PER_DAY * DAYS_PER_MONTH;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayKind {
    Weekday,
    Weekend,
}

impl DayKind {
    pub const ALL: [DayKind; 2] = [DayKind::Weekday, DayKind::Weekend];

    /// Day kind of a position within a Monday-aligned week.
    pub fn of_position(pos: usize) -> DayKind {
        if pos % DAYS_PER_WEEK >= 5 {
            DayKind::Weekend
        } else {
            DayKind::Weekday
        }
    }

    pub fn of_weekday(day: Weekday) -> DayKind {
        match day {
            Weekday::Sat | Weekday::Sun => DayKind::Weekend,
            _ => DayKind::Weekday,
        }
    }

    pub fn index(self) -> usize {
        match self {
            DayKind::Weekday => 0,
            DayKind::Weekend => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DayKind::Weekday => "weekday",
            DayKind::Weekend => "weekend",
        }
    }

    /// Number of days of this kind in one normalized month.
    pub fn days_per_month(self) -> usize {
        match self {
            DayKind::Weekday => 5 * WEEKS_PER_MONTH,
            DayKind::Weekend => 2 * WEEKS_PER_MONTH,
        }
    }
}

impl std::fmt::Display for DayKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Day kind of hour `h` (0..672) within a normalized month.
pub fn day_kind_of_month_hour(h: usize) -> DayKind {
    DayKind::of_position((h / HOURS_PER_DAY) % DAYS_PER_WEEK)
}

/// Hours from `start` to the first Monday 00:00 at or after it.
pub fn hours_to_first_monday(start: NaiveDateTime) -> usize {
    let midnight = start.date().and_hms_opt(0, 0, 0).expect("valid midnight");
    let mut first = if start == midnight {
        midnight
    } else {
        midnight + Duration::days(1)
    };
    while first.weekday() != Weekday::Mon {
        first += Duration::days(1);
    }
    let diff = first - start;
    debug_assert_eq!(start.minute(), 0);
    diff.num_hours() as usize
}

/// Number of whole normalized months available after alignment.
pub fn whole_months(start: NaiveDateTime, n_hours: usize) -> usize {
    let off = hours_to_first_monday(start);
    n_hours.saturating_sub(off) / HOURS_PER_MONTH
}
