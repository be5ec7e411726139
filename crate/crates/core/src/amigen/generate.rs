use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CustomerRecord;
use crate::calendar::{DayKind, DAYS_PER_MONTH, HOURS_PER_DAY};
use crate::customer::{CustomerType, PlantedClass, SubsetKey};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Relative energy of weekend days versus weekdays.
fn weekend_level(kind: CustomerType) -> f64 {
    match kind {
        CustomerType::Residential => 1.15,
        CustomerType::Commercial => 0.55,
        CustomerType::Industrial => 0.70,
    }
}

/// Multiplier on the hourly noise level.
fn volatility(kind: CustomerType) -> f64 {
    match kind {
        CustomerType::Residential => 1.0,
        CustomerType::Commercial => 0.6,
        CustomerType::Industrial => 0.4,
    }
}

/// Seasonal swing of monthly energy.
fn seasonal_amplitude(kind: CustomerType) -> f64 {
    match kind {
        CustomerType::Residential => 0.15,
        CustomerType::Commercial => 0.08,
        CustomerType::Industrial => 0.03,
    }
}

/// Day-of-week energy factors, Monday first. Each day kind averages to 1.
fn day_factors(kind: CustomerType) -> [f64; 7] {
    match kind {
        CustomerType::Residential => [0.97, 0.98, 1.00, 1.01, 1.04, 1.03, 0.97],
        CustomerType::Commercial => [1.02, 1.01, 1.00, 0.99, 0.98, 1.10, 0.90],
        CustomerType::Industrial => [1.00, 1.01, 1.01, 1.00, 0.98, 1.05, 0.95],
    }
}

/// Log-scale spread of customer magnitudes around the type median.
const MAGNITUDE_SPREAD: f64 = 0.3;

/// Minimum L2 distance between two planted shapes (mean-1 scaling).
const MIN_SEPARATION: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeSpec {
    pub count: usize,
    pub weekday_classes: usize,
    pub weekend_classes: usize,
    /// Median average demand of a customer of this type.
    pub mean_kw: f64,
}

impl TypeSpec {
    pub fn classes(&self, day_kind: DayKind) -> usize {
        match day_kind {
            DayKind::Weekday => self.weekday_classes,
            DayKind::Weekend => self.weekend_classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationSpec {
    pub residential: TypeSpec,
    pub commercial: TypeSpec,
    pub industrial: TypeSpec,
    pub months: usize,
    /// Log-normal hourly noise level for residential customers; other
    /// types use a fraction of it.
    pub noise_sigma: f64,
    pub seed: u64,
    /// First day of data; moved forward to the next Monday if needed.
    pub start: NaiveDate,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            residential: TypeSpec {
                count: 200,
                weekday_classes: 4,
                weekend_classes: 6,
                mean_kw: 1.2,
            },
            commercial: TypeSpec {
                count: 60,
                weekday_classes: 3,
                weekend_classes: 4,
                mean_kw: 12.0,
            },
            industrial: TypeSpec {
                count: 30,
                weekday_classes: 2,
                weekend_classes: 3,
                mean_kw: 80.0,
            },
            months: 6,
            noise_sigma: 0.15,
            seed: 7,
            start: NaiveDate::from_ymd_opt(2015, 1, 5).expect("valid date"),
        }
    }
}

impl PopulationSpec {
    pub fn type_spec(&self, kind: CustomerType) -> &TypeSpec {
        match kind {
            CustomerType::Residential => &self.residential,
            CustomerType::Commercial => &self.commercial,
            CustomerType::Industrial => &self.industrial,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.months == 0 {
            return Err(Error::invalid("population needs at least one month"));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::invalid("noise sigma must be finite and nonnegative"));
        }
        let mut total = 0;
        for kind in CustomerType::ALL {
            let t = self.type_spec(kind);
            total += t.count;
            if t.count > 0 && (t.weekday_classes == 0 || t.weekend_classes == 0) {
                return Err(Error::invalid(format!("{kind} customers need at least one class per day kind")));
            }
            if !(t.mean_kw > 0.0) {
                return Err(Error::invalid(format!("{kind} mean_kw must be positive")));
            }
        }
        if total == 0 {
            return Err(Error::invalid("population is empty"));
        }
        Ok(())
    }
}

/// Planted daily shape of one class (kWh per hour for unit scale).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassShape {
    pub subset: SubsetKey,
    pub index: usize,
    pub values: [f64; HOURS_PER_DAY],
}

/// The planted classes shared by every customer of a synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassLibrary {
    pub shapes: Vec<ClassShape>,
}

impl ClassLibrary {
    /// Builds smooth positive shapes (offset plus one to three harmonics)
    /// for every subset, rejecting candidates too close to earlier ones.
    pub fn generate(class_counts: &[(SubsetKey, usize)], seed: u64) -> Self {
        let mut shapes = Vec::new();
        for &(subset, count) in class_counts {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1 + (subset.kind as u64) * 2 + subset.day_kind.index() as u64);
            let level = match subset.day_kind {
                DayKind::Weekday => 1.0,
                DayKind::Weekend => weekend_level(subset.kind),
            };
            let mut accepted: Vec<[f64; HOURS_PER_DAY]> = Vec::with_capacity(count);
            let mut separation = MIN_SEPARATION;
            let mut attempts = 0usize;
            while accepted.len() < count {
                let candidate = random_shape(&mut rng);
                let far_enough = accepted.iter().all(|s| {
                    s.iter()
                        .zip(&candidate)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                        >= separation
                });
                if far_enough {
                    accepted.push(candidate);
                }
                attempts += 1;
                if attempts % 2000 == 0 {
                    separation *= 0.9;
                }
            }
            for (index, mean_one) in accepted.into_iter().enumerate() {
                let mut values = mean_one;
                values.iter_mut().for_each(|v| *v *= level);
                shapes.push(ClassShape { subset, index, values });
            }
        }
        Self { shapes }
    }

    pub fn from_spec(spec: &PopulationSpec) -> Self {
        let counts: Vec<_> = SubsetKey::all()
            .map(|key| (key, spec.type_spec(key.kind).classes(key.day_kind)))
            .filter(|&(_, n)| n > 0)
            .collect();
        Self::generate(&counts, spec.seed)
    }

    pub fn shape(&self, subset: SubsetKey, index: usize) -> Option<&[f64; HOURS_PER_DAY]> {
        self.shapes
            .iter()
            .find(|s| s.subset == subset && s.index == index)
            .map(|s| &s.values)
    }

    pub fn count(&self, subset: SubsetKey) -> usize {
        self.shapes.iter().filter(|s| s.subset == subset).count()
    }
}

/// Mean-one positive daily curve.
fn random_shape<R: Rng>(rng: &mut R) -> [f64; HOURS_PER_DAY] {
    let harmonics = rng.random_range(1..=3);
    let mut terms = Vec::with_capacity(harmonics);
    for _ in 0..harmonics {
        let freq = rng.random_range(1..=3) as f64;
        let phase = rng.random_range(0.0..24.0);
        let amp = rng.random_range(0.25..0.7);
        terms.push((freq, phase, amp));
    }
    let total_amp: f64 = terms.iter().map(|t| t.2).sum();
    let shrink = if total_amp > 0.85 { 0.85 / total_amp } else { 1.0 };
    let mut values = [0.0; HOURS_PER_DAY];
    for (h, v) in values.iter_mut().enumerate() {
        *v = 1.0
            + terms
                .iter()
                .map(|&(f, p, a)| a * shrink * (2.0 * std::f64::consts::PI * f * (h as f64 - p) / 24.0).cos())
                .sum::<f64>();
    }
    let mean = values.iter().sum::<f64>() / HOURS_PER_DAY as f64;
    values.iter_mut().for_each(|v| *v /= mean);
    values
}

/// One customer to synthesize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSpec {
    pub id: String,
    pub kind: CustomerType,
    /// Customer magnitude: average demand in kW of a weekday at unit season.
    pub mean_kw: f64,
    /// Planted classes; drawn uniformly when absent.
    pub class: Option<PlantedClass>,
}

fn lognormal_unit<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    (sigma * z - 0.5 * sigma * sigma).exp()
}

fn first_monday(date: NaiveDate) -> NaiveDate {
    let mut d = date;
    while d.weekday() != Weekday::Mon {
        d += Duration::days(1);
    }
    d
}

/// Synthesizes hourly records for the given sites from a class library.
///
/// Each customer draws from its own substream of `seed`, so output is
/// independent of evaluation order.
pub fn generate_customers<T: Scalar>(
    library: &ClassLibrary,
    sites: &[SiteSpec],
    months: usize,
    noise_sigma: f64,
    start: NaiveDate,
    seed: u64,
) -> Result<Vec<CustomerRecord<T>>> {
    if months == 0 {
        return Err(Error::invalid("need at least one month"));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::invalid("noise sigma must be nonnegative"));
    }
    for site in sites {
        for dk in DayKind::ALL {
            let n = library.count(SubsetKey::new(site.kind, dk));
            if n == 0 {
                return Err(Error::invalid(format!("no planted {dk} classes for {}", site.kind)));
            }
            if let Some(c) = site.class {
                if c.for_day_kind(dk) >= n {
                    return Err(Error::invalid(format!("site {} has unknown {dk} class", site.id)));
                }
            }
        }
    }
    let start = first_monday(start);
    let start_dt = start.and_hms_opt(0, 0, 0).expect("valid midnight");
    Ok(sites
        .par_iter()
        .enumerate()
        .map(|(i, site)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1_000 + i as u64);
            let class = site.class.unwrap_or_else(|| PlantedClass {
                weekday: rng.random_range(0..library.count(SubsetKey::new(site.kind, DayKind::Weekday))),
                weekend: rng.random_range(0..library.count(SubsetKey::new(site.kind, DayKind::Weekend))),
            });
            let weekday_shape = library
                .shape(SubsetKey::new(site.kind, DayKind::Weekday), class.weekday)
                .expect("checked above");
            let weekend_shape = library
                .shape(SubsetKey::new(site.kind, DayKind::Weekend), class.weekend)
                .expect("checked above");
            let sigma_hour = noise_sigma * volatility(site.kind);
            let sigma_slow = noise_sigma / 3.0;
            let factors = day_factors(site.kind);
            let mut hourly = Vec::with_capacity(months * DAYS_PER_MONTH * HOURS_PER_DAY);
            for m in 0..months {
                let month_start = start + Duration::days((m * DAYS_PER_MONTH) as i64);
                let season = 1.0
                    + seasonal_amplitude(site.kind)
                        * (2.0 * std::f64::consts::PI * month_start.month0() as f64 / 12.0).cos();
                let month_factor = season * lognormal_unit(&mut rng, sigma_slow);
                for d in 0..DAYS_PER_MONTH {
                    let date = month_start + Duration::days(d as i64);
                    let pos = date.weekday().num_days_from_monday() as usize;
                    let shape = match DayKind::of_position(pos) {
                        DayKind::Weekday => weekday_shape,
                        DayKind::Weekend => weekend_shape,
                    };
                    let day_factor = factors[pos] * lognormal_unit(&mut rng, sigma_slow);
                    for &s in shape.iter() {
                        let v = site.mean_kw * month_factor * day_factor * s * lognormal_unit(&mut rng, sigma_hour);
                        hourly.push(Some(T::lit(v)));
                    }
                }
            }
            CustomerRecord {
                id: site.id.clone(),
                kind: site.kind,
                start: start_dt,
                hourly_kwh: hourly,
                true_class: Some(class),
            }
        })
        .collect())
}

/// Draws a full synthetic population: per-type customer counts, planted
/// classes from [`ClassLibrary::from_spec`], log-normal magnitudes.
pub fn generate_population<T: Scalar>(spec: &PopulationSpec) -> Result<Vec<CustomerRecord<T>>> {
    spec.validate()?;
    let library = ClassLibrary::from_spec(spec);
    let mut mag_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    mag_rng.set_stream(500);
    let mut sites = Vec::new();
    for kind in CustomerType::ALL {
        let t = spec.type_spec(kind);
        let prefix = &kind.as_str()[..1].to_ascii_uppercase();
        for n in 0..t.count {
            let z: f64 = StandardNormal.sample(&mut mag_rng);
            let magnitude = t.mean_kw * (MAGNITUDE_SPREAD * z).exp();
            sites.push(SiteSpec {
                id: format!("{prefix}{n:04}"),
                kind,
                mean_kw: magnitude,
                class: None,
            });
        }
    }
    generate_customers(&library, &sites, spec.months, spec.noise_sigma, spec.start, spec.seed)
}
