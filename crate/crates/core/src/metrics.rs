//! Accuracy metrics and the reference disaggregation baselines.

use serde::{Deserialize, Serialize};

use crate::calendar::{DAYS_PER_MONTH, HOURS_PER_DAY, HOURS_PER_MONTH};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mean absolute percentage error with zero-actual samples excluded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mape<T> {
    /// Percentage (10.0 means 10 %).
    pub value: T,
    pub samples: usize,
    pub excluded_zero: usize,
}

pub fn mape<T: Scalar>(actual: &[T], estimated: &[T]) -> Result<Mape<T>> {
    if actual.len() != estimated.len() {
        return Err(Error::invalid("series lengths differ"));
    }
    let mut sum = T::zero();
    let mut samples = 0;
    for (&a, &e) in actual.iter().zip(estimated) {
        if a == T::zero() {
            continue;
        }
        sum = sum + ((a - e) / a).abs();
        samples += 1;
    }
    if samples == 0 {
        return Err(Error::invalid("every actual sample is zero; MAPE undefined"));
    }
    Ok(Mape {
        value: T::lit(100.0) * sum / T::from_count(samples),
        samples,
        excluded_zero: actual.len() - samples,
    })
}

/// Pearson correlation coefficient.
pub fn goodness_r<T: Scalar>(actual: &[T], estimated: &[T]) -> Result<T> {
    if actual.len() != estimated.len() || actual.len() < 2 {
        return Err(Error::invalid("need two equal-length series of at least two samples"));
    }
    let n = T::from_count(actual.len());
    let ma = actual.iter().copied().sum::<T>() / n;
    let me = estimated.iter().copied().sum::<T>() / n;
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (&a, &e) in actual.iter().zip(estimated) {
        let (da, de) = (a - ma, e - me);
        sab = sab + da * de;
        saa = saa + da * da;
        sbb = sbb + de * de;
    }
    if saa == T::zero() || sbb == T::zero() {
        return Err(Error::invalid("zero variance series; correlation undefined"));
    }
    let r = sab / (saa.sqrt() * sbb.sqrt());
    Ok(r.max(-T::one()).min(T::one()))
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid("labelings differ in length"));
    }
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let pairs = |m: u64| (m * m.saturating_sub(1) / 2) as f64;
    let index: f64 = table.iter().flatten().map(|&m| pairs(m)).sum();
    let rows: f64 = table.iter().map(|r| pairs(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| pairs(table.iter().map(|r| r[j]).sum())).sum();
    let total = pairs(n as u64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Spreads a monthly bill evenly over its 672 hours.
pub fn baseline_uniform<T: Scalar>(bill: T) -> Vec<T> {
    vec![bill / T::from_count(HOURS_PER_MONTH); HOURS_PER_MONTH]
}

/// Gives each day `bill / 28` and shapes it with a unit-sum daily profile.
pub fn baseline_profile_scaling<T: Scalar>(bill: T, profile: &[T]) -> Result<Vec<T>> {
    if profile.len() != HOURS_PER_DAY {
        return Err(Error::invalid("profile must have 24 values"));
    }
    if profile.iter().any(|v| !v.is_finite() || *v < T::zero()) {
        return Err(Error::invalid("profile values must be finite and nonnegative"));
    }
    let sum: T = profile.iter().copied().sum();
    if (sum - T::one()).abs() > T::lit(1e-6) {
        return Err(Error::invalid("profile must sum to one"));
    }
    let daily = bill / T::from_count(DAYS_PER_MONTH);
    Ok((0..HOURS_PER_MONTH).map(|h| daily * profile[h % HOURS_PER_DAY] / sum).collect())
}

/// Accuracy figures for one evaluation scope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopeMetrics {
    pub scope: String,
    pub mape: f64,
    pub r: f64,
    pub samples: usize,
    pub excluded_zero: usize,
}

impl ScopeMetrics {
    pub fn compute(scope: impl Into<String>, actual: &[f64], estimated: &[f64]) -> Result<Self> {
        let m = mape(actual, estimated)?;
        let r = goodness_r(actual, estimated).unwrap_or(f64::NAN);
        Ok(Self {
            scope: scope.into(),
            mape: m.value,
            r,
            samples: m.samples,
            excluded_zero: m.excluded_zero,
        })
    }
}

/// Mean relative voltage errors of a state-estimation run, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageErrors {
    /// Mean of `|(|V_est| - |V|)| / |V|`.
    pub magnitude_pct: f64,
    /// Mean angle error in radians, times 100 (the phase component of the
    /// phasor error relative to its magnitude).
    pub phase_pct: f64,
    pub samples: usize,
}

impl VoltageErrors {
    pub fn from_pairs<T: Scalar>(pairs: impl IntoIterator<Item = (num_complex::Complex<T>, num_complex::Complex<T>)>) -> Self {
        let (mut mag, mut ang, mut n) = (0.0, 0.0, 0usize);
        for (truth, est) in pairs {
            let (t, e) = (
                num_complex::Complex::new(truth.re.as_f64(), truth.im.as_f64()),
                num_complex::Complex::new(est.re.as_f64(), est.im.as_f64()),
            );
            mag += ((e.norm() - t.norm()) / t.norm()).abs();
            ang += (e / t).arg().abs();
            n += 1;
        }
        let n_f = n.max(1) as f64;
        Self {
            magnitude_pct: 100.0 * mag / n_f,
            phase_pct: 100.0 * ang / n_f,
            samples: n,
        }
    }
}

/// Identified classes scored against the planted truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentificationScore {
    pub customers: usize,
    /// Customers whose weekday and weekend classes are both correct.
    pub accuracy: f64,
    pub weekday_accuracy: f64,
    pub weekend_accuracy: f64,
    /// Customers whose true classes both end with posterior at or above the
    /// stopping threshold.
    pub confident: f64,
}

/// Everything `evaluate` reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub load_estimation: Vec<ScopeMetrics>,
    pub baselines: Vec<ScopeMetrics>,
    pub clustering_ari: Vec<(String, f64)>,
    pub identification: Option<IdentificationScore>,
    /// Pseudo-loads from the identified classes.
    pub state_estimation: Option<VoltageErrors>,
    /// Pseudo-loads from the planted classes.
    pub state_estimation_planted: Option<VoltageErrors>,
}

pub const METRICS_SCHEMA_VERSION: u32 = 1;
