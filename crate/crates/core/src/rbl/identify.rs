use std::collections::HashMap;
use std::path::Path;

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::posterior::{estimate_phi, update_posterior, Phi, PosteriorState};
use crate::bcse::{build_measurements, solve_wls, BcseConfig};
use crate::calendar::{day_kind_of_month_hour, DayKind, DAYS_PER_MONTH, HOURS_PER_MONTH};
use crate::customer::{ClassId, SubsetKey};
use crate::error::{Error, Result};
use crate::feeder::FeederModel;
use crate::mtsl::ModelSet;
use crate::scalar::Scalar;
use crate::spectral::PatternBank;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RblConfig {
    /// Stop once the best class reaches this posterior.
    pub threshold: f64,
    pub max_iterations: usize,
    /// Hours of baseline residuals used to estimate the weighting.
    pub phi_samples: usize,
    pub variance_floor: f64,
    pub bcse: BcseConfig,
}

impl Default for RblConfig {
    fn default() -> Self {
        Self {
            threshold: 0.99,
            max_iterations: 200,
            phi_samples: 48,
            variance_floor: 1e-20,
            bcse: BcseConfig {
                tolerance: 1e-9,
                ..BcseConfig::default()
            },
        }
    }
}

/// Head phasors measured at one hour of the month.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct HeadSample<T> {
    pub hour: usize,
    pub voltage: Complex<T>,
    pub current: Complex<T>,
}

/// Pseudo-measurement series of one customer under one candidate class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CandidateSeries<T> {
    pub class: ClassId,
    /// Hourly kWh over the month.
    pub hours: Vec<T>,
}

/// Candidate pseudo-series of one feeder customer, per day kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CustomerCandidates<T> {
    pub id: String,
    pub bill_kwh: T,
    /// Indexed by [`DayKind::index`].
    pub by_day_kind: [Vec<CandidateSeries<T>>; 2],
    /// Initial guess per day kind: the class whose mean daily energy is
    /// closest to the bill's.
    pub initial: [usize; 2],
}

/// Disaggregates every feeder customer's bill under every class of its type.
pub fn build_candidates<T: Scalar>(
    feeder: &FeederModel<T>,
    bank: &PatternBank<T>,
    models: &ModelSet<T>,
    bills: &HashMap<String, T>,
) -> Result<Vec<CustomerCandidates<T>>> {
    feeder
        .customers()
        .iter()
        .map(|site| {
            let bill = *bills
                .get(&site.id)
                .ok_or_else(|| Error::invalid(format!("customer {} has no bill", site.id)))?;
            let daily = bill / T::from_count(DAYS_PER_MONTH);
            let mut by_day_kind: [Vec<CandidateSeries<T>>; 2] = [Vec::new(), Vec::new()];
            let mut initial = [0; 2];
            for dk in DayKind::ALL {
                let key = SubsetKey::new(site.kind, dk);
                let subset = bank
                    .subset(key)
                    .ok_or_else(|| Error::invalid(format!("pattern bank has no classes for {key}")))?;
                let mut best = (0, T::infinity());
                for (i, class) in subset.classes.iter().enumerate() {
                    let id = ClassId { subset: key, index: class.index };
                    let model = models
                        .get(id)
                        .ok_or_else(|| Error::invalid(format!("no trained model for class {id}")))?;
                    let gap = (class.mean_daily_kwh - daily).abs();
                    if gap < best.1 {
                        best = (i, gap);
                    }
                    by_day_kind[dk.index()].push(CandidateSeries {
                        class: id,
                        hours: model.disaggregate(bill),
                    });
                }
                initial[dk.index()] = best.0;
            }
            Ok(CustomerCandidates {
                id: site.id.clone(),
                bill_kwh: bill,
                by_day_kind,
                initial,
            })
        })
        .collect()
}

/// Identification outcome for one customer and day kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerIdentification {
    pub customer: String,
    pub day_kind: DayKind,
    pub identified: ClassId,
    pub reached_threshold: bool,
    pub skipped_steps: usize,
    pub posterior: PosteriorState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationFailure {
    pub customer: String,
    pub day_kind: DayKind,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationReport {
    pub schema_version: u32,
    /// Residual weighting per day kind.
    pub phi: Vec<(DayKind, Phi)>,
    pub entries: Vec<CustomerIdentification>,
    pub failures: Vec<IdentificationFailure>,
}

impl IdentificationReport {
    pub fn identified(&self, customer: &str, day_kind: DayKind) -> Option<ClassId> {
        self.entries
            .iter()
            .find(|e| e.customer == customer && e.day_kind == day_kind)
            .map(|e| e.identified)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report: Self = serde_json::from_str(&text)?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Version {
                kind: "identification report".into(),
                found: report.schema_version,
                expected: REPORT_SCHEMA_VERSION,
            });
        }
        Ok(report)
    }

    /// Long-format posterior trajectories:
    /// `customer,day_kind,iteration,class,probability`.
    pub fn write_trajectories_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["customer", "day_kind", "iteration", "class", "probability"])?;
        for e in &self.entries {
            for (it, probs) in e.posterior.history.iter().enumerate() {
                for (class, p) in e.posterior.classes.iter().zip(probs) {
                    w.write_record([
                        e.customer.clone(),
                        e.day_kind.to_string(),
                        it.to_string(),
                        class.index.to_string(),
                        format!("{p}"),
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Identification context: the feeder, candidate pseudo-series for each of
/// its customers (in feeder order), and the head measurements.
pub struct Identifier<'a, T> {
    pub feeder: &'a FeederModel<T>,
    pub candidates: &'a [CustomerCandidates<T>],
    pub head: &'a [HeadSample<T>],
    pub config: RblConfig,
}

impl<'a, T: Scalar> Identifier<'a, T> {
    pub fn new(
        feeder: &'a FeederModel<T>,
        candidates: &'a [CustomerCandidates<T>],
        head: &'a [HeadSample<T>],
        config: RblConfig,
    ) -> Result<Self> {
        if candidates.len() != feeder.customers().len() {
            return Err(Error::invalid("one candidate set per feeder customer required"));
        }
        if let Some(s) = head.iter().find(|s| s.hour >= HOURS_PER_MONTH) {
            return Err(Error::invalid(format!("head sample at hour {} is outside the month", s.hour)));
        }
        Ok(Self {
            feeder,
            candidates,
            head,
            config,
        })
    }

    /// Current pseudo-load of every customer at `hour`, in kW.
    fn demand(&self, assignment: &[[usize; 2]], hour: usize) -> Vec<T> {
        let dk = day_kind_of_month_hour(hour).index();
        self.candidates
            .iter()
            .zip(assignment)
            .map(|(c, a)| c.by_day_kind[dk][a[dk]].hours[hour])
            .collect()
    }

    /// Head-current residual components for the given customer demands.
    fn head_residual(&self, kw: &[T], sample: &HeadSample<T>) -> Result<Vec<f64>> {
        let loads = self.feeder.customer_loads_pu(kw);
        let ms = build_measurements(self.feeder, sample.voltage, sample.current, &loads, &self.config.bcse);
        let est = solve_wls(self.feeder, &ms, &self.config.bcse)?;
        let r = est.head_current_residual().expect("head current is measured");
        Ok(vec![r.re.as_f64(), r.im.as_f64()])
    }

    fn steps(&self, day_kind: DayKind) -> impl Iterator<Item = &HeadSample<T>> {
        self.head.iter().filter(move |s| day_kind_of_month_hour(s.hour) == day_kind)
    }

    /// Weighting from baseline residuals under `assignment`.
    pub fn estimate_phi(&self, assignment: &[[usize; 2]], day_kind: DayKind) -> Result<Phi> {
        let samples: Vec<Vec<f64>> = self
            .steps(day_kind)
            .take(self.config.phi_samples)
            .filter_map(|s| self.head_residual(&self.demand(assignment, s.hour), s).ok())
            .collect();
        estimate_phi(&samples, self.config.variance_floor)
    }

    /// Posterior over the classes of customer `j` for `day_kind`, with every
    /// other customer held at `assignment`.
    pub fn identify_customer(
        &self,
        j: usize,
        day_kind: DayKind,
        assignment: &[[usize; 2]],
        phi: &Phi,
    ) -> Result<CustomerIdentification> {
        let cand = &self.candidates[j];
        let series = &cand.by_day_kind[day_kind.index()];
        let mut state = PosteriorState::uniform(cand.id.clone(), series.iter().map(|c| c.class).collect())?;
        let mut skipped = 0;
        let mut reached = series.len() == 1;
        if !reached {
            for sample in self.steps(day_kind) {
                if state.iterations >= self.config.max_iterations {
                    break;
                }
                let base = self.demand(assignment, sample.hour);
                let residuals: Result<Vec<Vec<f64>>> = series
                    .par_iter()
                    .map(|c| {
                        let mut kw = base.clone();
                        kw[j] = c.hours[sample.hour];
                        self.head_residual(&kw, sample)
                    })
                    .collect();
                match residuals {
                    Ok(r) => state = update_posterior(&state, &r, phi)?,
                    Err(e) => {
                        log::warn!("{} hour {}: step skipped ({e})", cand.id, sample.hour);
                        skipped += 1;
                        continue;
                    }
                }
                if state.max_probability() >= self.config.threshold {
                    reached = true;
                    break;
                }
            }
        }
        Ok(CustomerIdentification {
            customer: cand.id.clone(),
            day_kind,
            identified: state.classes[state.best()],
            reached_threshold: reached,
            skipped_steps: skipped,
            posterior: state,
        })
    }

    /// Identifies every customer in turn, updating the assignment as it goes.
    /// Returns the report and the final assignment (candidate indices).
    pub fn identify_all(&self) -> Result<(IdentificationReport, Vec<[usize; 2]>)> {
        let mut assignment: Vec<[usize; 2]> = self.candidates.iter().map(|c| c.initial).collect();
        let mut report = IdentificationReport {
            schema_version: REPORT_SCHEMA_VERSION,
            phi: Vec::new(),
            entries: Vec::new(),
            failures: Vec::new(),
        };
        if self.candidates.is_empty() {
            return Ok((report, assignment));
        }
        let mut phis = Vec::new();
        for dk in DayKind::ALL {
            let phi = self.estimate_phi(&assignment, dk)?;
            report.phi.push((dk, phi.clone()));
            phis.push(phi);
        }
        for j in 0..self.candidates.len() {
            for dk in DayKind::ALL {
                match self.identify_customer(j, dk, &assignment, &phis[dk.index()]) {
                    Ok(entry) => {
                        assignment[j][dk.index()] = entry.posterior.best();
                        report.entries.push(entry);
                    }
                    Err(e) => report.failures.push(IdentificationFailure {
                        customer: self.candidates[j].id.clone(),
                        day_kind: dk,
                        error: e.to_string(),
                    }),
                }
            }
        }
        Ok((report, assignment))
    }
}
