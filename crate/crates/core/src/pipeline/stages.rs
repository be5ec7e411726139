use std::collections::HashMap;
use std::path::{Path, PathBuf};

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::artifacts::*;
use super::config::{ExperimentConfig, DEFAULT_FEEDER};
use crate::amigen::{
    bill_from_truth, generate_customers, generate_population, ingest_csv, partition_subsets, write_csv, ClassLibrary,
    CustomerRecord, SiteSpec,
};
use crate::bcse::{build_measurements, solve_wls, Measurement};
use crate::calendar::{day_kind_of_month_hour, DayKind, HOURS_PER_DAY, HOURS_PER_MONTH};
use crate::customer::{ClassId, CustomerType, PlantedClass, SubsetKey};
use crate::error::{Error, Result};
use crate::feeder::{load_feeder, parse_feeder, power_flow, write_feeder, FeederModel, PowerFlowConfig};
use crate::metrics::{
    adjusted_rand_index, baseline_profile_scaling, baseline_uniform, IdentificationScore, MetricsReport, ScopeMetrics, VoltageErrors,
    METRICS_SCHEMA_VERSION,
};
use crate::mtsl::{disaggregate_pair, timescale_correlation, train_all, ModelSet};
use crate::rbl::{build_candidates, HeadSample, IdentificationReport, Identifier};
use crate::spectral::{build_pattern_bank, PatternBank};

/// Pipeline stages, in execution order.
pub const STAGES: [&str; 7] = [
    "gen-data",
    "cluster",
    "train-mtsl",
    "identify",
    "disaggregate",
    "estimate",
    "evaluate",
];

/// Runs pipeline stages against one output directory. Each stage reads its
/// inputs from files written by earlier stages.
pub struct Pipeline {
    config: ExperimentConfig,
    out: PathBuf,
}

fn staged<R>(stage: &'static str, f: impl FnOnce() -> Result<R>) -> Result<R> {
    log::info!("stage {stage}");
    f().map_err(|e| Error::Stage {
        stage,
        source: Box::new(e),
    })
}

impl Pipeline {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let out = config.output_dir.clone();
        Ok(Self { config, out })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn ensure_out(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))
    }

    fn require(&self, name: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(Error::invalid(format!(
                "missing artifact {} (run the producing stage first)",
                p.display()
            )))
        }
    }

    fn source_feeder(&self) -> Result<FeederModel<f64>> {
        match &self.config.feeder {
            Some(p) => load_feeder(p),
            None => parse_feeder(DEFAULT_FEEDER, false),
        }
    }

    fn feeder(&self) -> Result<FeederModel<f64>> {
        load_feeder(self.require(FEEDER_FILE)?)
    }

    fn population(&self) -> Result<Vec<CustomerRecord<f64>>> {
        Ok(ingest_csv(self.require(POPULATION_CSV)?)?.0)
    }

    fn feeder_records(&self) -> Result<Vec<CustomerRecord<f64>>> {
        Ok(ingest_csv(self.require(FEEDER_LOADS_CSV)?)?.0)
    }

    fn bank(&self) -> Result<PatternBank<f64>> {
        PatternBank::load(self.require(BANK_JSON)?)
    }

    fn models(&self) -> Result<ModelSet<f64>> {
        ModelSet::load(self.require(MODELS_JSON)?)
    }

    /// First-month bills of the feeder customers.
    fn bills(&self) -> Result<HashMap<String, f64>> {
        Ok(read_bills(&self.require(BILLS_CSV)?)?
            .into_iter()
            .filter(|b| b.month == 0)
            .map(|b| (b.customer_id, b.energy_kwh))
            .collect())
    }

    pub fn run(&self, stage: &str) -> Result<()> {
        match stage {
            "gen-data" => self.gen_data(),
            "cluster" => self.cluster(),
            "train-mtsl" => self.train_mtsl(),
            "identify" => self.identify(),
            "disaggregate" => self.disaggregate(),
            "estimate" => self.estimate(),
            "evaluate" => self.evaluate().map(|_| ()),
            other => Err(Error::invalid(format!("unknown stage '{other}'"))),
        }
    }

    pub fn run_all(&self) -> Result<MetricsReport> {
        for stage in &STAGES[..STAGES.len() - 1] {
            self.run(stage)?;
        }
        self.evaluate()
    }

    /// Metered population, unmetered feeder customers, their bills, and the
    /// head-of-feeder measurements of the first feeder month.
    pub fn gen_data(&self) -> Result<()> {
        staged("gen-data", || {
            self.ensure_out()?;
            let cfg = &self.config;
            let population = generate_population::<f64>(&cfg.population)?;
            write_csv(&population, file(&self.path(POPULATION_CSV))?)?;

            let feeder = self.source_feeder()?;
            write_feeder(&feeder, self.path(FEEDER_FILE))?;
            let library = ClassLibrary::from_spec(&cfg.population);
            let sites: Vec<SiteSpec> = feeder
                .customers()
                .iter()
                .map(|c| SiteSpec {
                    id: c.id.clone(),
                    kind: c.kind,
                    mean_kw: c.mean_kw,
                    class: None,
                })
                .collect();
            let feeder_records = generate_customers::<f64>(
                &library,
                &sites,
                cfg.feeder_data.months,
                cfg.feeder_data.noise_sigma,
                cfg.population.start,
                cfg.feeder_seed(),
            )?;
            write_csv(&feeder_records, file(&self.path(FEEDER_LOADS_CSV))?)?;

            let planted: Vec<PlantedRow> = population
                .iter()
                .chain(&feeder_records)
                .filter_map(|r| {
                    r.true_class.map(|c| PlantedRow {
                        customer_id: r.id.clone(),
                        kind: r.kind,
                        weekday: c.weekday,
                        weekend: c.weekend,
                    })
                })
                .collect();
            write_planted(&self.path(PLANTED_CSV), &planted)?;

            let mut bills = Vec::new();
            for r in &feeder_records {
                for m in r.complete_months() {
                    let b = bill_from_truth(r, m)?;
                    bills.push(BillRow {
                        customer_id: b.customer_id,
                        month: b.month,
                        energy_kwh: b.energy_kwh,
                    });
                }
            }
            write_bills(&self.path(BILLS_CSV), &bills)?;

            let (head, truth) = simulate_month(&feeder, &feeder_records, cfg)?;
            write_measurements(&self.path(HEAD_MEASUREMENTS_CSV), &head)?;
            write_voltages(&self.path(TRUE_VOLTAGES_CSV), &truth)?;

            write_table(
                &self.path(CORRELATION_CSV),
                timescale_correlation(&population).into_iter().map(|e| CorrelationRow {
                    kind: e.kind,
                    coarse: e.coarse,
                    fine: e.fine,
                    samples: e.samples,
                    rho: e.rho,
                    error: e.error,
                }),
            )?;
            Ok(())
        })
    }

    pub fn cluster(&self) -> Result<()> {
        staged("cluster", || {
            let records = self.population()?;
            let subsets = partition_subsets(&records)?;
            let bank = build_pattern_bank(&subsets, &self.config.cluster)?;
            bank.save(self.path(BANK_JSON))?;
            bank.write_dbi_csv(file(&self.path(DBI_CSV))?)?;
            bank.write_centroids_csv(file(&self.path(CENTROIDS_CSV))?)?;
            Ok(())
        })
    }

    pub fn train_mtsl(&self) -> Result<()> {
        staged("train-mtsl", || {
            let records = self.population()?;
            let bank = self.bank()?;
            let months: Vec<usize> = (0..self.config.mtsl.training_months).collect();
            let models = train_all(&bank, &records, Some(&months), &self.config.mtsl.train)?;
            models.save(self.path(MODELS_JSON))?;
            write_table(
                &self.path(TRAINING_CSV),
                models.models.iter().flat_map(|m| {
                    m.reports.iter().map(move |r| TrainingRow {
                        class: m.class.to_string(),
                        layer: r.layer.clone(),
                        position: r.position,
                        epochs: r.epochs,
                        best_epoch: r.best_epoch,
                        test_rmse: r.test_rmse,
                    })
                }),
            )?;
            Ok(())
        })
    }

    /// Identifies the weekday and weekend class of every feeder customer.
    pub fn identify(&self) -> Result<()> {
        staged("identify", || {
            let feeder = self.feeder()?;
            let bank = self.bank()?;
            let models = self.models()?;
            let bills = self.bills()?;
            let head = head_samples(&read_measurements(&self.require(HEAD_MEASUREMENTS_CSV)?)?)?;
            let candidates = build_candidates(&feeder, &bank, &models, &bills)?;
            let identifier = Identifier::new(&feeder, &candidates, &head, self.config.rbl)?;
            let (report, assignment) = identifier.identify_all()?;
            for f in &report.failures {
                log::warn!("identification of {} ({}) failed: {}", f.customer, f.day_kind, f.error);
            }
            report.save(self.path(IDENTIFICATION_JSON))?;
            report.write_trajectories_csv(file(&self.path(TRAJECTORIES_CSV))?)?;

            let rows: Vec<AssignmentRow> = feeder
                .customers()
                .iter()
                .zip(&candidates)
                .zip(&assignment)
                .map(|((site, cand), a)| AssignmentRow {
                    customer_id: site.id.clone(),
                    kind: site.kind,
                    weekday_class: cand.by_day_kind[0][a[0]].class.index,
                    weekend_class: cand.by_day_kind[1][a[1]].class.index,
                })
                .collect();
            write_assignments(&self.path(ASSIGNMENTS_CSV), &rows)?;

            Ok(())
        })
    }

    /// Hourly pseudo-loads from the identified classes and the per-hour
    /// measurement sets they feed into state estimation.
    pub fn disaggregate(&self) -> Result<()> {
        staged("disaggregate", || {
            let feeder = self.feeder()?;
            let models = self.models()?;
            let bills = self.bills()?;
            let rows = read_assignments(&self.require(ASSIGNMENTS_CSV)?)?;
            let head = head_samples(&read_measurements(&self.require(HEAD_MEASUREMENTS_CSV)?)?)?;
            let pseudo = pseudo_series(&feeder, &models, &rows, &bills)?;
            write_table(
                &self.path(PSEUDO_LOADS_CSV),
                feeder.customers().iter().zip(&pseudo).flat_map(|(c, series)| {
                    series.iter().enumerate().map(move |(hour, &kwh)| PseudoRow {
                        customer_id: c.id.clone(),
                        hour,
                        kwh,
                    })
                }),
            )?;
            let steps: Vec<(usize, Vec<Measurement<f64>>)> = head
                .iter()
                .map(|s| {
                    let kw: Vec<f64> = pseudo.iter().map(|p| p[s.hour]).collect();
                    let loads = feeder.customer_loads_pu(&kw);
                    (s.hour, build_measurements(&feeder, s.voltage, s.current, &loads, &self.config.bcse))
                })
                .collect();
            write_measurements(&self.path(MEASUREMENTS_CSV), &steps)?;
            Ok(())
        })
    }

    pub fn estimate(&self) -> Result<()> {
        staged("estimate", || {
            let feeder = self.feeder()?;
            let steps = read_measurements(&self.require(MEASUREMENTS_CSV)?)?;
            let results: Vec<_> = steps
                .par_iter()
                .map(|(step, ms)| (*step, solve_wls(&feeder, ms, &self.config.bcse)))
                .collect();
            let mut volts = Vec::new();
            let mut residuals = Vec::new();
            let mut failed = 0;
            for (step, r) in results {
                match r {
                    Ok(est) => {
                        for (node, v) in feeder.nodes().iter().zip(&est.voltages) {
                            volts.push(VoltageRow {
                                step,
                                node: node.id,
                                re: v.re,
                                im: v.im,
                            });
                        }
                        for r in est.residuals {
                            residuals.push(ResidualRow {
                                step,
                                kind: r.kind.as_str(),
                                location: r.location,
                                re: r.value.re,
                                im: r.value.im,
                                weighted: r.weighted,
                            });
                        }
                    }
                    Err(e) => {
                        failed += 1;
                        log::warn!("step {step}: state estimation failed: {e}");
                    }
                }
            }
            if failed == steps.len() && failed > 0 {
                return Err(Error::Numerical("state estimation failed at every step".into()));
            }
            write_voltages(&self.path(ESTIMATES_CSV), &volts)?;
            write_table(&self.path(RESIDUALS_CSV), residuals)?;
            Ok(())
        })
    }

    pub fn evaluate(&self) -> Result<MetricsReport> {
        staged("evaluate", || {
            let planted = read_planted(&self.require(PLANTED_CSV)?)?;
            let bank = self.bank()?;
            let models = self.models()?;
            let population = self.population()?;
            let feeder = self.feeder()?;
            let feeder_records = self.feeder_records()?;
            let bills = self.bills()?;
            let assignments = read_assignments(&self.require(ASSIGNMENTS_CSV)?)?;
            let id_report = IdentificationReport::load(self.require(IDENTIFICATION_JSON)?)?;

            let mapping = ClassMapping::new(&bank, &planted);
            let clustering_ari = mapping.ari.clone();

            // Hourly load estimates for the first feeder month.
            let truth: Vec<Vec<f64>> = feeder
                .customers()
                .iter()
                .map(|c| {
                    let r = feeder_records
                        .iter()
                        .find(|r| r.id == c.id)
                        .ok_or_else(|| Error::invalid(format!("no load record for {}", c.id)))?;
                    r.month_values(0)
                })
                .collect::<Result<_>>()?;
            let identified = pseudo_series(&feeder, &models, &assignments, &bills)?;
            let planted_rows: Vec<AssignmentRow> = feeder
                .customers()
                .iter()
                .map(|c| {
                    let p = planted
                        .get(&c.id)
                        .ok_or_else(|| Error::invalid(format!("no planted class for {}", c.id)))?;
                    let pick = |dk: DayKind, idx: usize| {
                        mapping
                            .to_bank(SubsetKey::new(c.kind, dk), idx)
                            .ok_or_else(|| Error::invalid(format!("planted class {idx} of {} has no cluster", c.kind)))
                    };
                    Ok(AssignmentRow {
                        customer_id: c.id.clone(),
                        kind: c.kind,
                        weekday_class: pick(DayKind::Weekday, p.weekday)?,
                        weekend_class: pick(DayKind::Weekend, p.weekend)?,
                    })
                })
                .collect::<Result<_>>()?;
            let with_planted = pseudo_series(&feeder, &models, &planted_rows, &bills)?;
            let identification = score_identification(&assignments, &planted_rows, &id_report, self.config.rbl.threshold);
            let profiles = type_profiles(&population, self.config.mtsl.training_months);
            let mut uniform = Vec::new();
            let mut scaled = Vec::new();
            for c in feeder.customers() {
                let bill = bills[&c.id];
                uniform.push(baseline_uniform(bill));
                let profile = profiles
                    .get(&c.kind)
                    .ok_or_else(|| Error::invalid(format!("no metered {} customers for a type profile", c.kind)))?;
                scaled.push(baseline_profile_scaling(bill, profile)?);
            }

            let mut load_estimation = Vec::new();
            load_estimation.extend(scopes("identified", &truth, &identified)?);
            load_estimation.extend(scopes("planted", &truth, &with_planted)?);
            let mut baselines = Vec::new();
            baselines.extend(scopes("uniform", &truth, &uniform)?);
            baselines.extend(scopes("profile_scaling", &truth, &scaled)?);

            let total = |series: &[Vec<f64>], h: usize| series.iter().map(|s| s[h]).sum::<f64>();
            write_table(
                &self.path(LOAD_ESTIMATES_CSV),
                (0..HOURS_PER_MONTH).map(|h| LoadRow {
                    hour: h,
                    day_kind: day_kind_of_month_hour(h).as_str(),
                    actual: total(&truth, h),
                    identified: total(&identified, h),
                    planted: total(&with_planted, h),
                    uniform: total(&uniform, h),
                    profile_scaling: total(&scaled, h),
                }),
            )?;

            let true_v = read_voltages(&self.require(TRUE_VOLTAGES_CSV)?)?;
            let est_v = read_voltages(&self.require(ESTIMATES_CSV)?)?;
            let state_estimation = voltage_errors(&feeder, &true_v, &est_v);
            let head = head_samples(&read_measurements(&self.require(HEAD_MEASUREMENTS_CSV)?)?)?;
            let planted_v = estimate_voltages(&feeder, &with_planted, &head, &self.config.bcse);
            let state_estimation_planted = voltage_errors(&feeder, &true_v, &planted_v);

            let report = MetricsReport {
                schema_version: METRICS_SCHEMA_VERSION,
                load_estimation,
                baselines,
                clustering_ari,
                identification,
                state_estimation,
                state_estimation_planted,
            };
            let text = serde_json::to_string_pretty(&report)?;
            let path = self.path(METRICS_JSON);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            Ok(report)
        })
    }
}

fn file(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|e| Error::io(path, e))
}

/// Power flow of every hour of the first month with the true loads, plus
/// noisy head phasor measurements.
fn simulate_month(
    feeder: &FeederModel<f64>,
    records: &[CustomerRecord<f64>],
    cfg: &ExperimentConfig,
) -> Result<(Vec<(usize, Vec<Measurement<f64>>)>, Vec<VoltageRow>)> {
    let months: Vec<Vec<f64>> = feeder
        .customers()
        .iter()
        .map(|c| {
            records
                .iter()
                .find(|r| r.id == c.id)
                .ok_or_else(|| Error::invalid(format!("no load record for {}", c.id)))?
                .month_values(0)
        })
        .collect::<Result<_>>()?;
    let slack_v = Complex::new(cfg.feeder_data.slack_voltage, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.pmu_seed());
    let sigma = cfg.feeder_data.pmu_noise;
    let mut noisy = |v: Complex<f64>| {
        let a: f64 = StandardNormal.sample(&mut rng);
        let b: f64 = StandardNormal.sample(&mut rng);
        v + Complex::new(a, b) * (sigma * v.norm())
    };
    let weight = cfg.bcse.pmu_weight;
    let slack = feeder.slack_node();
    let mut head = Vec::with_capacity(HOURS_PER_MONTH);
    let mut truth = Vec::with_capacity(HOURS_PER_MONTH * feeder.n_nodes());
    for h in 0..HOURS_PER_MONTH {
        let kw: Vec<f64> = months.iter().map(|m| m[h]).collect();
        let loads = feeder.customer_loads_pu(&kw);
        let pf = power_flow(feeder, &loads, slack_v, &PowerFlowConfig::default())?;
        for (node, v) in feeder.nodes().iter().zip(&pf.voltages) {
            truth.push(VoltageRow {
                step: h,
                node: node.id,
                re: v.re,
                im: v.im,
            });
        }
        let v = noisy(pf.voltages[feeder.slack_index()]);
        let i = noisy(pf.head_current(feeder));
        head.push((
            h,
            vec![
                Measurement {
                    kind: crate::bcse::MeasurementKind::HeadVoltagePhasor,
                    location: slack,
                    value: v,
                    weight,
                },
                Measurement {
                    kind: crate::bcse::MeasurementKind::HeadCurrentPhasor,
                    location: slack,
                    value: i,
                    weight,
                },
            ],
        ));
    }
    Ok((head, truth))
}

fn head_samples(steps: &[(usize, Vec<Measurement<f64>>)]) -> Result<Vec<HeadSample<f64>>> {
    use crate::bcse::MeasurementKind::*;
    steps
        .iter()
        .map(|(step, ms)| {
            let find = |kind| {
                ms.iter()
                    .find(|m| m.kind == kind)
                    .map(|m| m.value)
                    .ok_or_else(|| Error::invalid(format!("step {step} lacks a {}", kind.as_str())))
            };
            Ok(HeadSample {
                hour: *step,
                voltage: find(HeadVoltagePhasor)?,
                current: find(HeadCurrentPhasor)?,
            })
        })
        .collect()
}

/// Voltage errors over every non-slack node and hour present in both maps.
fn voltage_errors(
    feeder: &FeederModel<f64>,
    truth: &HashMap<(usize, usize), Complex<f64>>,
    estimate: &HashMap<(usize, usize), Complex<f64>>,
) -> Option<VoltageErrors> {
    let slack = feeder.slack_node();
    let mut pairs: Vec<_> = estimate
        .iter()
        .filter(|((_, node), _)| *node != slack)
        .filter_map(|(key, est)| truth.get(key).map(|t| (*key, *t, *est)))
        .collect();
    pairs.sort_by_key(|(key, _, _)| *key);
    (!pairs.is_empty()).then(|| VoltageErrors::from_pairs(pairs.into_iter().map(|(_, t, e)| (t, e))))
}

/// State estimation at every head sample with the given pseudo-loads; hours
/// that fail to converge are left out.
fn estimate_voltages(
    feeder: &FeederModel<f64>,
    pseudo: &[Vec<f64>],
    head: &[HeadSample<f64>],
    config: &crate::bcse::BcseConfig,
) -> HashMap<(usize, usize), Complex<f64>> {
    let solved: Vec<_> = head
        .par_iter()
        .filter_map(|s| {
            let kw: Vec<f64> = pseudo.iter().map(|p| p[s.hour]).collect();
            let loads = feeder.customer_loads_pu(&kw);
            let ms = build_measurements(feeder, s.voltage, s.current, &loads, config);
            solve_wls(feeder, &ms, config).ok().map(|est| (s.hour, est.voltages))
        })
        .collect();
    solved
        .into_iter()
        .flat_map(|(hour, volts)| {
            feeder
                .nodes()
                .iter()
                .zip(volts)
                .map(move |(node, v)| ((hour, node.id), v))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Identified bank classes against the planted classes mapped into the bank.
fn score_identification(
    identified: &[AssignmentRow],
    planted: &[AssignmentRow],
    report: &IdentificationReport,
    threshold: f64,
) -> Option<IdentificationScore> {
    if identified.is_empty() {
        return None;
    }
    let (mut both, mut wd, mut we, mut confident) = (0, 0, 0, 0);
    for truth in planted {
        let Some(found) = identified.iter().find(|a| a.customer_id == truth.customer_id) else {
            continue;
        };
        let ok_wd = found.weekday_class == truth.weekday_class;
        let ok_we = found.weekend_class == truth.weekend_class;
        wd += usize::from(ok_wd);
        we += usize::from(ok_we);
        both += usize::from(ok_wd && ok_we);
        let sure = |dk: DayKind, class: usize| {
            report
                .entries
                .iter()
                .find(|e| e.customer == truth.customer_id && e.day_kind == dk)
                .and_then(|e| {
                    let pos = e.posterior.classes.iter().position(|c| c.index == class)?;
                    Some(e.posterior.probabilities[pos] >= threshold)
                })
                .unwrap_or(false)
        };
        confident += usize::from(sure(DayKind::Weekday, truth.weekday_class) && sure(DayKind::Weekend, truth.weekend_class));
    }
    let n = identified.len() as f64;
    Some(IdentificationScore {
        customers: identified.len(),
        accuracy: both as f64 / n,
        weekday_accuracy: wd as f64 / n,
        weekend_accuracy: we as f64 / n,
        confident: confident as f64 / n,
    })
}

/// Hourly pseudo-loads of each feeder customer (feeder order) under the
/// given class assignments.
fn pseudo_series(
    feeder: &FeederModel<f64>,
    models: &ModelSet<f64>,
    rows: &[AssignmentRow],
    bills: &HashMap<String, f64>,
) -> Result<Vec<Vec<f64>>> {
    feeder
        .customers()
        .iter()
        .map(|c| {
            let row = rows
                .iter()
                .find(|r| r.customer_id == c.id)
                .ok_or_else(|| Error::invalid(format!("no class assignment for {}", c.id)))?;
            let model = |dk: DayKind, index: usize| {
                let id = ClassId {
                    subset: SubsetKey::new(c.kind, dk),
                    index,
                };
                models
                    .get(id)
                    .ok_or_else(|| Error::invalid(format!("no trained model for class {id}")))
            };
            let bill = *bills
                .get(&c.id)
                .ok_or_else(|| Error::invalid(format!("customer {} has no bill", c.id)))?;
            Ok(disaggregate_pair(
                model(DayKind::Weekday, row.weekday_class)?,
                model(DayKind::Weekend, row.weekend_class)?,
                bill,
            ))
        })
        .collect()
}

/// Unit-sum average daily profile per customer type over the given months.
fn type_profiles(records: &[CustomerRecord<f64>], months: usize) -> HashMap<CustomerType, Vec<f64>> {
    let mut sums: HashMap<CustomerType, Vec<f64>> = HashMap::new();
    for r in records {
        for m in r.complete_months().into_iter().filter(|&m| m < months) {
            let Ok(values) = r.month_values(m) else { continue };
            let acc = sums.entry(r.kind).or_insert_with(|| vec![0.0; HOURS_PER_DAY]);
            for (h, v) in values.iter().enumerate() {
                acc[h % HOURS_PER_DAY] += v;
            }
        }
    }
    sums.into_iter()
        .filter_map(|(k, v)| {
            let total: f64 = v.iter().sum();
            (total > 0.0).then(|| (k, v.iter().map(|x| x / total).collect()))
        })
        .collect()
}

/// Feeder-level and pooled per-customer accuracy, split by day kind.
fn scopes(label: &str, truth: &[Vec<f64>], estimate: &[Vec<f64>]) -> Result<Vec<ScopeMetrics>> {
    let mut out = Vec::new();
    for dk in DayKind::ALL {
        let hours: Vec<usize> = (0..HOURS_PER_MONTH).filter(|&h| day_kind_of_month_hour(h) == dk).collect();
        let feeder_total = |s: &[Vec<f64>]| -> Vec<f64> { hours.iter().map(|&h| s.iter().map(|c| c[h]).sum()).collect() };
        out.push(ScopeMetrics::compute(
            format!("{label}/feeder_{dk}"),
            &feeder_total(truth),
            &feeder_total(estimate),
        )?);
        let pooled = |s: &[Vec<f64>]| -> Vec<f64> { s.iter().flat_map(|c| hours.iter().map(move |&h| c[h])).collect() };
        out.push(ScopeMetrics::compute(
            format!("{label}/customer_{dk}"),
            &pooled(truth),
            &pooled(estimate),
        )?);
    }
    Ok(out)
}

/// Correspondence between bank classes and planted classes, by majority
/// vote of each class's members.
struct ClassMapping {
    /// Planted index to the bank class holding most of its customers.
    backward: HashMap<(SubsetKey, usize), usize>,
    ari: Vec<(String, f64)>,
}

impl ClassMapping {
    fn new(bank: &PatternBank<f64>, planted: &HashMap<String, PlantedClass>) -> Self {
        let mut backward = HashMap::new();
        let mut ari = Vec::new();
        for subset in &bank.subsets {
            let key = subset.key();
            let mut labels = Vec::new();
            let mut truth = Vec::new();
            let mut votes: HashMap<(usize, usize), usize> = HashMap::new();
            for class in &subset.classes {
                for id in &class.member_ids {
                    if let Some(p) = planted.get(id) {
                        let t = p.for_day_kind(key.day_kind);
                        labels.push(class.index);
                        truth.push(t);
                        *votes.entry((class.index, t)).or_default() += 1;
                    }
                }
            }
            let mut sorted: Vec<_> = votes.into_iter().collect();
            sorted.sort();
            let mut best_bwd: HashMap<usize, (usize, usize)> = HashMap::new();
            for ((class, t), n) in sorted {
                if best_bwd.get(&t).is_none_or(|&(_, m)| n > m) {
                    best_bwd.insert(t, (class, n));
                }
            }
            for (t, (class, _)) in best_bwd {
                backward.insert((key, t), class);
            }
            if truth.len() >= 2 {
                if let Ok(a) = adjusted_rand_index(&labels, &truth) {
                    ari.push((key.to_string(), a));
                }
            }
        }
        Self { backward, ari }
    }

    fn to_bank(&self, subset: SubsetKey, planted: usize) -> Option<usize> {
        self.backward.get(&(subset, planted)).copied()
    }
}

#[derive(Serialize)]
struct CorrelationRow {
    #[serde(rename = "type")]
    kind: CustomerType,
    coarse: String,
    fine: String,
    samples: usize,
    rho: Option<f64>,
    error: Option<String>,
}

#[derive(Serialize)]
struct PseudoRow {
    customer_id: String,
    hour: usize,
    kwh: f64,
}

#[derive(Serialize)]
struct TrainingRow {
    class: String,
    layer: String,
    position: usize,
    epochs: usize,
    best_epoch: usize,
    test_rmse: f64,
}

#[derive(Serialize)]
struct ResidualRow {
    step: usize,
    kind: &'static str,
    location: usize,
    re: f64,
    im: f64,
    weighted: f64,
}

#[derive(Serialize)]
struct LoadRow {
    hour: usize,
    day_kind: &'static str,
    actual: f64,
    identified: f64,
    planted: f64,
    uniform: f64,
    profile_scaling: f64,
}
