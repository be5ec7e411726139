use std::path::Path;

use meterless::pipeline::artifacts::*;
use meterless::pipeline::{ExperimentConfig, Pipeline, STAGES};
use meterless::Error;

/// A scaled-down experiment that runs end to end in seconds.
fn small_config(out: &Path, seed: u64) -> ExperimentConfig {
    let text = r#"
[population]
months = 5
[population.residential]
count = 90
weekday_classes = 4
weekend_classes = 6
mean_kw = 1.2
[population.commercial]
count = 24
weekday_classes = 2
weekend_classes = 2
mean_kw = 1.7
[population.industrial]
count = 16
weekday_classes = 2
weekend_classes = 2
mean_kw = 0.75
[mtsl]
training_months = 4
max_epochs = 25
max_pairs = 400
[rbl]
max_iterations = 40
"#;
    let mut c = ExperimentConfig::parse(text).unwrap().with_seed(seed);
    c.output_dir = out.to_path_buf();
    c
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn full_run_is_deterministic_and_stages_rerun_from_artifacts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = Pipeline::new(small_config(a.path(), 11)).unwrap().run_all().unwrap();
    let second = Pipeline::new(small_config(b.path(), 11)).unwrap().run_all().unwrap();
    assert_eq!(first, second);
    for name in [METRICS_JSON, BANK_JSON, MODELS_JSON, IDENTIFICATION_JSON, ESTIMATES_CSV, LOAD_ESTIMATES_CSV] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name} differs between runs");
    }

    // Regenerate the data in a fresh directory, then resume from the
    // persisted bank instead of clustering again.
    let c = tempfile::tempdir().unwrap();
    let resumed = Pipeline::new(small_config(c.path(), 11)).unwrap();
    resumed.gen_data().unwrap();
    std::fs::copy(a.path().join(BANK_JSON), c.path().join(BANK_JSON)).unwrap();
    for stage in STAGES.iter().skip(2) {
        resumed.run(stage).unwrap();
    }
    assert_eq!(read(a.path(), METRICS_JSON), read(c.path(), METRICS_JSON));

    // Every stage can be rerun on its own from the files it left behind.
    resumed.run("estimate").unwrap();
    resumed.run("evaluate").unwrap();
    assert_eq!(read(a.path(), METRICS_JSON), read(c.path(), METRICS_JSON));

    let report = first;
    assert_eq!(report.clustering_ari.len(), 6);
    assert!(report.identification.is_some());
    assert!(report.state_estimation.is_some() && report.state_estimation_planted.is_some());
    for m in report.load_estimation.iter().chain(&report.baselines) {
        assert!(m.mape.is_finite() && m.samples > 0, "{m:?}");
    }
}

#[test]
fn different_seeds_give_different_data() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    Pipeline::new(small_config(a.path(), 1)).unwrap().gen_data().unwrap();
    Pipeline::new(small_config(b.path(), 2)).unwrap().gen_data().unwrap();
    assert_ne!(read(a.path(), POPULATION_CSV), read(b.path(), POPULATION_CSV));
    assert_ne!(read(a.path(), HEAD_MEASUREMENTS_CSV), read(b.path(), HEAD_MEASUREMENTS_CSV));
}

#[test]
fn missing_artifacts_name_the_failing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(small_config(dir.path(), 1)).unwrap();
    for stage in STAGES.iter().skip(1) {
        match p.run(stage) {
            Err(Error::Stage { stage: name, source }) => {
                assert_eq!(name, *stage);
                assert!(source.to_string().contains("missing artifact"), "{source}");
            }
            other => panic!("{stage}: expected a stage error, got {other:?}"),
        }
    }
    assert!(matches!(p.run("bogus"), Err(Error::InvalidInput(_))));
}

#[test]
fn generated_artifacts_load_back() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(small_config(dir.path(), 3)).unwrap();
    p.gen_data().unwrap();
    let feeder = meterless::feeder::load_feeder::<f64>(dir.path().join(FEEDER_FILE)).unwrap();
    let head = read_measurements(&dir.path().join(HEAD_MEASUREMENTS_CSV)).unwrap();
    assert_eq!(head.len(), meterless::calendar::HOURS_PER_MONTH);
    let volts = read_voltages(&dir.path().join(TRUE_VOLTAGES_CSV)).unwrap();
    assert_eq!(volts.len(), head.len() * feeder.n_nodes());
    let bills = read_bills(&dir.path().join(BILLS_CSV)).unwrap();
    assert_eq!(bills.len(), feeder.customers().len());
    let planted = read_planted(&dir.path().join(PLANTED_CSV)).unwrap();
    assert!(feeder.customers().iter().all(|c| planted.contains_key(&c.id)));
    let (population, _) = meterless::amigen::ingest_csv::<f64>(dir.path().join(POPULATION_CSV)).unwrap();
    assert_eq!(population.len(), 90 + 24 + 16);
}
