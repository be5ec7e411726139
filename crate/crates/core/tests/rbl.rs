use meterless::calendar::{day_kind_of_month_hour, DayKind, HOURS_PER_MONTH};
use meterless::feeder::{power_flow, Branch, CustomerSite, FeederModel, Node, PowerFlowConfig};
use meterless::rbl::*;
use meterless::{ClassId, CustomerType, SubsetKey};
use num_complex::Complex;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn feeder(n_customers: usize) -> FeederModel<f64> {
    let nodes = (0..4)
        .map(|id| Node {
            id,
            load_kw: 0.0,
            load_kvar: 0.0,
            customer_ids: Vec::new(),
        })
        .collect();
    let branches = [(0, 1), (1, 2), (1, 3)]
        .iter()
        .map(|&(a, b)| Branch {
            from_node: a,
            to_node: b,
            r: 0.02,
            x: 0.015,
        })
        .collect();
    let customers = (0..n_customers)
        .map(|i| CustomerSite {
            id: format!("R{i}"),
            kind: CustomerType::Residential,
            node: 1 + i % 3,
            mean_kw: 1.0,
        })
        .collect();
    FeederModel::with_customers(nodes, branches, customers, 0, 100.0, 0.48).unwrap()
}

fn class(dk: DayKind, index: usize) -> ClassId {
    ClassId {
        subset: SubsetKey::new(CustomerType::Residential, dk),
        index,
    }
}

/// Hourly kW of a smooth daily pattern with its peak at `peak`.
fn pattern(peak: f64, level: f64) -> Vec<f64> {
    (0..HOURS_PER_MONTH)
        .map(|h| {
            let t = (h % 24) as f64;
            level * (1.0 + 0.8 * ((t - peak) * std::f64::consts::PI / 12.0).cos())
        })
        .collect()
}

fn candidates(id: &str, series: [Vec<Vec<f64>>; 2]) -> CustomerCandidates<f64> {
    let [wd, we] = series;
    let wrap = |dk: DayKind, list: Vec<Vec<f64>>| {
        list.into_iter()
            .enumerate()
            .map(|(i, hours)| CandidateSeries {
                class: class(dk, i),
                hours,
            })
            .collect()
    };
    CustomerCandidates {
        id: id.into(),
        bill_kwh: 0.0,
        by_day_kind: [wrap(DayKind::Weekday, wd), wrap(DayKind::Weekend, we)],
        initial: [0, 0],
    }
}

/// Noise-free head samples for the given true per-customer demand.
fn head(feeder: &FeederModel<f64>, truth: &[Vec<f64>]) -> Vec<HeadSample<f64>> {
    (0..HOURS_PER_MONTH)
        .map(|h| {
            let kw: Vec<f64> = truth.iter().map(|s| s[h]).collect();
            let loads = feeder.customer_loads_pu(&kw);
            let pf = power_flow(feeder, &loads, Complex::new(1.0, 0.0), &PowerFlowConfig::default()).unwrap();
            HeadSample {
                hour: h,
                voltage: pf.voltages[feeder.slack_index()],
                current: pf.head_current(feeder),
            }
        })
        .collect()
}

#[test]
fn planted_customer_is_identified() {
    let f = feeder(3);
    let peaks = [3.0, 8.0, 13.0, 19.0];
    let options: Vec<Vec<f64>> = peaks.iter().map(|&p| pattern(p, 1.0)).collect();
    let others = [pattern(10.0, 0.8), pattern(20.0, 1.2)];
    let truth = vec![options[2].clone(), others[0].clone(), others[1].clone()];
    let hs = head(&f, &truth);
    let cands = vec![
        candidates("R0", [options.clone(), options.clone()]),
        candidates("R1", [vec![others[0].clone()], vec![others[0].clone()]]),
        candidates("R2", [vec![others[1].clone()], vec![others[1].clone()]]),
    ];
    let id = Identifier::new(&f, &cands, &hs, RblConfig::default()).unwrap();
    let (report, assignment) = id.identify_all().unwrap();
    assert_eq!(assignment[0], [2, 2]);
    for dk in DayKind::ALL {
        let e = report.entries.iter().find(|e| e.customer == "R0" && e.day_kind == dk).unwrap();
        assert_eq!(e.identified, class(dk, 2));
        assert!(e.reached_threshold);
        assert!(e.posterior.max_probability() >= 0.99);
        assert!(e.posterior.iterations <= 200);
    }
}

#[test]
fn single_candidate_is_certain() {
    let f = feeder(1);
    let s = pattern(12.0, 1.0);
    let hs = head(&f, &[s.clone()]);
    let cands = vec![candidates("R0", [vec![s.clone()], vec![s]])];
    let id = Identifier::new(&f, &cands, &hs, RblConfig::default()).unwrap();
    let (report, assignment) = id.identify_all().unwrap();
    assert_eq!(assignment, vec![[0, 0]]);
    for e in &report.entries {
        assert_eq!(e.posterior.probabilities, vec![1.0]);
        assert_eq!(e.posterior.iterations, 0);
        assert!(e.reached_threshold);
    }
}

#[test]
fn empty_customer_list_gives_empty_report() {
    let f = feeder(0);
    let id = Identifier::new(&f, &[], &[], RblConfig::default()).unwrap();
    let (report, assignment) = id.identify_all().unwrap();
    assert!(report.entries.is_empty() && report.failures.is_empty() && assignment.is_empty());
}

#[test]
fn report_round_trips() {
    let f = feeder(2);
    let a = pattern(6.0, 1.0);
    let b = pattern(18.0, 1.0);
    let truth = vec![b.clone(), a.clone()];
    let hs: Vec<_> = head(&f, &truth).into_iter().filter(|s| s.hour < 200).collect();
    let cands = vec![
        candidates("R0", [vec![a.clone(), b.clone()], vec![a.clone(), b.clone()]]),
        candidates("R1", [vec![a.clone()], vec![a.clone()]]),
    ];
    let (report, _) = Identifier::new(&f, &cands, &hs, RblConfig::default())
        .unwrap()
        .identify_all()
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    report.save(&path).unwrap();
    assert_eq!(IdentificationReport::load(&path).unwrap(), report);

    let mut csv = Vec::new();
    report.write_trajectories_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("customer,day_kind,iteration,class,probability\n"));
    let rows = report.entries.iter().map(|e| e.posterior.history.len() * e.posterior.classes.len()).sum::<usize>();
    assert_eq!(text.lines().count(), rows + 1);
}

#[test]
fn identification_uses_only_hours_of_its_day_kind() {
    let f = feeder(1);
    let a = pattern(6.0, 1.0);
    let b = pattern(18.0, 1.0);
    // Weekday hours follow `a`, weekend hours follow `b`.
    let truth: Vec<f64> = (0..HOURS_PER_MONTH)
        .map(|h| if day_kind_of_month_hour(h) == DayKind::Weekday { a[h] } else { b[h] })
        .collect();
    let hs = head(&f, &[truth]);
    let cands = vec![candidates("R0", [vec![a.clone(), b.clone()], vec![a, b]])];
    let (_, assignment) = Identifier::new(&f, &cands, &hs, RblConfig::default())
        .unwrap()
        .identify_all()
        .unwrap();
    assert_eq!(assignment, vec![[0, 1]]);
}

/// Log posterior ratio of class 0 over class 1 after `steps` updates with
/// Gaussian residuals whose variance matches the weighting.
fn log_ratio_gain(seed: u64, steps: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = 0.3;
    let noise = Normal::new(0.0, sigma).unwrap();
    let phi = Phi {
        diagonal: vec![1.0 / (sigma * sigma); 2],
    };
    let classes = vec![class(DayKind::Weekday, 0), class(DayKind::Weekday, 1)];
    let mut state = PosteriorState::uniform("x", classes).unwrap();
    let offset = [0.1, -0.05];
    for _ in 0..steps {
        let e = [noise.sample(&mut rng), noise.sample(&mut rng)];
        let right = e.to_vec();
        let wrong = vec![e[0] + offset[0], e[1] + offset[1]];
        state = update_posterior(&state, &[right, wrong], &phi).unwrap();
    }
    let p = &state.probabilities;
    p[0].ln() - p[1].max(f64::MIN_POSITIVE).ln()
}

#[test]
fn true_class_gains_evidence_in_expectation() {
    // One-sided sign test at 5 %: P(X >= 59 | n = 100, p = 0.5) < 0.05.
    let positives = (0..100).filter(|&seed| log_ratio_gain(seed, 20) > 0.0).count();
    assert!(positives >= 59, "{positives} of 100 trials favoured the true class");
}

proptest! {
    #[test]
    fn update_is_permutation_equivariant(
        r in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 2..6),
        rot in 0usize..6,
    ) {
        let n = r.len();
        let classes: Vec<ClassId> = (0..n).map(|i| class(DayKind::Weekday, i)).collect();
        let phi = Phi { diagonal: vec![1.5, 0.5] };
        let base = update_posterior(&PosteriorState::uniform("x", classes.clone()).unwrap(), &r, &phi).unwrap();
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        let r_perm: Vec<Vec<f64>> = perm.iter().map(|&i| r[i].clone()).collect();
        let c_perm: Vec<ClassId> = perm.iter().map(|&i| classes[i]).collect();
        let moved = update_posterior(&PosteriorState::uniform("x", c_perm).unwrap(), &r_perm, &phi).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert!((moved.probabilities[k] - base.probabilities[i]).abs() < 1e-12);
        }
        prop_assert!((base.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(base.probabilities.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn update_ignores_a_common_likelihood_shift(
        r in prop::collection::vec(-2.0f64..2.0, 2..6),
        shift in 0.0f64..30.0,
    ) {
        // Adding a component with the same value for every class adds a
        // constant to every quadratic form.
        let n = r.len();
        let classes: Vec<ClassId> = (0..n).map(|i| class(DayKind::Weekday, i)).collect();
        let prior = PosteriorState::uniform("x", classes).unwrap();
        let one = update_posterior(&prior, &r.iter().map(|&v| vec![v]).collect::<Vec<_>>(), &Phi { diagonal: vec![1.0] }).unwrap();
        let two = update_posterior(
            &prior,
            &r.iter().map(|&v| vec![v, shift]).collect::<Vec<_>>(),
            &Phi { diagonal: vec![1.0, 1.0] },
        )
        .unwrap();
        for (a, b) in one.probabilities.iter().zip(&two.probabilities) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
