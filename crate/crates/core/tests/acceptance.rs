use std::path::Path;
use std::time::{Duration, Instant};

use meterless::amigen::{generate_population, partition_subsets, PopulationSpec, TypeSpec};
use meterless::bcse::{exact_measurements, measurement_model, solve_wls, BcseConfig};
use meterless::calendar::{DayKind, HOURS_PER_DAY, HOURS_PER_MONTH};
use meterless::feeder::{power_flow, random_loads, random_radial, PowerFlowConfig, RandomFeederSpec};
use meterless::metrics::{adjusted_rand_index, MetricsReport};
use meterless::mtsl::{disaggregate_pair, train_from_sets, Regressor, TrainConfig, TrainingSets};
use meterless::pipeline::{ExperimentConfig, Pipeline, STAGES};
use meterless::rbl::{update_posterior, Phi, PosteriorState};
use meterless::spectral::{davies_bouldin, select_k, shapes, AffinityGraph, ClusterConfig, SpectralBasis};
use meterless::{ClassId, CustomerType, SubsetKey};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn clustering_recovery() -> Outcome {
    let none = TypeSpec {
        count: 0,
        weekday_classes: 1,
        weekend_classes: 1,
        mean_kw: 1.0,
    };
    let spec = PopulationSpec {
        residential: TypeSpec {
            count: 200,
            weekday_classes: 4,
            weekend_classes: 6,
            mean_kw: 1.2,
        },
        commercial: none,
        industrial: none,
        months: 2,
        noise_sigma: 0.05,
        seed: 21,
        ..PopulationSpec::default()
    };
    let start = Instant::now();
    let records = generate_population::<f64>(&spec).unwrap();
    let subsets = partition_subsets(&records).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for dk in DayKind::ALL {
        let subset = subsets
            .iter()
            .find(|s| s.kind == CustomerType::Residential && s.day_kind == dk)
            .unwrap();
        let sel = select_k(&shapes(&subset.profiles), 2..=10, &ClusterConfig::default()).unwrap();
        let planted: Vec<usize> = subset
            .profiles
            .iter()
            .map(|p| {
                let r = records.iter().find(|r| r.id == p.owner).unwrap();
                r.true_class.unwrap().for_day_kind(dk)
            })
            .collect();
        let ari = adjusted_rand_index(&sel.labels, &planted).unwrap();
        let expected = spec.residential.classes(dk);
        pass &= sel.k == expected && ari >= 0.9;
        parts.push(format!("{dk}: k {} (planted {expected}), ARI {ari:.4}", sel.k));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(60);
    outcome(pass, format!("{}; {:.1} s", parts.join(", "), elapsed.as_secs_f64()))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn brute_dbi(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let k = labels.iter().max().unwrap() + 1;
    let mut cent = vec![Vec::new(); k];
    let mut scat = vec![0.0; k];
    let mut present = Vec::new();
    for c in 0..k {
        let members: Vec<&Vec<f64>> = points.iter().zip(labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
        if members.is_empty() {
            continue;
        }
        present.push(c);
        let mut m = vec![0.0; members[0].len()];
        for p in &members {
            for (acc, v) in m.iter_mut().zip(p.iter()) {
                *acc += v / members.len() as f64;
            }
        }
        scat[c] = members.iter().map(|p| dist(p, &m)).sum::<f64>() / members.len() as f64;
        cent[c] = m;
    }
    let mut acc = 0.0;
    for &i in &present {
        let mut worst = f64::MIN;
        for &j in &present {
            if i != j {
                worst = worst.max((scat[i] + scat[j]) / dist(&cent[i], &cent[j]));
            }
        }
        acc += worst;
    }
    acc / present.len() as f64
}

/// Affinity and normalized affinity computed entry by entry.
fn brute_graph(points: &[Vec<f64>], rank: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = points.len();
    let mut diameter: f64 = 0.0;
    let mut alphas = Vec::new();
    for i in 0..n {
        let mut d: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist(&points[i], &points[j])).collect();
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        diameter = diameter.max(*d.last().unwrap());
        alphas.push(d[rank - 1]);
    }
    for a in &mut alphas {
        *a = a.max(1e-9 * diameter);
    }
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                w[i][j] = (-dist(&points[i], &points[j]).powi(2) / (alphas[i] * alphas[j])).exp();
            }
        }
    }
    let deg: Vec<f64> = w.iter().map(|r| r.iter().sum()).collect();
    let l = (0..n)
        .map(|i| (0..n).map(|j| w[i][j] / (deg[i] * deg[j]).sqrt()).collect())
        .collect();
    (w, l)
}

fn oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rank = ClusterConfig::default().neighbor_rank;
    let (mut dbi_err, mut w_err, mut l_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..50 {
        let points: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..HOURS_PER_DAY).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let mut labels: Vec<usize> = (0..20).map(|_| rng.random_range(0..4)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let fast: f64 = davies_bouldin(&points, &labels).unwrap();
        let slow = brute_dbi(&points, &labels);
        dbi_err = dbi_err.max((fast - slow).abs() / slow.max(1.0));
        let g = AffinityGraph::build(&points, rank).unwrap();
        let (w, l) = brute_graph(&points, rank);
        for i in 0..20 {
            for j in 0..20 {
                w_err = w_err.max((g.weights[(i, j)] - w[i][j]).abs());
                l_err = l_err.max((g.laplacian[(i, j)] - l[i][j]).abs());
            }
        }
    }
    // Three groups far enough apart that cross-group affinities underflow to zero.
    let mut points = Vec::new();
    for (g, size) in [6usize, 7, 7].iter().enumerate() {
        for _ in 0..*size {
            points.push(vec![1e3 * g as f64 + rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]);
        }
    }
    let g = AffinityGraph::build(&points, 3).unwrap();
    let basis = SpectralBasis::new(&g.laplacian).unwrap();
    let unit = basis.eigenvalues.iter().filter(|&&v| (v - 1.0).abs() < 1e-10).count();
    let gap = 1.0 - basis.eigenvalues[3];
    let pass = dbi_err <= 1e-12 && w_err <= 1e-12 && l_err <= 1e-12 && unit == 3 && gap > 1e-6;
    outcome(
        pass,
        format!("DBI {dbi_err:.1e}, affinity {w_err:.1e}, laplacian {l_err:.1e}; unit eigenvalues {unit} for 3 components"),
    )
}

fn conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut sets = TrainingSets::empty();
    for _ in 0..24 {
        let level = rng.random_range(0.5..2.0);
        let hours: Vec<f64> = (0..HOURS_PER_MONTH)
            .map(|h| level * (1.0 + 0.5 * ((h % 24) as f64 / 24.0 * std::f64::consts::TAU).sin()) * rng.random_range(0.8..1.2))
            .collect();
        sets.add_month(&hours);
    }
    let config = TrainConfig {
        max_epochs: 40,
        max_pairs: 400,
        ..TrainConfig::default()
    };
    let id = |dk| ClassId {
        subset: SubsetKey::new(CustomerType::Residential, dk),
        index: 0,
    };
    let weekday = train_from_sets(id(DayKind::Weekday), &sets, &config).unwrap();
    let weekend = train_from_sets(id(DayKind::Weekend), &sets, &config).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs();
    let mut failures = 0;
    for i in 0..1000 {
        let bill: f64 = 10f64.powf(rng.random_range(-1.0..4.0));
        let c = weekday.cascade(bill);
        let mut ok = close(c.weeks.iter().sum(), bill);
        for (w, days) in c.days.chunks(7).enumerate() {
            ok &= close(days.iter().sum(), c.weeks[w]);
        }
        for (d, hours) in c.hours.chunks(HOURS_PER_DAY).enumerate() {
            ok &= close(hours.iter().sum(), c.days[d]);
        }
        ok &= c.hours.iter().all(|&v| v >= 0.0);
        let model = if i % 2 == 0 { &weekday } else { &weekend };
        ok &= close(disaggregate_pair(model, &weekend, bill).iter().sum(), bill);
        failures += usize::from(!ok);
    }
    outcome(failures == 0, format!("{failures} failures in 1000 bills"))
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mut net = Regressor::<f64>::init(2, 16, &mut rng);
        let mut params = net.parameters().to_vec();
        for p in params.iter_mut() {
            *p += rng.random_range(-1.0..1.0);
        }
        net.set_parameters(&params);
        let xs: Vec<Vec<f64>> = (0..10).map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
        let ys: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (_, g) = net.loss_and_gradient(&xs, &ys);
        let mut probe = net.clone();
        let h = 1e-6;
        for i in 0..g.len() {
            let mut p = params.clone();
            p[i] += h;
            probe.set_parameters(&p);
            let up = probe.loss(&xs, &ys);
            p[i] -= 2.0 * h;
            probe.set_parameters(&p);
            let down = probe.loss(&xs, &ys);
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((fd - g[i]).abs() / fd.abs().max(1e-2));
        }
    }
    outcome(worst < 1e-5, format!("max relative error {worst:.2e}"))
}

fn bcse_oracle() -> Outcome {
    let config = BcseConfig {
        tolerance: 1e-9,
        ..BcseConfig::default()
    };
    let (mut current_err, mut jac_err, mut max_iter): (f64, f64, usize) = (0.0, 0.0, 0);
    let mut failed = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n = rng.random_range(3..=30);
        let feeder = random_radial::<f64, _>(&RandomFeederSpec::new(n), &mut rng);
        let loads = random_loads(&feeder, 2.0, &mut rng);
        let slack = Complex::from_polar(rng.random_range(0.98..1.05), rng.random_range(-0.1..0.1));
        let pf = power_flow(&feeder, &loads, slack, &PowerFlowConfig::default()).unwrap();
        let ms = exact_measurements(&feeder, &pf, &loads, &config);
        let Ok(est) = solve_wls(&feeder, &ms, &config) else {
            failed += 1;
            continue;
        };
        max_iter = max_iter.max(est.iterations);
        for (a, b) in est.branch_currents().iter().zip(&pf.branch_currents) {
            current_err = current_err.max((a - b).norm());
        }
        let x: Vec<f64> = (0..2 * feeder.n_branches()).map(|_| rng.random_range(-0.5..0.5)).collect();
        let base = measurement_model(&feeder, &ms, &x).unwrap();
        let h = 1e-6;
        for col in 0..x.len() {
            let mut up = x.clone();
            up[col] += h;
            let mut down = x.clone();
            down[col] -= h;
            let hu = measurement_model(&feeder, &ms, &up).unwrap().h;
            let hd = measurement_model(&feeder, &ms, &down).unwrap().h;
            for row in 0..base.h.len() {
                let an = base.jacobian[(row, col)];
                let fd = (hu[row] - hd[row]) / (2.0 * h);
                jac_err = jac_err.max((fd - an).abs() / an.abs().max(1.0));
            }
        }
    }
    let pass = failed == 0 && current_err <= 1e-4 && jac_err < 1e-6 && max_iter <= 10;
    outcome(
        pass,
        format!("current error {current_err:.1e} pu, Jacobian error {jac_err:.1e}, max {max_iter} iterations, {failed} failed solves"),
    )
}

fn hand_posterior() -> f64 {
    let classes = (0..2)
        .map(|index| ClassId {
            subset: SubsetKey::new(CustomerType::Residential, DayKind::Weekday),
            index,
        })
        .collect();
    let prior = PosteriorState::uniform("c", classes).unwrap();
    update_posterior(&prior, &[vec![0.0], vec![2.0]], &Phi::identity(1)).unwrap().probabilities[0]
}

struct Run {
    report: MetricsReport,
    stage_times: Vec<(&'static str, Duration)>,
}

impl Run {
    fn time(&self, stages: &[&str]) -> Duration {
        self.stage_times.iter().filter(|(s, _)| stages.contains(s)).map(|(_, t)| *t).sum()
    }

    fn total(&self) -> Duration {
        self.stage_times.iter().map(|(_, t)| *t).sum()
    }

    fn scope(&self, name: &str) -> f64 {
        self.report
            .load_estimation
            .iter()
            .chain(&self.report.baselines)
            .find(|s| s.scope == name)
            .map_or(f64::NAN, |s| s.mape)
    }
}

fn run_default(out: &Path) -> Run {
    let config = ExperimentConfig {
        output_dir: out.to_path_buf(),
        ..ExperimentConfig::default()
    };
    let pipeline = Pipeline::new(config).unwrap();
    let mut stage_times = Vec::new();
    for stage in STAGES {
        let start = Instant::now();
        pipeline.run(stage).unwrap();
        stage_times.push((stage, start.elapsed()));
    }
    let text = std::fs::read_to_string(out.join("metrics.json")).unwrap();
    Run {
        report: serde_json::from_str(&text).unwrap(),
        stage_times,
    }
}

fn disaggregation_fidelity(run: &Run) -> Outcome {
    let mut pass = run.total() < Duration::from_secs(600);
    let mut parts = Vec::new();
    for (dk, limit) in [("weekday", 12.0), ("weekend", 15.0)] {
        let ours = run.scope(&format!("planted/feeder_{dk}"));
        let uniform = run.scope(&format!("uniform/feeder_{dk}"));
        let scaled = run.scope(&format!("profile_scaling/feeder_{dk}"));
        pass &= ours <= limit && ours < uniform && ours < scaled;
        parts.push(format!("{dk} {ours:.2}% (uniform {uniform:.2}%, profile scaling {scaled:.2}%)"));
    }
    outcome(pass, format!("{}; {:.0} s", parts.join(", "), run.total().as_secs_f64()))
}

fn state_estimation(run: &Run) -> Outcome {
    let elapsed = run.time(&["disaggregate", "estimate", "evaluate"]);
    match run.report.state_estimation_planted {
        Some(v) => outcome(
            v.magnitude_pct <= 1.5 && v.phase_pct <= 0.5 && elapsed < Duration::from_secs(300),
            format!(
                "magnitude {:.3}%, phase {:.3}% over {} samples; {:.0} s",
                v.magnitude_pct,
                v.phase_pct,
                v.samples,
                elapsed.as_secs_f64()
            ),
        ),
        None => outcome(false, "no state-estimation metrics"),
    }
}

fn identification(run: &Run) -> Outcome {
    let p = hand_posterior();
    let closed = 1.0 / (1.0 + (-2.0f64).exp());
    let example = (p - closed).abs() <= 1e-9 && format!("{p:.5}") == "0.88080";
    match run.report.identification {
        Some(s) => outcome(
            s.accuracy >= 0.9 && s.confident >= 0.8 && example,
            format!(
                "accuracy {:.2} (weekday {:.2}, weekend {:.2}), confident {:.2}, two-class example {p:.9}",
                s.accuracy, s.weekday_accuracy, s.weekend_accuracy, s.confident
            ),
        ),
        None => outcome(false, "no identification metrics"),
    }
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut report = |name: &'static str, o: Outcome| {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };
    report("1 clustering recovery", clustering_recovery());
    report("2 clustering oracles", oracles());
    let first_dir = tempfile::tempdir().unwrap();
    let first = run_default(first_dir.path());
    report("3 disaggregation fidelity", disaggregation_fidelity(&first));
    report("4 energy conservation", conservation());
    report("5 gradient check", gradient_check());
    report("6 state-estimator oracle", bcse_oracle());
    report("7 state-estimation accuracy", state_estimation(&first));
    report("8 pattern identification", identification(&first));
    let second_dir = tempfile::tempdir().unwrap();
    run_default(second_dir.path());
    let a = std::fs::read(first_dir.path().join("metrics.json")).unwrap();
    let b = std::fs::read(second_dir.path().join("metrics.json")).unwrap();
    report("9 determinism", outcome(a == b, format!("metrics reports {}", if a == b { "identical" } else { "differ" })));
    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
