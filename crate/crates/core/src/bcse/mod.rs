//! Branch-current state estimation: weighted least squares over the branch
//! currents of a radial feeder, anchored by a head-of-feeder phasor
//! measurement and fed per-node power pseudo-measurements.
//!
//! Power measurements enter as equivalent current injections
//! `conj(S / V)` evaluated at the latest voltage estimate, which makes the
//! measurement Jacobian constant with entries in {-1, 0, 1}.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feeder::{FeederModel, PowerFlowSolution};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    HeadVoltagePhasor,
    HeadCurrentPhasor,
    NodeP,
    NodeQ,
}

impl MeasurementKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MeasurementKind::HeadVoltagePhasor => "head_voltage_phasor",
            MeasurementKind::HeadCurrentPhasor => "head_current_phasor",
            MeasurementKind::NodeP => "node_p",
            MeasurementKind::NodeQ => "node_q",
        }
    }
}

impl std::str::FromStr for MeasurementKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "head_voltage_phasor" => MeasurementKind::HeadVoltagePhasor,
            "head_current_phasor" => MeasurementKind::HeadCurrentPhasor,
            "node_p" => MeasurementKind::NodeP,
            "node_q" => MeasurementKind::NodeQ,
            other => return Err(Error::Schema(format!("unknown measurement kind '{other}'"))),
        })
    }
}

/// One measurement in per unit. Phasors use both parts of `value`; power
/// measurements use only the real part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Measurement<T> {
    pub kind: MeasurementKind,
    /// Node id.
    pub location: usize,
    pub value: Complex<T>,
    /// Inverse variance.
    pub weight: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BcseConfig {
    /// Stop when the largest state update falls below this (per unit).
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Step halvings tried when an update raises the objective.
    pub max_halvings: usize,
    /// Relative objective increase tolerated before halving. Re-evaluating
    /// the power-to-current conversion at new voltages moves the objective
    /// slightly even at the fixed point.
    pub objective_slack: f64,
    /// Weight of each head phasor component.
    pub pmu_weight: f64,
    /// Pseudo-measurement standard deviation as a fraction of |S|.
    pub pseudo_sigma_fraction: f64,
    /// Lower bound on the pseudo-measurement standard deviation, per unit.
    pub pseudo_sigma_floor: f64,
}

impl Default for BcseConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 50,
            max_halvings: 10,
            objective_slack: 1e-3,
            pmu_weight: 1e6,
            pseudo_sigma_fraction: 0.2,
            pseudo_sigma_floor: 1e-5,
        }
    }
}

impl BcseConfig {
    /// Weight of a power pseudo-measurement of complex magnitude `s_abs`.
    pub fn pseudo_weight(&self, s_abs: f64) -> f64 {
        let sigma = (self.pseudo_sigma_fraction * s_abs).max(self.pseudo_sigma_floor);
        1.0 / (sigma * sigma)
    }
}

/// Head voltage and current phasors plus P/Q at every non-slack node.
pub fn build_measurements<T: Scalar>(
    feeder: &FeederModel<T>,
    head_voltage: Complex<T>,
    head_current: Complex<T>,
    node_powers: &[Complex<T>],
    config: &BcseConfig,
) -> Vec<Measurement<T>> {
    let pmu = T::lit(config.pmu_weight);
    let slack = feeder.slack_node();
    let mut out = vec![
        Measurement {
            kind: MeasurementKind::HeadVoltagePhasor,
            location: slack,
            value: head_voltage,
            weight: pmu,
        },
        Measurement {
            kind: MeasurementKind::HeadCurrentPhasor,
            location: slack,
            value: head_current,
            weight: pmu,
        },
    ];
    for (i, node) in feeder.nodes().iter().enumerate() {
        if i == feeder.slack_index() {
            continue;
        }
        let s = node_powers[i];
        let w = T::lit(config.pseudo_weight(s.norm().as_f64()));
        for (kind, v) in [(MeasurementKind::NodeP, s.re), (MeasurementKind::NodeQ, s.im)] {
            out.push(Measurement {
                kind,
                location: node.id,
                value: Complex::new(v, T::zero()),
                weight: w,
            });
        }
    }
    out
}

/// Noise-free measurements consistent with a power-flow solution.
pub fn exact_measurements<T: Scalar>(
    feeder: &FeederModel<T>,
    solution: &PowerFlowSolution<T>,
    loads: &[Complex<T>],
    config: &BcseConfig,
) -> Vec<Measurement<T>> {
    build_measurements(
        feeder,
        solution.voltages[feeder.slack_index()],
        solution.head_current(feeder),
        loads,
        config,
    )
}

/// Measurements grouped into rows of the linear model.
struct Layout<T> {
    slack_voltage: Complex<T>,
    head_voltage: usize,
    head_current: Option<usize>,
    /// Node position, P index, Q index.
    nodes: Vec<(usize, usize, usize)>,
}

fn layout<T: Scalar>(feeder: &FeederModel<T>, measurements: &[Measurement<T>]) -> Result<Layout<T>> {
    let mut head_voltage = None;
    let mut head_current = None;
    let mut powers: BTreeMap<usize, (Option<usize>, Option<usize>)> = BTreeMap::new();
    for (i, m) in measurements.iter().enumerate() {
        if !(m.weight > T::zero()) || !m.weight.is_finite() {
            return Err(Error::invalid(format!("measurement {i} has a non-positive weight")));
        }
        if !m.value.re.is_finite() || !m.value.im.is_finite() {
            return Err(Error::invalid(format!("measurement {i} is not finite")));
        }
        let pos = feeder
            .node_index(m.location)
            .ok_or_else(|| Error::Topology(format!("measurement at unknown node {}", m.location)))?;
        let slot = match m.kind {
            MeasurementKind::HeadVoltagePhasor | MeasurementKind::HeadCurrentPhasor => {
                if pos != feeder.slack_index() {
                    return Err(Error::invalid(format!("head measurement at non-slack node {}", m.location)));
                }
                if m.kind == MeasurementKind::HeadVoltagePhasor {
                    &mut head_voltage
                } else {
                    &mut head_current
                }
            }
            MeasurementKind::NodeP | MeasurementKind::NodeQ => {
                if pos == feeder.slack_index() {
                    return Err(Error::invalid("power measurement at the slack node"));
                }
                let entry = powers.entry(pos).or_default();
                if m.kind == MeasurementKind::NodeP {
                    &mut entry.0
                } else {
                    &mut entry.1
                }
            }
        };
        if slot.replace(i).is_some() {
            return Err(Error::invalid(format!("duplicate {} at node {}", m.kind.as_str(), m.location)));
        }
    }
    let head_voltage = head_voltage.ok_or_else(|| Error::invalid("missing head voltage phasor"))?;
    let slack_voltage = measurements[head_voltage].value;
    if !(slack_voltage.norm() > T::zero()) {
        return Err(Error::invalid("head voltage must be nonzero"));
    }
    let mut nodes = Vec::with_capacity(powers.len());
    for (pos, (p, q)) in powers {
        match (p, q) {
            (Some(p), Some(q)) => nodes.push((pos, p, q)),
            _ => {
                return Err(Error::invalid(format!(
                    "node {} needs both P and Q",
                    feeder.nodes()[pos].id
                )))
            }
        }
    }
    Ok(Layout {
        slack_voltage,
        head_voltage,
        head_current,
        nodes,
    })
}

/// Branch currents from the interleaved state `[re I0, im I0, re I1, ...]`.
pub fn branch_currents<T: Scalar>(state: &[T]) -> Vec<Complex<T>> {
    state.chunks_exact(2).map(|c| Complex::new(c[0], c[1])).collect()
}

/// Node voltages by a forward sweep from the slack.
pub fn node_voltages<T: Scalar>(feeder: &FeederModel<T>, state: &[T], slack_voltage: Complex<T>) -> Vec<Complex<T>> {
    let currents = branch_currents(state);
    let mut v = vec![slack_voltage; feeder.n_nodes()];
    for &u in feeder.bfs_order() {
        if let Some(k) = feeder.parent_branch(u) {
            let (up, _) = feeder.branch_ends(k);
            v[u] = v[up] - feeder.branches()[k].impedance() * currents[k];
        }
    }
    v
}

/// Net current drawn at node position `u`.
fn injection<T: Scalar>(feeder: &FeederModel<T>, currents: &[Complex<T>], u: usize) -> Complex<T> {
    let zero = Complex::new(T::zero(), T::zero());
    let inflow = feeder.parent_branch(u).map_or(zero, |k| currents[k]);
    feeder.child_branches(u).iter().fold(inflow, |acc, &k| acc - currents[k])
}

fn head_flow<T: Scalar>(feeder: &FeederModel<T>, currents: &[Complex<T>]) -> Complex<T> {
    feeder
        .child_branches(feeder.slack_index())
        .iter()
        .fold(Complex::new(T::zero(), T::zero()), |acc, &k| acc + currents[k])
}

/// The linearized model at one state: equivalent measurement vector, model
/// output, weights and Jacobian, all in current units except the head
/// voltage rows.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub z: DVector<f64>,
    pub h: DVector<f64>,
    pub weights: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    /// Measurement index behind each row.
    pub source: Vec<usize>,
}

impl LinearModel {
    pub fn objective(&self) -> f64 {
        (&self.z - &self.h)
            .iter()
            .zip(self.weights.iter())
            .map(|(r, w)| w * r * r)
            .sum()
    }
}

/// Evaluates `h(x)` and its Jacobian, converting power measurements to
/// current injections at the voltages implied by `state`.
pub fn measurement_model<T: Scalar>(
    feeder: &FeederModel<T>,
    measurements: &[Measurement<T>],
    state: &[T],
) -> Result<LinearModel> {
    let lay = layout(feeder, measurements)?;
    if state.len() != 2 * feeder.n_branches() {
        return Err(Error::invalid(format!(
            "state has {} entries, expected {}",
            state.len(),
            2 * feeder.n_branches()
        )));
    }
    Ok(linear_model(feeder, measurements, &lay, state))
}

fn linear_model<T: Scalar>(feeder: &FeederModel<T>, ms: &[Measurement<T>], lay: &Layout<T>, state: &[T]) -> LinearModel {
    let nb = feeder.n_branches();
    let rows = 2 + 2 * usize::from(lay.head_current.is_some()) + 2 * lay.nodes.len();
    let mut z = DVector::zeros(rows);
    let mut h = DVector::zeros(rows);
    let mut w = DVector::zeros(rows);
    let mut jac = DMatrix::zeros(rows, 2 * nb);
    let mut source = Vec::with_capacity(rows);
    let currents = branch_currents(state);
    let volts = node_voltages(feeder, state, lay.slack_voltage);

    let v0 = lay.slack_voltage;
    let wv = ms[lay.head_voltage].weight.as_f64();
    z[0] = v0.re.as_f64();
    z[1] = v0.im.as_f64();
    h[0] = z[0];
    h[1] = z[1];
    w[0] = wv;
    w[1] = wv;
    source.extend([lay.head_voltage; 2]);
    let mut row = 2;

    if let Some(i) = lay.head_current {
        let m = &ms[i];
        let flow = head_flow(feeder, &currents);
        z[row] = m.value.re.as_f64();
        z[row + 1] = m.value.im.as_f64();
        h[row] = flow.re.as_f64();
        h[row + 1] = flow.im.as_f64();
        w[row] = m.weight.as_f64();
        w[row + 1] = m.weight.as_f64();
        for &k in feeder.child_branches(feeder.slack_index()) {
            jac[(row, 2 * k)] = 1.0;
            jac[(row + 1, 2 * k + 1)] = 1.0;
        }
        source.extend([i; 2]);
        row += 2;
    }

    for &(u, p, q) in &lay.nodes {
        let s = Complex::new(ms[p].value.re.as_f64(), ms[q].value.re.as_f64());
        let v = Complex::new(volts[u].re.as_f64(), volts[u].im.as_f64());
        let eq = (s / v).conj();
        let inj = injection(feeder, &currents, u);
        let v2 = v.norm_sqr();
        z[row] = eq.re;
        z[row + 1] = eq.im;
        h[row] = inj.re.as_f64();
        h[row + 1] = inj.im.as_f64();
        w[row] = ms[p].weight.as_f64() * v2;
        w[row + 1] = ms[q].weight.as_f64() * v2;
        if let Some(k) = feeder.parent_branch(u) {
            jac[(row, 2 * k)] = 1.0;
            jac[(row + 1, 2 * k + 1)] = 1.0;
        }
        for &k in feeder.child_branches(u) {
            jac[(row, 2 * k)] = -1.0;
            jac[(row + 1, 2 * k + 1)] = -1.0;
        }
        source.extend([p, q]);
        row += 2;
    }
    LinearModel {
        z,
        h,
        weights: w,
        jacobian: jac,
        source,
    }
}

/// Residual of one measurement in its own units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Residual<T> {
    pub kind: MeasurementKind,
    pub location: usize,
    pub value: Complex<T>,
    /// Weighted magnitude `|r| * sqrt(w)`.
    pub weighted: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EstimationResult<T> {
    pub converged: bool,
    pub iterations: usize,
    /// Interleaved `[re I0, im I0, re I1, ...]` per branch.
    pub state: Vec<T>,
    pub voltages: Vec<Complex<T>>,
    pub residuals: Vec<Residual<T>>,
    pub objective: f64,
    pub objective_history: Vec<f64>,
    pub step_halvings: usize,
}

impl<T: Scalar> EstimationResult<T> {
    pub fn branch_currents(&self) -> Vec<Complex<T>> {
        branch_currents(&self.state)
    }

    /// Residual of the head current phasor, if it was measured.
    pub fn head_current_residual(&self) -> Option<Complex<T>> {
        self.residuals
            .iter()
            .find(|r| r.kind == MeasurementKind::HeadCurrentPhasor)
            .map(|r| r.value)
    }
}

/// `z - h(x)` for every measurement, with power measurements compared in
/// power units.
pub fn residuals<T: Scalar>(
    feeder: &FeederModel<T>,
    state: &[T],
    measurements: &[Measurement<T>],
) -> Result<Vec<Residual<T>>> {
    let lay = layout(feeder, measurements)?;
    let currents = branch_currents(state);
    let volts = node_voltages(feeder, state, lay.slack_voltage);
    let zero = Complex::new(T::zero(), T::zero());
    let mut power_at: BTreeMap<usize, Complex<T>> = BTreeMap::new();
    for &(u, _, _) in &lay.nodes {
        power_at.insert(u, volts[u] * injection(feeder, &currents, u).conj());
    }
    Ok(measurements
        .iter()
        .map(|m| {
            let value = match m.kind {
                MeasurementKind::HeadVoltagePhasor => m.value - lay.slack_voltage,
                MeasurementKind::HeadCurrentPhasor => m.value - head_flow(feeder, &currents),
                MeasurementKind::NodeP | MeasurementKind::NodeQ => {
                    let pos = feeder.node_index(m.location).expect("validated");
                    let s = power_at.get(&pos).copied().unwrap_or(zero);
                    let model = if m.kind == MeasurementKind::NodeP { s.re } else { s.im };
                    Complex::new(m.value.re - model, T::zero())
                }
            };
            Residual {
                kind: m.kind,
                location: m.location,
                value,
                weighted: value.norm() * m.weight.sqrt(),
            }
        })
        .collect())
}

fn solve_normal(model: &LinearModel) -> Result<DVector<f64>> {
    let hw = model.jacobian.transpose() * DMatrix::from_diagonal(&model.weights);
    let gain = &hw * &model.jacobian;
    let rhs = &hw * (&model.z - &model.h);
    let chol = gain
        .cholesky()
        .ok_or_else(|| Error::Singular("gain matrix is not positive definite; the feeder is unobservable".into()))?;
    Ok(chol.solve(&rhs))
}

/// Gauss-Newton weighted least squares from a flat start.
pub fn solve_wls<T: Scalar>(
    feeder: &FeederModel<T>,
    measurements: &[Measurement<T>],
    config: &BcseConfig,
) -> Result<EstimationResult<T>> {
    let lay = layout(feeder, measurements)?;
    let n = 2 * feeder.n_branches();
    let to_t = |x: &DVector<f64>| -> Vec<T> { x.iter().map(|&v| T::lit(v)).collect() };
    let objective_at = |x: &DVector<f64>| linear_model(feeder, measurements, &lay, &to_t(x)).objective();

    let mut x = DVector::zeros(n);
    let mut model = linear_model(feeder, measurements, &lay, &to_t(&x));
    let mut objective = model.objective();
    let mut history = vec![objective];
    let mut halvings = 0;
    let mut last_change = f64::INFINITY;

    for iteration in 1..=config.max_iterations {
        let dx = solve_normal(&model)?;
        last_change = dx.amax();
        if !last_change.is_finite() {
            return Err(Error::Numerical(format!("non-finite state update at iteration {iteration}")));
        }
        let mut step = 1.0;
        let mut trial = &x + &dx;
        let mut trial_obj = objective_at(&trial);
        if last_change >= config.tolerance {
            let mut tries = 0;
            while trial_obj > objective * (1.0 + config.objective_slack) && tries < config.max_halvings {
                step *= 0.5;
                tries += 1;
                trial = &x + &dx * step;
                trial_obj = objective_at(&trial);
            }
            if tries > 0 {
                halvings += 1;
                log::debug!("state estimation step halved {tries} times at iteration {iteration}");
            }
        }
        x = trial;
        model = linear_model(feeder, measurements, &lay, &to_t(&x));
        objective = trial_obj;
        history.push(objective);
        if last_change < config.tolerance {
            let state = to_t(&x);
            let voltages = node_voltages(feeder, &state, lay.slack_voltage);
            let residuals = residuals(feeder, &state, measurements)?;
            return Ok(EstimationResult {
                converged: true,
                iterations: iteration,
                state,
                voltages,
                residuals,
                objective,
                objective_history: history,
                step_halvings: halvings,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "state estimation",
        iterations: config.max_iterations,
        last_change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::{power_flow, Branch, Node, PowerFlowConfig};

    fn two_node() -> FeederModel<f64> {
        let nodes = vec![
            Node {
                id: 0,
                load_kw: 0.0,
                load_kvar: 0.0,
                customer_ids: vec![],
            },
            Node {
                id: 1,
                load_kw: 0.0,
                load_kvar: 0.0,
                customer_ids: vec![],
            },
        ];
        let branches = vec![Branch {
            from_node: 0,
            to_node: 1,
            r: 0.01,
            x: 0.02,
        }];
        FeederModel::new(nodes, branches, 0, 1000.0, 12.47).unwrap()
    }

    #[test]
    fn zero_state_gives_slack_voltage_everywhere() {
        let f = two_node();
        let ms = build_measurements(
            &f,
            Complex::new(1.0, 0.0),
            Complex::new(0.0, 0.0),
            &[Complex::new(0.0, 0.0); 2],
            &BcseConfig::default(),
        );
        let model = measurement_model(&f, &ms, &[0.0, 0.0]).unwrap();
        assert!(model.h.iter().skip(2).all(|&v| v == 0.0));
        assert!(model.z.iter().skip(4).all(|&v| v == 0.0));
        assert_eq!(node_voltages(&f, &[0.0, 0.0], Complex::new(1.0, 0.0)), vec![Complex::new(1.0, 0.0); 2]);
        // Injection at the load node is the branch current itself.
        assert_eq!(model.jacobian[(4, 0)], 1.0);
        assert_eq!(model.jacobian[(5, 1)], 1.0);
        assert_eq!(model.jacobian[(4, 1)], 0.0);
    }

    #[test]
    fn two_node_hand_solution() {
        // Load 1 + 0j pu behind z = 0.01 + 0.02j: I = conj(S / V), V = 1 - z I.
        let f = two_node();
        let loads = [Complex::new(0.0, 0.0), Complex::new(1.0, 0.0)];
        let pf = power_flow(&f, &loads, Complex::new(1.0, 0.0), &PowerFlowConfig::default()).unwrap();
        let ms = exact_measurements(&f, &pf, &loads, &BcseConfig::default());
        let est = solve_wls(&f, &ms, &BcseConfig::default()).unwrap();
        let i = est.branch_currents()[0];
        assert!((i - Complex::new(1.0102093995836663, -0.020418799167332552)).norm() < 1e-6, "{i}");
        assert!(est.objective < 1e-6);
    }

    #[test]
    fn missing_head_voltage_or_partner_is_rejected() {
        let f = two_node();
        let mut ms = build_measurements(
            &f,
            Complex::new(1.0, 0.0),
            Complex::new(0.0, 0.0),
            &[Complex::new(0.0, 0.0); 2],
            &BcseConfig::default(),
        );
        let without_q: Vec<_> = ms.iter().copied().filter(|m| m.kind != MeasurementKind::NodeQ).collect();
        assert!(solve_wls(&f, &without_q, &BcseConfig::default()).is_err());
        ms.remove(0);
        assert!(solve_wls(&f, &ms, &BcseConfig::default()).is_err());
    }

    #[test]
    fn unobservable_feeder_is_singular() {
        let f = two_node();
        let ms = vec![Measurement {
            kind: MeasurementKind::HeadVoltagePhasor,
            location: 0,
            value: Complex::new(1.0, 0.0),
            weight: 1.0,
        }];
        assert!(matches!(solve_wls(&f, &ms, &BcseConfig::default()), Err(Error::Singular(_))));
    }

    #[test]
    fn kind_names_round_trip() {
        for k in [
            MeasurementKind::HeadVoltagePhasor,
            MeasurementKind::HeadCurrentPhasor,
            MeasurementKind::NodeP,
            MeasurementKind::NodeQ,
        ] {
            assert_eq!(k.as_str().parse::<MeasurementKind>().unwrap(), k);
        }
        assert!("bogus".parse::<MeasurementKind>().is_err());
    }
}
