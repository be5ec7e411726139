use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::FeederModel;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowConfig {
    /// Stop when the largest node-voltage change in a sweep falls below this.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for PowerFlowConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_sweeps: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution<T> {
    /// Node voltages indexed by node position.
    pub voltages: Vec<Complex<T>>,
    /// Branch currents, positive from the slack side to the load side.
    pub branch_currents: Vec<Complex<T>>,
    pub sweeps: usize,
}

impl<T: Scalar> PowerFlowSolution<T> {
    /// Total current leaving the slack bus through its branches.
    pub fn head_current(&self, feeder: &FeederModel<T>) -> Complex<T> {
        feeder
            .child_branches(feeder.slack_index())
            .iter()
            .map(|&k| self.branch_currents[k])
            .fold(Complex::new(T::zero(), T::zero()), |a, b| a + b)
    }

    /// Net current drawn at `node`: inflow minus outflow.
    pub fn node_injection(&self, feeder: &FeederModel<T>, node: usize) -> Complex<T> {
        let zero = Complex::new(T::zero(), T::zero());
        let inflow = feeder
            .parent_branch(node)
            .map_or(zero, |k| self.branch_currents[k]);
        feeder
            .child_branches(node)
            .iter()
            .fold(inflow, |acc, &k| acc - self.branch_currents[k])
    }
}

/// Backward/forward sweep load flow with constant-power loads.
///
/// `loads` holds per-unit complex demand per node position; the slack entry
/// is ignored.
pub fn power_flow<T: Scalar>(
    feeder: &FeederModel<T>,
    loads: &[Complex<T>],
    slack_voltage: Complex<T>,
    config: &PowerFlowConfig,
) -> Result<PowerFlowSolution<T>> {
    let n = feeder.n_nodes();
    if loads.len() != n {
        return Err(Error::invalid(format!(
            "expected {n} node loads, got {}",
            loads.len()
        )));
    }
    if !(slack_voltage.norm() > T::zero()) {
        return Err(Error::invalid("slack voltage magnitude must be positive"));
    }
    if loads.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
        return Err(Error::invalid("non-finite load"));
    }

    let slack = feeder.slack_index();
    let zero = Complex::new(T::zero(), T::zero());
    let mut voltages = vec![slack_voltage; n];
    let mut currents = vec![zero; feeder.n_branches()];
    let tol = T::lit(config.tolerance);
    let mut last_change = f64::INFINITY;

    for sweep in 1..=config.max_sweeps {
        // Backward: accumulate load currents towards the slack.
        for &u in feeder.bfs_order().iter().rev() {
            let Some(k) = feeder.parent_branch(u) else {
                continue;
            };
            let load = if u == slack { zero } else { (loads[u] / voltages[u]).conj() };
            currents[k] = feeder
                .child_branches(u)
                .iter()
                .fold(load, |acc, &c| acc + currents[c]);
        }
        // Forward: drop voltages along each branch.
        let mut change = T::zero();
        for &u in feeder.bfs_order() {
            let Some(k) = feeder.parent_branch(u) else {
                continue;
            };
            let (up, _) = feeder.branch_ends(k);
            let v = voltages[up] - feeder.branches()[k].impedance() * currents[k];
            change = change.max((v - voltages[u]).norm());
            voltages[u] = v;
        }
        if !change.is_finite() || voltages.iter().any(|v| !(v.norm() > T::zero())) {
            return Err(Error::NonConvergence {
                what: "power flow",
                iterations: sweep,
                last_change: f64::NAN,
            });
        }
        last_change = change.as_f64();
        if change < tol {
            // Refresh currents against the final voltages.
            for &u in feeder.bfs_order().iter().rev() {
                if let Some(k) = feeder.parent_branch(u) {
                    let load = if u == slack { zero } else { (loads[u] / voltages[u]).conj() };
                    currents[k] = feeder
                        .child_branches(u)
                        .iter()
                        .fold(load, |acc, &c| acc + currents[c]);
                }
            }
            return Ok(PowerFlowSolution {
                voltages,
                branch_currents: currents,
                sweeps: sweep,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "power flow",
        iterations: config.max_sweeps,
        last_change,
    })
}
