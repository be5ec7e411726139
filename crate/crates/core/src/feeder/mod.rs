//! Radial feeder model and the backward/forward sweep power flow.
//!
//! All electrical quantities are single-phase balanced equivalents in per
//! unit. Loads are entered in kW/kvar and converted at `base_kva`.

mod io;
mod power_flow;
mod random;

use std::collections::HashMap;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::customer::CustomerType;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use io::{load_feeder, parse_feeder, write_feeder};
pub use power_flow::{power_flow, PowerFlowConfig, PowerFlowSolution};
pub use random::{random_loads, random_radial, RandomFeederSpec};

/// Voltage or current phasor in per unit.
pub type ComplexPhasor<T> = Complex<T>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node<T> {
    pub id: usize,
    pub load_kw: T,
    pub load_kvar: T,
    #[serde(default)]
    pub customer_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch<T> {
    pub from_node: usize,
    pub to_node: usize,
    pub r: T,
    pub x: T,
}

impl<T: Scalar> Branch<T> {
    pub fn impedance(&self) -> Complex<T> {
        Complex::new(self.r, self.x)
    }
}

/// A customer service point attached to a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerSite<T> {
    pub id: String,
    #[serde(rename = "type")]
    pub kind: CustomerType,
    pub node: usize,
    /// Average demand in kW, used to size synthetic consumption.
    pub mean_kw: T,
}

/// Tree orientation derived from the slack node.
#[derive(Debug, Clone, PartialEq)]
struct Topology {
    /// Node positions in breadth-first order from the slack.
    order: Vec<usize>,
    /// For each branch: (upstream node position, downstream node position).
    ends: Vec<(usize, usize)>,
    /// Branch feeding each node; `None` for the slack.
    parent_branch: Vec<Option<usize>>,
    /// Branches leaving each node away from the slack.
    child_branches: Vec<Vec<usize>>,
    /// Position of each node id.
    index_of: HashMap<usize, usize>,
}

/// Validated radial feeder. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederModel<T> {
    nodes: Vec<Node<T>>,
    branches: Vec<Branch<T>>,
    customers: Vec<CustomerSite<T>>,
    slack_node: usize,
    base_kva: T,
    base_kv: T,
    topo: Topology,
}

impl<T: Scalar> FeederModel<T> {
    /// Builds and validates a feeder: unique ids, finite loads, nonnegative
    /// resistance, a tree spanning every node, and an existing slack.
    pub fn new(
        nodes: Vec<Node<T>>,
        branches: Vec<Branch<T>>,
        slack_node: usize,
        base_kva: T,
        base_kv: T,
    ) -> Result<Self> {
        Self::with_customers(nodes, branches, Vec::new(), slack_node, base_kva, base_kv)
    }

    pub fn with_customers(
        nodes: Vec<Node<T>>,
        branches: Vec<Branch<T>>,
        customers: Vec<CustomerSite<T>>,
        slack_node: usize,
        base_kva: T,
        base_kv: T,
    ) -> Result<Self> {
        if !(base_kva > T::zero()) || !(base_kv > T::zero()) {
            return Err(Error::invalid("system bases must be positive"));
        }
        let mut index_of = HashMap::with_capacity(nodes.len());
        for (pos, node) in nodes.iter().enumerate() {
            if index_of.insert(node.id, pos).is_some() {
                return Err(Error::Topology(format!("duplicate node id {}", node.id)));
            }
            if !node.load_kw.is_finite() || !node.load_kvar.is_finite() {
                return Err(Error::invalid(format!("node {} has a non-finite load", node.id)));
            }
        }
        let slack = *index_of
            .get(&slack_node)
            .ok_or_else(|| Error::Topology(format!("slack node {slack_node} does not exist")))?;

        let mut raw_ends = Vec::with_capacity(branches.len());
        for (k, b) in branches.iter().enumerate() {
            if b.from_node == b.to_node {
                return Err(Error::Topology(format!("branch {k} is a self loop at node {}", b.from_node)));
            }
            if !(b.r >= T::zero()) || !b.x.is_finite() || !b.r.is_finite() {
                return Err(Error::invalid(format!("branch {k} has invalid impedance")));
            }
            let a = *index_of
                .get(&b.from_node)
                .ok_or_else(|| Error::Topology(format!("branch {k} references unknown node {}", b.from_node)))?;
            let c = *index_of
                .get(&b.to_node)
                .ok_or_else(|| Error::Topology(format!("branch {k} references unknown node {}", b.to_node)))?;
            raw_ends.push((a, c));
        }

        // Union-find catches cycles (including parallel branches).
        let n = nodes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for (k, &(a, c)) in raw_ends.iter().enumerate() {
            let (ra, rc) = (find(&mut parent, a), find(&mut parent, c));
            if ra == rc {
                return Err(Error::Topology(format!(
                    "branch {k} ({} -> {}) closes a cycle",
                    nodes[a].id, nodes[c].id
                )));
            }
            parent[ra] = rc;
        }
        if branches.len() + 1 != n {
            let root = find(&mut parent, slack);
            let stray = (0..n).find(|&i| find(&mut parent, i) != root).unwrap_or(slack);
            return Err(Error::Topology(format!(
                "feeder is disconnected: node {} not reachable from slack",
                nodes[stray].id
            )));
        }

        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (k, &(a, c)) in raw_ends.iter().enumerate() {
            adjacency[a].push((c, k));
            adjacency[c].push((a, k));
        }
        let mut order = Vec::with_capacity(n);
        let mut parent_branch = vec![None; n];
        let mut ends = vec![(0, 0); branches.len()];
        let mut child_branches = vec![Vec::new(); n];
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::from([slack]);
        seen[slack] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &(v, k) in &adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent_branch[v] = Some(k);
                    ends[k] = (u, v);
                    child_branches[u].push(k);
                    queue.push_back(v);
                }
            }
        }
        debug_assert_eq!(order.len(), n);

        for c in &customers {
            if !index_of.contains_key(&c.node) {
                return Err(Error::Topology(format!(
                    "customer {} attached to unknown node {}",
                    c.id, c.node
                )));
            }
        }

        Ok(Self {
            nodes,
            branches,
            customers,
            slack_node,
            base_kva,
            base_kv,
            topo: Topology {
                order,
                ends,
                parent_branch,
                child_branches,
                index_of,
            },
        })
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn branches(&self) -> &[Branch<T>] {
        &self.branches
    }

    pub fn customers(&self) -> &[CustomerSite<T>] {
        &self.customers
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn slack_node(&self) -> usize {
        self.slack_node
    }

    /// Position of the slack node in `nodes()`.
    pub fn slack_index(&self) -> usize {
        self.topo.index_of[&self.slack_node]
    }

    pub fn base_kva(&self) -> T {
        self.base_kva
    }

    pub fn base_kv(&self) -> T {
        self.base_kv
    }

    pub fn node_index(&self, id: usize) -> Option<usize> {
        self.topo.index_of.get(&id).copied()
    }

    /// Node positions ordered from the slack outwards.
    pub fn bfs_order(&self) -> &[usize] {
        &self.topo.order
    }

    /// (upstream, downstream) node positions of branch `k`.
    pub fn branch_ends(&self, k: usize) -> (usize, usize) {
        self.topo.ends[k]
    }

    pub fn parent_branch(&self, node: usize) -> Option<usize> {
        self.topo.parent_branch[node]
    }

    pub fn child_branches(&self, node: usize) -> &[usize] {
        &self.topo.child_branches[node]
    }

    /// Branches on the path from the slack to `node`, slack side first.
    pub fn path_to(&self, node: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut cur = node;
        while let Some(k) = self.topo.parent_branch[cur] {
            path.push(k);
            cur = self.topo.ends[k].0;
        }
        path.reverse();
        path
    }

    /// Converts kW/kvar to per-unit complex power.
    pub fn to_pu(&self, kw: T, kvar: T) -> Complex<T> {
        Complex::new(kw / self.base_kva, kvar / self.base_kva)
    }

    /// Per-unit nominal loads from the node table, indexed by node position.
    pub fn nominal_loads_pu(&self) -> Vec<Complex<T>> {
        self.nodes.iter().map(|n| self.to_pu(n.load_kw, n.load_kvar)).collect()
    }

    /// Per-unit node loads from per-customer demand in kW, ordered like
    /// [`customers`](Self::customers). Reactive power follows the
    /// customer type's power factor.
    pub fn customer_loads_pu(&self, kw: &[T]) -> Vec<Complex<T>> {
        let mut loads = vec![Complex::new(T::zero(), T::zero()); self.nodes.len()];
        for (c, &p) in self.customers.iter().zip(kw) {
            let pf = c.kind.power_factor();
            let q = p * T::lit((1.0 - pf * pf).sqrt() / pf);
            let pos = self.topo.index_of[&c.node];
            loads[pos] = loads[pos] + self.to_pu(p, q);
        }
        loads
    }

    /// Share of total customer `mean_kw` held by each customer type.
    pub fn energy_mix(&self) -> Vec<(CustomerType, T)> {
        let total: T = self.customers.iter().map(|c| c.mean_kw).sum();
        CustomerType::ALL
            .into_iter()
            .map(|kind| {
                let part: T = self
                    .customers
                    .iter()
                    .filter(|c| c.kind == kind)
                    .map(|c| c.mean_kw)
                    .sum();
                let share = if total > T::zero() { part / total } else { T::zero() };
                (kind, share)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: usize) -> Node<f64> {
        Node {
            id,
            load_kw: 0.0,
            load_kvar: 0.0,
            customer_ids: vec![],
        }
    }

    fn branch(a: usize, b: usize) -> Branch<f64> {
        Branch {
            from_node: a,
            to_node: b,
            r: 0.01,
            x: 0.02,
        }
    }

    #[test]
    fn orientation_follows_slack() {
        // Branch listed against the flow direction is re-oriented.
        let f = FeederModel::new(
            vec![node(10), node(20), node(30)],
            vec![branch(20, 10), branch(20, 30)],
            10,
            1000.0,
            12.47,
        )
        .unwrap();
        assert_eq!(f.branch_ends(0), (0, 1));
        assert_eq!(f.branch_ends(1), (1, 2));
        assert_eq!(f.path_to(2), vec![0, 1]);
        assert_eq!(f.bfs_order(), &[0, 1, 2]);
    }

    #[test]
    fn rejects_bad_topologies() {
        let cycle = FeederModel::new(
            vec![node(0), node(1), node(2)],
            vec![branch(0, 1), branch(1, 2), branch(2, 0)],
            0,
            1.0,
            1.0,
        );
        assert!(matches!(cycle, Err(Error::Topology(m)) if m.contains("cycle")));

        let disconnected = FeederModel::new(vec![node(0), node(1), node(2)], vec![branch(0, 1)], 0, 1.0, 1.0);
        assert!(matches!(disconnected, Err(Error::Topology(m)) if m.contains("disconnected")));

        let no_slack = FeederModel::new(vec![node(0), node(1)], vec![branch(0, 1)], 7, 1.0, 1.0);
        assert!(matches!(no_slack, Err(Error::Topology(_))));

        let self_loop = FeederModel::new(vec![node(0), node(1)], vec![branch(1, 1)], 0, 1.0, 1.0);
        assert!(self_loop.is_err());

        let mut neg = branch(0, 1);
        neg.r = -0.1;
        assert!(FeederModel::new(vec![node(0), node(1)], vec![neg], 0, 1.0, 1.0).is_err());
    }
}
