use num_complex::Complex;
use rand::Rng;

use super::{Branch, FeederModel, Node};
use crate::scalar::Scalar;

/// Parameters for random radial test feeders.
#[derive(Debug, Clone, Copy)]
pub struct RandomFeederSpec {
    pub n_nodes: usize,
    pub r_range: (f64, f64),
    pub x_range: (f64, f64),
}

impl RandomFeederSpec {
    pub fn new(n_nodes: usize) -> Self {
        Self {
            n_nodes,
            r_range: (0.002, 0.01),
            x_range: (0.004, 0.02),
        }
    }
}

/// Random tree: node `i` hangs off a uniformly chosen earlier node.
/// Node ids are shuffled relative to positions so id order carries no
/// topological meaning.
pub fn random_radial<T: Scalar, R: Rng + ?Sized>(spec: &RandomFeederSpec, rng: &mut R) -> FeederModel<T> {
    assert!(spec.n_nodes >= 2, "need at least two nodes");
    let n = spec.n_nodes;
    let mut ids: Vec<usize> = (0..n).map(|i| 100 + 7 * i).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        ids.swap(i, j);
    }
    let nodes = ids
        .iter()
        .map(|&id| Node {
            id,
            load_kw: T::zero(),
            load_kvar: T::zero(),
            customer_ids: Vec::new(),
        })
        .collect();
    let branches = (1..n)
        .map(|i| {
            let parent = rng.random_range(0..i);
            let (a, b) = if rng.random_bool(0.5) { (ids[parent], ids[i]) } else { (ids[i], ids[parent]) };
            Branch {
                from_node: a,
                to_node: b,
                r: T::lit(rng.random_range(spec.r_range.0..spec.r_range.1)),
                x: T::lit(rng.random_range(spec.x_range.0..spec.x_range.1)),
            }
        })
        .collect();
    FeederModel::new(nodes, branches, ids[0], T::lit(1000.0), T::lit(12.47)).expect("random tree is radial")
}

/// Random constant-power loads totalling at most `total_pu`, lagging
/// power factor in [0.85, 1].
pub fn random_loads<T: Scalar, R: Rng + ?Sized>(
    feeder: &FeederModel<T>,
    total_pu: f64,
    rng: &mut R,
) -> Vec<Complex<T>> {
    let n_load = (feeder.n_nodes() - 1).max(1) as f64;
    let slack = feeder.slack_index();
    (0..feeder.n_nodes())
        .map(|i| {
            if i == slack {
                return Complex::new(T::zero(), T::zero());
            }
            let p = rng.random_range(0.0..1.0) * total_pu / n_load;
            let pf: f64 = rng.random_range(0.85..1.0);
            let q = p * (1.0 - pf * pf).sqrt() / pf;
            Complex::new(T::lit(p), T::lit(q))
        })
        .collect()
}
