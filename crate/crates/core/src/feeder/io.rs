//! Feeder file format.
//!
//! TOML (or JSON when the extension is `.json`) with four sections:
//!
//! ```toml
//! [bases]
//! base_kva = 10000.0
//! base_kv = 12.47
//!
//! [slack]
//! node = 0
//!
//! [[nodes]]
//! id = 1
//! load_kw = 120.0
//! load_kvar = 40.0
//! customer_ids = ["R01"]
//!
//! [[branches]]
//! from = 0
//! to = 1
//! r = 0.004      # per unit
//! x = 0.008
//!
//! [[customers]]  # optional
//! id = "R01"
//! type = "residential"
//! node = 1
//! mean_kw = 120.0
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Branch, CustomerSite, FeederModel, Node};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Serialize, Deserialize)]
struct Bases<T> {
    base_kva: T,
    base_kv: T,
}

#[derive(Debug, Serialize, Deserialize)]
struct Slack {
    node: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct BranchEntry<T> {
    from: usize,
    to: usize,
    r: T,
    x: T,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct FeederFile<T> {
    bases: Bases<T>,
    slack: Slack,
    nodes: Vec<Node<T>>,
    branches: Vec<BranchEntry<T>>,
    #[serde(default)]
    customers: Vec<CustomerSite<T>>,
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Reads and validates a feeder file.
pub fn load_feeder<T: Scalar>(path: impl AsRef<Path>) -> Result<FeederModel<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_feeder(&text, is_json(path)).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Parses feeder text; `json` selects the JSON encoding instead of TOML.
pub fn parse_feeder<T: Scalar>(text: &str, json: bool) -> Result<FeederModel<T>> {
    let file: FeederFile<T> = if json {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: "<feeder>".into(),
            message: e.to_string(),
        })?
    } else {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: "<feeder>".into(),
            message: e.to_string(),
        })?
    };
    let branches = file
        .branches
        .into_iter()
        .map(|b| Branch {
            from_node: b.from,
            to_node: b.to,
            r: b.r,
            x: b.x,
        })
        .collect();
    FeederModel::with_customers(
        file.nodes,
        branches,
        file.customers,
        file.slack.node,
        file.bases.base_kva,
        file.bases.base_kv,
    )
}

pub fn write_feeder<T: Scalar>(feeder: &FeederModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = FeederFile {
        bases: Bases {
            base_kva: feeder.base_kva,
            base_kv: feeder.base_kv,
        },
        slack: Slack {
            node: feeder.slack_node,
        },
        nodes: feeder.nodes.clone(),
        branches: feeder
            .branches
            .iter()
            .map(|b| BranchEntry {
                from: b.from_node,
                to: b.to_node,
                r: b.r,
                x: b.x,
            })
            .collect(),
        customers: feeder.customers.clone(),
    };
    let text = if is_json(path) {
        serde_json::to_string_pretty(&file)?
    } else {
        toml::to_string(&file).map_err(|e| Error::invalid(format!("cannot encode feeder: {e}")))?
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_NODE: &str = r#"
[bases]
base_kva = 1000.0
base_kv = 12.47

[slack]
node = 0

[[nodes]]
id = 0
load_kw = 0.0
load_kvar = 0.0

[[nodes]]
id = 1
load_kw = 500.0
load_kvar = 100.0

[[branches]]
from = 0
to = 1
r = 0.01
x = 0.01
"#;

    #[test]
    fn minimal_two_node_file() {
        let f: FeederModel<f64> = parse_feeder(TWO_NODE, false).unwrap();
        assert_eq!(f.n_nodes(), 2);
        assert_eq!(f.n_branches(), 1);
        let s = f.nominal_loads_pu()[1];
        assert!((s.re - 0.5).abs() < 1e-15 && (s.im - 0.1).abs() < 1e-15);
    }

    #[test]
    fn duplicated_branch_is_a_cycle() {
        let text = format!("{TWO_NODE}\n[[branches]]\nfrom = 1\nto = 0\nr = 0.01\nx = 0.01\n");
        let err = parse_feeder::<f64>(&text, false).unwrap_err();
        assert!(matches!(err, Error::Topology(_)), "{err}");
    }

    #[test]
    fn malformed_file_is_a_parse_error() {
        let err = parse_feeder::<f64>("[bases]\nbase_kva = \"x\"", false).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn toml_and_json_round_trip() {
        let f: FeederModel<f64> = parse_feeder(TWO_NODE, false).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for name in ["f.toml", "f.json"] {
            let p = dir.path().join(name);
            write_feeder(&f, &p).unwrap();
            let back: FeederModel<f64> = load_feeder(&p).unwrap();
            assert_eq!(back, f);
        }
    }
}
