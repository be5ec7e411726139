use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{davies_bouldin, kmeans, AffinityGraph, DailyProfile, KMeansConfig, SpectralBasis};
use crate::amigen::DataSubset;
use crate::calendar::{DayKind, HOURS_PER_DAY};
use crate::customer::{ClassId, CustomerType, SubsetKey};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const BANK_SCHEMA_VERSION: u32 = 1;

/// Smallest subset the clustering stage accepts.
pub const MIN_SUBSET_SIZE: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    /// Neighbour rank used for local scaling.
    pub neighbor_rank: usize,
    pub k_min: usize,
    pub k_max: usize,
    #[serde(flatten)]
    pub kmeans: KMeansConfig,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            neighbor_rank: 7,
            k_min: 2,
            k_max: 10,
            kmeans: KMeansConfig::default(),
            seed: 7,
        }
    }
}

/// Outcome of the DBI sweep over candidate cluster counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection<T> {
    pub k: usize,
    /// `(k, DBI)` for every candidate, in increasing `k`.
    pub curve: Vec<(usize, T)>,
    /// Labels for the chosen `k`.
    pub labels: Vec<usize>,
}

/// Scale-free shape of each profile (unit daily sum).
pub fn shapes<T: Scalar>(profiles: &[DailyProfile<T>]) -> Vec<[T; HOURS_PER_DAY]> {
    profiles.iter().map(|p| p.shape()).collect()
}

/// Runs the spectral pipeline for every `k` in `k_range` and keeps the one
/// with the smallest Davies-Bouldin index (ties go to the smaller `k`).
///
/// The index is measured on the profile shapes, so values are comparable
/// across candidate embedding dimensions.
pub fn select_k<T: Scalar, P: AsRef<[T]> + Sync>(
    points: &[P],
    k_range: std::ops::RangeInclusive<usize>,
    config: &ClusterConfig,
) -> Result<Selection<T>> {
    let n = points.len();
    let (lo, hi) = (*k_range.start(), *k_range.end());
    if lo < 2 || hi > n.saturating_sub(1) || lo > hi {
        return Err(Error::invalid(format!(
            "k range {lo}..={hi} must lie within [2, {}]",
            n.saturating_sub(1)
        )));
    }
    let rank = config.neighbor_rank.min(n - 1);
    let graph = AffinityGraph::build(points, rank)?;
    let basis = SpectralBasis::new(&graph.laplacian)?;
    let runs: Vec<(usize, T, Vec<usize>)> = k_range
        .into_par_iter()
        .map(|k| {
            let embedding: Vec<Vec<T>> = basis.embed(k)?;
            let km = kmeans(&embedding, k, config.seed, &config.kmeans)?;
            let dbi = davies_bouldin(points, &km.labels)?;
            Ok((k, dbi, km.labels))
        })
        .collect::<Result<_>>()?;
    let curve: Vec<(usize, T)> = runs.iter().map(|r| (r.0, r.1)).collect();
    let best = argmin_first(&curve);
    let (k, _, labels) = runs.into_iter().nth(best).expect("non-empty range");
    Ok(Selection { k, curve, labels })
}

/// Position of the smallest DBI; the earliest (smallest k) wins ties.
fn argmin_first<T: Scalar>(curve: &[(usize, T)]) -> usize {
    let mut best = 0;
    for (i, &(_, v)) in curve.iter().enumerate() {
        if v < curve[best].1 {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PatternClass<T> {
    pub index: usize,
    /// Mean of the member shapes (unit daily sum).
    pub centroid: [T; HOURS_PER_DAY],
    /// Mean daily energy of the members, kWh.
    pub mean_daily_kwh: T,
    pub member_ids: Vec<String>,
    pub member_profiles: Vec<[T; HOURS_PER_DAY]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SubsetBank<T> {
    pub kind: CustomerType,
    pub day_kind: DayKind,
    pub k: usize,
    pub dbi_curve: Vec<(usize, T)>,
    pub classes: Vec<PatternClass<T>>,
}

impl<T: Scalar> SubsetBank<T> {
    pub fn key(&self) -> SubsetKey {
        SubsetKey::new(self.kind, self.day_kind)
    }

    /// Class holding `customer`, if any.
    pub fn class_of(&self, customer: &str) -> Option<usize> {
        self.classes
            .iter()
            .find(|c| c.member_ids.iter().any(|m| m == customer))
            .map(|c| c.index)
    }
}

/// Typical daily profiles per (type, day kind).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PatternBank<T> {
    pub schema_version: u32,
    pub subsets: Vec<SubsetBank<T>>,
}

impl<T: Scalar> PatternBank<T> {
    pub fn subset(&self, key: SubsetKey) -> Option<&SubsetBank<T>> {
        self.subsets.iter().find(|s| s.key() == key)
    }

    pub fn class(&self, id: ClassId) -> Option<&PatternClass<T>> {
        self.subset(id.subset)?.classes.get(id.index)
    }

    pub fn class_ids(&self) -> Vec<ClassId> {
        self.subsets
            .iter()
            .flat_map(|s| {
                let key = s.key();
                s.classes.iter().map(move |c| ClassId {
                    subset: key,
                    index: c.index,
                })
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bank: Self = serde_json::from_str(&text)?;
        if bank.schema_version != BANK_SCHEMA_VERSION {
            return Err(Error::Version {
                kind: "pattern bank".into(),
                found: bank.schema_version,
                expected: BANK_SCHEMA_VERSION,
            });
        }
        Ok(bank)
    }

    /// Rows `type,day_kind,k,dbi` for plotting the selection curves.
    pub fn write_dbi_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["type", "day_kind", "k", "dbi"])?;
        for s in &self.subsets {
            for (k, dbi) in &s.dbi_curve {
                w.write_record([s.kind.as_str(), s.day_kind.as_str(), &k.to_string(), &dbi.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io("<dbi csv>", e))?;
        Ok(())
    }

    /// Rows `type,day_kind,class,hour,value` of the class centroids.
    pub fn write_centroids_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["type", "day_kind", "class", "hour", "value"])?;
        for s in &self.subsets {
            for c in &s.classes {
                for (h, v) in c.centroid.iter().enumerate() {
                    w.write_record([
                        s.kind.as_str(),
                        s.day_kind.as_str(),
                        &c.index.to_string(),
                        &h.to_string(),
                        &v.to_string(),
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("<centroid csv>", e))?;
        Ok(())
    }
}

/// Clusters one subset and packages the classes. Classes are numbered by
/// the position of their first member in the subset.
pub fn cluster_subset<T: Scalar>(subset: &DataSubset<T>, config: &ClusterConfig) -> Result<SubsetBank<T>> {
    let n = subset.len();
    if n < MIN_SUBSET_SIZE {
        return Err(Error::invalid(format!(
            "subset {} has {n} profiles; at least {MIN_SUBSET_SIZE} are needed",
            subset.key()
        )));
    }
    let points = shapes(&subset.profiles);
    let hi = config.k_max.min(n - 1);
    let lo = config.k_min.max(2).min(hi);
    let sel = select_k(&points, lo..=hi, config)?;

    let mut relabel = vec![usize::MAX; sel.k];
    let mut next = 0;
    for &l in &sel.labels {
        if relabel[l] == usize::MAX {
            relabel[l] = next;
            next += 1;
        }
    }
    let mut classes: Vec<PatternClass<T>> = (0..next)
        .map(|index| PatternClass {
            index,
            centroid: [T::zero(); HOURS_PER_DAY],
            mean_daily_kwh: T::zero(),
            member_ids: Vec::new(),
            member_profiles: Vec::new(),
        })
        .collect();
    for (i, &l) in sel.labels.iter().enumerate() {
        let c = &mut classes[relabel[l]];
        let p = &subset.profiles[i];
        for (acc, &v) in c.centroid.iter_mut().zip(&points[i]) {
            *acc = *acc + v;
        }
        c.mean_daily_kwh = c.mean_daily_kwh + p.daily_total();
        c.member_ids.push(p.owner.clone());
        c.member_profiles.push(p.values);
    }
    for c in &mut classes {
        let m = T::from_count(c.member_ids.len());
        c.centroid.iter_mut().for_each(|v| *v = *v / m);
        c.mean_daily_kwh = c.mean_daily_kwh / m;
    }
    Ok(SubsetBank {
        kind: subset.kind,
        day_kind: subset.day_kind,
        k: next,
        dbi_curve: sel.curve,
        classes,
    })
}

/// Clusters every non-empty subset. Empty subsets are left out of the bank.
pub fn build_pattern_bank<T: Scalar>(subsets: &[DataSubset<T>], config: &ClusterConfig) -> Result<PatternBank<T>> {
    let mut banks = Vec::new();
    for s in subsets {
        if s.is_empty() {
            log::warn!("subset {} is empty; no patterns built", s.key());
            continue;
        }
        banks.push(cluster_subset(s, config)?);
    }
    Ok(PatternBank {
        schema_version: BANK_SCHEMA_VERSION,
        subsets: banks,
    })
}
