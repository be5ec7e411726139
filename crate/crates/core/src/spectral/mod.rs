//! Self-tuning spectral clustering of daily profiles and the pattern bank.

mod affinity;
mod bank;
mod dbi;
mod embed;
mod kmeans;
mod profile;

pub use affinity::{build_affinity, degrees, local_scales, normalized_laplacian, AffinityGraph, ALPHA_FLOOR};
pub use bank::{
    build_pattern_bank, cluster_subset, select_k, shapes, ClusterConfig, PatternBank, PatternClass, Selection,
    SubsetBank, BANK_SCHEMA_VERSION, MIN_SUBSET_SIZE,
};
pub use dbi::davies_bouldin;
pub use embed::{spectral_embed, SpectralBasis};
pub use kmeans::{kmeans, KMeansConfig, KMeansResult};
pub use profile::DailyProfile;
