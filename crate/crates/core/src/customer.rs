use serde::{Deserialize, Serialize};

use crate::calendar::DayKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CustomerType {
    Residential,
    Commercial,
    Industrial,
}

impl CustomerType {
    pub const ALL: [CustomerType; 3] = [
        CustomerType::Residential,
        CustomerType::Commercial,
        CustomerType::Industrial,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CustomerType::Residential => "residential",
            CustomerType::Commercial => "commercial",
            CustomerType::Industrial => "industrial",
        }
    }

    /// Default power factor used to derive reactive demand from kWh.
    pub fn power_factor(self) -> f64 {
        match self {
            CustomerType::Residential => 0.95,
            CustomerType::Commercial => 0.92,
            CustomerType::Industrial => 0.88,
        }
    }
}

impl std::str::FromStr for CustomerType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "residential" | "res" | "r" => Ok(CustomerType::Residential),
            "commercial" | "com" | "c" => Ok(CustomerType::Commercial),
            "industrial" | "ind" | "i" => Ok(CustomerType::Industrial),
            other => Err(Error::Schema(format!("unknown customer type `{other}`"))),
        }
    }
}

impl std::fmt::Display for CustomerType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Key of one of the six data subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubsetKey {
    pub kind: CustomerType,
    pub day_kind: DayKind,
}

impl SubsetKey {
    pub fn new(kind: CustomerType, day_kind: DayKind) -> Self {
        Self { kind, day_kind }
    }

    /// All six keys in canonical order.
    pub fn all() -> impl Iterator<Item = SubsetKey> {
        CustomerType::ALL
            .into_iter()
            .flat_map(|k| DayKind::ALL.into_iter().map(move |d| SubsetKey::new(k, d)))
    }
}

impl std::fmt::Display for SubsetKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.kind, self.day_kind)
    }
}

/// Identifier of a pattern class: subset plus class index within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClassId {
    pub subset: SubsetKey,
    pub index: usize,
}

impl std::fmt::Display for ClassId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}#{}", self.subset, self.index)
    }
}

/// Planted ground-truth classes of a synthetic customer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlantedClass {
    pub weekday: usize,
    pub weekend: usize,
}

impl PlantedClass {
    pub fn for_day_kind(&self, day_kind: DayKind) -> usize {
        match day_kind {
            DayKind::Weekday => self.weekday,
            DayKind::Weekend => self.weekend,
        }
    }
}
