use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::amigen::{PopulationSpec, TypeSpec};
use crate::bcse::BcseConfig;
use crate::error::{Error, Result};
use crate::mtsl::TrainConfig;
use crate::rbl::RblConfig;
use crate::spectral::ClusterConfig;

/// The built-in 18-node feeder with its customers.
pub const DEFAULT_FEEDER: &str = include_str!("../../fixtures/feeder18.toml");

/// Synthetic data for the unmetered feeder customers and the head meter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeederDataConfig {
    pub months: usize,
    pub noise_sigma: f64,
    /// Relative standard deviation of the head phasor measurements.
    pub pmu_noise: f64,
    /// Slack voltage magnitude, per unit.
    pub slack_voltage: f64,
}

impl Default for FeederDataConfig {
    fn default() -> Self {
        Self {
            months: 1,
            noise_sigma: 0.15,
            pmu_noise: 0.001,
            slack_voltage: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MtslStageConfig {
    /// Months of the metered population used for training; later months
    /// are held out.
    pub training_months: usize,
    #[serde(flatten)]
    pub train: TrainConfig,
}

impl Default for MtslStageConfig {
    fn default() -> Self {
        Self {
            training_months: 4,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every stage derives its randomness from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Feeder file (TOML or JSON); the built-in 18-node feeder when absent.
    pub feeder: Option<PathBuf>,
    pub population: PopulationSpec,
    pub feeder_data: FeederDataConfig,
    pub cluster: ClusterConfig,
    pub mtsl: MtslStageConfig,
    pub bcse: BcseConfig,
    pub rbl: RblConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        // Customer sizes match the built-in feeder so that its bills fall
        // inside the range the disaggregation models are trained on.
        let population = PopulationSpec {
            commercial: TypeSpec {
                count: 60,
                weekday_classes: 3,
                weekend_classes: 4,
                mean_kw: 1.7,
            },
            industrial: TypeSpec {
                count: 30,
                weekday_classes: 2,
                weekend_classes: 3,
                mean_kw: 0.75,
            },
            ..PopulationSpec::default()
        };
        Self {
            seed: 7,
            output_dir: PathBuf::from("out"),
            feeder: None,
            population,
            feeder_data: FeederDataConfig::default(),
            cluster: ClusterConfig::default(),
            mtsl: MtslStageConfig::default(),
            bcse: BcseConfig::default(),
            rbl: RblConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reads a TOML config; `"default"` yields the built-in configuration.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if path.as_os_str() == "default" {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::parse(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })?;
        // Relative feeder paths are taken relative to the config file.
        if let (Some(feeder), Some(dir)) = (&config.feeder, path.parent()) {
            if feeder.is_relative() {
                config.feeder = Some(dir.join(feeder));
            }
        }
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut config: Self = toml::from_str(text).map_err(|e| Error::Parse {
            path: "<config>".into(),
            message: e.to_string(),
        })?;
        config.sync_seeds();
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.population.validate()?;
        self.mtsl.train.validate()?;
        if self.mtsl.training_months == 0 || self.mtsl.training_months > self.population.months {
            return Err(Error::invalid("training months must be between 1 and the population months"));
        }
        if self.feeder_data.months == 0 {
            return Err(Error::invalid("feeder data needs at least one month"));
        }
        if !(self.feeder_data.pmu_noise >= 0.0) || !(self.feeder_data.slack_voltage > 0.0) {
            return Err(Error::invalid("PMU noise must be nonnegative and the slack voltage positive"));
        }
        if !(self.rbl.threshold > 0.0 && self.rbl.threshold <= 1.0) {
            return Err(Error::invalid("posterior threshold must be in (0, 1]"));
        }
        Ok(())
    }

    /// Propagates the master seed into every section.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.sync_seeds();
        self
    }

    pub(crate) fn sync_seeds(&mut self) {
        self.population.seed = self.seed;
        self.cluster.seed = self.seed;
        self.mtsl.train.seed = self.seed;
    }

    pub fn feeder_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    pub fn pmu_seed(&self) -> u64 {
        self.seed.wrapping_add(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let c = ExperimentConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), c);
    }

    #[test]
    fn partial_sections_fall_back_to_defaults() {
        let c = ExperimentConfig::parse("seed = 3\n[population]\nmonths = 5\n[mtsl]\nhidden = 8\n").unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.population.months, 5);
        assert_eq!(c.mtsl.train.hidden, 8);
        assert_eq!(c.mtsl.training_months, 4);
        assert_eq!(c.rbl.max_iterations, 200);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(matches!(ExperimentConfig::parse("bogus = 1"), Err(Error::Parse { .. })));
        assert!(ExperimentConfig::parse("[mtsl]\ntraining_months = 9").is_err());
        assert!(ExperimentConfig::load("/nonexistent/config.toml").is_err());
    }

    #[test]
    fn seed_reaches_every_section() {
        let c = ExperimentConfig::default().with_seed(42);
        assert_eq!((c.population.seed, c.cluster.seed, c.mtsl.train.seed), (42, 42, 42));
    }

    #[test]
    fn fixture_parses() {
        let f = crate::feeder::parse_feeder::<f64>(DEFAULT_FEEDER, false).unwrap();
        assert_eq!(f.n_nodes(), 18);
        assert_eq!(f.customers().len(), 20);
    }
}
