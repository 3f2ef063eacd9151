use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use slpn_core::evaluation::Aggregation;
use slpn_core::ner_data::SyntheticSpec;
use slpn_core::training::TrainingConfig;
use slpn_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// CoNLL-style corpus; when absent, `prepare` generates the synthetic one.
    pub corpus: Option<PathBuf>,
    /// Optional precomputed contextual embeddings, one block per corpus sentence.
    pub embeddings: Option<PathBuf>,
    pub workdir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            embeddings: None,
            workdir: PathBuf::from("work"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Number of rarest labels left out as OOD.
    pub m: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { m: 1, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub aggregation: Aggregation,
    /// Seed for the MC-dropout masks.
    pub mc_seed: u64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            aggregation: Aggregation::Mean,
            mc_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Both,
    Json,
    Text,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub format: ReportFormat,
}

/// Everything a command needs, loaded from one TOML document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub split: SplitConfig,
    pub synthetic: SyntheticSpec,
    pub training: TrainingConfig,
    pub evaluation: EvaluationConfig,
    pub report: ReportConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::InvalidConfig(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        if self.split.m == 0 {
            return Err(Error::InvalidConfig("split.m must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c =
            RunConfig::from_toml("[split]\nm = 2\n[training]\nepochs = 3\n[training.model]\nlatent_dim = 4\n").unwrap();
        assert_eq!(c.split.m, 2);
        assert_eq!(c.training.epochs, 3);
        assert_eq!(c.training.model.latent_dim, 4);
        assert_eq!(c.training.batch_size, TrainingConfig::default().batch_size);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(RunConfig::from_toml("[training]\nepoch = 3\n").is_err());
        assert!(RunConfig::from_toml("[training]\nlearning_rate = -1.0\n").is_err());
        assert!(RunConfig::from_toml("[evaluation]\naggregation = \"median\"\n").is_err());
    }
}
