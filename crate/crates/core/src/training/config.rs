use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which predictor is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    /// Token-level posterior network; evidence is not transmitted.
    TokenPn,
    /// Token-level posterior network plus evidence transmission.
    Slpn,
    /// Softmax classifier on the same encoder, used with MC dropout.
    DropoutBaseline,
}

impl ModelVariant {
    pub fn is_evidential(self) -> bool {
        !matches!(self, ModelVariant::DropoutBaseline)
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelVariant::TokenPn => "token_pn",
            ModelVariant::Slpn => "slpn",
            ModelVariant::DropoutBaseline => "dropout_baseline",
        })
    }
}

impl FromStr for ModelVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "token_pn" | "token-pn" | "pn" => Ok(ModelVariant::TokenPn),
            "slpn" => Ok(ModelVariant::Slpn),
            "dropout_baseline" | "dropout-baseline" | "dropout" => Ok(ModelVariant::DropoutBaseline),
            other => Err(Error::InvalidConfig(format!("unknown model variant {other:?}"))),
        }
    }
}

/// Architecture sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    /// Hidden width of each recurrent direction.
    pub hidden_dim: usize,
    pub mlp_hidden: usize,
    pub latent_dim: usize,
    pub flow_depth: usize,
    /// Query/key width; the class count when unset.
    pub projection_dim: Option<usize>,
    /// Attention temperature; `√p` when unset.
    pub gamma: Option<f64>,
    /// Width of precomputed contextual embeddings. When set the token
    /// embedding table and recurrent layer are bypassed.
    pub contextual_dim: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 16,
            hidden_dim: 16,
            mlp_hidden: 32,
            latent_dim: 8,
            flow_depth: 6,
            projection_dim: None,
            gamma: None,
            contextual_dim: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Weight of the Dirichlet-entropy regularizer.
    pub lambda_reg: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Sentences per mini-batch.
    pub batch_size: usize,
    pub seed: u64,
    pub softplus_on: bool,
    pub model_variant: ModelVariant,
    /// Encoder-output dropout for the baseline during training and for MC
    /// prediction.
    pub dropout_rate: f64,
    pub mc_passes: usize,
    pub model: ModelConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lambda_reg: 1e-5,
            learning_rate: 1e-3,
            epochs: 20,
            batch_size: 16,
            seed: 0,
            softplus_on: true,
            model_variant: ModelVariant::Slpn,
            dropout_rate: 0.1,
            mc_passes: 10,
            model: ModelConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.lambda_reg >= 0.0 && self.lambda_reg.is_finite()) {
            return bad(format!("lambda_reg must be nonnegative, got {}", self.lambda_reg));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.mc_passes == 0 {
            return bad("epochs, batch_size and mc_passes must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate must lie in [0, 1), got {}", self.dropout_rate));
        }
        let m = &self.model;
        if m.embed_dim == 0 || m.hidden_dim == 0 || m.mlp_hidden == 0 || m.latent_dim == 0 {
            return bad("model widths must be positive".into());
        }
        if self.model_variant.is_evidential() && m.flow_depth == 0 {
            return bad("flow_depth must be at least 1".into());
        }
        if m.projection_dim == Some(0) || m.contextual_dim == Some(0) {
            return bad("projection_dim and contextual_dim must be positive when set".into());
        }
        if let Some(g) = m.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return bad(format!("gamma must be positive, got {g}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        TrainingConfig::default().validate().unwrap();
        assert_eq!(TrainingConfig::default().lambda_reg, 1e-5);
        assert_eq!(TrainingConfig::default().learning_rate, 1e-3);
        assert_eq!(ModelConfig::default().latent_dim, 8);
        assert_eq!(ModelConfig::default().flow_depth, 6);
    }

    #[test]
    fn out_of_range_fields_are_rejected() {
        let base = TrainingConfig::default();
        for cfg in [
            TrainingConfig {
                lambda_reg: -1.0,
                ..base.clone()
            },
            TrainingConfig {
                learning_rate: 0.0,
                ..base.clone()
            },
            TrainingConfig {
                epochs: 0,
                ..base.clone()
            },
            TrainingConfig {
                dropout_rate: 1.0,
                ..base.clone()
            },
            TrainingConfig {
                mc_passes: 0,
                ..base.clone()
            },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn variant_names() {
        assert_eq!("slpn".parse::<ModelVariant>().unwrap(), ModelVariant::Slpn);
        assert_eq!(
            "dropout-baseline".parse::<ModelVariant>().unwrap(),
            ModelVariant::DropoutBaseline
        );
        assert!("bert".parse::<ModelVariant>().is_err());
        assert_eq!(ModelVariant::TokenPn.to_string(), "token_pn");
    }
}
