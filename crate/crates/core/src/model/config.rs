use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl ModelConfig {
    /// Small encoder that trains from scratch on one CPU core in minutes.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 256,
            max_len: 128,
            dropout_rate: 0.0,
            seed: 42,
        }
    }

    /// bert-base-cased dimensions.
    pub fn bert_base() -> Self {
        Self {
            vocab_size: 30_522,
            d_model: 768,
            n_layers: 12,
            n_heads: 12,
            d_ff: 3072,
            max_len: 512,
            dropout_rate: 0.1,
            seed: 42,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("max_len", self.max_len),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        let d = self.d_model;
        let per_layer =
            4 * (d * d + d) + 2 * (2 * d) + (d * self.d_ff + self.d_ff) + (self.d_ff * d + d);
        self.vocab_size * d
            + self.max_len * d
            + self.n_layers * per_layer
            + d * self.vocab_size
            + self.vocab_size
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_width() {
        let cfg = ModelConfig::desk(2048);
        cfg.validate().unwrap();
        assert_eq!(cfg.head_dim(), 16);
    }

    #[test]
    fn divisibility_enforced() {
        let cfg = ModelConfig {
            d_model: 63,
            ..ModelConfig::desk(2048)
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn zero_dims_and_dropout_rejected() {
        let base = ModelConfig::desk(100);
        assert!(ModelConfig {
            n_layers: 0,
            ..base
        }
        .validate()
        .is_err());
        assert!(ModelConfig {
            dropout_rate: 1.0,
            ..base
        }
        .validate()
        .is_err());
        assert!(ModelConfig {
            dropout_rate: -0.1,
            ..base
        }
        .validate()
        .is_err());
    }

    #[test]
    fn bert_base_size() {
        // Untied output projection on top of the bert-base encoder body.
        assert_eq!(ModelConfig::bert_base().parameter_count(), 132_359_994);
    }
}
