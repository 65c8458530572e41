//! Flat run configuration shared by every stage.

use std::path::Path;

use anyhow::{bail, Context, Result};
use clem_core::embedding::{EmbedOptions, Pooling, DEFAULT_CONNECTION_CAP};
use clem_core::model::{Corruption, ModelConfig, DEFAULT_MASK_RATE};
use clem_core::reduction::{Method, NeighborParams};
use clem_core::tokenizer::{DEFAULT_MIN_FREQUENCY, DEFAULT_VOCAB_SIZE};
use clem_core::trainer::{TrainConfig, WindowSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Vectors handed to K-means by the `cluster` stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterSpace {
    /// The full embedding table.
    #[default]
    Full,
    /// Coordinates written by the `reduce` stage.
    Reduced,
}

/// Every tunable of the pipeline. Defaults are the full-scale values;
/// `configs/desk.toml` holds the single-core profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Name written into metrics reports.
    pub dataset: String,
    /// Seed for synthesis, initialization, masking, layout and K-means.
    pub seed: u64,

    /// Lines produced by `synth`.
    pub synth_lines: usize,
    /// Client ports per client/server pair; 0 draws one per connection.
    pub client_ports_per_flow: usize,
    /// Fraction of post-onset lines that gain a beacon connection.
    pub anomaly_rate: f64,

    /// Columns dropped at ingestion in addition to `uid` and `ts`.
    pub exclude_fields: Vec<String>,

    pub vocab_size: usize,
    pub min_frequency: u64,

    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub dropout_rate: f64,

    pub window_size: usize,
    pub stride: usize,
    pub loss_threshold: f64,
    pub max_epochs_per_window: usize,

    pub batch_size: usize,
    pub learning_rate: f64,
    pub mask_rate: f64,
    pub corrupt_mask: f64,
    pub corrupt_random: f64,
    pub corrupt_keep: f64,

    pub pooling: Pooling,
    /// Most connections embedded; larger streams are sampled.
    pub connection_cap: usize,
    pub embed_batch_size: usize,

    pub reduce_method: Method,
    pub target_dim: usize,
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub reduce_epochs: usize,
    pub reduce_learning_rate: f64,
    pub negative_sample_rate: usize,
    pub layout_bound: f64,

    pub cluster_space: ClusterSpace,
    /// Largest k tried by `cluster`; 0 uses the number of expert labels.
    pub k_max: usize,

    /// Neighbors returned by `analogy`.
    pub analogy_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = ModelConfig::bert_base();
        let window = WindowSpec::default();
        let train = TrainConfig::default();
        let reduce = NeighborParams::default();
        Self {
            dataset: "synthetic".into(),
            seed: 42,
            synth_lines: 20_000,
            client_ports_per_flow: 1,
            anomaly_rate: 0.02,
            exclude_fields: Vec::new(),
            vocab_size: DEFAULT_VOCAB_SIZE,
            min_frequency: DEFAULT_MIN_FREQUENCY,
            d_model: model.d_model,
            n_layers: model.n_layers,
            n_heads: model.n_heads,
            d_ff: model.d_ff,
            max_len: 128,
            dropout_rate: 0.0,
            window_size: window.window_size,
            stride: window.stride,
            loss_threshold: window.loss_threshold,
            max_epochs_per_window: window.max_epochs_per_window,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            mask_rate: DEFAULT_MASK_RATE,
            corrupt_mask: train.corruption.mask,
            corrupt_random: train.corruption.random,
            corrupt_keep: train.corruption.keep,
            pooling: Pooling::MeanContent,
            connection_cap: DEFAULT_CONNECTION_CAP,
            embed_batch_size: EmbedOptions::default().batch_size,
            reduce_method: Method::Neighbor,
            target_dim: reduce.target_dim,
            n_neighbors: reduce.n_neighbors,
            min_dist: reduce.min_dist,
            spread: reduce.spread,
            reduce_epochs: reduce.n_epochs,
            reduce_learning_rate: reduce.learning_rate,
            negative_sample_rate: reduce.negative_sample_rate,
            layout_bound: reduce.layout_bound,
            cluster_space: ClusterSpace::Full,
            k_max: 0,
            analogy_k: 3,
        }
    }
}

fn positive(errors: &mut Vec<String>, key: &str, ok: bool, why: &str) {
    if !ok {
        errors.push(format!("`{key}`: {why}"));
    }
}

impl RunConfig {
    /// Parses TOML; unknown keys are rejected.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every key and reports all offenders at once.
    pub fn validate(&self) -> Result<()> {
        let mut e = Vec::new();
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        positive(
            &mut e,
            "synth_lines",
            self.synth_lines > 0,
            "must be at least 1",
        );
        positive(
            &mut e,
            "anomaly_rate",
            unit(self.anomaly_rate),
            "must be in [0, 1]",
        );
        positive(
            &mut e,
            "vocab_size",
            self.vocab_size > 5,
            "must exceed the 5 special tokens",
        );
        positive(&mut e, "d_model", self.d_model > 0, "must be positive");
        positive(&mut e, "n_layers", self.n_layers > 0, "must be positive");
        positive(
            &mut e,
            "n_heads",
            self.n_heads > 0 && self.d_model.is_multiple_of(self.n_heads.max(1)),
            "must be positive and divide d_model",
        );
        positive(&mut e, "d_ff", self.d_ff > 0, "must be positive");
        positive(&mut e, "max_len", self.max_len >= 2, "must be at least 2");
        positive(
            &mut e,
            "dropout_rate",
            (0.0..1.0).contains(&self.dropout_rate),
            "must be in [0, 1)",
        );
        positive(
            &mut e,
            "window_size",
            self.window_size > 0,
            "must be positive",
        );
        positive(
            &mut e,
            "stride",
            self.stride > 0 && self.stride <= self.window_size,
            "must be in 1..=window_size",
        );
        positive(
            &mut e,
            "loss_threshold",
            self.loss_threshold > 0.0,
            "must be positive",
        );
        positive(
            &mut e,
            "max_epochs_per_window",
            self.max_epochs_per_window > 0,
            "must be at least 1",
        );
        positive(
            &mut e,
            "batch_size",
            self.batch_size > 0,
            "must be at least 1",
        );
        positive(
            &mut e,
            "learning_rate",
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            "must be positive",
        );
        positive(
            &mut e,
            "mask_rate",
            self.mask_rate > 0.0 && self.mask_rate <= 1.0,
            "must be in (0, 1]",
        );
        let parts = [self.corrupt_mask, self.corrupt_random, self.corrupt_keep];
        positive(
            &mut e,
            "corrupt_mask",
            parts.iter().all(|&p| unit(p)) && (parts.iter().sum::<f64>() - 1.0).abs() < 1e-9,
            "corrupt_mask + corrupt_random + corrupt_keep must be fractions summing to 1",
        );
        positive(
            &mut e,
            "connection_cap",
            self.connection_cap > 0,
            "must be at least 1",
        );
        positive(
            &mut e,
            "embed_batch_size",
            self.embed_batch_size > 0,
            "must be at least 1",
        );
        positive(
            &mut e,
            "target_dim",
            (2..=3).contains(&self.target_dim),
            "must be 2 or 3",
        );
        positive(
            &mut e,
            "n_neighbors",
            self.n_neighbors > 0,
            "must be at least 1",
        );
        positive(
            &mut e,
            "min_dist",
            self.min_dist >= 0.0 && self.min_dist <= self.spread,
            "must be in [0, spread]",
        );
        positive(&mut e, "spread", self.spread > 0.0, "must be positive");
        positive(
            &mut e,
            "reduce_epochs",
            self.reduce_epochs > 0,
            "must be at least 1",
        );
        positive(
            &mut e,
            "reduce_learning_rate",
            self.reduce_learning_rate > 0.0,
            "must be positive",
        );
        positive(
            &mut e,
            "layout_bound",
            self.layout_bound > 0.0,
            "must be positive",
        );
        positive(
            &mut e,
            "analogy_k",
            self.analogy_k > 0,
            "must be at least 1",
        );
        if e.is_empty() {
            Ok(())
        } else {
            bail!("invalid configuration:\n  {}", e.join("\n  "))
        }
    }

    pub fn model(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            d_model: self.d_model,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_ff: self.d_ff,
            max_len: self.max_len,
            dropout_rate: self.dropout_rate,
            seed: self.seed,
        }
    }

    pub fn window(&self) -> WindowSpec {
        WindowSpec {
            window_size: self.window_size,
            stride: self.stride,
            loss_threshold: self.loss_threshold,
            max_epochs_per_window: self.max_epochs_per_window,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            mask_rate: self.mask_rate,
            corruption: Corruption {
                mask: self.corrupt_mask,
                random: self.corrupt_random,
                keep: self.corrupt_keep,
            },
            seed: self.seed,
        }
    }

    pub fn embed(&self) -> EmbedOptions {
        EmbedOptions {
            pooling: self.pooling,
            batch_size: self.embed_batch_size,
        }
    }

    pub fn neighbor(&self) -> NeighborParams {
        NeighborParams {
            target_dim: self.target_dim,
            n_neighbors: self.n_neighbors,
            min_dist: self.min_dist,
            spread: self.spread,
            n_epochs: self.reduce_epochs,
            learning_rate: self.reduce_learning_rate,
            negative_sample_rate: self.negative_sample_rate,
            layout_bound: self.layout_bound,
            seed: self.seed,
        }
    }

    /// SHA-256 of the canonical TOML rendering, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
