//! Artifact paths, provenance stamps and guarded file I/O.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clem_core::embedding::EntityKind;
use serde::Serialize;

use crate::config::RunConfig;

/// Tool version recorded in every artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Who produced an artifact and from what configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub stage: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(stage: &str, cfg: &RunConfig) -> Self {
        Self {
            stage: stage.into(),
            version: VERSION.into(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
        }
    }

    /// `key=value` pairs separated by spaces.
    pub fn fields(&self) -> String {
        format!(
            "stage={} version={} seed={} config={}",
            self.stage, self.version, self.seed, self.config_hash
        )
    }

    /// A `#` comment line for text artifacts.
    pub fn comment(&self) -> String {
        format!("# clem {}\n", self.fields())
    }

    pub fn as_meta(&self) -> std::collections::BTreeMap<String, String> {
        [
            ("stage", self.stage.clone()),
            ("version", self.version.clone()),
            ("seed", self.seed.to_string()),
            ("config_hash", self.config_hash.clone()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// File layout of one run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn conn_log(&self) -> PathBuf {
        self.file("conn.log")
    }
    pub fn truth_addresses(&self) -> PathBuf {
        self.file("truth_addresses.tsv")
    }
    pub fn truth_connections(&self) -> PathBuf {
        self.file("truth_connections.tsv")
    }
    pub fn anomalies(&self) -> PathBuf {
        self.file("anomalies.tsv")
    }
    pub fn corpus(&self) -> PathBuf {
        self.file("corpus.txt")
    }
    pub fn tuples(&self) -> PathBuf {
        self.file("tuples.txt")
    }
    pub fn vocab(&self) -> PathBuf {
        self.file("vocab.txt")
    }
    pub fn vocab_provenance(&self) -> PathBuf {
        self.file("vocab.provenance.json")
    }
    pub fn checkpoints(&self) -> PathBuf {
        self.file("checkpoints")
    }
    pub fn train_report(&self) -> PathBuf {
        self.file("train_report.jsonl")
    }
    pub fn train_metrics(&self) -> PathBuf {
        self.file("metrics_train.json")
    }
    pub fn embeddings(&self, kind: EntityKind) -> PathBuf {
        self.file(&format!("embeddings_{kind}.tsv"))
    }
    pub fn reduced(&self, kind: EntityKind) -> PathBuf {
        self.file(&format!("reduced_{kind}.tsv"))
    }
    pub fn clusters(&self, kind: EntityKind) -> PathBuf {
        self.file(&format!("clusters_{kind}.tsv"))
    }
    pub fn cluster_metrics(&self, kind: EntityKind) -> PathBuf {
        self.file(&format!("metrics_{kind}.json"))
    }
    pub fn eval_metrics(&self) -> PathBuf {
        self.file("metrics_eval.json")
    }
    pub fn analogy(&self) -> PathBuf {
        self.file("analogy.json")
    }
    pub fn scatter(&self, kind: EntityKind) -> PathBuf {
        self.file(&format!("scatter_{kind}.svg"))
    }
    pub fn ari_curve(&self, kind: EntityKind) -> PathBuf {
        self.file(&format!("ari_curve_{kind}.svg"))
    }
}

/// Reads an input artifact, naming the expected path when it is missing.
pub fn read_input(path: &Path) -> Result<String> {
    require(path)?;
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn read_input_bytes(path: &Path) -> Result<Vec<u8>> {
    require(path)?;
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

pub fn require(path: &Path) -> Result<()> {
    if !path.exists() {
        bail!("missing artifact: expected {}", path.display());
    }
    Ok(())
}

/// Writes an output artifact unless it exists and `force` is off.
pub fn write_output(path: &Path, contents: impl AsRef<[u8]>, force: bool) -> Result<()> {
    check_writable(path, force)?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn check_writable(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        bail!("refusing to overwrite {} (pass --force)", path.display());
    }
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}
