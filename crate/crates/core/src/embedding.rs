//! Connection, address and port vectors from a trained encoder, and
//! analogy queries over them.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::model::{hidden_states, EncoderModel, MaskedBatch};
use crate::rng::rng_from;
use crate::tokenizer::{Vocab, CLS, PAD, SEP};
use crate::zeek::FiveTuple;
use crate::{Error, Result};

/// Cap on embedded connections per table.
pub const DEFAULT_CONNECTION_CAP: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Connection,
    Address,
    Port,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Connection => "connection",
            EntityKind::Address => "address",
            EntityKind::Port => "port",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "connection" => Ok(Self::Connection),
            "address" => Ok(Self::Address),
            "port" => Ok(Self::Port),
            other => Err(Error::value(
                "kind",
                format!("unknown entity kind `{other}`"),
            )),
        }
    }
}

/// How final-layer states become one vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Mean over positions that are not CLS, SEP or PAD.
    #[default]
    MeanContent,
    /// The state at the CLS position.
    Cls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbedOptions {
    pub pooling: Pooling,
    pub batch_size: usize,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        Self {
            pooling: Pooling::MeanContent,
            batch_size: 64,
        }
    }
}

/// Keyed vectors of one entity kind.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    kind: EntityKind,
    window_index: Option<usize>,
    keys: Vec<String>,
    vectors: Array2<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(
        kind: EntityKind,
        window_index: Option<usize>,
        keys: Vec<String>,
        vectors: Array2<f64>,
    ) -> Result<Self> {
        if keys.len() != vectors.nrows() {
            return Err(Error::Shape(format!(
                "{} keys for {} vectors",
                keys.len(),
                vectors.nrows()
            )));
        }
        if let Some(pos) = vectors.iter().position(|v| !v.is_finite()) {
            return Err(Error::value(
                "vectors",
                format!(
                    "non-finite value for key `{}`",
                    keys[pos / vectors.ncols().max(1)]
                ),
            ));
        }
        let mut index = HashMap::with_capacity(keys.len());
        for (i, k) in keys.iter().enumerate() {
            if index.insert(k.clone(), i).is_some() {
                return Err(Error::value("keys", format!("duplicate key `{k}`")));
            }
        }
        Ok(Self {
            kind,
            window_index,
            keys,
            vectors,
            index,
        })
    }

    pub fn kind(&self) -> EntityKind {
        self.kind
    }

    pub fn window_index(&self) -> Option<usize> {
        self.window_index
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn get(&self, key: &str) -> Option<ArrayView1<'_, f64>> {
        self.index.get(key).map(|&i| self.vectors.row(i))
    }

    /// Header `key<TAB>dim=D<TAB>kind`, then `key<TAB>v1 v2 …` per entity.
    /// A known window index is written as a `# window_index=N` line first.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        if let Some(w) = self.window_index {
            let _ = writeln!(s, "# window_index={w}");
        }
        let _ = writeln!(s, "key\tdim={}\t{}", self.dim(), self.kind);
        for (key, row) in self.keys.iter().zip(self.vectors.outer_iter()) {
            s.push_str(key);
            s.push('\t');
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    s.push(' ');
                }
                let _ = write!(s, "{v}");
            }
            s.push('\n');
        }
        s
    }

    /// Parses [`Self::to_file_string`] output. Other `#` lines before the
    /// header are ignored.
    pub fn from_file_str(text: &str) -> Result<Self> {
        let mut window_index = None;
        let mut lines = text.lines().enumerate();
        let (dim, kind) = loop {
            let (i, line) = lines
                .next()
                .ok_or_else(|| Error::malformed(1, "missing embedding table header"))?;
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(w) = rest.trim().strip_prefix("window_index=") {
                    window_index = Some(
                        w.parse()
                            .map_err(|_| Error::malformed(i + 1, "bad window_index"))?,
                    );
                }
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            let dim = match parts.as_slice() {
                ["key", d, _] => d.strip_prefix("dim=").and_then(|d| d.parse::<usize>().ok()),
                _ => None,
            }
            .ok_or_else(|| Error::malformed(i + 1, "expected header key<TAB>dim=D<TAB>kind"))?;
            break (dim, parts[2].parse::<EntityKind>()?);
        };
        let mut keys = Vec::new();
        let mut flat = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let (key, values) = line
                .split_once('\t')
                .ok_or_else(|| Error::malformed(i + 1, "expected key<TAB>values"))?;
            let before = flat.len();
            for v in values.split(' ') {
                flat.push(
                    v.parse::<f64>()
                        .map_err(|e| Error::malformed(i + 1, e.to_string()))?,
                );
            }
            if flat.len() - before != dim {
                return Err(Error::malformed(i + 1, format!("expected {dim} values")));
            }
            keys.push(key.to_string());
        }
        let vectors = Array2::from_shape_vec((keys.len(), dim), flat).expect("row lengths checked");
        Self::new(kind, window_index, keys, vectors)
    }
}

fn is_content(id: u32) -> bool {
    id != PAD && id != CLS && id != SEP
}

/// Embeds each text in eval mode. Texts are encoded at the model's
/// `max_len` and batched with trailing padding trimmed.
pub fn embed_texts<S: AsRef<str>>(
    model: &EncoderModel<f32>,
    vocab: &Vocab,
    texts: &[S],
    opts: &EmbedOptions,
) -> Result<Array2<f64>> {
    if vocab.len() != model.config.vocab_size {
        return Err(Error::Shape(format!(
            "vocab has {} tokens but model expects {}",
            vocab.len(),
            model.config.vocab_size
        )));
    }
    let d = model.config.d_model;
    let mut out = Array2::zeros((texts.len(), d));
    let max_len = model.config.max_len;
    for (chunk_no, chunk) in texts.chunks(opts.batch_size.max(1)).enumerate() {
        let seqs: Vec<Vec<u32>> = chunk
            .iter()
            .map(|t| vocab.encode(t.as_ref(), max_len))
            .collect();
        let batch = MaskedBatch::unmasked(&seqs)?.trim_padding();
        let hidden = hidden_states(model, &batch.input_ids, &batch.attention_mask)?;
        for (b, ids) in batch.input_ids.outer_iter().enumerate() {
            let row = chunk_no * opts.batch_size.max(1) + b;
            let mut acc = Array1::<f64>::zeros(d);
            let count = match opts.pooling {
                Pooling::Cls => {
                    acc.assign(&hidden.slice(ndarray::s![b, 0, ..]).mapv(f64::from));
                    1
                }
                Pooling::MeanContent => {
                    let mut count = 0usize;
                    for (t, &id) in ids.iter().enumerate() {
                        if is_content(id) {
                            acc.zip_mut_with(&hidden.slice(ndarray::s![b, t, ..]), |a, &h| {
                                *a += f64::from(h)
                            });
                            count += 1;
                        }
                    }
                    count
                }
            };
            if count == 0 {
                return Err(Error::value(
                    "text",
                    format!("`{}` has no content tokens", chunk[b].as_ref()),
                ));
            }
            out.row_mut(row).assign(&(acc / count as f64));
        }
    }
    Ok(out)
}

pub fn embed_text(
    model: &EncoderModel<f32>,
    vocab: &Vocab,
    text: &str,
    opts: &EmbedOptions,
) -> Result<Array1<f64>> {
    Ok(embed_texts(model, vocab, &[text], opts)?.row(0).to_owned())
}

/// First occurrence order, duplicates removed.
fn dedup<I: IntoIterator<Item = String>>(items: I) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    items
        .into_iter()
        .filter(|k| seen.insert(k.clone()))
        .collect()
}

fn table_of(
    model: &EncoderModel<f32>,
    vocab: &Vocab,
    kind: EntityKind,
    keys: Vec<String>,
    window_index: Option<usize>,
    opts: &EmbedOptions,
) -> Result<EmbeddingTable> {
    let vectors = embed_texts(model, vocab, &keys, opts)?;
    EmbeddingTable::new(kind, window_index, keys, vectors)
}

/// One entry per distinct five tuple, keyed by its serialized line.
pub fn embed_five_tuples(
    model: &EncoderModel<f32>,
    vocab: &Vocab,
    tuples: &[FiveTuple],
    window_index: Option<usize>,
    opts: &EmbedOptions,
) -> Result<EmbeddingTable> {
    let keys = dedup(tuples.iter().map(FiveTuple::to_line));
    table_of(
        model,
        vocab,
        EntityKind::Connection,
        keys,
        window_index,
        opts,
    )
}

/// One entry per distinct bare address string.
pub fn embed_addresses<S: AsRef<str>>(
    model: &EncoderModel<f32>,
    vocab: &Vocab,
    addresses: &[S],
    window_index: Option<usize>,
    opts: &EmbedOptions,
) -> Result<EmbeddingTable> {
    let keys = dedup(addresses.iter().map(|a| a.as_ref().to_string()));
    table_of(model, vocab, EntityKind::Address, keys, window_index, opts)
}

/// One entry per distinct port, keyed by its decimal string.
pub fn embed_ports(
    model: &EncoderModel<f32>,
    vocab: &Vocab,
    ports: &[u16],
    window_index: Option<usize>,
    opts: &EmbedOptions,
) -> Result<EmbeddingTable> {
    let keys = dedup(ports.iter().map(u16::to_string));
    table_of(model, vocab, EntityKind::Port, keys, window_index, opts)
}

/// At most `cap` items, drawn uniformly without replacement and kept in
/// their original order.
pub fn sample_capped<T: Clone>(items: &[T], cap: usize, seed: u64) -> Vec<T> {
    if items.len() <= cap {
        return items.to_vec();
    }
    let mut picked = sample(&mut rng_from(seed, &[0x5a3]), items.len(), cap).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| items[i].clone()).collect()
}

pub fn cosine(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0)
}

/// `v(base) - v(subtract) + v(add)`, ranked against candidates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalogyQuery {
    pub base: String,
    pub subtract: String,
    pub add: String,
    pub k: usize,
}

fn lookup<'a>(tables: &[&'a EmbeddingTable], key: &str) -> Result<ArrayView1<'a, f64>> {
    tables
        .iter()
        .find_map(|t| t.get(key))
        .ok_or_else(|| Error::Lookup(key.to_string()))
}

/// Top `k` candidates by cosine similarity to the query vector, excluding
/// the base key. Keys are resolved in the first of `tables` holding them.
/// Equal scores rank by key.
pub fn analogy(
    tables: &[&EmbeddingTable],
    candidates: &EmbeddingTable,
    query: &AnalogyQuery,
) -> Result<Vec<(String, f64)>> {
    if query.k == 0 {
        return Err(Error::Config("analogy k must be at least 1".into()));
    }
    let base = lookup(tables, &query.base)?;
    let sub = lookup(tables, &query.subtract)?;
    let add = lookup(tables, &query.add)?;
    if sub.len() != base.len() || add.len() != base.len() || candidates.dim() != base.len() {
        return Err(Error::Shape(
            "analogy terms and candidates differ in dimension".into(),
        ));
    }
    let target = &base - &sub + add;
    let mut scored: Vec<(String, f64)> = candidates
        .keys()
        .iter()
        .zip(candidates.vectors().outer_iter())
        .filter(|(k, _)| **k != query.base)
        .map(|(k, v)| (k.clone(), cosine(target.view(), v)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(query.k);
    Ok(scored)
}
