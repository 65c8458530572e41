//! Projection of embedding tables to two or three dimensions.

mod neighbor;
mod pca;
mod trust;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use neighbor::{fit_ab, neighbor_reduce, NeighborParams};
pub use pca::{pca, pca_reduce, Pca};
pub use trust::trustworthiness;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pca,
    Neighbor,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Pca => "pca",
            Method::Neighbor => "neighbor",
        }
    }
}

/// Low-dimensional coordinates aligned with the source keys.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedPoints {
    pub keys: Vec<String>,
    pub coords: Array2<f64>,
    pub method: Method,
    pub params: BTreeMap<String, String>,
}

impl ReducedPoints {
    pub fn target_dim(&self) -> usize {
        self.coords.ncols()
    }

    /// One `key<TAB>x<TAB>y[<TAB>z]` line per entity.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for (key, row) in self.keys.iter().zip(self.coords.outer_iter()) {
            s.push_str(key);
            for v in row {
                let _ = write!(s, "\t{v}");
            }
            s.push('\n');
        }
        s
    }

    /// Parses [`Self::to_file_string`] output; `#` lines are skipped.
    pub fn from_file_str(text: &str, method: Method) -> Result<Self> {
        let mut keys = Vec::new();
        let mut flat = Vec::new();
        let mut dim = None;
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let key = parts.next().unwrap_or_default();
            let vals = parts
                .map(|p| {
                    p.parse::<f64>()
                        .map_err(|e| Error::malformed(i + 1, e.to_string()))
                })
                .collect::<Result<Vec<_>>>()?;
            if *dim.get_or_insert(vals.len()) != vals.len() || !(2..=3).contains(&vals.len()) {
                return Err(Error::malformed(
                    i + 1,
                    "expected 2 or 3 coordinates per line",
                ));
            }
            keys.push(key.to_string());
            flat.extend(vals);
        }
        let d = dim.unwrap_or(2);
        let coords = Array2::from_shape_vec((keys.len(), d), flat).expect("row lengths checked");
        Ok(Self {
            keys,
            coords,
            method,
            params: BTreeMap::new(),
        })
    }
}

fn check_target_dim(target_dim: usize) -> Result<()> {
    if !(2..=3).contains(&target_dim) {
        return Err(Error::Config(format!(
            "target_dim {target_dim} must be 2 or 3"
        )));
    }
    Ok(())
}

fn check_input(keys: &[String], vectors: &ndarray::ArrayView2<'_, f64>) -> Result<()> {
    if keys.len() != vectors.nrows() {
        return Err(Error::Alignment(format!(
            "{} keys for {} vectors",
            keys.len(),
            vectors.nrows()
        )));
    }
    if vectors.iter().any(|v| !v.is_finite()) {
        return Err(Error::value("vectors", "non-finite component"));
    }
    Ok(())
}
