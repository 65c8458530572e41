use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{check_input, check_target_dim, Method, ReducedPoints};
use crate::{Error, Result};

/// Principal axes of a point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Array1<f64>,
    /// Unit axes as rows, by descending eigenvalue.
    pub axes: Array2<f64>,
    /// Sample-covariance eigenvalues of the kept axes.
    pub eigenvalues: Vec<f64>,
    /// Centered data projected on `axes`.
    pub coords: Array2<f64>,
}

/// Eigen-decomposes the sample covariance and projects onto the top
/// `n_axes` axes. Each axis is signed so its largest-magnitude loading is
/// positive. Axes with no variance are zero-filled.
pub fn pca(vectors: ArrayView2<'_, f64>, n_axes: usize) -> Result<Pca> {
    let (n, d) = vectors.dim();
    if n < 2 || n_axes == 0 {
        return Err(Error::Config(format!(
            "PCA needs at least 2 points, got {n}"
        )));
    }
    let mean = vectors.mean_axis(Axis(0)).expect("non-empty");
    let centered = &vectors - &mean;
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[[i, j]]));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let top = eig.eigenvalues[order[0]].max(0.0);
    let floor = top * 1e-12 * d as f64;
    let mut axes = Array2::zeros((n_axes, d));
    let mut eigenvalues = Vec::with_capacity(n_axes);
    let mut degenerate = 0;
    for (row, &idx) in order.iter().take(n_axes).enumerate() {
        let value = eig.eigenvalues[idx];
        if value.is_nan() || value <= floor {
            degenerate += 1;
            eigenvalues.push(0.0);
            continue;
        }
        let col = eig.eigenvectors.column(idx);
        let pivot = (0..d)
            .max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs()).then(b.cmp(&a)))
            .expect("d > 0");
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            axes[[row, j]] = sign * col[j];
        }
        eigenvalues.push(value);
    }
    if degenerate > 0 {
        log::warn!("degenerate data: {degenerate} of {n_axes} principal axes have no variance");
    }
    let coords = centered.dot(&axes.t());
    Ok(Pca {
        mean,
        axes,
        eigenvalues,
        coords,
    })
}

/// PCA projection to `target_dim` (2 or 3) dimensions.
pub fn pca_reduce(
    keys: &[String],
    vectors: ArrayView2<'_, f64>,
    target_dim: usize,
) -> Result<ReducedPoints> {
    check_target_dim(target_dim)?;
    check_input(keys, &vectors)?;
    if vectors.nrows() < target_dim + 1 {
        return Err(Error::Config(format!(
            "PCA to {target_dim} dimensions needs at least {} entries, got {}",
            target_dim + 1,
            vectors.nrows()
        )));
    }
    let fit = pca(vectors, target_dim)?;
    let mut params = BTreeMap::new();
    params.insert("target_dim".into(), target_dim.to_string());
    params.insert(
        "eigenvalues".into(),
        fit.eigenvalues
            .iter()
            .map(|v| format!("{v:e}"))
            .collect::<Vec<_>>()
            .join(","),
    );
    Ok(ReducedPoints {
        keys: keys.to_vec(),
        coords: fit.coords,
        method: Method::Pca,
        params,
    })
}
