//! Fuzzy neighbor-graph layout in the style of UMAP.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_input, check_target_dim, pca, Method, ReducedPoints};
use crate::rng::rng_from;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeighborParams {
    pub target_dim: usize,
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub n_epochs: usize,
    pub learning_rate: f64,
    pub negative_sample_rate: usize,
    /// No output coordinate leaves `[-layout_bound, layout_bound]`.
    pub layout_bound: f64,
    pub seed: u64,
}

impl Default for NeighborParams {
    fn default() -> Self {
        Self {
            target_dim: 2,
            n_neighbors: 15,
            min_dist: 0.1,
            spread: 1.0,
            n_epochs: 500,
            learning_rate: 1.0,
            negative_sample_rate: 5,
            layout_bound: 20.0,
            seed: 42,
        }
    }
}

impl NeighborParams {
    pub fn validate(&self, n: usize) -> Result<()> {
        check_target_dim(self.target_dim)?;
        if self.n_neighbors < 1 || self.n_neighbors >= n {
            return Err(Error::Config(format!(
                "n_neighbors {} must be in 1..{n}",
                self.n_neighbors
            )));
        }
        if self.spread.is_nan()
            || self.spread <= 0.0
            || self.min_dist.is_nan()
            || self.min_dist < 0.0
            || self.min_dist > self.spread
        {
            return Err(Error::Config(format!(
                "need 0 <= min_dist ({}) <= spread ({}), spread > 0",
                self.min_dist, self.spread
            )));
        }
        if self.n_epochs == 0
            || self.learning_rate.is_nan()
            || self.learning_rate <= 0.0
            || self.layout_bound.is_nan()
            || self.layout_bound <= 0.0
        {
            return Err(Error::Config(
                "n_epochs, learning_rate and layout_bound must be positive".into(),
            ));
        }
        Ok(())
    }

    fn record(&self, a: f64, b: f64) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        for (k, v) in [
            ("target_dim", self.target_dim.to_string()),
            ("n_neighbors", self.n_neighbors.to_string()),
            ("min_dist", self.min_dist.to_string()),
            ("spread", self.spread.to_string()),
            ("n_epochs", self.n_epochs.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            (
                "negative_sample_rate",
                self.negative_sample_rate.to_string(),
            ),
            ("layout_bound", self.layout_bound.to_string()),
            ("seed", self.seed.to_string()),
            ("metric", "cosine".into()),
            ("init", "pca".into()),
            ("a", format!("{a:.6}")),
            ("b", format!("{b:.6}")),
        ] {
            m.insert(k.to_string(), v);
        }
        m
    }
}

fn cosine_distance(
    a: ndarray::ArrayView1<'_, f64>,
    b: ndarray::ArrayView1<'_, f64>,
    na: f64,
    nb: f64,
) -> f64 {
    if na == 0.0 || nb == 0.0 {
        return if na == nb { 0.0 } else { 1.0 };
    }
    (1.0 - a.dot(&b) / (na * nb)).max(0.0)
}

/// Exact `k` nearest neighbors under cosine distance, self excluded, ties
/// by index.
fn knn(x: &ArrayView2<'_, f64>, k: usize) -> Vec<Vec<(usize, f64)>> {
    let norms: Vec<f64> = x.outer_iter().map(|r| r.dot(&r).sqrt()).collect();
    (0..x.nrows())
        .map(|i| {
            let mut d: Vec<(usize, f64)> = (0..x.nrows())
                .filter(|&j| j != i)
                .map(|j| (j, cosine_distance(x.row(i), x.row(j), norms[i], norms[j])))
                .collect();
            d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            d.truncate(k);
            d
        })
        .collect()
}

/// Per-point bandwidth: `Σ exp(-(d - ρ)/σ) = log2(k)` over the neighbors,
/// with ρ the nearest-neighbor distance.
fn smooth_knn(neighbors: &[(usize, f64)], k: usize, mean_all: f64) -> (f64, f64) {
    let rho = neighbors
        .iter()
        .map(|p| p.1)
        .find(|&d| d > 0.0)
        .unwrap_or(0.0);
    let target = (k as f64).log2();
    let (mut lo, mut hi, mut sigma) = (0.0, f64::INFINITY, 1.0);
    for _ in 0..64 {
        let psum: f64 = neighbors
            .iter()
            .map(|&(_, d)| {
                let gap = d - rho;
                if gap > 0.0 {
                    (-gap / sigma).exp()
                } else {
                    1.0
                }
            })
            .sum();
        if (psum - target).abs() < 1e-5 {
            break;
        }
        if psum > target {
            hi = sigma;
            sigma = (lo + hi) / 2.0;
        } else {
            lo = sigma;
            sigma = if hi.is_finite() {
                (lo + hi) / 2.0
            } else {
                sigma * 2.0
            };
        }
    }
    let mean_local = neighbors.iter().map(|p| p.1).sum::<f64>() / neighbors.len().max(1) as f64;
    let floor = 1e-3 * if rho > 0.0 { mean_local } else { mean_all };
    (rho, sigma.max(floor))
}

/// Symmetric fuzzy graph `w + wᵀ - w∘wᵀ` as sorted `(i, j, w)` edges with
/// `i != j`.
fn fuzzy_graph(x: &ArrayView2<'_, f64>, k: usize) -> Vec<(usize, usize, f64)> {
    let nn = knn(x, k);
    let mean_all = nn.iter().flatten().map(|p| p.1).sum::<f64>() / (nn.len() * k) as f64;
    let mut directed: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (i, row) in nn.iter().enumerate() {
        let (rho, sigma) = smooth_knn(row, k, mean_all);
        for &(j, d) in row {
            let w = if d - rho <= 0.0 {
                1.0
            } else {
                (-(d - rho) / sigma).exp()
            };
            directed.insert((i, j), w);
        }
    }
    let mut sym = BTreeMap::new();
    for (&(i, j), &w) in &directed {
        let back = directed.get(&(j, i)).copied().unwrap_or(0.0);
        let v = w + back - w * back;
        sym.insert((i, j), v);
        sym.insert((j, i), v);
    }
    sym.into_iter().map(|((i, j), w)| (i, j, w)).collect()
}

/// Fits `1 / (1 + a·d^(2b))` to the target membership curve (1 below
/// `min_dist`, exponential decay with scale `spread` above) by least
/// squares over a grid of `b` with a golden-section search on `ln a`.
pub fn fit_ab(spread: f64, min_dist: f64) -> (f64, f64) {
    let xs: Vec<f64> = (1..=300).map(|i| 3.0 * spread * i as f64 / 300.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| {
            if x < min_dist {
                1.0
            } else {
                (-(x - min_dist) / spread).exp()
            }
        })
        .collect();
    let sse = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let f = 1.0 / (1.0 + a * x.powf(2.0 * b));
                (f - y) * (f - y)
            })
            .sum()
    };
    let best_a = |b: f64| -> (f64, f64) {
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = (-8.0f64, 8.0f64);
        for _ in 0..80 {
            let m1 = hi - phi * (hi - lo);
            let m2 = lo + phi * (hi - lo);
            if sse(m1.exp(), b) < sse(m2.exp(), b) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let a = ((lo + hi) / 2.0).exp();
        (a, sse(a, b))
    };
    let consider = |best: &mut (f64, f64, f64), b: f64| {
        let (a, e) = best_a(b);
        if e < best.2 {
            *best = (a, b, e);
        }
    };
    let mut best = (1.0, 1.0, f64::INFINITY);
    for i in 1..=300 {
        consider(&mut best, i as f64 * 0.01);
    }
    let center = best.1;
    for i in -100..=100 {
        consider(&mut best, center + i as f64 * 1e-4);
    }
    (best.0, best.1)
}

fn clip(v: f64) -> f64 {
    v.clamp(-4.0, 4.0)
}

/// Fuzzy-graph layout: cosine kNN graph, PCA initialization scaled to a
/// box of half-width 10, then SGD with edge attraction and negative-sampled
/// repulsion.
pub fn neighbor_reduce(
    keys: &[String],
    vectors: ArrayView2<'_, f64>,
    params: &NeighborParams,
) -> Result<ReducedPoints> {
    check_input(keys, &vectors)?;
    let n = vectors.nrows();
    params.validate(n)?;
    let dim = params.target_dim;
    let edges = fuzzy_graph(&vectors, params.n_neighbors);
    let (a, b) = fit_ab(params.spread, params.min_dist);

    let mut y: Array2<f64> = if n > dim {
        pca(vectors, dim)?.coords
    } else {
        Array2::zeros((n, dim))
    };
    let mut rng = rng_from(params.seed, &[0x0a4]);
    let max_abs = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if max_abs > 0.0 { 10.0 / max_abs } else { 1.0 };
    y.mapv_inplace(|v| v * scale);
    for v in y.iter_mut() {
        *v += rng.random_range(-1e-4..1e-4);
    }

    let max_w = edges.iter().map(|e| e.2).fold(0.0, f64::max);
    let epochs = params.n_epochs as f64;
    let schedule: Vec<(usize, usize, f64)> = edges
        .iter()
        .filter(|e| e.2 >= max_w / epochs)
        .map(|&(i, j, w)| (i, j, max_w / w))
        .collect();
    let neg_rate = params.negative_sample_rate as f64;
    let mut next_sample: Vec<f64> = schedule.iter().map(|e| e.2).collect();
    let mut next_negative: Vec<f64> = schedule.iter().map(|e| e.2 / neg_rate.max(1.0)).collect();
    let bound = params.layout_bound;
    let mut diff = vec![0.0; dim];

    for epoch in 1..=params.n_epochs {
        let e = epoch as f64;
        let alpha = params.learning_rate * (1.0 - (e - 1.0) / epochs);
        for (s, &(i, j, per_sample)) in schedule.iter().enumerate() {
            if next_sample[s] > e {
                continue;
            }
            let mut d2 = 0.0;
            for c in 0..dim {
                diff[c] = y[[i, c]] - y[[j, c]];
                d2 += diff[c] * diff[c];
            }
            if d2 > 0.0 {
                let coeff = -2.0 * a * b * d2.powf(b - 1.0) / (1.0 + a * d2.powf(b));
                for c in 0..dim {
                    let g = clip(coeff * diff[c]) * alpha;
                    y[[i, c]] = (y[[i, c]] + g).clamp(-bound, bound);
                    y[[j, c]] = (y[[j, c]] - g).clamp(-bound, bound);
                }
            }
            next_sample[s] += per_sample;

            if params.negative_sample_rate > 0 {
                let per_negative = per_sample / neg_rate;
                let count = ((e - next_negative[s]) / per_negative).floor().max(0.0) as usize;
                for _ in 0..count {
                    let other = rng.random_range(0..n);
                    if other == i {
                        continue;
                    }
                    let mut d2 = 0.0;
                    for c in 0..dim {
                        diff[c] = y[[i, c]] - y[[other, c]];
                        d2 += diff[c] * diff[c];
                    }
                    let coeff = if d2 > 0.0 {
                        2.0 * b / ((0.001 + d2) * (1.0 + a * d2.powf(b)))
                    } else {
                        0.0
                    };
                    for c in 0..dim {
                        let g = if coeff > 0.0 {
                            clip(coeff * diff[c])
                        } else {
                            4.0
                        };
                        y[[i, c]] = (y[[i, c]] + g * alpha).clamp(-bound, bound);
                    }
                }
                next_negative[s] += count as f64 * per_negative;
            }
        }
    }
    Ok(ReducedPoints {
        keys: keys.to_vec(),
        coords: y,
        method: Method::Neighbor,
        params: params.record(a, b),
    })
}
