//! K-means, Rand index scoring and ARI-driven choice of k.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{derive_seed, rng_from};
use crate::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-6;
/// k-means++ seedings tried by [`kmeans_restarts`].
pub const DEFAULT_RESTARTS: usize = 10;

/// A labeling of keyed entities; labels are dense ids in `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clustering {
    pub keys: Vec<String>,
    pub labels: Vec<usize>,
    pub k: usize,
}

impl Clustering {
    pub fn new(keys: Vec<String>, labels: Vec<usize>) -> Result<Self> {
        if keys.len() != labels.len() {
            return Err(Error::Alignment(format!(
                "{} keys but {} labels",
                keys.len(),
                labels.len()
            )));
        }
        let k = labels.iter().max().map_or(0, |m| m + 1);
        Ok(Self { keys, labels, k })
    }

    /// Maps opaque label strings to dense ids in sorted name order. Returns
    /// the clustering and the label names indexed by id.
    pub fn from_named<S: AsRef<str>>(pairs: &[(String, S)]) -> Result<(Self, Vec<String>)> {
        let names: Vec<String> = pairs
            .iter()
            .map(|(_, l)| l.as_ref().to_string())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let id: BTreeMap<&str, usize> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let mut seen = std::collections::HashSet::new();
        for (key, _) in pairs {
            if !seen.insert(key.as_str()) {
                return Err(Error::Alignment(format!("duplicate key `{key}`")));
            }
        }
        let keys = pairs.iter().map(|(k, _)| k.clone()).collect();
        let labels = pairs.iter().map(|(_, l)| id[l.as_ref()]).collect();
        let c = Self::new(keys, labels)?;
        Ok((c, names))
    }

    /// The labels of `keys`, in that order. Every key must be labeled.
    pub fn restrict_to<S: AsRef<str>>(&self, keys: &[S]) -> Result<Self> {
        let index: BTreeMap<&str, usize> = self
            .keys
            .iter()
            .enumerate()
            .map(|(i, k)| (k.as_str(), i))
            .collect();
        let labels = keys
            .iter()
            .map(|k| {
                index
                    .get(k.as_ref())
                    .map(|&i| self.labels[i])
                    .ok_or_else(|| Error::Alignment(format!("no label for key `{}`", k.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        let keys = keys.iter().map(|k| k.as_ref().to_string()).collect();
        Ok(Self {
            keys,
            labels,
            k: self.k,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Parses `key<TAB>label` lines; blank lines and `#` comments are skipped.
pub fn parse_labels(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, label) = line
            .split_once('\t')
            .ok_or_else(|| Error::malformed(i + 1, "expected key<TAB>label"))?;
        out.push((key.to_string(), label.to_string()));
    }
    Ok(out)
}

/// Result of [`kmeans`].
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: ArrayView1<'_, f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.outer_iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus(points: ArrayView2<'_, f64>, k: usize, seed: u64) -> Array2<f64> {
    let n = points.nrows();
    let mut rng = rng_from(seed, &[0xc1]);
    let mut centroids = Array2::zeros((k, points.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));
    let mut d2: Vec<f64> = points
        .outer_iter()
        .map(|p| sq_dist(p, points.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && r < w {
                    chosen = i;
                    break;
                }
                r -= w;
            }
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&w| w > 0.0).expect("positive total");
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&points.row(pick));
        for (i, p) in points.outer_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, points.row(pick)));
        }
    }
    centroids
}

/// Assigns every point to its nearest centroid, then gives each empty
/// cluster the point farthest from its centroid among clusters that can
/// spare one.
fn assign(points: ArrayView2<'_, f64>, centroids: &mut Array2<f64>) -> Vec<usize> {
    let k = centroids.nrows();
    let mut labels: Vec<usize> = points
        .outer_iter()
        .map(|p| nearest(p, centroids).0)
        .collect();
    let mut sizes = vec![0usize; k];
    for &l in &labels {
        sizes[l] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let donor = (0..labels.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .map(|i| (i, sq_dist(points.row(i), centroids.row(labels[i]))))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        let Some((i, _)) = donor else { break };
        sizes[labels[i]] -= 1;
        sizes[empty] += 1;
        labels[i] = empty;
        centroids.row_mut(empty).assign(&points.row(i));
    }
    labels
}

fn inertia(points: ArrayView2<'_, f64>, centroids: &Array2<f64>, labels: &[usize]) -> f64 {
    points
        .outer_iter()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, centroids.row(l)))
        .sum()
}

/// Lloyd's algorithm from k-means++ seeds. Stops when no centroid moves by
/// `tol` or more, or after `max_iter` updates.
pub fn kmeans(
    points: ArrayView2<'_, f64>,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeans> {
    let n = points.nrows();
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::Config(format!("k = {k} exceeds {n} points")));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::value("vectors", "non-finite component"));
    }
    let mut centroids = plus_plus(points, k, seed);
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iter {
        let labels = assign(points, &mut centroids);
        history.push(inertia(points, &centroids, &labels));
        let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
        let mut counts = vec![0usize; k];
        for (p, &l) in points.outer_iter().zip(&labels) {
            let mut row = sums.row_mut(l);
            row += &p;
            counts[l] += 1;
        }
        let mut shift = 0.0f64;
        for (j, &count) in counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let mean = sums.row(j).mapv(|v| v / count as f64);
            shift = shift.max(sq_dist(mean.view(), centroids.row(j)).sqrt());
            centroids.row_mut(j).assign(&mean);
        }
        iterations += 1;
        if shift < tol {
            break;
        }
    }
    let labels = assign(points, &mut centroids);
    let inertia = inertia(points, &centroids, &labels);
    Ok(KMeans {
        labels,
        centroids,
        inertia,
        iterations,
        inertia_history: history,
    })
}

/// Best of `restarts` [`kmeans`] runs by final inertia; run `r` is seeded
/// from `(seed, r)` and ties keep the earliest run.
pub fn kmeans_restarts(
    points: ArrayView2<'_, f64>,
    k: usize,
    seed: u64,
    restarts: usize,
    max_iter: usize,
    tol: f64,
) -> Result<KMeans> {
    let mut best = kmeans(points, k, seed, max_iter, tol)?;
    for r in 1..restarts as u64 {
        let fit = kmeans(points, k, derive_seed(seed, &[r]), max_iter, tol)?;
        if fit.inertia < best.inertia {
            best = fit;
        }
    }
    Ok(best)
}

/// Cross tabulation of two labelings with exact pair counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    pub n: u64,
    /// `cells[i][j]`: elements in cluster `i` of A and cluster `j` of B.
    pub cells: Vec<Vec<u64>>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    /// Pairs together in both labelings.
    pub same_same: u128,
    /// Pairs apart in both labelings.
    pub diff_diff: u128,
}

fn pairs(x: u64) -> u128 {
    let x = x as u128;
    x * x.saturating_sub(1) / 2
}

impl ContingencyTable {
    pub fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Alignment(format!(
                "{} vs {} labels",
                a.len(),
                b.len()
            )));
        }
        let rows = a.iter().max().map_or(0, |m| m + 1);
        let cols = b.iter().max().map_or(0, |m| m + 1);
        let mut cells = vec![vec![0u64; cols]; rows];
        for (&i, &j) in a.iter().zip(b) {
            cells[i][j] += 1;
        }
        let row_sums: Vec<u64> = cells.iter().map(|r| r.iter().sum()).collect();
        let col_sums: Vec<u64> = (0..cols)
            .map(|j| cells.iter().map(|r| r[j]).sum())
            .collect();
        let n = a.len() as u64;
        let same_same: u128 = cells.iter().flatten().map(|&c| pairs(c)).sum();
        let sa: u128 = row_sums.iter().map(|&c| pairs(c)).sum();
        let sb: u128 = col_sums.iter().map(|&c| pairs(c)).sum();
        let diff_diff = pairs(n) + same_same - sa - sb;
        Ok(Self {
            n,
            cells,
            row_sums,
            col_sums,
            same_same,
            diff_diff,
        })
    }

    pub fn total_pairs(&self) -> u128 {
        pairs(self.n)
    }

    fn marginal_pairs(&self) -> (u128, u128) {
        (
            self.row_sums.iter().map(|&c| pairs(c)).sum(),
            self.col_sums.iter().map(|&c| pairs(c)).sum(),
        )
    }
}

/// `b` reordered to follow `a`'s keys; both must label the same key set.
fn align(a: &Clustering, b: &Clustering) -> Result<Vec<usize>> {
    if a.keys.len() != b.keys.len() {
        return Err(Error::Alignment(format!(
            "{} vs {} keys",
            a.keys.len(),
            b.keys.len()
        )));
    }
    if a.keys == b.keys {
        return Ok(b.labels.clone());
    }
    Ok(b.restrict_to(&a.keys)?.labels)
}

/// Fraction of element pairs on which the labelings agree.
pub fn rand_index_labels(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(a, b)?;
    let total = t.total_pairs();
    if total == 0 {
        return Ok(1.0);
    }
    Ok((t.same_same + t.diff_diff) as f64 / total as f64)
}

/// Hubert–Arabie adjusted Rand index. When the expected and maximum indices
/// coincide the result is 1 for identical partitions and 0 otherwise.
pub fn adjusted_rand_index_labels(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(a, b)?;
    let total = t.total_pairs() as i128;
    let (sa, sb) = t.marginal_pairs();
    let (sa, sb, index) = (sa as i128, sb as i128, t.same_same as i128);
    // Both sides scaled by 2·C(n, 2) to stay in integers.
    let num = 2 * index * total - 2 * sa * sb;
    let den = (sa + sb) * total - 2 * sa * sb;
    if den == 0 {
        return Ok(if same_partition(a, b) { 1.0 } else { 0.0 });
    }
    Ok(num as f64 / den as f64)
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    let mut fwd = BTreeMap::new();
    let mut back = BTreeMap::new();
    a.iter()
        .zip(b)
        .all(|(&x, &y)| *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x)
}

/// Rand index of two clusterings of the same keys, matched by key.
pub fn rand_index(a: &Clustering, b: &Clustering) -> Result<f64> {
    rand_index_labels(&a.labels, &align(a, b)?)
}

/// Adjusted Rand index of two clusterings of the same keys, matched by key.
pub fn adjusted_rand_index(a: &Clustering, b: &Clustering) -> Result<f64> {
    adjusted_rand_index_labels(&a.labels, &align(a, b)?)
}

/// Best k by ARI against expert labels, with the full curve over `1..=k_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub best_k: usize,
    pub best_ari: f64,
    /// `curve[i]` is the ARI at `k = i + 1`.
    pub curve: Vec<f64>,
}

/// Runs [`kmeans`] for every k in `1..=k_max` and keeps the highest ARI,
/// preferring the lowest k on ties.
pub fn select_k(
    points: ArrayView2<'_, f64>,
    expert: &[usize],
    k_max: usize,
    seed: u64,
) -> Result<KSelection> {
    if expert.len() != points.nrows() {
        return Err(Error::Alignment(format!(
            "{} vectors but {} expert labels",
            points.nrows(),
            expert.len()
        )));
    }
    if k_max == 0 {
        return Err(Error::Config("k_max must be at least 1".into()));
    }
    let mut curve = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let fit = kmeans_restarts(
            points,
            k,
            seed,
            DEFAULT_RESTARTS,
            DEFAULT_MAX_ITER,
            DEFAULT_TOL,
        )?;
        curve.push(adjusted_rand_index_labels(&fit.labels, expert)?);
    }
    let (best, best_ari) =
        curve.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
        );
    Ok(KSelection {
        best_k: best + 1,
        best_ari,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn worked_case() {
        let a = [0, 0, 1, 1];
        let b = [0, 1, 0, 1];
        let t = ContingencyTable::new(&a, &b).unwrap();
        assert_eq!((t.same_same, t.diff_diff), (0, 2));
        assert!((rand_index_labels(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((adjusted_rand_index_labels(&a, &b).unwrap() + 0.5).abs() < 1e-15);
    }

    #[test]
    fn identical_is_one() {
        let a = [0, 1, 2, 2, 1, 0, 3];
        assert_eq!(adjusted_rand_index_labels(&a, &a).unwrap(), 1.0);
        assert_eq!(rand_index_labels(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn degenerate_rule() {
        assert_eq!(
            adjusted_rand_index_labels(&[0, 0, 0], &[0, 0, 0]).unwrap(),
            1.0
        );
        assert_eq!(
            adjusted_rand_index_labels(&[0, 1, 2], &[5, 4, 3]).unwrap(),
            1.0
        );
        assert_eq!(
            adjusted_rand_index_labels(&[0, 0, 0], &[0, 1, 2]).unwrap(),
            0.0
        );
        assert_eq!(adjusted_rand_index_labels(&[0], &[0]).unwrap(), 1.0);
    }

    #[test]
    fn key_mismatch_is_alignment_error() {
        let a = Clustering::new(vec!["x".into(), "y".into()], vec![0, 1]).unwrap();
        let b = Clustering::new(vec!["x".into(), "z".into()], vec![0, 1]).unwrap();
        assert!(matches!(
            adjusted_rand_index(&a, &b),
            Err(Error::Alignment(_))
        ));
        assert!(matches!(rand_index(&a, &b), Err(Error::Alignment(_))));
    }

    #[test]
    fn k_one_and_k_n() {
        let pts = array![[0.0, 0.0], [1.0, 0.0], [5.0, 5.0], [6.0, 5.0]];
        let one = kmeans(pts.view(), 1, 3, 300, 1e-6).unwrap();
        assert!(one.labels.iter().all(|&l| l == 0));
        let all = kmeans(pts.view(), 4, 3, 300, 1e-6).unwrap();
        let mut sorted = all.labels.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
        assert_eq!(all.inertia, 0.0);
    }

    #[test]
    fn bad_k_rejected() {
        let pts = array![[0.0], [1.0]];
        assert!(matches!(
            kmeans(pts.view(), 0, 1, 10, 1e-6),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            kmeans(pts.view(), 3, 1, 10, 1e-6),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn duplicates_still_fill_every_cluster() {
        let pts = array![[1.0], [1.0], [1.0], [2.0]];
        let fit = kmeans(pts.view(), 3, 0, 300, 1e-6).unwrap();
        for j in 0..3 {
            assert!(fit.labels.contains(&j));
        }
    }

    #[test]
    fn named_labels_are_dense_and_sorted() {
        let pairs = vec![
            ("a".to_string(), "web"),
            ("b".to_string(), "dns"),
            ("c".to_string(), "web"),
        ];
        let (c, names) = Clustering::from_named(&pairs).unwrap();
        assert_eq!(names, vec!["dns", "web"]);
        assert_eq!(c.labels, vec![1, 0, 1]);
        let r = c.restrict_to(&["c", "b"]).unwrap();
        assert_eq!(r.labels, vec![1, 0]);
        assert!(c.restrict_to(&["zz"]).is_err());
    }

    #[test]
    fn select_k_single() {
        let pts = array![[0.0], [1.0], [2.0]];
        let s = select_k(pts.view(), &[0, 0, 0], 1, 1).unwrap();
        assert_eq!(s.best_k, 1);
        assert_eq!(s.best_ari, 1.0);
        assert_eq!(s.curve.len(), 1);
    }
}
