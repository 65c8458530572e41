use ndarray::ArrayView2;

use crate::{Error, Result};

fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Other points ordered by Euclidean distance from `i`, ties by index.
fn ranking(x: &ArrayView2<'_, f64>, i: usize) -> Vec<usize> {
    let mut others: Vec<(f64, usize)> = (0..x.nrows())
        .filter(|&j| j != i)
        .map(|j| (sq_dist(x.row(i), x.row(j)), j))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    others.into_iter().map(|(_, j)| j).collect()
}

/// Trustworthiness of the `k`-neighborhoods of `low` with respect to
/// `high`: 1 minus the normalized rank excess of points that are low-space
/// neighbors without being high-space neighbors.
pub fn trustworthiness(
    high: ArrayView2<'_, f64>,
    low: ArrayView2<'_, f64>,
    k: usize,
) -> Result<f64> {
    let n = high.nrows();
    if low.nrows() != n {
        return Err(Error::Alignment(format!(
            "{n} high vs {} low points",
            low.nrows()
        )));
    }
    if k == 0 || k >= n {
        return Err(Error::Config(format!("k = {k} must be in 1..{n}")));
    }
    let norm = (n * k) as f64 * (2.0 * n as f64 - 3.0 * k as f64 - 1.0);
    if norm <= 0.0 {
        return Err(Error::Config(format!(
            "k = {k} too large for {n} points (need 3k + 1 < 2n)"
        )));
    }
    let mut penalty = 0usize;
    for i in 0..n {
        let high_rank = ranking(&high, i);
        let mut rank_of = vec![0usize; n];
        for (r, &j) in high_rank.iter().enumerate() {
            rank_of[j] = r + 1;
        }
        for &j in ranking(&low, i).iter().take(k) {
            if rank_of[j] > k {
                penalty += rank_of[j] - k;
            }
        }
    }
    Ok(1.0 - 2.0 * penalty as f64 / norm)
}
