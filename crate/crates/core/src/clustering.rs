//! Self-supervised clustering head.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Centers plus the soft labels derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    /// `K x D` centers over the fused features; view `v` owns a contiguous column block.
    pub centers: Array2<f64>,
    /// Global soft labels.
    pub q: Array2<f64>,
    /// Sharpened pseudo-labels.
    pub p: Array2<f64>,
    /// Per-view soft labels.
    pub q_views: Vec<Array2<f64>>,
}

/// Concatenates per-view features column-wise, in view order.
pub fn fuse_features(h_views: &[Array2<f64>]) -> Result<Array2<f64>> {
    let n = h_views
        .first()
        .ok_or_else(|| Error::Dimension("no views to fuse".into()))?
        .nrows();
    if let Some(v) = h_views.iter().position(|h| h.nrows() != n) {
        return Err(Error::Dimension(format!(
            "view {v} has {} rows, view 0 has {n}",
            h_views[v].nrows()
        )));
    }
    let parts: Vec<_> = h_views.iter().map(|h| h.view()).collect();
    Ok(ndarray::concatenate(Axis(1), &parts).expect("row counts checked"))
}

fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Output of a K-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centers: Array2<f64>,
    pub labels: Vec<usize>,
    /// Within-cluster sum of squares after each assignment step.
    pub wcss: Vec<f64>,
}

/// Nearest center of every row (ties to the lowest index) and its squared distance.
pub fn assign(x: ArrayView2<'_, f64>, centers: ArrayView2<'_, f64>) -> Vec<(usize, f64)> {
    x.rows()
        .into_iter()
        .map(|row| {
            centers
                .rows()
                .into_iter()
                .map(|c| sq_dist(row, c))
                .enumerate()
                .fold((0, f64::INFINITY), |best, (j, d)| if d < best.1 { (j, d) } else { best })
        })
        .collect()
}

fn kmeans_plus_plus(x: ArrayView2<'_, f64>, k: usize, rng: &mut impl Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = x.rows().into_iter().map(|r| sq_dist(r, x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            // Guard against landing on an already chosen point through rounding.
            if d2[pick] <= 0.0 {
                (0..n).find(|i| d2[*i] > 0.0).unwrap_or(pick)
            } else {
                pick
            }
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (i, r) in x.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, x.row(next)));
        }
    }
    x.select(Axis(0), &chosen)
}

/// Lloyd's algorithm with squared Euclidean distance.
///
/// Cold starts use k-means++ seeded by `seed`. Runs until assignments stop
/// changing or `max_iter` update steps have been taken. An empty cluster is
/// moved onto the point farthest from its current center.
pub fn kmeans_update(
    x: ArrayView2<'_, f64>,
    k: usize,
    warm_start: Option<ArrayView2<'_, f64>>,
    max_iter: usize,
    seed: u64,
) -> Result<KMeansFit> {
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(Error::Argument(format!("k-means with k = {k} on {n} points")));
    }
    let mut centers = match warm_start {
        Some(c) => {
            if c.dim() != (k, x.ncols()) {
                return Err(Error::Dimension(format!(
                    "warm start centers {:?}, expected ({k}, {})",
                    c.dim(),
                    x.ncols()
                )));
            }
            c.to_owned()
        }
        None => kmeans_plus_plus(x, k, &mut ChaCha8Rng::seed_from_u64(seed)),
    };

    let mut assignment = assign(x, centers.view());
    let mut wcss = vec![assignment.iter().map(|a| a.1).sum()];
    for _ in 0..max_iter {
        let mut sums = Array2::<f64>::zeros(centers.raw_dim());
        let mut counts = vec![0usize; k];
        for (row, &(c, _)) in x.rows().into_iter().zip(&assignment) {
            sums.row_mut(c).scaled_add(1.0, &row);
            counts[c] += 1;
        }
        let mut taken = Vec::new();
        for c in 0..k {
            if counts[c] > 0 {
                let mean = &sums.row(c) / counts[c] as f64;
                centers.row_mut(c).assign(&mean);
            } else {
                let far = assignment
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !taken.contains(i))
                    .fold((0, f64::NEG_INFINITY), |best, (i, a)| if a.1 > best.1 { (i, a.1) } else { best })
                    .0;
                taken.push(far);
                centers.row_mut(c).assign(&x.row(far));
            }
        }
        let next = assign(x, centers.view());
        wcss.push(next.iter().map(|a| a.1).sum());
        let stable = next.iter().zip(&assignment).all(|(a, b)| a.0 == b.0);
        assignment = next;
        if stable {
            break;
        }
    }
    Ok(KMeansFit {
        centers,
        labels: assignment.into_iter().map(|a| a.0).collect(),
        wcss,
    })
}

/// Cold K-means repeated from `restarts` k-means++ seedings drawn from `seed`;
/// keeps the fit with the lowest final WCSS (earliest on ties).
pub fn kmeans_restarts(x: ArrayView2<'_, f64>, k: usize, max_iter: usize, seed: u64, restarts: usize) -> Result<KMeansFit> {
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansFit> = None;
    for _ in 0..restarts.max(1) {
        let fit = kmeans_update(x, k, None, max_iter, seeds.random())?;
        let better = best
            .as_ref()
            .is_none_or(|b| fit.wcss.last() < b.wcss.last());
        if better {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Student-t (one degree of freedom) assignment probabilities, row-normalized.
pub fn soft_labels(h: ArrayView2<'_, f64>, centers: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut q = Array2::zeros((h.nrows(), centers.nrows()));
    for (row, mut out) in h.rows().into_iter().zip(q.rows_mut()) {
        for (c, o) in centers.rows().into_iter().zip(out.iter_mut()) {
            *o = 1.0 / (1.0 + sq_dist(row, c));
        }
        let total = out.sum();
        out /= total;
    }
    q
}

/// `p_ij = q_ij^2 / sum_k q_ik^2` after normalizing each row of `q`.
pub fn sharpen(q: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let mut p = q.to_owned();
    for (i, mut row) in p.rows_mut().into_iter().enumerate() {
        let s: f64 = row.sum();
        if !(s > 0.0) {
            return Err(Error::Contract(format!("soft label row {i} sums to zero")));
        }
        row.mapv_inplace(|x| (x / s) * (x / s));
        let s2 = row.sum();
        row /= s2;
    }
    Ok(p)
}

/// Column range of view `v` inside the fused feature matrix.
pub fn view_offsets(dims: &[usize]) -> Vec<std::ops::Range<usize>> {
    let mut start = 0;
    dims.iter()
        .map(|&d| {
            let r = start..start + d;
            start += d;
            r
        })
        .collect()
}

/// Soft labels of each view against its own block of the fused centers.
pub fn view_soft_labels(h_views: &[Array2<f64>], centers: ArrayView2<'_, f64>) -> Result<Vec<Array2<f64>>> {
    let dims: Vec<usize> = h_views.iter().map(|h| h.ncols()).collect();
    if dims.iter().sum::<usize>() != centers.ncols() {
        return Err(Error::Dimension(format!(
            "view widths {dims:?} do not add up to {} center columns",
            centers.ncols()
        )));
    }
    Ok(h_views
        .iter()
        .zip(view_offsets(&dims))
        .map(|(h, cols)| soft_labels(h.view(), centers.slice(s![.., cols])))
        .collect())
}

/// Argmax over clusters of the view-summed soft labels, ties to the lowest index.
pub fn final_assignment(q_views: &[Array2<f64>]) -> Vec<usize> {
    let Some(first) = q_views.first() else {
        return Vec::new();
    };
    let mut summed = first.clone();
    for q in &q_views[1..] {
        summed += q;
    }
    argmax_rows(summed.view())
}

pub(crate) fn argmax_rows(m: ArrayView2<'_, f64>) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &x)| if x > best.1 { (j, x) } else { best })
                .0
        })
        .collect()
}
