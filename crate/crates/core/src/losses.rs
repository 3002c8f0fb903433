//! Training losses and their closed-form gradients.
//!
//! Reconstruction losses compare an RBF graph over the encoder output with the
//! binary global graph. The masked variant only looks at the `k` strongest
//! reconstructed edges of each row; the mask itself is treated as a constant.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::graph::{rbf_similarity, top_k_indices, AdjacencyGraph, SimilarityMatrix};

/// Loss values of one training step.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct LossBreakdown {
    pub rec: f64,
    pub con: f64,
    pub kl: f64,
    pub total: f64,
}

/// `rec + alpha * con + beta * kl`.
pub fn total_loss(rec: f64, con: f64, kl: f64, alpha: f64, beta: f64) -> LossBreakdown {
    LossBreakdown {
        rec,
        con,
        kl,
        total: rec + alpha * con + beta * kl,
    }
}

/// Reconstructed graph `exp(-||h_i - h_j||^2 / t)`.
pub fn reconstructed_graph(h: ArrayView2<'_, f64>, t: f64) -> SimilarityMatrix {
    rbf_similarity(h, t)
}

/// Per-row indicator of the `k` strongest reconstructed edges.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphMask {
    values: Array2<f64>,
    k: usize,
}

impl GraphMask {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.values[[i, j]] == 1.0
    }

    /// All-ones mask; turns the masked loss into the traditional one.
    pub fn full(n: usize) -> Self {
        Self {
            values: Array2::ones((n, n)),
            k: n,
        }
    }
}

/// Top-`k` per row of `a_hat`, ties to the lowest index. Entries that are exactly
/// zero are never selected, so a row has `min(k, nonzero count)` ones.
pub fn graph_mask(a_hat: &SimilarityMatrix, k: usize) -> Result<GraphMask> {
    let n = a_hat.n();
    if k > n {
        return Err(Error::Argument(format!("graph mask with k = {k} > N = {n}")));
    }
    let mut values = Array2::zeros((n, n));
    for (row, mut dst) in a_hat.0.rows().into_iter().zip(values.rows_mut()) {
        for j in top_k_indices(row, k) {
            if row[j] > 0.0 {
                dst[j] = 1.0;
            }
        }
    }
    Ok(GraphMask { values, k })
}

fn check_square(a_hat: &SimilarityMatrix, global: &AdjacencyGraph) -> Result<()> {
    if a_hat.0.dim() != global.values().dim() {
        return Err(Error::Dimension(format!(
            "reconstructed graph {:?} vs global graph {:?}",
            a_hat.0.dim(),
            global.values().dim()
        )));
    }
    Ok(())
}

/// `(1/N) ||M o A_hat - A_bar||_F^2` for one view with a given mask.
pub fn masked_view_loss(a_hat: &SimilarityMatrix, mask: &GraphMask, global: &AdjacencyGraph) -> Result<f64> {
    check_square(a_hat, global)?;
    let n = a_hat.n() as f64;
    let mut total = 0.0;
    for ((&a, &m), &g) in a_hat.0.iter().zip(mask.values.iter()).zip(global.values().iter()) {
        let r = m * a - g;
        total += r * r;
    }
    Ok(total / n)
}

/// Mean over views of the masked view loss, with masks recomputed from each `A_hat`.
pub fn masked_rec_loss(a_hats: &[SimilarityMatrix], global: &AdjacencyGraph, k: usize) -> Result<f64> {
    let masks = a_hats
        .iter()
        .map(|a| graph_mask(a, k))
        .collect::<Result<Vec<_>>>()?;
    masked_rec_loss_with(a_hats, &masks, global)
}

/// Mean over views of the masked view loss with caller-supplied masks.
pub fn masked_rec_loss_with(a_hats: &[SimilarityMatrix], masks: &[GraphMask], global: &AdjacencyGraph) -> Result<f64> {
    if a_hats.is_empty() || a_hats.len() != masks.len() {
        return Err(Error::Dimension("one mask per reconstructed graph".into()));
    }
    let mut total = 0.0;
    for (a, m) in a_hats.iter().zip(masks) {
        total += masked_view_loss(a, m, global)?;
    }
    Ok(total / a_hats.len() as f64)
}

/// Unmasked reconstruction loss, aggregated like the masked one.
pub fn traditional_rec_loss(a_hats: &[SimilarityMatrix], global: &AdjacencyGraph) -> Result<f64> {
    let masks: Vec<_> = a_hats.iter().map(|a| GraphMask::full(a.n())).collect();
    masked_rec_loss_with(a_hats, &masks, global)
}

/// Loss of a single sample row, `sum_j (M_ij A_hat_ij - A_bar_ij)^2`, as a
/// function of the features. With `mask = None` every entry counts.
pub fn row_rec_loss(h: ArrayView2<'_, f64>, global: &AdjacencyGraph, t: f64, i: usize, mask: Option<&GraphMask>) -> f64 {
    let hi = h.row(i);
    (0..h.nrows())
        .map(|j| {
            let d2: f64 = hi.iter().zip(h.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            let a = (-d2 / t).exp();
            let m = mask.map_or(1.0, |m| m.values[[i, j]]);
            let r = m * a - global.values()[[i, j]];
            r * r
        })
        .sum()
}

/// Closed-form gradient of the row loss with respect to `h_i`:
/// `(4/t) sum_j (A_hat_ij - A_bar_ij) A_hat_ij (h_j - h_i)` over the selected `j`.
/// Edges of the global graph give attractive terms, the others repulsive ones.
fn row_gradient(h: ArrayView2<'_, f64>, global: &AdjacencyGraph, t: f64, i: usize, selected: impl Fn(usize) -> bool) -> Array1<f64> {
    let hi = h.row(i);
    let mut grad = Array1::zeros(h.ncols());
    for j in (0..h.nrows()).filter(|&j| selected(j)) {
        let hj = h.row(j);
        let d2: f64 = hi.iter().zip(hj).map(|(a, b)| (a - b) * (a - b)).sum();
        let a = (-d2 / t).exp();
        let coeff = if global.has_edge(i, j) { (a - 1.0) * a } else { a * a };
        grad.scaled_add(coeff, &(&hj - &hi));
    }
    grad * (4.0 / t)
}

/// Gradient of the traditional row loss of sample `i` with respect to `h_i`.
pub fn grad_traditional(h: ArrayView2<'_, f64>, global: &AdjacencyGraph, t: f64, i: usize) -> Array1<f64> {
    row_gradient(h, global, t, i, |_| true)
}

/// Gradient of the masked row loss of sample `i` with respect to `h_i`, the mask
/// being the top-`k` of the current reconstructed graph and held constant.
pub fn grad_masked(h: ArrayView2<'_, f64>, global: &AdjacencyGraph, t: f64, k: usize, i: usize) -> Result<Array1<f64>> {
    let mask = graph_mask(&reconstructed_graph(h, t), k)?;
    Ok(grad_masked_with(h, global, t, &mask, i))
}

pub fn grad_masked_with(h: ArrayView2<'_, f64>, global: &AdjacencyGraph, t: f64, mask: &GraphMask, i: usize) -> Array1<f64> {
    row_gradient(h, global, t, i, |j| mask.get(i, j))
}

/// Number of `(attractive, repulsive)` terms in the row gradient of sample `i`.
/// Without a mask the repulsive count is `N - |E_i|`.
pub fn gradient_term_counts(global: &AdjacencyGraph, i: usize, mask: Option<&GraphMask>) -> (usize, usize) {
    let n = global.n();
    let mut attractive = 0;
    let mut repulsive = 0;
    for j in 0..n {
        if mask.is_some_and(|m| !m.get(i, j)) {
            continue;
        }
        if global.has_edge(i, j) {
            attractive += 1;
        } else {
            repulsive += 1;
        }
    }
    (attractive, repulsive)
}

/// Gradient of the reconstruction loss (either variant) with respect to each `A_hat`.
/// `masks` of `None` means the traditional loss.
pub(crate) fn rec_loss_grad(a_hats: &[SimilarityMatrix], masks: &[GraphMask], global: &AdjacencyGraph) -> Vec<Array2<f64>> {
    let v = a_hats.len() as f64;
    a_hats
        .iter()
        .zip(masks)
        .map(|(a, m)| {
            let n = a.n() as f64;
            let mut g = &m.values * &a.0 - global.values();
            g *= &m.values;
            g * (2.0 / (n * v))
        })
        .collect()
}

fn normalize_rows(s: ArrayView2<'_, f64>) -> (Array2<f64>, Array1<f64>) {
    let norms: Array1<f64> = s.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let mut out = s.to_owned();
    for (mut row, &norm) in out.rows_mut().into_iter().zip(norms.iter()) {
        if norm > 0.0 {
            row /= norm;
        } else {
            row.fill(0.0);
        }
    }
    (out, norms)
}

/// Graph-structure contrastive loss and, optionally, its gradient with respect to
/// every similarity matrix.
fn contrastive(s_hats: &[SimilarityMatrix], tau: f64, want_grad: bool) -> Result<(f64, Vec<Array2<f64>>)> {
    let n_views = s_hats.len();
    let n = s_hats.first().map_or(0, |s| s.n());
    if s_hats.iter().any(|s| s.0.dim() != (n, n)) {
        return Err(Error::Dimension("similarity matrices differ in shape".into()));
    }
    if n_views < 2 {
        return Ok((0.0, vec![Array2::zeros((n, n)); n_views]));
    }
    if n < 2 {
        return Err(Error::Contract("contrastive loss needs at least two samples".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::Argument("temperature must be positive".into()));
    }
    let normalized: Vec<(Array2<f64>, Array1<f64>)> = s_hats.iter().map(|s| normalize_rows(s.0.view())).collect();
    let self_cos: Vec<Array2<f64>> = normalized.iter().map(|(u, _)| u.dot(&u.t())).collect();
    let mut grad_unit: Vec<Array2<f64>> = vec![Array2::zeros((n, n)); n_views];
    let nf = n as f64;
    let mut loss = 0.0;

    for v in 0..n_views {
        for w in (0..n_views).filter(|&w| w != v) {
            let (uv, uw) = (&normalized[v].0, &normalized[w].0);
            let cross = uv.dot(&uw.t());
            let within = &self_cos[v];
            let mut g_cross = Array2::<f64>::zeros((n, n));
            let mut g_within = Array2::<f64>::zeros((n, n));
            let mut pair = 0.0;
            for i in 0..n {
                let max = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| within[[i, j]].max(cross[[i, j]]))
                    .fold(f64::NEG_INFINITY, f64::max)
                    / tau;
                let mut denom = 0.0;
                for j in (0..n).filter(|&j| j != i) {
                    denom += (within[[i, j]] / tau - max).exp() + (cross[[i, j]] / tau - max).exp();
                }
                pair += -cross[[i, i]] / tau + max + denom.ln();
                if want_grad {
                    g_cross[[i, i]] -= 1.0 / (nf * tau);
                    for j in (0..n).filter(|&j| j != i) {
                        g_within[[i, j]] += (within[[i, j]] / tau - max).exp() / denom / (nf * tau);
                        g_cross[[i, j]] += (cross[[i, j]] / tau - max).exp() / denom / (nf * tau);
                    }
                }
            }
            loss += pair / nf;
            if want_grad {
                // cross = U_v U_w^T, within = U_v U_v^T
                let gv = g_cross.dot(uw) + (&g_within + &g_within.t()).dot(uv);
                let gw = g_cross.t().dot(uv);
                grad_unit[v] += &gv;
                grad_unit[w] += &gw;
            }
        }
    }

    let grads = if want_grad {
        grad_unit
            .into_iter()
            .zip(&normalized)
            .map(|(gu, (u, norms))| {
                let mut gs = gu;
                for ((mut g, urow), &norm) in gs.rows_mut().into_iter().zip(u.rows()).zip(norms.iter()) {
                    if norm > 0.0 {
                        let proj = g.dot(&urow);
                        g.scaled_add(-proj, &urow);
                        g /= norm;
                    } else {
                        g.fill(0.0);
                    }
                }
                gs
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok((loss, grads))
}

/// Cross-view contrastive loss over the rows of the view similarity matrices.
/// Positive pairs are the same sample in two views; negatives are every other
/// sample in both views. A single view contributes nothing.
pub fn contrastive_loss(s_hats: &[SimilarityMatrix], tau: f64) -> Result<f64> {
    contrastive(s_hats, tau, false).map(|(l, _)| l)
}

pub(crate) fn contrastive_loss_grad(s_hats: &[SimilarityMatrix], tau: f64) -> Result<(f64, Vec<Array2<f64>>)> {
    contrastive(s_hats, tau, true)
}

pub(crate) const Q_FLOOR: f64 = 1e-12;

fn check_rows_normalized(m: ArrayView2<'_, f64>, what: &str) -> Result<()> {
    for (i, row) in m.axis_iter(Axis(0)).enumerate() {
        if (row.sum() - 1.0).abs() > 1e-6 || row.iter().any(|&x| x < 0.0) {
            return Err(Error::Contract(format!("{what} row {i} is not a probability vector")));
        }
    }
    Ok(())
}

/// `sum_v sum_ij p_ij log(p_ij / q^v_ij)`, with `q` floored at 1e-12 and `0 log 0 = 0`.
pub fn kl_loss(p: ArrayView2<'_, f64>, q_views: &[Array2<f64>]) -> Result<f64> {
    check_rows_normalized(p, "P")?;
    let mut total = 0.0;
    for (v, q) in q_views.iter().enumerate() {
        if q.dim() != p.dim() {
            return Err(Error::Dimension(format!("Q of view {v} is {:?}, P is {:?}", q.dim(), p.dim())));
        }
        check_rows_normalized(q.view(), "Q")?;
        for (&pij, &qij) in p.iter().zip(q.iter()) {
            if pij > 0.0 {
                total += pij * (pij / qij.max(Q_FLOOR)).ln();
            }
        }
    }
    Ok(total)
}
