//! Hand-derived backward pass for the overall loss.
//!
//! Discrete selections are constants during a step: the view graphs, the
//! reconstruction masks, the cluster centers and the pseudo-label targets.
//! Gradients flow through the view similarities (contrastive loss), the
//! reconstructed graphs (reconstruction loss) and the per-view soft labels
//! (KL loss) into the features and from there into every weight.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};

use crate::clustering::{self, view_offsets};
use crate::config::{RecLoss, TrainConfig};
use crate::error::{Error, Result};
use crate::graph::{AdjacencyGraph, SimilarityMatrix};
use crate::losses::{
    self, contrastive_loss_grad, graph_mask, reconstructed_graph, total_loss, GraphMask, LossBreakdown, Q_FLOOR,
};
use crate::model::{forward_with, AttentionLayer, ForwardCache, GraphContext, LayerCache, ModelParameters};

/// Constant clustering targets of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTargets {
    pub centers: Array2<f64>,
    pub p: Array2<f64>,
}

/// Reconstruction masks for the current encoder output: top-k for the masked
/// loss, all ones for the traditional one.
pub fn rec_masks(cache: &ForwardCache, cfg: &TrainConfig) -> Result<Vec<GraphMask>> {
    cache
        .views
        .iter()
        .map(|v| match cfg.rec_loss {
            RecLoss::Masked => graph_mask(&reconstructed_graph(v.h.view(), cfg.rbf_scale), cfg.n_mask_edges),
            RecLoss::Traditional => Ok(GraphMask::full(v.h.nrows())),
        })
        .collect()
}

/// Loss values of a forward cache under fixed masks and targets.
pub fn evaluate_losses(
    ctx: &GraphContext,
    cache: &ForwardCache,
    masks: &[GraphMask],
    targets: Option<&ClusterTargets>,
    cfg: &TrainConfig,
) -> Result<LossBreakdown> {
    let rec = if cfg.components.rec {
        let a_hats: Vec<_> = cache
            .views
            .iter()
            .map(|v| reconstructed_graph(v.h.view(), cfg.rbf_scale))
            .collect();
        losses::masked_rec_loss_with(&a_hats, masks, &ctx.global)?
    } else {
        0.0
    };
    let con = if cfg.components.embed {
        let s_hats: Vec<_> = cache.views.iter().map(|v| v.s_hat.clone()).collect();
        losses::contrastive_loss(&s_hats, cfg.temperature)?
    } else {
        0.0
    };
    let kl = match (cfg.components.kl, targets) {
        (true, Some(t)) => {
            let q_views = clustering::view_soft_labels(&cache.high_level(), t.centers.view())?;
            losses::kl_loss(t.p.view(), &q_views)?
        }
        _ => 0.0,
    };
    Ok(total_loss(rec, con, kl, cfg.alpha, cfg.beta))
}

/// Gradient of `sum_ij G_ij S_ij` with `S = rbf(X, t)` with respect to `X`.
fn rbf_backward(x: ArrayView2<'_, f64>, s: &Array2<f64>, g: &Array2<f64>, t: f64) -> Array2<f64> {
    let mut w = g + &g.t();
    w *= s;
    let degree = w.sum_axis(Axis(1));
    let mut out = x.to_owned();
    for (mut row, &d) in out.rows_mut().into_iter().zip(degree.iter()) {
        row *= d;
    }
    out -= &w.dot(&x);
    out * (-2.0 / t)
}

/// Gradient of the KL loss with respect to one view's features.
fn kl_backward(h: ArrayView2<'_, f64>, centers: ArrayView2<'_, f64>, p: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros(h.raw_dim());
    for ((hi, pi), mut gi) in h.rows().into_iter().zip(p.rows()).zip(out.rows_mut()) {
        let kernel: Array1<f64> = centers
            .rows()
            .into_iter()
            .map(|u| 1.0 / (1.0 + hi.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()))
            .collect();
        let total = kernel.sum();
        let q = &kernel / total;
        // dL/dq for L = -sum p log max(q, floor)
        let dq: Array1<f64> = Zip::from(&pi)
            .and(&q)
            .map_collect(|&pj, &qj| if pj > 0.0 && qj >= Q_FLOOR { -pj / qj } else { 0.0 });
        let mean = dq.dot(&q);
        for ((u, &k), &g) in centers.rows().into_iter().zip(kernel.iter()).zip(dq.iter()) {
            let dk = (g - mean) / total;
            // dk/dh = -2 k^2 (h - u)
            let coeff = -2.0 * k * k * dk;
            Zip::from(&mut gi).and(&hi).and(&u).for_each(|o, &a, &b| *o += coeff * (a - b));
        }
    }
    out
}

/// Backward through one attention layer. Accumulates weight gradients into
/// `grads` and returns the gradient with respect to the layer input.
fn layer_backward(layer: &AttentionLayer, cache: &LayerCache, graph: &AdjacencyGraph, d_out: &Array2<f64>, grads: &mut AttentionLayer) -> Array2<f64> {
    let mut d_pre = d_out.clone();
    Zip::from(&mut d_pre)
        .and(&cache.pre_activation)
        .for_each(|d, &pre| if pre <= 0.0 { *d = 0.0 });
    let mut d_in = d_out.clone();

    grads.w_out += &cache.aggregated.t().dot(&d_pre);
    grads.b_out += &d_pre.sum_axis(Axis(0));
    let d_agg = d_pre.dot(&layer.w_out.t());

    let d_attn = d_agg.dot(&cache.value.t());
    let d_value = cache.attention.t().dot(&d_agg);
    grads.w_value += &cache.input.t().dot(&d_value);
    d_in += &d_value.dot(&layer.w_value.t());

    let mut d_logits = Array2::zeros(d_attn.raw_dim());
    for i in 0..d_attn.nrows() {
        let a = cache.attention.row(i);
        let da = d_attn.row(i);
        let inner = a.dot(&da);
        for j in graph.neighbors(i) {
            d_logits[[i, j]] = a[j] * (da[j] - inner);
        }
    }
    let d_query = d_logits.dot(&cache.key);
    let d_key = d_logits.t().dot(&cache.query);
    grads.w_query += &cache.input.t().dot(&d_query);
    grads.w_key += &cache.input.t().dot(&d_key);
    d_in += &d_query.dot(&layer.w_query.t());
    d_in += &d_key.dot(&layer.w_key.t());
    d_in
}

/// Loss values and gradients of every trainable tensor for one step.
pub fn compute_gradients(
    ctx: &GraphContext,
    params: &ModelParameters,
    cache: &ForwardCache,
    masks: &[GraphMask],
    targets: Option<&ClusterTargets>,
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, ModelParameters)> {
    let n_views = cache.views.len();
    if masks.len() != n_views || params.views.len() != n_views {
        return Err(Error::Dimension("masks, parameters and cache disagree on view count".into()));
    }
    let loss = evaluate_losses(ctx, cache, masks, targets, cfg)?;
    let mut grads = params.zeros_like();
    let t = cfg.rbf_scale;

    let mut d_h: Vec<Array2<f64>> = cache.views.iter().map(|v| Array2::zeros(v.h.raw_dim())).collect();
    if cfg.components.rec {
        let a_hats: Vec<SimilarityMatrix> = cache.views.iter().map(|v| reconstructed_graph(v.h.view(), t)).collect();
        let d_a = losses::rec_loss_grad(&a_hats, masks, &ctx.global);
        for ((dh, view), (a_hat, g)) in d_h.iter_mut().zip(&cache.views).zip(a_hats.iter().zip(&d_a)) {
            *dh += &rbf_backward(view.h.view(), &a_hat.0, g, t);
        }
    }
    if cfg.components.kl && cfg.beta != 0.0 {
        let targets = targets.ok_or_else(|| Error::Contract("KL gradient needs cluster targets".into()))?;
        let dims: Vec<usize> = cache.views.iter().map(|v| v.h.ncols()).collect();
        for ((dh, view), cols) in d_h.iter_mut().zip(&cache.views).zip(view_offsets(&dims)) {
            let g = kl_backward(view.h.view(), targets.centers.slice(s![.., cols]), targets.p.view());
            dh.scaled_add(cfg.beta, &g);
        }
    }

    let mut d_z: Vec<Array2<f64>> = Vec::with_capacity(n_views);
    for (v, view) in cache.views.iter().enumerate() {
        let mut d = d_h[v].clone();
        for (l, layer_cache) in view.layers.iter().enumerate().rev() {
            d = layer_backward(&params.views[v].layers[l], layer_cache, &view.a_view, &d, &mut grads.views[v].layers[l]);
        }
        d_z.push(d);
    }

    if cfg.components.embed && cfg.alpha != 0.0 && n_views > 1 {
        let s_hats: Vec<SimilarityMatrix> = cache.views.iter().map(|v| v.s_hat.clone()).collect();
        let (_, d_s) = contrastive_loss_grad(&s_hats, cfg.temperature)?;
        for ((dz, view), g) in d_z.iter_mut().zip(&cache.views).zip(&d_s) {
            dz.scaled_add(cfg.alpha, &rbf_backward(view.z.view(), &view.s_hat.0, g, t));
        }
    }

    for (v, dz) in d_z.iter().enumerate() {
        if let Some(e) = grads.views[v].embed.as_mut() {
            e.weight += &ctx.propagated[v].t().dot(dz);
            e.bias += &dz.sum_axis(Axis(0));
        }
    }
    Ok((loss, grads))
}

/// Everything a step holds constant, captured at one parameter point.
#[derive(Debug, Clone)]
pub struct FrozenStep {
    pub view_graphs: Vec<AdjacencyGraph>,
    pub masks: Vec<GraphMask>,
    pub targets: Option<ClusterTargets>,
}

impl FrozenStep {
    /// Captures view graphs, masks and (when the clustering head is on) K-means
    /// targets at the current parameters.
    pub fn capture(ctx: &GraphContext, params: &ModelParameters, cfg: &TrainConfig) -> Result<(Self, ForwardCache)> {
        let cache = forward_with(ctx, params, cfg, None)?;
        let masks = rec_masks(&cache, cfg)?;
        let targets = if cfg.components.kl {
            let fused = clustering::fuse_features(&cache.high_level())?;
            let fit = clustering::kmeans_restarts(fused.view(), cfg.n_clusters, cfg.kmeans_max_iter, cfg.seed, cfg.kmeans_restarts)?;
            let q = clustering::soft_labels(fused.view(), fit.centers.view());
            Some(ClusterTargets {
                p: clustering::sharpen(q.view())?,
                centers: fit.centers,
            })
        } else {
            None
        };
        let view_graphs = cache.views.iter().map(|v| v.a_view.clone()).collect();
        Ok((
            Self {
                view_graphs,
                masks,
                targets,
            },
            cache,
        ))
    }

    /// Total loss at `params` with every discrete choice held fixed.
    pub fn loss(&self, ctx: &GraphContext, params: &ModelParameters, cfg: &TrainConfig) -> Result<LossBreakdown> {
        let cache = forward_with(ctx, params, cfg, Some(&self.view_graphs))?;
        evaluate_losses(ctx, &cache, &self.masks, self.targets.as_ref(), cfg)
    }
}
