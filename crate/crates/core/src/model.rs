//! Trainable forward pipeline: GCN embedding layer, dynamic view graphs and the
//! masked graph self-attention encoder.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;

use crate::config::TrainConfig;
use crate::dataset::MultiViewDataset;
use crate::error::{Error, Result};
use crate::graph::{
    fuse_global_graph, normalize_adjacency, rbf_similarity, refine_view_graph, top_k_binarize,
    AdjacencyGraph, SimilarityMatrix,
};

/// `Z = A' X W + b` layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// One residual attention layer:
/// `H' = relu((softmax_A(H W_q (H W_k)^T) H W_v) W_o + b_o) + H`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionLayer {
    pub w_query: Array2<f64>,
    pub w_key: Array2<f64>,
    pub w_value: Array2<f64>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewParameters {
    /// Absent when the embedding layer is ablated.
    pub embed: Option<Embedding>,
    pub layers: Vec<AttentionLayer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub views: Vec<ViewParameters>,
}

fn uniform(rng: &mut impl Rng, rows: usize, cols: usize, fan_in: usize) -> Array2<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..=bound))
}

fn uniform_vec(rng: &mut impl Rng, len: usize, fan_in: usize) -> Array1<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array1::from_shape_fn(len, |_| rng.random_range(-bound..=bound))
}

impl AttentionLayer {
    pub fn init(rng: &mut impl Rng, width: usize) -> Self {
        Self {
            w_query: uniform(rng, width, width, width),
            w_key: uniform(rng, width, width, width),
            w_value: uniform(rng, width, width, width),
            w_out: uniform(rng, width, width, width),
            b_out: uniform_vec(rng, width, width),
        }
    }

    pub fn zeros(width: usize) -> Self {
        Self {
            w_query: Array2::zeros((width, width)),
            w_key: Array2::zeros((width, width)),
            w_value: Array2::zeros((width, width)),
            w_out: Array2::zeros((width, width)),
            b_out: Array1::zeros(width),
        }
    }
}

impl ModelParameters {
    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization.
    pub fn init(view_dims: &[usize], cfg: &TrainConfig, rng: &mut impl Rng) -> Self {
        let views = view_dims
            .iter()
            .enumerate()
            .map(|(v, &d)| {
                let h = cfg.hidden_dim(v, d);
                let embed = cfg.components.embed.then(|| Embedding {
                    weight: uniform(rng, d, h, d),
                    bias: uniform_vec(rng, h, d),
                });
                let layers = (0..cfg.n_gat_layers)
                    .map(|_| AttentionLayer::init(rng, h))
                    .collect();
                ViewParameters { embed, layers }
            })
            .collect();
        Self { views }
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.for_each_tensor_mut(|_, t| t.fill(0.0));
        out
    }

    /// Visits every trainable tensor in a fixed order with a stable name.
    pub fn for_each_tensor(&self, mut f: impl FnMut(&str, &[f64])) {
        for (v, view) in self.views.iter().enumerate() {
            if let Some(e) = &view.embed {
                f(&format!("view{v}.embed.weight"), slice(&e.weight));
                f(&format!("view{v}.embed.bias"), e.bias.as_slice().expect("contiguous"));
            }
            for (l, layer) in view.layers.iter().enumerate() {
                f(&format!("view{v}.layer{l}.w_query"), slice(&layer.w_query));
                f(&format!("view{v}.layer{l}.w_key"), slice(&layer.w_key));
                f(&format!("view{v}.layer{l}.w_value"), slice(&layer.w_value));
                f(&format!("view{v}.layer{l}.w_out"), slice(&layer.w_out));
                f(&format!("view{v}.layer{l}.b_out"), layer.b_out.as_slice().expect("contiguous"));
            }
        }
    }

    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&str, &mut [f64])) {
        for (v, view) in self.views.iter_mut().enumerate() {
            if let Some(e) = &mut view.embed {
                f(&format!("view{v}.embed.weight"), slice_mut(&mut e.weight));
                f(&format!("view{v}.embed.bias"), e.bias.as_slice_mut().expect("contiguous"));
            }
            for (l, layer) in view.layers.iter_mut().enumerate() {
                f(&format!("view{v}.layer{l}.w_query"), slice_mut(&mut layer.w_query));
                f(&format!("view{v}.layer{l}.w_key"), slice_mut(&mut layer.w_key));
                f(&format!("view{v}.layer{l}.w_value"), slice_mut(&mut layer.w_value));
                f(&format!("view{v}.layer{l}.w_out"), slice_mut(&mut layer.w_out));
                f(&format!("view{v}.layer{l}.b_out"), layer.b_out.as_slice_mut().expect("contiguous"));
            }
        }
    }

    /// `(name, shape)` of every tensor, in visiting order.
    pub fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (v, view) in self.views.iter().enumerate() {
            if let Some(e) = &view.embed {
                out.push((format!("view{v}.embed.weight"), e.weight.shape().to_vec()));
                out.push((format!("view{v}.embed.bias"), e.bias.shape().to_vec()));
            }
            for (l, layer) in view.layers.iter().enumerate() {
                for (name, shape) in [
                    ("w_query", layer.w_query.shape()),
                    ("w_key", layer.w_key.shape()),
                    ("w_value", layer.w_value.shape()),
                    ("w_out", layer.w_out.shape()),
                    ("b_out", layer.b_out.shape()),
                ] {
                    out.push((format!("view{v}.layer{l}.{name}"), shape.to_vec()));
                }
            }
        }
        out
    }

    pub fn n_values(&self) -> usize {
        let mut n = 0;
        self.for_each_tensor(|_, t| n += t.len());
        n
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.for_each_tensor(|_, t| ok &= t.iter().all(|x| x.is_finite()));
        ok
    }
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameters are standard-layout")
}

fn slice_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are standard-layout")
}

/// Per-dataset quantities fixed before training: the global graph, its
/// normalized form and the propagated inputs `A' X^v`.
#[derive(Debug, Clone)]
pub struct GraphContext {
    pub global: AdjacencyGraph,
    pub global_norm: Array2<f64>,
    pub propagated: Vec<Array2<f64>>,
    pub views: Vec<Array2<f64>>,
    pub mask: Array2<bool>,
}

impl GraphContext {
    /// Builds the global graph from the dataset.
    pub fn build(ds: &MultiViewDataset, cfg: &TrainConfig) -> Result<Self> {
        let global = fuse_global_graph(ds.views(), ds.mask().view(), cfg.rbf_scale, cfg.n_neighbors)?;
        Ok(Self::with_global(ds, global))
    }

    pub fn with_global(ds: &MultiViewDataset, global: AdjacencyGraph) -> Self {
        let global_norm = normalize_adjacency(&global);
        let propagated = ds.views().iter().map(|x| global_norm.dot(x)).collect();
        Self {
            global,
            global_norm,
            propagated,
            views: ds.views().to_vec(),
            mask: ds.mask().clone(),
        }
    }

    pub fn n_samples(&self) -> usize {
        self.global.n()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }
}

/// `Z = A' X W_e + b_e`, bias broadcast over rows.
pub fn embed(x: ArrayView2<'_, f64>, global_norm: ArrayView2<'_, f64>, params: &Embedding) -> Result<Array2<f64>> {
    if global_norm.ncols() != x.nrows() || x.ncols() != params.weight.nrows() {
        return Err(Error::Dimension(format!(
            "embed: A' {:?}, X {:?}, W {:?}",
            global_norm.dim(),
            x.dim(),
            params.weight.dim()
        )));
    }
    Ok(embed_propagated(global_norm.dot(&x).view(), params))
}

pub(crate) fn embed_propagated(ax: ArrayView2<'_, f64>, params: &Embedding) -> Array2<f64> {
    ax.dot(&params.weight) + &params.bias
}

/// RBF similarity over the primary features and the refined top-K view graph.
pub fn build_view_graph(
    z: ArrayView2<'_, f64>,
    t: f64,
    k: usize,
    global: &AdjacencyGraph,
    mask_col: ndarray::ArrayView1<'_, bool>,
) -> Result<(SimilarityMatrix, AdjacencyGraph)> {
    let s_hat = rbf_similarity(z, t);
    let knn = top_k_binarize(s_hat.0.view(), k)?;
    let a_view = refine_view_graph(&knn, global, mask_col)?;
    Ok((s_hat, a_view))
}

/// `E = (H W_q)(H W_k)^T`.
pub fn attention_logits(h: ArrayView2<'_, f64>, w_query: ArrayView2<'_, f64>, w_key: ArrayView2<'_, f64>) -> Array2<f64> {
    h.dot(&w_query).dot(&h.dot(&w_key).t())
}

/// Row softmax of `e` restricted to the edges of `a`; zero off the graph.
pub fn masked_softmax(e: ArrayView2<'_, f64>, a: &AdjacencyGraph) -> Result<Array2<f64>> {
    let mut out = Array2::zeros(e.raw_dim());
    for (i, (logits, mut dst)) in e.rows().into_iter().zip(out.rows_mut()).enumerate() {
        let support = a.values().row(i);
        let max = logits
            .iter()
            .zip(support.iter())
            .filter(|(_, &s)| s == 1.0)
            .map(|(&x, _)| x)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::Contract(format!("attention row {i} has no neighbors")));
        }
        let mut total = 0.0;
        for ((d, &x), &s) in dst.iter_mut().zip(logits.iter()).zip(support.iter()) {
            if s == 1.0 {
                *d = (x - max).exp();
                total += *d;
            }
        }
        dst /= total;
    }
    Ok(out)
}

/// Intermediate values of one attention layer, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCache {
    pub input: Array2<f64>,
    pub query: Array2<f64>,
    pub key: Array2<f64>,
    pub attention: Array2<f64>,
    pub value: Array2<f64>,
    pub aggregated: Array2<f64>,
    pub pre_activation: Array2<f64>,
}

/// One residual attention layer; returns the output and its cache.
pub fn encoder_layer_cached(h: ArrayView2<'_, f64>, a: &AdjacencyGraph, layer: &AttentionLayer) -> Result<(Array2<f64>, LayerCache)> {
    let query = h.dot(&layer.w_query);
    let key = h.dot(&layer.w_key);
    let logits = query.dot(&key.t());
    let attention = masked_softmax(logits.view(), a)?;
    let value = h.dot(&layer.w_value);
    let aggregated = attention.dot(&value);
    let pre_activation = aggregated.dot(&layer.w_out) + &layer.b_out;
    let out = pre_activation.mapv(relu) + h;
    Ok((
        out,
        LayerCache {
            input: h.to_owned(),
            query,
            key,
            attention,
            value,
            aggregated,
            pre_activation,
        },
    ))
}

pub fn encoder_layer(h: ArrayView2<'_, f64>, a: &AdjacencyGraph, layer: &AttentionLayer) -> Result<Array2<f64>> {
    encoder_layer_cached(h, a, layer).map(|(out, _)| out)
}

pub(crate) fn relu(x: f64) -> f64 {
    x.max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewCache {
    /// Primary features (raw features when the embedding layer is ablated).
    pub z: Array2<f64>,
    pub s_hat: SimilarityMatrix,
    pub a_view: AdjacencyGraph,
    pub layers: Vec<LayerCache>,
    /// High-level features.
    pub h: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub views: Vec<ViewCache>,
}

impl ForwardCache {
    pub fn high_level(&self) -> Vec<Array2<f64>> {
        self.views.iter().map(|v| v.h.clone()).collect()
    }
}

/// Full forward pass. View graphs are rebuilt from the current primary features
/// unless `frozen_graphs` supplies them.
pub fn forward_with(
    ctx: &GraphContext,
    params: &ModelParameters,
    cfg: &TrainConfig,
    frozen_graphs: Option<&[AdjacencyGraph]>,
) -> Result<ForwardCache> {
    if params.views.len() != ctx.n_views() {
        return Err(Error::Dimension(format!(
            "{} parameter sets for {} views",
            params.views.len(),
            ctx.n_views()
        )));
    }
    let views = params
        .views
        .iter()
        .enumerate()
        .map(|(v, vp)| {
            let z = match &vp.embed {
                Some(e) => {
                    if e.weight.nrows() != ctx.propagated[v].ncols() {
                        return Err(Error::Dimension(format!(
                            "view {v}: embedding expects {} features, data has {}",
                            e.weight.nrows(),
                            ctx.propagated[v].ncols()
                        )));
                    }
                    embed_propagated(ctx.propagated[v].view(), e)
                }
                None => ctx.views[v].clone(),
            };
            let (s_hat, a_view) = match frozen_graphs {
                Some(graphs) => (rbf_similarity(z.view(), cfg.rbf_scale), graphs[v].clone()),
                None => build_view_graph(
                    z.view(),
                    cfg.rbf_scale,
                    cfg.n_neighbors,
                    &ctx.global,
                    ctx.mask.column(v),
                )?,
            };
            let mut h = z.clone();
            let mut layers = Vec::with_capacity(vp.layers.len());
            for layer in &vp.layers {
                if layer.w_query.nrows() != h.ncols() {
                    return Err(Error::Dimension(format!(
                        "view {v}: layer width {} vs feature width {}",
                        layer.w_query.nrows(),
                        h.ncols()
                    )));
                }
                let (next, cache) = encoder_layer_cached(h.view(), &a_view, layer)?;
                layers.push(cache);
                h = next;
            }
            Ok(ViewCache {
                z,
                s_hat,
                a_view,
                layers,
                h,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForwardCache { views })
}

/// Convenience entry point computing the graph context from scratch.
pub fn forward(
    ds: &MultiViewDataset,
    global: &AdjacencyGraph,
    params: &ModelParameters,
    cfg: &TrainConfig,
) -> Result<ForwardCache> {
    let ctx = GraphContext::with_global(ds, global.clone());
    forward_with(&ctx, params, cfg, None)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn identity_embedding() {
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        let e = Embedding {
            weight: Array2::eye(2),
            bias: Array1::zeros(2),
        };
        let eye = Array2::<f64>::eye(2);
        assert_eq!(embed(x.view(), eye.view(), &e).unwrap(), x);
    }

    #[test]
    fn missing_row_is_imputed_from_neighbor() {
        // Sample 0 is missing (zero row); its normalized row puts weight 0.5 on sample 1.
        let x = array![[0.0, 0.0], [2.0, -1.0]];
        let a_norm = array![[0.5, 0.5], [0.0, 1.0]];
        let e = Embedding {
            weight: array![[1.0], [1.0]],
            bias: array![0.25],
        };
        let z = embed(x.view(), a_norm.view(), &e).unwrap();
        // 0.5 * (2 - 1) + 0.25
        assert_eq!(z[[0, 0]], 0.75);
        let zero_row = array![[0.0, 0.0], [0.0, 1.0]];
        let z = embed(x.view(), zero_row.view(), &e).unwrap();
        assert_eq!(z[[0, 0]], 0.25);
        assert!(embed(x.view(), Array2::<f64>::eye(3).view(), &e).is_err());
    }

    #[test]
    fn view_graph_from_identical_rows() {
        let z = array![[1.0, 1.0], [1.0, 1.0], [5.0, 5.0]];
        let global = AdjacencyGraph::identity(3);
        let mask = Array1::from_elem(3, true);
        let (s, a) = build_view_graph(z.view(), 2.0, 2, &global, mask.view()).unwrap();
        assert_eq!(s.0[[0, 1]], 1.0);
        assert!(a.has_edge(0, 1) && a.has_edge(1, 0));
    }

    #[test]
    fn view_graph_rows_have_k_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = Array2::from_shape_fn((15, 3), |_| rng.random_range(-1.0..1.0));
        let x = Array2::from_shape_fn((15, 2), |_| rng.random_range(-1.0..1.0));
        let global = top_k_binarize(rbf_similarity(x.view(), 2.0).0.view(), 4).unwrap();
        let mask = Array1::from_shape_fn(15, |i| i % 3 != 0);
        let (_, a) = build_view_graph(z.view(), 2.0, 4, &global, mask.view()).unwrap();
        assert!(a.row_degrees().iter().all(|&d| d == 4));
    }

    #[test]
    fn logits_are_a_gram_matrix() {
        let h = array![[1.0, 2.0], [0.5, -1.0]];
        let eye = Array2::<f64>::eye(2);
        let e = attention_logits(h.view(), eye.view(), eye.view());
        assert_eq!(e, h.dot(&h.t()));
        let e3 = attention_logits((&h * 3.0).view(), eye.view(), eye.view());
        assert_abs_diff_eq!(e3, e * 9.0, epsilon = 1e-12);
        let onehot = Array2::<f64>::eye(3);
        let eye3 = Array2::<f64>::eye(3);
        assert_eq!(attention_logits(onehot.view(), eye3.view(), eye3.view()), eye3);
    }

    #[test]
    fn softmax_cases() {
        let a = AdjacencyGraph::from_binary(array![[1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [1.0, 0.0, 1.0]], 1).unwrap();
        let e = array![[3.0, 9.0, 9.0], [0.7, 0.7, 100.0], [1.0, 50.0, 2.0]];
        let s = masked_softmax(e.view(), &a).unwrap();
        assert_eq!(s.row(0).to_vec(), vec![1.0, 0.0, 0.0]);
        assert_eq!(s.row(1).to_vec(), vec![0.5, 0.5, 0.0]);
        let sigma = 1.0 / (1.0 + std::f64::consts::E);
        assert_abs_diff_eq!(s[[2, 0]], sigma, epsilon = 1e-15);
        assert_abs_diff_eq!(s[[2, 2]], 1.0 - sigma, epsilon = 1e-15);
        assert_abs_diff_eq!(s[[2, 0]], 0.268941421369995, epsilon = 1e-12);
        assert_eq!(s[[2, 1]], 0.0);

        let empty = AdjacencyGraph::from_binary(array![[0.0, 0.0], [1.0, 1.0]], 1).unwrap();
        assert!(matches!(masked_softmax(array![[0.0, 0.0], [0.0, 0.0]].view(), &empty), Err(Error::Contract(_))));
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let a = AdjacencyGraph::from_binary(Array2::ones((2, 2)), 2).unwrap();
        let s = masked_softmax(array![[1e4, 1e4 - 1.0], [-1e4, 0.0]].view(), &a).unwrap();
        assert!(s.iter().all(|x| x.is_finite()));
        assert_abs_diff_eq!(s.row(0).sum(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_layer_is_identity() {
        let h = array![[1.0, -2.0], [0.5, 3.0]];
        let a = AdjacencyGraph::from_binary(Array2::ones((2, 2)), 2).unwrap();
        assert_eq!(encoder_layer(h.view(), &a, &AttentionLayer::zeros(2)).unwrap(), h);
    }

    #[test]
    fn scalar_layer_trace() {
        // N = 2, width 1, full graph.
        let h = array![[1.0], [2.0]];
        let a = AdjacencyGraph::from_binary(Array2::ones((2, 2)), 2).unwrap();
        let layer = AttentionLayer {
            w_query: array![[0.5]],
            w_key: array![[1.0]],
            w_value: array![[2.0]],
            w_out: array![[1.5]],
            b_out: array![-4.0],
        };
        let out = encoder_layer(h.view(), &a, &layer).unwrap();
        // Row 0: logits (0.5, 1.0); row 1: logits (1.0, 2.0).
        let w0 = 1.0 / (1.0 + 0.5f64.exp());
        let w1 = 1.0 / (1.0 + 1f64.exp());
        let agg0 = 2.0 * (w0 * 1.0 + (1.0 - w0) * 2.0);
        let agg1 = 2.0 * (w1 * 1.0 + (1.0 - w1) * 2.0);
        let expect0 = (1.5 * agg0 - 4.0).max(0.0) + 1.0;
        let expect1 = (1.5 * agg1 - 4.0).max(0.0) + 2.0;
        assert_abs_diff_eq!(out[[0, 0]], expect0, epsilon = 1e-14);
        assert_abs_diff_eq!(out[[1, 0]], expect1, epsilon = 1e-14);
    }

    fn small_dataset() -> MultiViewDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let views = vec![
            Array2::from_shape_fn((8, 3), |_| rng.random_range(0.0..1.0)),
            Array2::from_shape_fn((8, 2), |_| rng.random_range(0.0..1.0)),
        ];
        let mask = Array2::from_shape_fn((8, 2), |(i, v)| !(i == 2 && v == 0 || i == 5 && v == 1));
        MultiViewDataset::new(views, Some(mask), None).unwrap()
    }

    #[test]
    fn forward_shapes_and_purity() {
        let ds = small_dataset();
        let mut cfg = TrainConfig::with_clusters(2);
        cfg.n_neighbors = 3;
        cfg.n_mask_edges = 2;
        cfg.hidden_dims = vec![4, 5];
        let ctx = GraphContext::build(&ds, &cfg).unwrap();
        let params = ModelParameters::init(&ds.view_dims(), &cfg, &mut ChaCha8Rng::seed_from_u64(1));
        let a = forward_with(&ctx, &params, &cfg, None).unwrap();
        let b = forward(&ds, &ctx.global, &params, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.views[0].h.dim(), (8, 4));
        assert_eq!(a.views[1].h.dim(), (8, 5));
        assert!(a.views.iter().all(|v| v.h.iter().all(|x| x.is_finite())));
    }

    #[test]
    fn zeroed_encoder_passes_embedding_through() {
        let mut ds_views = small_dataset().views().to_vec();
        ds_views.truncate(1);
        let ds = MultiViewDataset::new(ds_views, None, None).unwrap();
        let mut cfg = TrainConfig::with_clusters(2);
        cfg.n_neighbors = 3;
        cfg.n_mask_edges = 3;
        cfg.hidden_dims = vec![3];
        let ctx = GraphContext::build(&ds, &cfg).unwrap();
        let mut params = ModelParameters::init(&ds.view_dims(), &cfg, &mut ChaCha8Rng::seed_from_u64(2));
        for layer in &mut params.views[0].layers {
            *layer = AttentionLayer::zeros(3);
        }
        let cache = forward_with(&ctx, &params, &cfg, None).unwrap();
        let e = params.views[0].embed.as_ref().unwrap();
        let direct = ctx.global_norm.dot(ds.view(0)).dot(&e.weight) + &e.bias;
        assert_abs_diff_eq!(cache.views[0].h, direct, epsilon = 1e-12);
    }

    #[test]
    fn attention_row_ignores_non_neighbors() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
        let layer = AttentionLayer::init(&mut rng, 3);
        let a = AdjacencyGraph::from_binary(
            array![
                [1.0, 1.0, 0.0, 0.0, 0.0],
                [0.0, 1.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, 1.0, 0.0],
                [0.0, 0.0, 0.0, 1.0, 1.0],
                [1.0, 0.0, 0.0, 0.0, 1.0]
            ],
            2,
        )
        .unwrap();
        let (_, before) = encoder_layer_cached(h.view(), &a, &layer).unwrap();
        let mut h2 = h.clone();
        h2.row_mut(4).mapv_inplace(|x| x + 1.0);
        let (_, after) = encoder_layer_cached(h2.view(), &a, &layer).unwrap();
        // Rows 0..3 do not reach sample 4 and do not contain it.
        for i in 0..3 {
            assert_eq!(before.attention.row(i), after.attention.row(i));
        }
    }
}
