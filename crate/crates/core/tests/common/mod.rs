#![allow(dead_code)]

use imvc::backprop::{compute_gradients, FrozenStep};
use imvc::config::TrainConfig;
use imvc::graph::{top_k_binarize, AdjacencyGraph};
use imvc::model::{GraphContext, ModelParameters};
use imvc::synthetic::{gaussian_blobs, BlobSpec};
use imvc::{normalize_views, simulate_missing, MultiViewDataset};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

/// Random binary graph with `k` ones per row, self-loops included.
pub fn random_graph(rng: &mut impl Rng, n: usize, k: usize) -> AdjacencyGraph {
    let mut scores = uniform(rng, n, n);
    for i in 0..n {
        scores[[i, i]] = 2.0;
    }
    top_k_binarize(scores.view(), k).unwrap()
}

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Central differences of `f` at `x`, one coordinate of row `i` at a time.
pub fn row_fd(x: &Array2<f64>, i: usize, step: f64, f: impl Fn(&Array2<f64>) -> f64) -> Array1<f64> {
    Array1::from_shape_fn(x.ncols(), |j| {
        let mut plus = x.clone();
        plus[[i, j]] += step;
        let mut minus = x.clone();
        minus[[i, j]] -= step;
        (f(&plus) - f(&minus)) / (2.0 * step)
    })
}

pub fn flatten(p: &ModelParameters) -> Vec<f64> {
    let mut out = Vec::with_capacity(p.n_values());
    p.for_each_tensor(|_, t| out.extend_from_slice(t));
    out
}

/// Small incomplete two-view instance for end-to-end checks.
pub fn small_instance(seed: u64) -> (MultiViewDataset, TrainConfig) {
    let ds = gaussian_blobs(&BlobSpec {
        n_samples: 12,
        n_clusters: 3,
        view_dims: vec![4, 3],
        separation: 2.0,
        noise: 1.0,
        seed,
    })
    .unwrap();
    let ds = normalize_views(&simulate_missing(&ds, 0.25, seed).unwrap());
    let mut cfg = TrainConfig::with_clusters(3);
    cfg.n_neighbors = 4;
    cfg.n_mask_edges = 4;
    cfg.hidden_dims = vec![3, 4];
    cfg.seed = seed;
    (ds, cfg)
}

/// Analytic and finite-difference gradients of the total loss over every
/// parameter, with graphs, masks and cluster targets frozen at `params`.
pub fn gradient_pair(ds: &MultiViewDataset, cfg: &TrainConfig, params: &ModelParameters) -> (Vec<f64>, Vec<f64>) {
    let ctx = GraphContext::build(ds, cfg).unwrap();
    let (frozen, cache) = FrozenStep::capture(&ctx, params, cfg).unwrap();
    let (_, grads) = compute_gradients(&ctx, params, &cache, &frozen.masks, frozen.targets.as_ref(), cfg).unwrap();
    let analytic = flatten(&grads);

    let step = 1e-6;
    let n = params.n_values();
    let mut numeric = Vec::with_capacity(n);
    for idx in 0..n {
        let shifted = |delta: f64| {
            let mut p = params.clone();
            let mut seen = 0;
            p.for_each_tensor_mut(|_, t| {
                if idx >= seen && idx < seen + t.len() {
                    t[idx - seen] += delta;
                }
                seen += t.len();
            });
            frozen.loss(&ctx, &p, cfg).unwrap().total
        };
        numeric.push((shifted(step) - shifted(-step)) / (2.0 * step));
    }
    (analytic, numeric)
}

pub fn init_params(ds: &MultiViewDataset, cfg: &TrainConfig) -> ModelParameters {
    ModelParameters::init(&ds.view_dims(), cfg, &mut rng(cfg.seed))
}
