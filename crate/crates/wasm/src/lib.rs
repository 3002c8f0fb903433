//! Browser demo: global graph explorer, reconstruction gradient forces and a
//! small training run. Each operation is a plain function returning a
//! serializable view; the `*_json` exports wrap them for JavaScript.

use imvc::config::{RecLoss, TrainConfig};
use imvc::experiment::{prepare, run};
use imvc::graph::{fuse_global_graph, top_k_binarize, AdjacencyGraph};
use imvc::losses::{grad_masked_with, grad_traditional, graph_mask, gradient_term_counts, reconstructed_graph, GraphMask};
use imvc::synthetic::{gaussian_blobs, BlobSpec};
use imvc::{normalize_views, MultiViewDataset, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const RBF_SCALE: f64 = 2.0;

fn blobs(n: usize, clusters: usize, seed: u64) -> Result<MultiViewDataset> {
    gaussian_blobs(&BlobSpec {
        n_samples: n,
        n_clusters: clusters,
        view_dims: vec![2, 2],
        separation: 4.0,
        noise: 1.0,
        seed,
    })
}

fn points(ds: &MultiViewDataset, v: usize) -> Vec<[f64; 2]> {
    ds.view(v).rows().into_iter().map(|r| [r[0], r[1]]).collect()
}

fn edges(graph: &AdjacencyGraph) -> Vec<[usize; 2]> {
    (0..graph.n()).flat_map(|i| graph.neighbors(i).filter(move |&j| j != i).map(move |j| [i, j])).collect()
}

#[derive(Debug, Serialize)]
pub struct GraphView {
    /// Normalized 2-D coordinates per view. An unobserved sample sits at the
    /// mean of its observed global-graph neighbors (the origin if there are none).
    pub views: Vec<Vec<[f64; 2]>>,
    pub observed: Vec<Vec<bool>>,
    pub labels: Vec<usize>,
    /// Global graph edges without self-loops.
    pub edges: Vec<[usize; 2]>,
    /// Share of those edges joining samples of the same class.
    pub edge_purity: f64,
}

/// Global neighbor graph of a two-view, three-class blob set with missing views.
pub fn explore_graph(n: usize, delta: f64, k: usize, seed: u64) -> Result<GraphView> {
    let ds = prepare(&blobs(n, 3, seed)?, delta, seed)?;
    let graph = fuse_global_graph(ds.views(), ds.mask().view(), RBF_SCALE, k)?;
    let labels = ds.labels().expect("synthetic data is labeled").to_vec();
    let edges = edges(&graph);
    let same = edges.iter().filter(|[i, j]| labels[*i] == labels[*j]).count();
    let views = (0..2)
        .map(|v| {
            let observed = ds.mask_col(v);
            let mut pts = points(&ds, v);
            for i in (0..n).filter(|&i| !observed[i]) {
                let known: Vec<[f64; 2]> = graph.neighbors(i).filter(|&j| observed[j]).map(|j| pts[j]).collect();
                if !known.is_empty() {
                    let m = known.len() as f64;
                    pts[i] = [known.iter().map(|p| p[0]).sum::<f64>() / m, known.iter().map(|p| p[1]).sum::<f64>() / m];
                }
            }
            pts
        })
        .collect();
    Ok(GraphView {
        views,
        observed: ds.mask().rows().into_iter().map(|r| r.to_vec()).collect(),
        labels,
        edge_purity: if edges.is_empty() { 1.0 } else { same as f64 / edges.len() as f64 },
        edges,
    })
}

#[derive(Debug, Serialize)]
pub struct Term {
    pub j: usize,
    /// `h_j - h_i` scaled by the term's coefficient.
    pub force: [f64; 2],
    pub attractive: bool,
}

#[derive(Debug, Serialize)]
pub struct Forces {
    pub gradient: [f64; 2],
    pub terms: Vec<Term>,
    pub attractive: usize,
    pub repulsive: usize,
}

#[derive(Debug, Serialize)]
pub struct ForceView {
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<usize>,
    pub sample: usize,
    pub neighbors: Vec<usize>,
    pub traditional: Forces,
    pub masked: Forces,
}

fn forces(h: &ndarray::Array2<f64>, global: &AdjacencyGraph, i: usize, mask: Option<&GraphMask>) -> Forces {
    let a_hat = reconstructed_graph(h.view(), RBF_SCALE);
    let hi = h.row(i);
    let terms = (0..h.nrows())
        .filter(|&j| j != i && mask.is_none_or(|m| m.get(i, j)))
        .map(|j| {
            let a = a_hat.0[[i, j]];
            let attractive = global.has_edge(i, j);
            let coeff = 4.0 / RBF_SCALE * if attractive { (a - 1.0) * a } else { a * a };
            let hj = h.row(j);
            Term {
                j,
                force: [coeff * (hj[0] - hi[0]), coeff * (hj[1] - hi[1])],
                attractive,
            }
        })
        .collect();
    let g = match mask {
        Some(m) => grad_masked_with(h.view(), global, RBF_SCALE, m, i),
        None => grad_traditional(h.view(), global, RBF_SCALE, i),
    };
    let (attractive, repulsive) = gradient_term_counts(global, i, mask);
    Forces {
        gradient: [g[0], g[1]],
        terms,
        attractive,
        repulsive,
    }
}

/// Per-term gradient forces on one sample under the traditional and masked
/// reconstruction losses. The global graph is the top-`k` graph of the points.
pub fn gradient_forces(n: usize, k: usize, mask_k: usize, sample: usize, seed: u64) -> Result<ForceView> {
    let ds = blobs(n, 3, seed)?;
    let h = ds.view(0).clone();
    let global = top_k_binarize(reconstructed_graph(h.view(), RBF_SCALE).0.view(), k)?;
    let mask = graph_mask(&reconstructed_graph(h.view(), RBF_SCALE), mask_k)?;
    let sample = sample.min(n - 1);
    Ok(ForceView {
        points: points(&ds, 0),
        labels: ds.labels().expect("synthetic data is labeled").to_vec(),
        neighbors: global.neighbors(sample).filter(|&j| j != sample).collect(),
        traditional: forces(&h, &global, sample, None),
        masked: forces(&h, &global, sample, Some(&mask)),
        sample,
    })
}

#[derive(Debug, Serialize)]
pub struct TrainView {
    /// View 0 of the complete data, for display.
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<usize>,
    pub truth: Vec<usize>,
    pub loss: Vec<f64>,
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
}

/// Short training run on a two-view, three-class blob set.
pub fn train_small(n: usize, delta: f64, epochs: usize, traditional: bool, seed: u64) -> Result<TrainView> {
    let ds = blobs(n, 3, seed)?;
    let mut cfg = TrainConfig::with_clusters(3);
    cfg.epochs = epochs;
    cfg.hidden_dims = vec![8];
    cfg.n_neighbors = 6.min(n);
    cfg.n_mask_edges = 6.min(n);
    cfg.rec_loss = if traditional { RecLoss::Traditional } else { RecLoss::Masked };
    let mut loss = Vec::with_capacity(epochs);
    let out = run(&ds, delta, seed, &cfg, |r| loss.push(r.loss.total))?;
    let scores = out.scores.expect("synthetic data is labeled");
    Ok(TrainView {
        points: points(&normalize_views(&ds), 0),
        labels: out.labels,
        truth: ds.labels().expect("synthetic data is labeled").to_vec(),
        loss,
        acc: scores.acc,
        nmi: scores.nmi,
        ari: scores.ari,
    })
}

fn to_json<T: Serialize>(value: Result<T>) -> std::result::Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn explore_graph_json(n: usize, delta: f64, k: usize, seed: u64) -> std::result::Result<String, JsError> {
    to_json(explore_graph(n, delta, k, seed))
}

#[wasm_bindgen]
pub fn gradient_forces_json(n: usize, k: usize, mask_k: usize, sample: usize, seed: u64) -> std::result::Result<String, JsError> {
    to_json(gradient_forces(n, k, mask_k, sample, seed))
}

#[wasm_bindgen]
pub fn train_small_json(n: usize, delta: f64, epochs: usize, traditional: bool, seed: u64) -> std::result::Result<String, JsError> {
    to_json(train_small(n, delta, epochs, traditional, seed))
}
