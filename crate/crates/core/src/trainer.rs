//! Full-batch training loop.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backprop::{compute_gradients, rec_masks, ClusterTargets};
use crate::clustering::{self, ClusterState};
use crate::config::TrainConfig;
use crate::dataset::MultiViewDataset;
use crate::error::{Error, Result};
use crate::losses::LossBreakdown;
use crate::metrics::{evaluate, Scores};
use crate::model::{forward_with, ForwardCache, GraphContext, ModelParameters};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParameters,
    pub v: ModelParameters,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParameters) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. Pure: returns new parameters and moments.
pub fn adam_step(params: &ModelParameters, grads: &ModelParameters, state: &AdamState, lr: f64) -> (ModelParameters, AdamState) {
    let step = state.step + 1;
    let mut grad_tensors = Vec::new();
    grads.for_each_tensor(|_, g| grad_tensors.push(g.to_vec()));

    let mut m = state.m.clone();
    let mut v = state.v.clone();
    let mut idx = 0;
    m.for_each_tensor_mut(|_, t| {
        for (mi, &g) in t.iter_mut().zip(&grad_tensors[idx]) {
            *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * g;
        }
        idx += 1;
    });
    idx = 0;
    v.for_each_tensor_mut(|_, t| {
        for (vi, &g) in t.iter_mut().zip(&grad_tensors[idx]) {
            *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * g * g;
        }
        idx += 1;
    });

    let bc1 = 1.0 - ADAM_BETA1.powi(step as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(step as i32);
    let mut m_tensors = Vec::new();
    m.for_each_tensor(|_, t| m_tensors.push(t.to_vec()));
    let mut v_tensors = Vec::new();
    v.for_each_tensor(|_, t| v_tensors.push(t.to_vec()));

    let mut out = params.clone();
    idx = 0;
    out.for_each_tensor_mut(|_, t| {
        for ((p, &mi), &vi) in t.iter_mut().zip(&m_tensors[idx]).zip(&v_tensors[idx]) {
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        idx += 1;
    });
    (out, AdamState { m, v, step })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossBreakdown,
    /// Scores of the current assignment, when ground truth is available.
    pub scores: Option<Scores>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ModelParameters,
    pub adam: AdamState,
    pub cluster: Option<ClusterState>,
    pub epoch: usize,
    pub history: Vec<EpochRecord>,
}

fn cluster_state(cache: &ForwardCache, cfg: &TrainConfig, warm: Option<&ClusterState>, first_seed: u64) -> Result<(ClusterState, Vec<usize>)> {
    let fused = clustering::fuse_features(&cache.high_level())?;
    let fit = match warm {
        Some(prev) => clustering::kmeans_update(
            fused.view(),
            cfg.n_clusters,
            Some(prev.centers.view()),
            cfg.kmeans_warm_iter,
            first_seed,
        )?,
        None => clustering::kmeans_restarts(fused.view(), cfg.n_clusters, cfg.kmeans_max_iter, first_seed, cfg.kmeans_restarts)?,
    };
    let q = clustering::soft_labels(fused.view(), fit.centers.view());
    let p = clustering::sharpen(q.view())?;
    let q_views = clustering::view_soft_labels(&cache.high_level(), fit.centers.view())?;
    Ok((
        ClusterState {
            centers: fit.centers,
            q,
            p,
            q_views,
        },
        fit.labels,
    ))
}

fn labels_of(state: &ClusterState, kmeans_labels: Vec<usize>, cfg: &TrainConfig) -> Vec<usize> {
    if cfg.components.kl {
        clustering::final_assignment(&state.q_views)
    } else {
        kmeans_labels
    }
}

fn check_finite(loss: &LossBreakdown, epoch: usize) -> Result<()> {
    for (term, value) in [("rec", loss.rec), ("con", loss.con), ("kl", loss.kl), ("total", loss.total)] {
        if !value.is_finite() {
            return Err(Error::NonFinite { term, epoch });
        }
    }
    Ok(())
}

/// Trains on `ds` and returns the final state and cluster labels.
pub fn train(ds: &MultiViewDataset, cfg: &TrainConfig) -> Result<(TrainState, Vec<usize>)> {
    train_with(ds, cfg, |_| {})
}

/// Like [`train`], calling `on_epoch` after every optimizer step.
pub fn train_with(ds: &MultiViewDataset, cfg: &TrainConfig, mut on_epoch: impl FnMut(&EpochRecord)) -> Result<(TrainState, Vec<usize>)> {
    cfg.validate(ds.n_samples(), ds.n_views())?;
    let ctx = GraphContext::build(ds, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = ModelParameters::init(&ds.view_dims(), cfg, &mut rng);
    let mut state = TrainState {
        adam: AdamState::new(&params),
        params,
        cluster: None,
        epoch: 0,
        history: Vec::with_capacity(cfg.epochs),
    };

    for epoch in 1..=cfg.epochs {
        let cache = forward_with(&ctx, &state.params, cfg, None)?;
        let masks = rec_masks(&cache, cfg)?;
        let (targets, labels) = if cfg.components.kl {
            let (cluster, kmeans_labels) = cluster_state(&cache, cfg, state.cluster.as_ref(), cfg.seed)?;
            let targets = ClusterTargets {
                centers: cluster.centers.clone(),
                p: cluster.p.clone(),
            };
            let labels = labels_of(&cluster, kmeans_labels, cfg);
            state.cluster = Some(cluster);
            (Some(targets), Some(labels))
        } else {
            (None, None)
        };
        let (loss, grads) = compute_gradients(&ctx, &state.params, &cache, &masks, targets.as_ref(), cfg)?;
        check_finite(&loss, epoch)?;

        let (params, adam) = adam_step(&state.params, &grads, &state.adam, cfg.learning_rate);
        if !params.is_finite() {
            return Err(Error::NonFinite { term: "parameter", epoch });
        }
        state.params = params;
        state.adam = adam;
        state.epoch = epoch;

        let scores = match (ds.labels(), labels) {
            (Some(truth), Some(pred)) => Some(evaluate(&pred, truth)?),
            _ => None,
        };
        let record = EpochRecord { epoch, loss, scores };
        on_epoch(&record);
        state.history.push(record);
    }

    let cache = forward_with(&ctx, &state.params, cfg, None)?;
    let warm = if cfg.components.kl { state.cluster.as_ref() } else { None };
    let (cluster, kmeans_labels) = cluster_state(&cache, cfg, warm, cfg.seed)?;
    let labels = labels_of(&cluster, kmeans_labels, cfg);
    state.cluster = Some(cluster);
    Ok((state, labels))
}
