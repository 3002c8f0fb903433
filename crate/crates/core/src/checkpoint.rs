//! JSON checkpoints of a [`TrainState`].
//!
//! The file is a manifest plus a flat list of named tensors:
//!
//! ```json
//! {
//!   "format": "imvc-checkpoint/1",
//!   "config": { ... },
//!   "view_dims": [10, 10],
//!   "epoch": 200,
//!   "adam_step": 200,
//!   "history": [ ... ],
//!   "tensors": [{"name": "param.view0.embed.weight", "shape": [10, 64], "data": [...]}, ...]
//! }
//! ```
//!
//! Tensor names carry a `param.`, `adam_m.` or `adam_v.` prefix, followed by the
//! parameter name, or are one of `cluster.centers`, `cluster.q`, `cluster.p` and
//! `cluster.q_view{v}`. Floats round-trip exactly.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterState;
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::ModelParameters;
use crate::trainer::{AdamState, EpochRecord, TrainState};

const FORMAT: &str = "imvc-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: TrainConfig,
    pub view_dims: Vec<usize>,
    pub epoch: usize,
    pub adam_step: u64,
    pub history: Vec<EpochRecord>,
    pub tensors: Vec<Tensor>,
}

fn push_params(out: &mut Vec<Tensor>, prefix: &str, params: &ModelParameters) {
    let shapes = params.shapes();
    let mut idx = 0;
    params.for_each_tensor(|name, data| {
        out.push(Tensor {
            name: format!("{prefix}.{name}"),
            shape: shapes[idx].1.clone(),
            data: data.to_vec(),
        });
        idx += 1;
    });
}

fn matrix_tensor(name: String, m: &Array2<f64>) -> Tensor {
    Tensor {
        name,
        shape: m.shape().to_vec(),
        data: m.iter().copied().collect(),
    }
}

impl Checkpoint {
    pub fn from_state(state: &TrainState, cfg: &TrainConfig, view_dims: &[usize]) -> Self {
        let mut tensors = Vec::new();
        push_params(&mut tensors, "param", &state.params);
        push_params(&mut tensors, "adam_m", &state.adam.m);
        push_params(&mut tensors, "adam_v", &state.adam.v);
        if let Some(c) = &state.cluster {
            tensors.push(matrix_tensor("cluster.centers".into(), &c.centers));
            tensors.push(matrix_tensor("cluster.q".into(), &c.q));
            tensors.push(matrix_tensor("cluster.p".into(), &c.p));
            for (v, q) in c.q_views.iter().enumerate() {
                tensors.push(matrix_tensor(format!("cluster.q_view{v}"), q));
            }
        }
        Self {
            format: FORMAT.into(),
            config: cfg.clone(),
            view_dims: view_dims.to_vec(),
            epoch: state.epoch,
            adam_step: state.adam.step,
            history: state.history.clone(),
            tensors,
        }
    }

    pub fn into_state(self) -> Result<TrainState> {
        if self.format != FORMAT {
            return Err(Error::Argument(format!("unknown checkpoint format `{}`", self.format)));
        }
        let mut by_name: HashMap<String, Tensor> = self.tensors.into_iter().map(|t| (t.name.clone(), t)).collect();
        // Only the structure of the template matters; every value is overwritten.
        let template = ModelParameters::init(&self.view_dims, &self.config, &mut ChaCha8Rng::seed_from_u64(0));
        let mut fill = |prefix: &str| -> Result<ModelParameters> {
            let mut params = template.clone();
            let mut missing = None;
            params.for_each_tensor_mut(|name, dst| {
                let key = format!("{prefix}.{name}");
                match by_name.remove(&key) {
                    Some(t) if t.data.len() == dst.len() => dst.copy_from_slice(&t.data),
                    _ => missing = missing.take().or(Some(key)),
                }
            });
            match missing {
                Some(key) => Err(Error::Invariant(format!("checkpoint tensor `{key}` missing or misshaped"))),
                None => Ok(params),
            }
        };
        let params = fill("param")?;
        let m = fill("adam_m")?;
        let v = fill("adam_v")?;

        let mut matrix = |name: &str| -> Result<Option<Array2<f64>>> {
            by_name
                .remove(name)
                .map(|t| match t.shape.as_slice() {
                    &[r, c] => Array2::from_shape_vec((r, c), t.data)
                        .map_err(|e| Error::Invariant(format!("tensor `{name}`: {e}"))),
                    _ => Err(Error::Invariant(format!("tensor `{name}` is not a matrix"))),
                })
                .transpose()
        };
        let cluster = match matrix("cluster.centers")? {
            Some(centers) => {
                let q = matrix("cluster.q")?.ok_or_else(|| Error::Invariant("cluster.q missing".into()))?;
                let p = matrix("cluster.p")?.ok_or_else(|| Error::Invariant("cluster.p missing".into()))?;
                let mut q_views = Vec::new();
                while let Some(qv) = matrix(&format!("cluster.q_view{}", q_views.len()))? {
                    q_views.push(qv);
                }
                Some(ClusterState { centers, q, p, q_views })
            }
            None => None,
        };
        Ok(TrainState {
            params,
            adam: AdamState {
                m,
                v,
                step: self.adam_step,
            },
            cluster,
            epoch: self.epoch,
            history: self.history,
        })
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, state: &TrainState, cfg: &TrainConfig, view_dims: &[usize]) -> Result<()> {
    let path = path.as_ref();
    let ckpt = Checkpoint::from_state(state, cfg, view_dims);
    let text = serde_json::to_string(&ckpt).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(TrainState, TrainConfig, Vec<usize>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })?;
    let cfg = ckpt.config.clone();
    let dims = ckpt.view_dims.clone();
    Ok((ckpt.into_state()?, cfg, dims))
}
