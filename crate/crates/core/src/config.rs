//! Hyperparameters for a training run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which graph reconstruction loss drives the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecLoss {
    /// Only the `n_mask_edges` strongest reconstructed edges per row are compared to the global graph.
    Masked,
    /// Every entry of the reconstructed graph is compared to the global graph.
    Traditional,
}

impl std::str::FromStr for RecLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "masked" => Ok(RecLoss::Masked),
            "traditional" => Ok(RecLoss::Traditional),
            other => Err(Error::Argument(format!(
                "unknown loss variant `{other}` (expected masked or traditional)"
            ))),
        }
    }
}

impl std::fmt::Display for RecLoss {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RecLoss::Masked => "masked",
            RecLoss::Traditional => "traditional",
        })
    }
}

/// Switches for the ablation runs. All on is the full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Components {
    /// Graph reconstruction loss on the encoder output.
    pub rec: bool,
    /// GCN embedding layer plus the graph-structure contrastive loss. When off, the
    /// view graphs and the encoder input come straight from the raw features.
    pub embed: bool,
    /// Self-supervised clustering head and its KL loss. When off, final labels come
    /// from K-means on the fused features.
    pub kl: bool,
}

impl Default for Components {
    fn default() -> Self {
        Self {
            rec: true,
            embed: true,
            kl: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_clusters: usize,
    /// K of the top-K neighbor graphs.
    pub n_neighbors: usize,
    /// k of the graph mask in the reconstruction loss.
    pub n_mask_edges: usize,
    /// RBF scale `t`.
    pub rbf_scale: f64,
    /// Contrastive temperature.
    pub temperature: f64,
    /// Weight of the contrastive loss.
    pub alpha: f64,
    /// Weight of the KL loss.
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Encoder width per view. A single entry is broadcast to every view.
    pub hidden_dims: Vec<usize>,
    pub n_gat_layers: usize,
    /// Lloyd iterations for the first (cold) K-means.
    pub kmeans_max_iter: usize,
    /// Lloyd iterations for the warm-started K-means of later epochs.
    pub kmeans_warm_iter: usize,
    /// k-means++ restarts of the cold K-means; the lowest WCSS wins.
    #[serde(default = "default_restarts")]
    pub kmeans_restarts: usize,
    pub seed: u64,
    pub rec_loss: RecLoss,
    pub components: Components,
}

fn default_restarts() -> usize {
    10
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_clusters: 2,
            n_neighbors: 10,
            n_mask_edges: 10,
            rbf_scale: 2.0,
            temperature: 0.5,
            alpha: 1.0,
            beta: 1.0,
            learning_rate: 1e-3,
            epochs: 200,
            hidden_dims: vec![64],
            n_gat_layers: 2,
            kmeans_max_iter: 50,
            kmeans_warm_iter: 5,
            kmeans_restarts: default_restarts(),
            seed: 0,
            rec_loss: RecLoss::Masked,
            components: Components::default(),
        }
    }
}

impl TrainConfig {
    pub fn with_clusters(n_clusters: usize) -> Self {
        Self {
            n_clusters,
            ..Self::default()
        }
    }

    /// Encoder width of view `v`, given the raw feature width of that view.
    pub fn hidden_dim(&self, v: usize, raw_dim: usize) -> usize {
        if !self.components.embed {
            return raw_dim;
        }
        match self.hidden_dims.as_slice() {
            [] => raw_dim,
            [only] => *only,
            dims => dims[v],
        }
    }

    /// Checks the config against a dataset of `n_samples` rows and `n_views` views.
    pub fn validate(&self, n_samples: usize, n_views: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Argument(msg));
        if self.n_clusters == 0 || self.n_clusters > n_samples {
            return bad(format!(
                "n_clusters = {} must be in 1..={n_samples}",
                self.n_clusters
            ));
        }
        if self.n_neighbors == 0 || self.n_neighbors > n_samples {
            return bad(format!(
                "n_neighbors = {} must be in 1..={n_samples}",
                self.n_neighbors
            ));
        }
        if self.n_mask_edges == 0 || self.n_mask_edges > self.n_neighbors {
            return bad(format!(
                "n_mask_edges = {} must be in 1..={}",
                self.n_mask_edges, self.n_neighbors
            ));
        }
        if !(self.rbf_scale > 0.0) || !(self.temperature > 0.0) || !(self.learning_rate > 0.0) {
            return bad("rbf_scale, temperature and learning_rate must be positive".into());
        }
        if !(self.alpha >= 0.0) || !(self.beta >= 0.0) {
            return bad("alpha and beta must be nonnegative".into());
        }
        if self.n_gat_layers == 0 || self.kmeans_max_iter == 0 {
            return bad("n_gat_layers and kmeans_max_iter must be positive".into());
        }
        if self.hidden_dims.len() > 1 && self.hidden_dims.len() != n_views {
            return bad(format!(
                "hidden_dims has {} entries for {n_views} views",
                self.hidden_dims.len()
            ));
        }
        if self.hidden_dims.contains(&0) {
            return bad("hidden_dims entries must be positive".into());
        }
        Ok(())
    }

    /// Applies a `key=value` override, as accepted by the command line.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Argument(format!("expected key=value, got `{assignment}`")))?;
        let key = key.trim();
        let value = value.trim();
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Argument(format!("bad value `{value}` for `{key}`")))
        }
        match key {
            "n_clusters" => self.n_clusters = num(key, value)?,
            "n_neighbors" => self.n_neighbors = num(key, value)?,
            "n_mask_edges" => self.n_mask_edges = num(key, value)?,
            "rbf_scale" | "t" => self.rbf_scale = num(key, value)?,
            "temperature" | "tau" => self.temperature = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "learning_rate" | "lr" => self.learning_rate = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "n_gat_layers" => self.n_gat_layers = num(key, value)?,
            "kmeans_max_iter" => self.kmeans_max_iter = num(key, value)?,
            "kmeans_warm_iter" => self.kmeans_warm_iter = num(key, value)?,
            "kmeans_restarts" => self.kmeans_restarts = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "rec_loss" => self.rec_loss = value.parse()?,
            "hidden_dims" => {
                self.hidden_dims = value
                    .split([',', ';'])
                    .map(|d| num(key, d))
                    .collect::<Result<_>>()?
            }
            _ => return Err(Error::Argument(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }
}
