//! One evaluation run: mask a complete dataset, normalize it, train and score.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{RecLoss, TrainConfig};
use crate::dataset::{normalize_views, simulate_missing, MultiViewDataset};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, Scores};
use crate::trainer::{train_with, EpochRecord, TrainState};

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub labels: Vec<usize>,
    /// `None` when the dataset carries no ground truth.
    pub scores: Option<Scores>,
    pub state: TrainState,
    pub wall_seconds: f64,
}

/// The dataset a run trains on. A positive `delta` requires a complete input
/// and removes views with `seed`; `delta = 0` keeps the input mask as is.
pub fn prepare(ds: &MultiViewDataset, delta: f64, seed: u64) -> Result<MultiViewDataset> {
    let masked = if delta > 0.0 {
        simulate_missing(ds, delta, seed)?
    } else if delta == 0.0 {
        ds.clone()
    } else {
        return Err(Error::Argument(format!("missing rate {delta} outside [0, 1)")));
    };
    Ok(normalize_views(&masked))
}

/// Prepares the data and trains with `cfg.seed` replaced by `seed`.
pub fn run(
    ds: &MultiViewDataset,
    delta: f64,
    seed: u64,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<RunOutcome> {
    let start = Instant::now();
    let data = prepare(ds, delta, seed)?;
    let cfg = TrainConfig { seed, ..cfg.clone() };
    let (state, labels) = train_with(&data, &cfg, on_epoch)?;
    let scores = data.labels().map(|truth| evaluate(&labels, truth)).transpose()?;
    Ok(RunOutcome {
        labels,
        scores,
        state,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Configurations of the ablation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoRec,
    /// Embedding layer and contrastive loss off; graphs come from the raw views.
    NoEmbed,
    NoKl,
    Masked,
    Traditional,
}

impl Variant {
    pub const ABLATION: [Variant; 6] = [
        Variant::Full,
        Variant::NoRec,
        Variant::NoEmbed,
        Variant::NoKl,
        Variant::Masked,
        Variant::Traditional,
    ];

    /// `base` with this variant's switches applied on top.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        match self {
            Variant::Full => {}
            Variant::NoRec => cfg.components.rec = false,
            Variant::NoEmbed => cfg.components.embed = false,
            Variant::NoKl => cfg.components.kl = false,
            Variant::Masked => cfg.rec_loss = RecLoss::Masked,
            Variant::Traditional => cfg.rec_loss = RecLoss::Traditional,
        }
        cfg
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoRec => "no_rec",
            Variant::NoEmbed => "no_embed",
            Variant::NoKl => "no_kl",
            Variant::Masked => "masked",
            Variant::Traditional => "traditional",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ABLATION
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown variant `{s}`")))
    }
}

/// One line of a result table. Summary lines carry `seed = "mean"`.
/// Scores are empty when the dataset has no labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub delta: f64,
    pub seed: String,
    pub variant: String,
    pub acc: Option<f64>,
    pub nmi: Option<f64>,
    pub ari: Option<f64>,
    pub epochs: usize,
    pub wall_seconds: f64,
}

impl ResultRow {
    pub fn from_outcome(dataset: &str, delta: f64, seed: u64, variant: &str, outcome: &RunOutcome) -> Self {
        Self {
            dataset: dataset.into(),
            delta,
            seed: seed.to_string(),
            variant: variant.into(),
            acc: outcome.scores.map(|s| s.acc),
            nmi: outcome.scores.map(|s| s.nmi),
            ari: outcome.scores.map(|s| s.ari),
            epochs: outcome.state.epoch,
            wall_seconds: outcome.wall_seconds,
        }
    }

    /// Every column except the timing.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_seconds: 0.0,
            ..self.clone()
        }
    }
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let values: Option<Vec<f64>> = values.collect();
    values.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

/// Mean row of every `(dataset, delta, variant)` group, in first-seen order.
pub fn summarize(rows: &[ResultRow]) -> Vec<ResultRow> {
    let mut keys: Vec<(&str, f64, &str)> = Vec::new();
    for r in rows {
        let key = (r.dataset.as_str(), r.delta, r.variant.as_str());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(dataset, delta, variant)| {
            let group: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| r.dataset == dataset && r.delta == delta && r.variant == variant)
                .collect();
            ResultRow {
                dataset: dataset.into(),
                delta,
                seed: "mean".into(),
                variant: variant.into(),
                acc: mean(group.iter().map(|r| r.acc)),
                nmi: mean(group.iter().map(|r| r.nmi)),
                ari: mean(group.iter().map(|r| r.ari)),
                epochs: group[0].epochs,
                wall_seconds: group.iter().map(|r| r.wall_seconds).sum::<f64>() / group.len() as f64,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(seed: &str, delta: f64, acc: f64) -> ResultRow {
        ResultRow {
            dataset: "d".into(),
            delta,
            seed: seed.into(),
            variant: "full".into(),
            acc: Some(acc),
            nmi: Some(acc / 2.0),
            ari: None,
            epochs: 3,
            wall_seconds: 1.0,
        }
    }

    #[test]
    fn summary_means_per_group() {
        let rows = [row("0", 0.1, 0.5), row("1", 0.1, 1.0), row("0", 0.3, 0.25)];
        let summary = summarize(&rows);
        assert_eq!(summary.len(), 2);
        assert_eq!(summary[0].acc, Some(0.75));
        assert_eq!(summary[0].nmi, Some(0.375));
        assert_eq!(summary[0].ari, None);
        assert_eq!(summary[1].acc, Some(0.25));
        assert_eq!(summary[0].seed, "mean");
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ABLATION {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!(!Variant::NoEmbed.apply(&TrainConfig::default()).components.embed);
        assert_eq!(Variant::Traditional.apply(&TrainConfig::default()).rec_loss, RecLoss::Traditional);
    }
}
