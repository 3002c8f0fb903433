//! Multi-view datasets with a sample-by-view missing indicator.

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

mod container;

pub use container::{load_dataset, save_dataset, Manifest};

/// Per-view feature matrices sharing one sample axis, plus the missing indicator.
///
/// `mask[[i, v]]` is `true` when view `v` of sample `i` is observed. Rows of an
/// unobserved view are kept as all-zero vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset {
    views: Vec<Array2<f64>>,
    mask: Array2<bool>,
    labels: Option<Vec<usize>>,
}

impl MultiViewDataset {
    /// Builds a dataset and checks its invariants. Features of unobserved
    /// (sample, view) pairs are zeroed.
    pub fn new(
        mut views: Vec<Array2<f64>>,
        mask: Option<Array2<bool>>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::Dimension("dataset has no views".into()));
        }
        let n = views[0].nrows();
        if n == 0 {
            return Err(Error::Dimension("dataset has no samples".into()));
        }
        for (v, x) in views.iter().enumerate() {
            if x.nrows() != n {
                return Err(Error::Dimension(format!(
                    "view {v} has {} samples, view 0 has {n}",
                    x.nrows()
                )));
            }
            if x.iter().any(|f| !f.is_finite()) {
                return Err(Error::Invariant(format!("view {v} has non-finite features")));
            }
        }
        let mask = mask.unwrap_or_else(|| Array2::from_elem((n, views.len()), true));
        if mask.dim() != (n, views.len()) {
            return Err(Error::Dimension(format!(
                "mask is {:?}, expected ({n}, {})",
                mask.dim(),
                views.len()
            )));
        }
        if let Some(i) = mask.rows().into_iter().position(|r| !r.iter().any(|&m| m)) {
            return Err(Error::Invariant(format!("sample with no views (row {i})")));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::Dimension(format!(
                    "{} labels for {n} samples",
                    labels.len()
                )));
            }
        }
        for (v, x) in views.iter_mut().enumerate() {
            for (i, mut row) in x.rows_mut().into_iter().enumerate() {
                if !mask[[i, v]] {
                    row.fill(0.0);
                }
            }
        }
        Ok(Self {
            views,
            mask,
            labels,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.mask.nrows()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn views(&self) -> &[Array2<f64>] {
        &self.views
    }

    pub fn view(&self, v: usize) -> &Array2<f64> {
        &self.views[v]
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.views.iter().map(|x| x.ncols()).collect()
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    /// Column `v` of the missing indicator.
    pub fn mask_col(&self, v: usize) -> ArrayView1<'_, bool> {
        self.mask.column(v)
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    /// Number of samples with at least one unobserved view.
    pub fn n_incomplete(&self) -> usize {
        self.mask
            .rows()
            .into_iter()
            .filter(|r| r.iter().any(|&m| !m))
            .count()
    }

    /// Same dataset with the rows reordered: sample `i` of the result is sample `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_samples() {
            return Err(Error::Dimension("permutation length".into()));
        }
        let views = self
            .views
            .iter()
            .map(|x| x.select(Axis(0), perm))
            .collect();
        let mask = self.mask.select(Axis(0), perm);
        let labels = self
            .labels
            .as_ref()
            .map(|l| perm.iter().map(|&p| l[p]).collect());
        Self::new(views, Some(mask), labels)
    }
}

/// Removes views from `round(delta * N)` randomly chosen samples.
///
/// Each affected sample loses a uniformly drawn number of views in `1..V`, so at
/// least one view always survives. Rounding is half-to-even.
pub fn simulate_missing(complete: &MultiViewDataset, delta: f64, seed: u64) -> Result<MultiViewDataset> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::Argument(format!("missing rate {delta} outside [0, 1)")));
    }
    if !complete.is_complete() {
        return Err(Error::Argument("simulate_missing needs a complete dataset".into()));
    }
    let n = complete.n_samples();
    let n_views = complete.n_views();
    let n_affected = (delta * n as f64).round_ties_even() as usize;
    if n_affected > n {
        return Err(Error::Argument(format!(
            "round({delta} * {n}) = {n_affected} exceeds the sample count"
        )));
    }
    if n_affected == 0 {
        return Ok(complete.clone());
    }
    if n_views < 2 {
        return Err(Error::Argument(
            "cannot remove views from a single-view dataset".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples: Vec<usize> = (0..n).collect();
    samples.shuffle(&mut rng);
    let mut mask = Array2::from_elem((n, n_views), true);
    let mut view_ids: Vec<usize> = (0..n_views).collect();
    for &i in &samples[..n_affected] {
        let n_removed = rng.random_range(1..n_views);
        view_ids.shuffle(&mut rng);
        for &v in &view_ids[..n_removed] {
            mask[[i, v]] = false;
        }
    }
    MultiViewDataset::new(
        complete.views.clone(),
        Some(mask),
        complete.labels.clone(),
    )
}

/// Min-max scales every feature to `[0, 1]` using observed samples only.
/// Constant columns map to 0 and unobserved rows stay zero.
pub fn normalize_views(ds: &MultiViewDataset) -> MultiViewDataset {
    let views = ds
        .views
        .iter()
        .enumerate()
        .map(|(v, x)| {
            let observed = ds.mask.column(v);
            let mut out = x.clone();
            for mut col in out.columns_mut() {
                let (lo, hi) = col
                    .iter()
                    .zip(observed.iter())
                    .filter(|(_, &m)| m)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&x, _)| {
                        (lo.min(x), hi.max(x))
                    });
                let range = hi - lo;
                for (x, &m) in col.iter_mut().zip(observed.iter()) {
                    *x = if !m || range <= 0.0 { 0.0 } else { (*x - lo) / range };
                }
            }
            out
        })
        .collect();
    MultiViewDataset {
        views,
        mask: ds.mask.clone(),
        labels: ds.labels.clone(),
    }
}
