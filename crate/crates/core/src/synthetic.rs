//! Gaussian-blob multi-view fixtures.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::MultiViewDataset;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub n_samples: usize,
    pub n_clusters: usize,
    pub view_dims: Vec<usize>,
    /// Distance between neighboring cluster means, in units of the noise scale.
    pub separation: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            n_samples: 200,
            n_clusters: 4,
            view_dims: vec![10, 10, 10],
            separation: 5.0,
            noise: 1.0,
            seed: 0,
        }
    }
}

/// Complete multi-view dataset with balanced clusters.
///
/// Every view places the cluster means at pairwise distance `separation * noise`
/// along orthogonal directions (a scaled simplex), then adds isotropic Gaussian
/// noise. Samples are labeled round-robin and shuffled.
pub fn gaussian_blobs(spec: &BlobSpec) -> Result<MultiViewDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels: Vec<usize> = (0..spec.n_samples).map(|i| i % spec.n_clusters).collect();
    rand::seq::SliceRandom::shuffle(labels.as_mut_slice(), &mut rng);
    let views = spec
        .view_dims
        .iter()
        .map(|&d| {
            // Orthogonal-ish unit directions per cluster; for d >= K use a random
            // coordinate permutation so views disagree on the geometry.
            let mut axes: Vec<usize> = (0..d).collect();
            rand::seq::SliceRandom::shuffle(axes.as_mut_slice(), &mut rng);
            let scale = spec.separation * spec.noise / std::f64::consts::SQRT_2;
            let means: Vec<Vec<f64>> = (0..spec.n_clusters)
                .map(|c| {
                    let mut m = vec![0.0; d];
                    if d >= spec.n_clusters {
                        m[axes[c]] = scale;
                    } else {
                        for x in m.iter_mut() {
                            *x = rng.random_range(-1.0..1.0) * scale;
                        }
                    }
                    m
                })
                .collect();
            Array2::from_shape_fn((spec.n_samples, d), |(i, j)| {
                let z: f64 = StandardNormal.sample(&mut rng);
                means[labels[i]][j] + spec.noise * z
            })
        })
        .collect();
    MultiViewDataset::new(views, None, Some(labels))
}
