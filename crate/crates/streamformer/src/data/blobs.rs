//! Synthetic Gaussian-cluster base dataset.
//!
//! Stands in for pre-extracted image features: each class is a fixed
//! random mean in feature space with isotropic noise around it.

use crate::rng::{gaussian, seeded};

pub const DEFAULT_POOL_SIZE: usize = 256;

/// A labeled pool of feature vectors per class.
#[derive(Clone, Debug)]
pub struct BaseDataset {
    pub num_classes: usize,
    pub feature_dim: usize,
    /// `pools[c]` holds this class's example feature vectors.
    pub pools: Vec<Vec<Vec<f64>>>,
    /// Class means (kept for separability diagnostics).
    pub means: Vec<Vec<f64>>,
}

impl BaseDataset {
    pub fn validate(&self) {
        assert!(self.pools.iter().all(|p| !p.is_empty()), "every class pool must be non-empty");
        for pool in &self.pools {
            for v in pool {
                assert!(v.iter().all(|x| x.is_finite()), "features must be finite");
            }
        }
    }
}

/// Deterministic Gaussian-cluster dataset: per-class means drawn from a
/// unit Gaussian, examples = mean + spread * noise.
pub fn gaussian_blob_dataset(num_classes: usize, feature_dim: usize, cluster_spread: f64, seed: u64) -> BaseDataset {
    gaussian_blob_dataset_with_pool(num_classes, feature_dim, cluster_spread, seed, DEFAULT_POOL_SIZE)
}

pub fn gaussian_blob_dataset_with_pool(
    num_classes: usize,
    feature_dim: usize,
    cluster_spread: f64,
    seed: u64,
    pool_size: usize,
) -> BaseDataset {
    assert!(num_classes >= 1 && feature_dim >= 1, "need at least one class and one feature");
    assert!(pool_size >= 1, "pool size must be >= 1");
    let mut rng = seeded(seed);
    let means: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| (0..feature_dim).map(|_| gaussian(&mut rng)).collect())
        .collect();
    let pools: Vec<Vec<Vec<f64>>> = means
        .iter()
        .map(|mean| {
            (0..pool_size)
                .map(|_| mean.iter().map(|m| m + cluster_spread * gaussian(&mut rng)).collect())
                .collect()
        })
        .collect();
    let ds = BaseDataset { num_classes, feature_dim, pools, means };
    ds.validate();
    ds
}
