//! In-memory dataset of labeled feature vectors and a synthetic cluster
//! generator for desk-scale experiments.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{HiqError, Result};

/// Labeled feature vectors; labels are arbitrary integers.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<i64>,
    classes: Vec<i64>,
    items_by_class: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<i64>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(HiqError::Input(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(HiqError::Input("empty dataset".into()));
        }
        let mut classes: Vec<i64> = labels.clone();
        classes.sort_unstable();
        classes.dedup();
        let mut items_by_class = vec![Vec::new(); classes.len()];
        for (i, &y) in labels.iter().enumerate() {
            let c = classes.binary_search(&y).expect("label is in classes");
            items_by_class[c].push(i);
        }
        Ok(Self {
            features,
            labels,
            classes,
            items_by_class,
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ndarray::ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    /// Distinct labels, sorted.
    pub fn classes(&self) -> &[i64] {
        &self.classes
    }

    /// Row indices of the `c`-th class (by sorted label order).
    pub fn items_of_class(&self, c: usize) -> &[usize] {
        &self.items_by_class[c]
    }

    /// Dataset restricted to the given row indices, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let features = Array2::from_shape_fn((indices.len(), self.input_dim()), |(i, j)| {
            self.features[(indices[i], j)]
        });
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(features, labels)
    }
}

/// Gaussian clusters with unit within-class variance. Centroids are drawn
/// so the root-mean-square distance between two of them is `cluster_sep`;
/// zero separation collapses every cluster onto the origin.
pub fn synthetic_clusters(
    n_classes: usize,
    per_class: usize,
    input_dim: usize,
    cluster_sep: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_classes == 0 || per_class == 0 || input_dim == 0 {
        return Err(HiqError::Input("sizes must be positive".into()));
    }
    if !cluster_sep.is_finite() || cluster_sep < 0.0 {
        return Err(HiqError::Input("cluster_sep must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let centroid_scale = cluster_sep / (2.0 * input_dim as f64).sqrt();
    let centroids = Array2::from_shape_fn((n_classes, input_dim), |_| {
        centroid_scale * <StandardNormal as Distribution<f64>>::sample(&normal, &mut rng)
    });
    let n = n_classes * per_class;
    let mut features = Array2::zeros((n, input_dim));
    let mut labels = Vec::with_capacity(n);
    for c in 0..n_classes {
        for i in 0..per_class {
            let row = c * per_class + i;
            for j in 0..input_dim {
                features[(row, j)] = centroids[(c, j)]
                    + <StandardNormal as Distribution<f64>>::sample(&normal, &mut rng);
            }
            labels.push(c as i64);
        }
    }
    Dataset::new(features, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_shapes_and_determinism() {
        let a = synthetic_clusters(8, 100, 16, 8.0, 7).unwrap();
        assert_eq!(a.n(), 800);
        assert_eq!(a.input_dim(), 16);
        assert_eq!(a.classes().len(), 8);
        let b = synthetic_clusters(8, 100, 16, 8.0, 7).unwrap();
        assert_eq!(a.features(), b.features());
        assert_eq!(a.labels(), b.labels());
        let c = synthetic_clusters(8, 100, 16, 8.0, 8).unwrap();
        assert_ne!(a.features(), c.features());
    }

    #[test]
    fn zero_separation_collapses_centroids() {
        let d = synthetic_clusters(4, 50, 8, 0.0, 3).unwrap();
        // Class means should all be near the origin.
        for c in 0..4 {
            let items = d.items_of_class(c);
            for j in 0..8 {
                let mean: f64 =
                    items.iter().map(|&i| d.features()[(i, j)]).sum::<f64>() / items.len() as f64;
                assert!(mean.abs() < 0.6, "class {} dim {} mean {}", c, j, mean);
            }
        }
    }

    #[test]
    fn separation_scales_centroid_distances() {
        let d = synthetic_clusters(6, 30, 16, 12.0, 5).unwrap();
        let mean_of = |c: usize| -> Vec<f64> {
            let items = d.items_of_class(c);
            (0..16)
                .map(|j| items.iter().map(|&i| d.features()[(i, j)]).sum::<f64>() / items.len() as f64)
                .collect()
        };
        let mut dists = Vec::new();
        for a in 0..6 {
            for b in (a + 1)..6 {
                let (ma, mb) = (mean_of(a), mean_of(b));
                let d2: f64 = ma.iter().zip(&mb).map(|(x, y)| (x - y) * (x - y)).sum();
                dists.push(d2.sqrt());
            }
        }
        let mean_dist = dists.iter().sum::<f64>() / dists.len() as f64;
        assert!(
            (mean_dist - 12.0).abs() < 4.0,
            "mean centroid distance {}",
            mean_dist
        );
    }

    #[test]
    fn subset_preserves_rows() {
        let d = synthetic_clusters(3, 4, 5, 2.0, 1).unwrap();
        let s = d.subset(&[0, 5, 11]).unwrap();
        assert_eq!(s.n(), 3);
        assert_eq!(s.labels(), &[d.labels()[0], d.labels()[5], d.labels()[11]]);
        assert_eq!(s.features().row(1), d.features().row(5));
    }
}
