//! Minibatch activations viewed as per-level slices, plus class means.

use ndarray::{Array2, ArrayView2, Axis};

use crate::config::HashConfig;
use crate::error::{HiqError, Result};

/// A minibatch of embedding activations, `n x (d*k)`, with integer class
/// labels. Column block `[(v-1)*d, v*d)` is the level-`v` slice. Labels are
/// arbitrary integers; they are reindexed to `0..n_classes` in
/// first-appearance order for stable downstream vertex naming.
#[derive(Debug, Clone)]
pub struct EmbeddingBatch {
    features: Array2<f64>,
    labels: Vec<i64>,
    class_ids: Vec<i64>,
    class_of: Vec<usize>,
    items_by_class: Vec<Vec<usize>>,
    d: usize,
    k: usize,
}

impl EmbeddingBatch {
    pub fn new(features: Array2<f64>, labels: Vec<i64>, cfg: &HashConfig) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(HiqError::Input(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.ncols() != cfg.activation_width() {
            return Err(HiqError::Input(format!(
                "feature width {} does not match d*k = {}",
                features.ncols(),
                cfg.activation_width()
            )));
        }
        if labels.is_empty() {
            return Err(HiqError::Input("empty batch".into()));
        }
        let mut class_ids = Vec::new();
        let mut class_of = Vec::with_capacity(labels.len());
        for &y in &labels {
            let p = match class_ids.iter().position(|&c| c == y) {
                Some(p) => p,
                None => {
                    class_ids.push(y);
                    class_ids.len() - 1
                }
            };
            class_of.push(p);
        }
        let mut items_by_class = vec![Vec::new(); class_ids.len()];
        for (i, &p) in class_of.iter().enumerate() {
            items_by_class[p].push(i);
        }
        Ok(Self {
            features,
            labels,
            class_ids,
            class_of,
            items_by_class,
            d: cfg.d,
            k: cfg.k,
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.class_ids.len()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    /// Distinct labels in first-appearance order; index = class index.
    pub fn class_ids(&self) -> &[i64] {
        &self.class_ids
    }

    /// Class index (0-based) of item `i`.
    pub fn class_of(&self, i: usize) -> usize {
        self.class_of[i]
    }

    pub fn items_of_class(&self, p: usize) -> &[usize] {
        &self.items_by_class[p]
    }

    /// Examples per class when uniform, `None` otherwise.
    pub fn examples_per_class(&self) -> Option<usize> {
        let m = self.items_by_class[0].len();
        self.items_by_class
            .iter()
            .all(|v| v.len() == m)
            .then_some(m)
    }

    /// Columns `[(level-1)*d, level*d)`; `level` is 1-based.
    pub fn level_slice(&self, level: usize) -> ArrayView2<'_, f64> {
        assert!(level >= 1 && level <= self.k, "level out of range");
        let lo = (level - 1) * self.d;
        self.features.slice(ndarray::s![.., lo..lo + self.d])
    }

    pub fn levels(&self) -> usize {
        self.k
    }

    pub fn dims(&self) -> usize {
        self.d
    }
}

/// Per-class mean activations for one level: row `p` is the arithmetic mean
/// of class `p`'s level slice over its `m` examples.
#[derive(Debug, Clone)]
pub struct ClassMeanSet {
    means: Array2<f64>,
    class_ids: Vec<i64>,
    m: usize,
}

impl ClassMeanSet {
    pub fn new(means: Array2<f64>, class_ids: Vec<i64>, m: usize) -> Result<Self> {
        if means.nrows() != class_ids.len() {
            return Err(HiqError::Input(format!(
                "{} mean rows but {} class ids",
                means.nrows(),
                class_ids.len()
            )));
        }
        if means.nrows() == 0 {
            return Err(HiqError::Input("class mean set must be non-empty".into()));
        }
        Ok(Self {
            means,
            class_ids,
            m,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.means.nrows()
    }

    pub fn dims(&self) -> usize {
        self.means.ncols()
    }

    pub fn means(&self) -> ArrayView2<'_, f64> {
        self.means.view()
    }

    pub fn class_ids(&self) -> &[i64] {
        &self.class_ids
    }

    /// Examples per class in the batch the means were computed from.
    pub fn examples_per_class(&self) -> usize {
        self.m
    }
}

/// Mean of each class's rows within one level slice. Requires the same
/// number of examples per class.
pub fn class_means(batch: &EmbeddingBatch, level: usize) -> Result<ClassMeanSet> {
    let m = batch.examples_per_class().ok_or_else(|| {
        HiqError::Input("class means require the same number of examples per class".into())
    })?;
    let slice = batch.level_slice(level);
    let mut means = Array2::zeros((batch.n_classes(), batch.dims()));
    for p in 0..batch.n_classes() {
        let mut acc = means.row_mut(p);
        for &i in batch.items_of_class(p) {
            acc += &slice.index_axis(Axis(0), i);
        }
        acc /= m as f64;
    }
    ClassMeanSet::new(means, batch.class_ids().to_vec(), m)
}
