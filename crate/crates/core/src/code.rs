//! Compact hierarchical code: one branch index per interior level plus a
//! sparse index set at the leaf level.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::config::HashConfig;
use crate::error::{HiqError, Result};

/// Per-class (or per-item) code through the tree: `branch[v-1]` is the
/// dimension chosen at level `v` for `v < k`, and `leaf_set` holds the `k_s`
/// dimensions active at level `k`. Stored compactly; the dense binary form is
/// derived on demand.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HierarchicalCode {
    branch: Vec<usize>,
    leaf_set: Vec<usize>,
}

impl HierarchicalCode {
    /// Builds a code from branch indices and a leaf index set, validating
    /// against `cfg`. The leaf set is sorted; duplicates are rejected.
    pub fn new(branch: Vec<usize>, mut leaf_set: Vec<usize>, cfg: &HashConfig) -> Result<Self> {
        if branch.len() != cfg.k - 1 {
            return Err(HiqError::Input(format!(
                "expected {} branch indices, got {}",
                cfg.k - 1,
                branch.len()
            )));
        }
        if let Some(&b) = branch.iter().find(|&&b| b >= cfg.d) {
            return Err(HiqError::Input(format!(
                "branch index {} out of range [0, {})",
                b, cfg.d
            )));
        }
        leaf_set.sort_unstable();
        if leaf_set.len() != cfg.k_s {
            return Err(HiqError::Input(format!(
                "expected {} leaf indices, got {}",
                cfg.k_s,
                leaf_set.len()
            )));
        }
        if leaf_set.windows(2).any(|w| w[0] == w[1]) {
            return Err(HiqError::Input("duplicate leaf index".into()));
        }
        if let Some(&q) = leaf_set.iter().find(|&&q| q >= cfg.d) {
            return Err(HiqError::Input(format!(
                "leaf index {} out of range [0, {})",
                q, cfg.d
            )));
        }
        Ok(Self { branch, leaf_set })
    }

    pub fn branch(&self) -> &[usize] {
        &self.branch
    }

    pub fn leaf_set(&self) -> &[usize] {
        &self.leaf_set
    }

    /// Active dimensions at `level` (1-based).
    pub fn level_dims(&self, level: usize) -> &[usize] {
        if level <= self.branch.len() {
            std::slice::from_ref(&self.branch[level - 1])
        } else {
            &self.leaf_set
        }
    }

    /// Dense `{0,1}^{d x k}` view: column `v-1` is one-hot for interior
    /// levels and has exactly `k_s` ones at the leaf level.
    pub fn dense(&self, cfg: &HashConfig) -> Array2<u8> {
        let mut out = Array2::zeros((cfg.d, cfg.k));
        for (v, &b) in self.branch.iter().enumerate() {
            out[(b, v)] = 1;
        }
        for &q in &self.leaf_set {
            out[(q, cfg.k - 1)] = 1;
        }
        out
    }

    /// Reads a code back from its dense binary form. Inverse of [`dense`](Self::dense).
    pub fn from_dense(dense: &Array2<u8>, cfg: &HashConfig) -> Result<Self> {
        if dense.dim() != (cfg.d, cfg.k) {
            return Err(HiqError::Input(format!(
                "dense code has shape {:?}, expected ({}, {})",
                dense.dim(),
                cfg.d,
                cfg.k
            )));
        }
        let mut branch = Vec::with_capacity(cfg.k - 1);
        for v in 0..cfg.k - 1 {
            let col = dense.column(v);
            let ones: Vec<usize> = col
                .iter()
                .enumerate()
                .filter(|(_, &x)| x != 0)
                .map(|(q, _)| q)
                .collect();
            if ones.len() != 1 {
                return Err(HiqError::Input(format!(
                    "level {} must be one-hot, found {} active bits",
                    v + 1,
                    ones.len()
                )));
            }
            branch.push(ones[0]);
        }
        let leaf_set: Vec<usize> = dense
            .column(cfg.k - 1)
            .iter()
            .enumerate()
            .filter(|(_, &x)| x != 0)
            .map(|(q, _)| q)
            .collect();
        Self::new(branch, leaf_set, cfg)
    }
}

/// Dense binary view of a code; free-function form of [`HierarchicalCode::dense`].
pub fn dense_code(code: &HierarchicalCode, cfg: &HashConfig) -> Array2<u8> {
    code.dense(cfg)
}
