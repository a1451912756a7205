//! Hash-code shape and penalty configuration.

use serde::{Deserialize, Serialize};

use crate::error::{HiqError, Result};

/// Default fixed-point multiplier for flow costs: 2^20, about six decimal
/// digits of cost precision with headroom against 64-bit overflow.
pub const DEFAULT_COST_SCALE: i64 = 1 << 20;

/// Shape of the hierarchical code and the pairwise penalty weights.
///
/// A code selects one of `d` branches per interior level and `k_s` of `d`
/// leaves at the last level, addressing `d^k` buckets in total. `alpha`
/// penalizes two sibling classes activating the same dimension at the
/// current level; `beta` penalizes any two distinct classes doing so.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashConfig {
    /// Branching factor / code width per level.
    pub d: usize,
    /// Hierarchy depth.
    pub k: usize,
    /// Number of active bits at the leaf level.
    pub k_s: usize,
    /// Sibling-penalty weight (diagonal of the sibling cost matrix).
    pub alpha: f64,
    /// Orthogonality-penalty weight (diagonal of the cross-class cost matrix).
    pub beta: f64,
    /// Fixed-point multiplier applied to real costs before flow solving.
    #[serde(default = "default_cost_scale")]
    pub cost_scale: i64,
}

fn default_cost_scale() -> i64 {
    DEFAULT_COST_SCALE
}

impl HashConfig {
    pub fn new(d: usize, k: usize, k_s: usize, alpha: f64, beta: f64) -> Result<Self> {
        let cfg = Self {
            d,
            k,
            k_s,
            alpha,
            beta,
            cost_scale: DEFAULT_COST_SCALE,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_cost_scale(mut self, cost_scale: i64) -> Result<Self> {
        self.cost_scale = cost_scale;
        self.validate()?;
        Ok(self)
    }

    /// Checks every configuration invariant, reporting the first violation.
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(HiqError::Config("d must be positive".into()));
        }
        if self.k == 0 {
            return Err(HiqError::Config("k must be positive".into()));
        }
        if self.k_s == 0 {
            return Err(HiqError::Config("k_s must be positive".into()));
        }
        if self.k_s > self.d {
            return Err(HiqError::Config(format!(
                "k_s exceeds d ({} > {})",
                self.k_s, self.d
            )));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(HiqError::Config(format!(
                "alpha must be finite and non-negative, got {}",
                self.alpha
            )));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(HiqError::Config(format!(
                "beta must be finite and non-negative, got {}",
                self.beta
            )));
        }
        if self.cost_scale <= 0 {
            return Err(HiqError::Config(format!(
                "cost_scale must be positive, got {}",
                self.cost_scale
            )));
        }
        if self.checked_bucket_count().is_none() {
            return Err(HiqError::Config(format!(
                "bucket count d^k = {}^{} overflows the index type",
                self.d, self.k
            )));
        }
        Ok(())
    }

    fn checked_bucket_count(&self) -> Option<u64> {
        let d = u64::try_from(self.d).ok()?;
        let k = u32::try_from(self.k).ok()?;
        d.checked_pow(k)
    }

    /// Total number of addressable leaf buckets, `d^k`.
    pub fn bucket_count(&self) -> u64 {
        self.checked_bucket_count()
            .expect("validated config cannot overflow")
    }

    /// Code sparsity at `level` (1-based): 1 on interior levels, `k_s` at the leaf.
    pub fn level_sparsity(&self, level: usize) -> usize {
        debug_assert!(level >= 1 && level <= self.k);
        if level < self.k {
            1
        } else {
            self.k_s
        }
    }

    /// Width of the activation vector feeding the code, `d * k`.
    pub fn activation_width(&self) -> usize {
        self.d * self.k
    }
}

/// Validates a configuration, returning a descriptive violation report.
pub fn validate_config(cfg: &HashConfig) -> Result<()> {
    cfg.validate()
}
