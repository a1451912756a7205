//! Cascading per-level hash-code optimization.
//!
//! Levels are assigned sequentially: each level solves an exact assignment
//! over class means (via the flow network), the sibling partition is
//! refined by the new codes, and labels are remapped so items sharing a
//! level code are treated as one class by the metric loss.

pub use crate::batch::class_means;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::batch::{ClassMeanSet, EmbeddingBatch};
use crate::code::HierarchicalCode;
use crate::config::HashConfig;
use crate::error::{HiqError, Result};
use crate::flownet::{self, build_flow_network, solve_min_cost_flow};
use crate::partition::SiblingPartition;

/// How minibatch labels are rewritten for the embedding loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemapMode {
    /// Items sharing the level-`v` code share a label (the default).
    PerLevel,
    /// Items sharing the entire code prefix through level `v` share a label.
    Prefix,
    /// No remapping; original labels pass through (ablation).
    Disabled,
}

/// Code assignment for one hierarchy level.
#[derive(Debug, Clone)]
pub struct LevelAssignment {
    /// 1-based level index.
    pub level: usize,
    /// Per-class selected dimensions, sorted; 1 entry on interior levels,
    /// `k_s` at the leaf level.
    pub class_codes: Vec<Vec<usize>>,
    /// Per-item codes: every item inherits its class's code.
    pub item_codes: Vec<Vec<usize>>,
    /// Per-item labels after remapping, consecutive integers from 0 in
    /// first-appearance order.
    pub remapped_labels: Vec<i64>,
}

/// Per-level solve diagnostics kept alongside the assignment.
#[derive(Debug, Clone)]
pub struct LevelSolve {
    /// Class means the level was solved on.
    pub means: ClassMeanSet,
    /// Sibling partition in effect for the solve.
    pub partition: SiblingPartition,
    /// Fixed-point objective attained by the flow solver.
    pub solver_cost: i64,
}

/// Solves one level exactly over class means; sparsity is 1 on interior
/// levels and `k_s` at the leaf level.
pub fn assign_level(
    means: &ClassMeanSet,
    partition: &SiblingPartition,
    level: usize,
    cfg: &HashConfig,
) -> Result<(LevelAssignment, i64)> {
    let s_v = cfg.level_sparsity(level);
    let net = build_flow_network(means, partition, s_v, cfg)?;
    let sol = solve_min_cost_flow(&net)?;
    Ok((
        LevelAssignment {
            level,
            class_codes: sol.codes,
            item_codes: Vec::new(),
            remapped_labels: Vec::new(),
        },
        sol.total_cost,
    ))
}

/// Refines the sibling partition with a freshly assigned interior level:
/// classes stay grouped only while their full code prefixes agree; groups
/// that shrink to one member move to the singleton pool.
pub fn update_sibling_partition(
    prev: &SiblingPartition,
    assignment: &LevelAssignment,
) -> SiblingPartition {
    let n_c = prev.n_classes();
    debug_assert_eq!(assignment.class_codes.len(), n_c);
    // Key on (previous group identity, new code). At the root every class
    // shares the empty prefix, so grouping is by code alone.
    let mut keyed: Vec<(Vec<usize>, usize)> = Vec::with_capacity(n_c);
    for p in 0..n_c {
        let prev_key = if prev.is_root() {
            0
        } else {
            match prev.group_of(p) {
                Some(r) => r + 1,
                // Unique prefix already; keep it unique with a per-class key.
                None => prev.group_count() + 1 + p,
            }
        };
        let mut key = vec![prev_key];
        key.extend_from_slice(&assignment.class_codes[p]);
        keyed.push((key, p));
    }
    let mut sets: Vec<Vec<usize>> = Vec::new();
    let mut open: Vec<(Vec<usize>, usize)> = Vec::new();
    for (key, p) in keyed {
        match open.iter().position(|(k, _)| *k == key) {
            Some(i) => sets[open[i].1].push(p),
            None => {
                sets.push(vec![p]);
                open.push((key, sets.len() - 1));
            }
        }
    }
    SiblingPartition::from_groups(sets, n_c).expect("refinement preserves the partition")
}

/// Rewrites item labels so equal codes (or equal prefixes) share a label.
/// Labels are consecutive integers from 0 in first-appearance order.
///
/// `prefix_codes[i]` must hold item `i`'s codes for levels `1..=v` when
/// `mode` is [`RemapMode::Prefix`]; only the last entry is read in
/// [`RemapMode::PerLevel`]. Original labels pass through unchanged when
/// remapping is disabled.
pub fn remap_labels(
    item_prefix_codes: &[Vec<Vec<usize>>],
    original_labels: &[i64],
    mode: RemapMode,
) -> Vec<i64> {
    match mode {
        RemapMode::Disabled => original_labels.to_vec(),
        RemapMode::PerLevel | RemapMode::Prefix => {
            let mut seen: Vec<(Vec<Vec<usize>>, i64)> = Vec::new();
            let mut out = Vec::with_capacity(item_prefix_codes.len());
            for prefix in item_prefix_codes {
                let key: Vec<Vec<usize>> = if mode == RemapMode::PerLevel {
                    vec![prefix.last().cloned().unwrap_or_default()]
                } else {
                    prefix.clone()
                };
                let label = match seen.iter().find(|(k, _)| *k == key) {
                    Some((_, l)) => *l,
                    None => {
                        let l = seen.len() as i64;
                        seen.push((key, l));
                        l
                    }
                };
                out.push(label);
            }
            out
        }
    }
}

/// Full cascade over a minibatch: assignments for every level plus the
/// assembled per-class hierarchical codes.
#[derive(Debug, Clone)]
pub struct CascadeOutcome {
    pub assignments: Vec<LevelAssignment>,
    pub class_codes: Vec<HierarchicalCode>,
    pub levels: Vec<LevelSolve>,
}

/// Assigns codes level by level: level `v` is solved under the partition
/// induced by levels `1..v` (none at the first level), then the partition
/// is refined and labels remapped for the embedding loss.
pub fn cascade_assign(
    batch: &EmbeddingBatch,
    cfg: &HashConfig,
    remap: RemapMode,
) -> Result<CascadeOutcome> {
    let n_c = batch.n_classes();
    let mut partition = SiblingPartition::all_singletons(n_c);
    let mut assignments = Vec::with_capacity(cfg.k);
    let mut levels = Vec::with_capacity(cfg.k);
    // Per-item code prefix, for prefix-mode remapping.
    let mut item_prefixes: Vec<Vec<Vec<usize>>> = vec![Vec::new(); batch.n()];

    for v in 1..=cfg.k {
        let means = class_means(batch, v)?;
        let (mut assignment, solver_cost) = assign_level(&means, &partition, v, cfg)?;

        assignment.item_codes = (0..batch.n())
            .map(|i| assignment.class_codes[batch.class_of(i)].clone())
            .collect();
        for (i, code) in assignment.item_codes.iter().enumerate() {
            item_prefixes[i].push(code.clone());
        }
        assignment.remapped_labels = remap_labels(&item_prefixes, batch.labels(), remap);

        levels.push(LevelSolve {
            means,
            partition: partition.clone(),
            solver_cost,
        });
        if v < cfg.k {
            partition = update_sibling_partition(&partition, &assignment);
        }
        assignments.push(assignment);
    }

    let class_codes = (0..n_c)
        .map(|p| {
            let branch: Vec<usize> = assignments[..cfg.k - 1]
                .iter()
                .map(|a| a.class_codes[p][0])
                .collect();
            let leaf_set = assignments[cfg.k - 1].class_codes[p].clone();
            HierarchicalCode::new(branch, leaf_set, cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(CascadeOutcome {
        assignments,
        class_codes,
        levels,
    })
}

/// Per-item objective at one level:
/// `sum_i -f_i.h_i + (alpha/m) * sum_{(i,j) in sibling_pairs} h_i.h_j
///  + (beta/m) * sum_{(i,j) in dissimilar_pairs} h_i.h_j`.
/// Pairs are ordered item-index pairs.
pub fn item_objective(
    item_codes: &[Vec<usize>],
    batch: &EmbeddingBatch,
    level: usize,
    sibling_pairs: &[(usize, usize)],
    dissimilar_pairs: &[(usize, usize)],
    cfg: &HashConfig,
) -> Result<f64> {
    let s_v = cfg.level_sparsity(level);
    if item_codes.len() != batch.n() {
        return Err(HiqError::Input(format!(
            "{} item codes for {} items",
            item_codes.len(),
            batch.n()
        )));
    }
    for code in item_codes {
        if code.len() != s_v || code.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HiqError::Input(format!(
                "item codes must be sorted, duplicate-free and {}-sparse",
                s_v
            )));
        }
    }
    let m = batch.examples_per_class().ok_or_else(|| {
        HiqError::Input("per-item objective requires equal class sizes".into())
    })? as f64;
    let slice = batch.level_slice(level);
    let mut total = 0.0;
    for (i, code) in item_codes.iter().enumerate() {
        for &q in code {
            total -= slice[(i, q)];
        }
    }
    let overlap = |i: usize, j: usize| -> f64 {
        item_codes[i]
            .iter()
            .filter(|q| item_codes[j].binary_search(q).is_ok())
            .count() as f64
    };
    for &(i, j) in sibling_pairs {
        total += cfg.alpha / m * overlap(i, j);
    }
    for &(i, j) in dissimilar_pairs {
        total += cfg.beta / m * overlap(i, j);
    }
    Ok(total)
}

/// Ordered inter-class item pairs of a batch: all of them (the dissimilar
/// set), and the subset whose classes are siblings under `partition`.
pub fn item_pairs(
    batch: &EmbeddingBatch,
    partition: &SiblingPartition,
) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let mut dissimilar = Vec::new();
    let mut siblings = Vec::new();
    for i in 0..batch.n() {
        for j in 0..batch.n() {
            if i == j {
                continue;
            }
            let (p, q) = (batch.class_of(i), batch.class_of(j));
            if p == q {
                continue;
            }
            dissimilar.push((i, j));
            if let (Some(a), Some(b)) = (partition.group_of(p), partition.group_of(q)) {
                if a == b {
                    siblings.push((i, j));
                }
            }
        }
    }
    (siblings, dissimilar)
}

/// Slack absorbed when items are replaced by their class means: the sum
/// over items of the `s_v` largest entries of `(mean - activation)`.
/// Always non-negative because per-class residuals sum to zero.
pub fn bound_gap(
    batch: &EmbeddingBatch,
    means: &ClassMeanSet,
    level: usize,
    s_v: usize,
) -> f64 {
    let slice = batch.level_slice(level);
    let mut total = 0.0;
    for i in 0..batch.n() {
        let p = batch.class_of(i);
        let mut residual: Vec<f64> = (0..batch.dims())
            .map(|q| means.means()[(p, q)] - slice[(i, q)])
            .collect();
        residual.sort_by(|a, b| b.partial_cmp(a).unwrap());
        total += residual[..s_v].iter().sum::<f64>();
    }
    total
}

/// Real-valued class-level objective of explicit codes under a partition;
/// convenience wrapper used by diagnostics.
pub fn class_objective(
    codes: &[Vec<usize>],
    means: ArrayView2<f64>,
    partition: &SiblingPartition,
    s_v: usize,
    cfg: &HashConfig,
) -> Result<f64> {
    flownet::flow_cost_closed_form(codes, means, partition, s_v, cfg)
}
