//! Tree-bucket hash table, querying with reranking, and evaluation metrics.
//!
//! Inference-time codes come from the per-item argmax rule: the highest
//! activation per interior level and the top `k_s` activations at the leaf
//! level. Each item lands in its `k_s` leaf buckets, all inside the block
//! of `d` consecutive indices selected by its branch prefix. Queries pull
//! the union of their buckets and rerank by Euclidean distance between
//! base embeddings.

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::code::HierarchicalCode;
use crate::config::HashConfig;
use crate::error::{HiqError, Result};
use crate::model::EmbeddingModel;

/// Sparse map from leaf-bucket index to item ids, with base embeddings
/// retained for reranking.
#[derive(Debug, Clone)]
pub struct HashTable {
    cfg: HashConfig,
    buckets: BTreeMap<u64, Vec<u64>>,
    base_vectors: BTreeMap<u64, Vec<f64>>,
}

/// Leaf-bucket indices of a code: the base-`d` positional encoding of the
/// branch path, plus each leaf. All `k_s` indices share the branch prefix,
/// so they fall in one block of `d` consecutive buckets.
pub fn leaf_indices(code: &HierarchicalCode, cfg: &HashConfig) -> Vec<u64> {
    let d = cfg.d as u64;
    let mut prefix = 0u64;
    for &b in code.branch() {
        prefix = prefix * d + b as u64;
    }
    code.leaf_set()
        .iter()
        .map(|&leaf| prefix * d + leaf as u64)
        .collect()
}

/// Inference-time code of one activation row: argmax per interior level,
/// top `k_s` at the leaf level; ties resolve to the lowest dimension.
pub fn infer_code(activations: ArrayView1<f64>, cfg: &HashConfig) -> HierarchicalCode {
    debug_assert_eq!(activations.len(), cfg.activation_width());
    let d = cfg.d;
    let mut branch = Vec::with_capacity(cfg.k - 1);
    for v in 0..cfg.k - 1 {
        let slice = &activations.as_slice().expect("contiguous row")[v * d..(v + 1) * d];
        let mut best = 0;
        for q in 1..d {
            if slice[q] > slice[best] {
                best = q;
            }
        }
        branch.push(best);
    }
    let leaf_slice = &activations.as_slice().expect("contiguous row")[(cfg.k - 1) * d..cfg.k * d];
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        leaf_slice[b]
            .partial_cmp(&leaf_slice[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut leaf_set: Vec<usize> = order[..cfg.k_s].to_vec();
    leaf_set.sort_unstable();
    HierarchicalCode::new(branch, leaf_set, cfg).expect("argmax code is valid")
}

impl HashTable {
    pub fn new(cfg: HashConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            buckets: BTreeMap::new(),
            base_vectors: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &HashConfig {
        &self.cfg
    }

    /// Inserts an item into the `k_s` buckets of its code. Ids must be unique.
    pub fn insert(&mut self, id: u64, code: &HierarchicalCode, base: Vec<f64>) -> Result<()> {
        if self.base_vectors.contains_key(&id) {
            return Err(HiqError::Input(format!("duplicate item id {}", id)));
        }
        for idx in leaf_indices(code, &self.cfg) {
            self.buckets.entry(idx).or_default().push(id);
        }
        self.base_vectors.insert(id, base);
        Ok(())
    }

    pub fn n_items(&self) -> usize {
        self.base_vectors.len()
    }

    pub fn bucket(&self, index: u64) -> &[u64] {
        self.buckets.get(&index).map_or(&[], |v| v.as_slice())
    }

    pub fn occupied_buckets(&self) -> impl Iterator<Item = (u64, &[u64])> {
        self.buckets.iter().map(|(&i, v)| (i, v.as_slice()))
    }

    pub fn base_vector(&self, id: u64) -> Option<&[f64]> {
        self.base_vectors.get(&id).map(|v| v.as_slice())
    }

    /// Re-attaches a base embedding (used after JSONL import).
    pub fn set_base_vector(&mut self, id: u64, base: Vec<f64>) {
        self.base_vectors.insert(id, base);
    }

    /// Deduplicated union of the buckets addressed by `code`, minus an
    /// optional excluded id.
    pub fn candidates(&self, code: &HierarchicalCode, exclude: Option<u64>) -> Vec<u64> {
        let mut out: Vec<u64> = leaf_indices(code, &self.cfg)
            .into_iter()
            .flat_map(|idx| self.bucket(idx).iter().copied())
            .collect();
        out.sort_unstable();
        out.dedup();
        if let Some(ex) = exclude {
            out.retain(|&id| id != ex);
        }
        out
    }

    /// Versioned JSON-lines dump: a header line, then one bucket per line.
    /// Base embeddings are not serialized; re-attach them after import.
    pub fn export_jsonl(&self) -> String {
        let header = TableHeader {
            version: TABLE_VERSION,
            d: self.cfg.d,
            k: self.cfg.k,
            k_s: self.cfg.k_s,
            n_items: self.n_items(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for (&index, ids) in &self.buckets {
            let line = BucketLine {
                bucket: index,
                ids: ids.clone(),
            };
            out.push_str(&serde_json::to_string(&line).expect("bucket serializes"));
            out.push('\n');
        }
        out
    }

    /// Reads a JSONL dump produced by [`export_jsonl`](Self::export_jsonl).
    pub fn import_jsonl(text: &str, cfg: &HashConfig) -> Result<Self> {
        let mut lines = text.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| HiqError::Serde("empty table dump".into()))?;
        let header: TableHeader =
            serde_json::from_str(header_line).map_err(|e| HiqError::Serde(e.to_string()))?;
        if header.version != TABLE_VERSION {
            return Err(HiqError::Serde(format!(
                "unsupported table version {}",
                header.version
            )));
        }
        if header.d != cfg.d || header.k != cfg.k || header.k_s != cfg.k_s {
            return Err(HiqError::Serde(format!(
                "table shape ({}, {}, {}) does not match config ({}, {}, {})",
                header.d, header.k, header.k_s, cfg.d, cfg.k, cfg.k_s
            )));
        }
        let mut table = Self::new(cfg.clone())?;
        let bucket_count = cfg.bucket_count();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bucket: BucketLine =
                serde_json::from_str(line).map_err(|e| HiqError::Serde(e.to_string()))?;
            if bucket.bucket >= bucket_count {
                return Err(HiqError::Serde(format!(
                    "bucket index {} out of range [0, {})",
                    bucket.bucket, bucket_count
                )));
            }
            table.buckets.insert(bucket.bucket, bucket.ids);
        }
        Ok(table)
    }
}

pub const TABLE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TableHeader {
    version: u32,
    d: usize,
    k: usize,
    k_s: usize,
    n_items: usize,
}

#[derive(Serialize, Deserialize)]
struct BucketLine {
    bucket: u64,
    ids: Vec<u64>,
}

/// Hashes every feature row through the model; item ids are row indices.
pub fn build_table(
    features: ArrayView2<f64>,
    model: &EmbeddingModel,
    cfg: &HashConfig,
) -> Result<HashTable> {
    let mut table = HashTable::new(cfg.clone())?;
    if features.nrows() == 0 {
        return Ok(table);
    }
    let activations = model.forward(features);
    let bases = model.base_embedding(features);
    for i in 0..features.nrows() {
        let code = infer_code(activations.row(i), cfg);
        table.insert(i as u64, &code, bases.row(i).to_vec())?;
    }
    Ok(table)
}

/// Ranked ids plus the pre-truncation size of the retrieved union.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryResult {
    pub ranked: Vec<u64>,
    pub retrieved_count: usize,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Retrieves the union of the code's buckets and reranks ascending by base
/// Euclidean distance (ties by id).
pub fn query_with_code(
    table: &HashTable,
    code: &HierarchicalCode,
    query_base: &[f64],
    top_k: usize,
    exclude: Option<u64>,
) -> QueryResult {
    let candidates = table.candidates(code, exclude);
    let retrieved_count = candidates.len();
    let mut scored: Vec<(f64, u64)> = candidates
        .into_iter()
        .map(|id| {
            let base = table.base_vector(id).expect("stored item has a base vector");
            (euclidean(base, query_base), id)
        })
        .collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    QueryResult {
        ranked: scored.into_iter().take(top_k).map(|(_, id)| id).collect(),
        retrieved_count,
    }
}

/// Hashes one query row with the model and retrieves with reranking.
pub fn query(
    table: &HashTable,
    q_features: ArrayView1<f64>,
    model: &EmbeddingModel,
    top_k: usize,
    exclude: Option<u64>,
) -> QueryResult {
    let row = q_features.insert_axis(ndarray::Axis(0));
    let activations = model.forward(row.view());
    let base = model.base_embedding(row.view());
    let code = infer_code(activations.row(0), table.config());
    query_with_code(
        table,
        &code,
        base.row(0).as_slice().expect("contiguous row"),
        top_k,
        exclude,
    )
}

/// Speedup factor over linear scan: total items divided by the mean
/// retrieved-union size. Returns infinity when nothing is ever retrieved.
pub fn suf(
    table: &HashTable,
    queries: ArrayView2<f64>,
    model: &EmbeddingModel,
    query_ids: Option<&[u64]>,
) -> Result<f64> {
    if queries.nrows() == 0 {
        return Err(HiqError::Input("speedup factor needs at least one query".into()));
    }
    let activations = model.forward(queries);
    let mut total_retrieved = 0usize;
    for i in 0..queries.nrows() {
        let code = infer_code(activations.row(i), table.config());
        let exclude = query_ids.map(|ids| ids[i]);
        total_retrieved += table.candidates(&code, exclude).len();
    }
    let mean = total_retrieved as f64 / queries.nrows() as f64;
    if mean == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(table.n_items() as f64 / mean)
}

/// Speedup factor for explicit per-item codes, self-match excluded:
/// queries every listed item against the table by its code.
pub fn suf_over_codes(table: &HashTable, items: &[(u64, HierarchicalCode)]) -> Result<f64> {
    if items.is_empty() {
        return Err(HiqError::Input("speedup factor needs at least one query".into()));
    }
    let total: usize = items
        .iter()
        .map(|(id, code)| table.candidates(code, Some(*id)).len())
        .sum();
    let mean = total as f64 / items.len() as f64;
    if mean == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(table.n_items() as f64 / mean)
}

/// Expected speedup factor of uniformly random codes:
/// `1 / (1 - C(d - k_s, k_s) / C(d, k_s))`; approaches `d / k_s^2` for
/// `d >> k_s`.
pub fn analytic_suf(d: usize, k_s: usize) -> f64 {
    assert!(k_s >= 1 && k_s <= d, "k_s must be in [1, d]");
    // C(d-k_s, k_s) / C(d, k_s) as a product of survival ratios.
    let mut miss_prob = 1.0;
    for i in 0..k_s {
        miss_prob *= (d - k_s - i) as f64 / (d - i) as f64;
    }
    1.0 / (1.0 - miss_prob)
}

/// How queries that retrieve fewer than `k` items are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecisionMode {
    /// Precision over `min(k, retrieved)`; empty retrievals contribute 0.
    Truncated,
    /// Precision over `k`, counting the shortfall as misses.
    Padded,
}

/// Mean fraction of the top-`k` reranked items sharing the query's label.
pub fn precision_at_k(
    rankings: &[Vec<u64>],
    query_labels: &[i64],
    item_labels: &BTreeMap<u64, i64>,
    k: usize,
    mode: PrecisionMode,
) -> Result<f64> {
    if rankings.len() != query_labels.len() {
        return Err(HiqError::Input(format!(
            "{} rankings for {} query labels",
            rankings.len(),
            query_labels.len()
        )));
    }
    if rankings.is_empty() {
        return Err(HiqError::Input("precision needs at least one query".into()));
    }
    let mut total = 0.0;
    for (ranked, &label) in rankings.iter().zip(query_labels) {
        let top = ranked.len().min(k);
        let hits = ranked[..top]
            .iter()
            .filter(|id| item_labels.get(id) == Some(&label))
            .count();
        let denom = match mode {
            PrecisionMode::Truncated => top,
            PrecisionMode::Padded => k,
        };
        if denom > 0 {
            total += hits as f64 / denom as f64;
        }
    }
    Ok(total / rankings.len() as f64)
}

/// Normalized mutual information between bucket assignment and labels,
/// normalized by the arithmetic mean of the two entropies. Each item must
/// occupy exactly one bucket, so this requires `k_s = 1`.
pub fn nmi(table: &HashTable, item_labels: &BTreeMap<u64, i64>) -> Result<f64> {
    if table.config().k_s != 1 {
        return Err(HiqError::Input(format!(
            "bucket clustering requires k_s = 1, got {}",
            table.config().k_s
        )));
    }
    let mut assignments: Vec<(u64, i64)> = Vec::new();
    for (bucket, ids) in table.occupied_buckets() {
        for &id in ids {
            let label = item_labels.get(&id).copied().ok_or_else(|| {
                HiqError::Input(format!("item {} has no label", id))
            })?;
            assignments.push((bucket, label));
        }
    }
    if assignments.is_empty() {
        return Err(HiqError::Input("empty table".into()));
    }
    Ok(nmi_from_pairs(&assignments))
}

/// NMI from explicit (cluster, label) pairs; arithmetic-mean normalization.
pub fn nmi_from_pairs(pairs: &[(u64, i64)]) -> f64 {
    let n = pairs.len() as f64;
    let mut cluster_counts: BTreeMap<u64, f64> = BTreeMap::new();
    let mut label_counts: BTreeMap<i64, f64> = BTreeMap::new();
    let mut joint: BTreeMap<(u64, i64), f64> = BTreeMap::new();
    for &(c, l) in pairs {
        *cluster_counts.entry(c).or_insert(0.0) += 1.0;
        *label_counts.entry(l).or_insert(0.0) += 1.0;
        *joint.entry((c, l)).or_insert(0.0) += 1.0;
    }
    let entropy = |counts: &BTreeMap<_, f64>| -> f64 {
        counts
            .values()
            .map(|&c| {
                let p: f64 = c / n;
                -p * p.ln()
            })
            .sum()
    };
    let h_c = entropy(&cluster_counts);
    let h_l: f64 = label_counts
        .values()
        .map(|&c| {
            let p: f64 = c / n;
            -p * p.ln()
        })
        .sum();
    let mut mi = 0.0;
    for (&(c, l), &count) in &joint {
        let p = count / n;
        mi += p * (p / (cluster_counts[&c] / n * (label_counts[&l] / n))).ln();
    }
    if h_c == 0.0 && h_l == 0.0 {
        return 1.0;
    }
    if h_c == 0.0 || h_l == 0.0 {
        return 0.0;
    }
    2.0 * mi / (h_c + h_l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn cfg(d: usize, k: usize, k_s: usize) -> HashConfig {
        HashConfig::new(d, k, k_s, 0.1, 0.1).unwrap()
    }

    #[test]
    fn leaf_index_examples() {
        let c22 = cfg(2, 2, 2);
        let code = HierarchicalCode::new(vec![0], vec![0, 1], &c22).unwrap();
        assert_eq!(leaf_indices(&code, &c22), vec![0, 1]);

        let c21 = cfg(2, 2, 1);
        let code = HierarchicalCode::new(vec![1], vec![0], &c21).unwrap();
        assert_eq!(leaf_indices(&code, &c21), vec![2]);

        let flat = cfg(5, 1, 1);
        let code = HierarchicalCode::new(vec![], vec![3], &flat).unwrap();
        assert_eq!(leaf_indices(&code, &flat), vec![3]);
    }

    #[test]
    fn leaf_indices_share_one_block() {
        let cfg = cfg(4, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let branch = vec![rng.random_range(0..4), rng.random_range(0..4)];
            let mut dims: Vec<usize> = (0..4).collect();
            for i in (1..4).rev() {
                dims.swap(i, rng.random_range(0..=i));
            }
            let code = HierarchicalCode::new(branch, dims[..2].to_vec(), &cfg).unwrap();
            let idx = leaf_indices(&code, &cfg);
            let block = idx[0] / 4;
            assert!(idx.iter().all(|&i| i / 4 == block));
        }
    }

    #[test]
    fn infer_code_takes_argmax_per_level() {
        let c = cfg(3, 2, 2);
        let acts = array![0.1, 0.9, 0.3, 0.5, 0.2, 0.7];
        let code = infer_code(acts.view(), &c);
        assert_eq!(code.branch(), &[1]);
        assert_eq!(code.leaf_set(), &[0, 2]);
    }

    #[test]
    fn infer_code_breaks_ties_low() {
        let c = cfg(3, 1, 2);
        let acts = array![0.5, 0.5, 0.5];
        let code = infer_code(acts.view(), &c);
        assert_eq!(code.leaf_set(), &[0, 1]);
    }

    #[test]
    fn build_table_counts_multiplicities() {
        let c = cfg(4, 1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = EmbeddingModel::linear(4, 4, &mut rng);
        let features = Array2::from_shape_fn((10, 4), |_| rng.random_range(-1.0..1.0));
        let table = build_table(features.view(), &model, &c).unwrap();
        assert_eq!(table.n_items(), 10);
        let total: usize = table.occupied_buckets().map(|(_, ids)| ids.len()).sum();
        assert_eq!(total, 20);

        let empty = build_table(Array2::zeros((0, 4)).view(), &model, &c).unwrap();
        assert_eq!(empty.n_items(), 0);
    }

    #[test]
    fn one_hot_activations_address_the_encoded_path() {
        let c = cfg(3, 2, 1);
        let mut table = HashTable::new(c.clone()).unwrap();
        let code = HierarchicalCode::new(vec![2], vec![1], &c).unwrap();
        table.insert(42, &code, vec![0.0]).unwrap();
        assert_eq!(table.bucket(2 * 3 + 1), &[42]);
    }

    #[test]
    fn query_empty_buckets_returns_nothing() {
        let c = cfg(3, 1, 1);
        let table = HashTable::new(c.clone()).unwrap();
        let code = HierarchicalCode::new(vec![], vec![0], &c).unwrap();
        let res = query_with_code(&table, &code, &[0.0], 5, None);
        assert_eq!(res.ranked, Vec::<u64>::new());
        assert_eq!(res.retrieved_count, 0);
    }

    #[test]
    fn identical_item_ranks_first() {
        let c = cfg(3, 1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = EmbeddingModel::linear(3, 3, &mut rng);
        let features = array![[1.0, 0.0, 0.0], [0.9, 0.1, 0.0], [1.0, 0.0, 0.0]];
        let table = build_table(features.view(), &model, &c).unwrap();
        let res = query(&table, features.row(0), &model, 3, None);
        // Item 0 itself is a candidate at distance zero.
        assert_eq!(res.ranked[0], 0);
    }

    #[test]
    fn rerank_matches_exhaustive_sort_of_the_union() {
        let c = cfg(4, 1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = EmbeddingModel::linear(4, 4, &mut rng);
        let features = Array2::from_shape_fn((30, 4), |_| rng.random_range(-1.0..1.0));
        let table = build_table(features.view(), &model, &c).unwrap();
        for qi in 0..5 {
            let res = query(&table, features.row(qi), &model, 30, None);
            let acts = model.forward(features.view());
            let code = infer_code(acts.row(qi), &c);
            let union = table.candidates(&code, None);
            let mut expect: Vec<(f64, u64)> = union
                .iter()
                .map(|&id| {
                    let d: f64 = features
                        .row(qi)
                        .iter()
                        .zip(features.row(id as usize).iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (d.sqrt(), id)
                })
                .collect();
            expect.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let expect_ids: Vec<u64> = expect.into_iter().map(|(_, id)| id).collect();
            assert_eq!(res.ranked, expect_ids);
            assert_eq!(res.retrieved_count, expect_ids.len());
        }
    }

    #[test]
    fn suf_is_one_when_everything_is_retrieved() {
        let c = cfg(2, 1, 2);
        let mut table = HashTable::new(c.clone()).unwrap();
        // k_s = 2 with d = 2: every item occupies both buckets.
        for id in 0..6u64 {
            let code = HierarchicalCode::new(vec![], vec![0, 1], &c).unwrap();
            table.insert(id, &code, vec![]).unwrap();
        }
        let items: Vec<(u64, HierarchicalCode)> = (0..6u64)
            .map(|id| (id, HierarchicalCode::new(vec![], vec![0, 1], &c).unwrap()))
            .collect();
        // Self-exclusion leaves 5 of 6 items per query: SUF = 6/5.
        let s = suf_over_codes(&table, &items).unwrap();
        assert!((s - 1.2).abs() < 1e-12);
    }

    #[test]
    fn suf_infinite_when_nothing_retrieved() {
        let c = cfg(4, 1, 1);
        let mut table = HashTable::new(c.clone()).unwrap();
        let code = HierarchicalCode::new(vec![], vec![0], &c).unwrap();
        table.insert(0, &code, vec![]).unwrap();
        let items = vec![(0u64, code)];
        // The only item is the query itself.
        assert!(suf_over_codes(&table, &items).unwrap().is_infinite());
    }

    #[test]
    fn analytic_suf_examples() {
        assert_eq!(analytic_suf(32, 1), 32.0);
        assert!((analytic_suf(4, 2) - 1.2).abs() < 1e-12);
        let v = analytic_suf(1024, 2);
        let asymptote = 1024.0 / 4.0;
        assert!((v - asymptote).abs() / asymptote < 0.05, "value {}", v);
    }

    #[test]
    fn monte_carlo_suf_matches_analytic() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for (d, k_s) in [(32usize, 1usize), (16, 2)] {
            let c = cfg(d, 1, k_s);
            let mut table = HashTable::new(c.clone()).unwrap();
            let mut items = Vec::new();
            for id in 0..10_000u64 {
                let mut dims: Vec<usize> = (0..d).collect();
                for i in (1..d).rev() {
                    dims.swap(i, rng.random_range(0..=i));
                }
                let mut leaf: Vec<usize> = dims[..k_s].to_vec();
                leaf.sort_unstable();
                let code = HierarchicalCode::new(vec![], leaf, &c).unwrap();
                table.insert(id, &code, vec![]).unwrap();
                items.push((id, code));
            }
            let measured = suf_over_codes(&table, &items).unwrap();
            let expect = analytic_suf(d, k_s);
            assert!(
                (measured - expect).abs() / expect < 0.10,
                "(d, k_s) = ({}, {}): measured {} vs analytic {}",
                d,
                k_s,
                measured,
                expect
            );
        }
    }

    #[test]
    fn suf_occupancy_identity_for_single_bucket_codes() {
        let c = cfg(8, 1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut table = HashTable::new(c.clone()).unwrap();
        let mut items = Vec::new();
        for id in 0..200u64 {
            let q = rng.random_range(0..8usize);
            let code = HierarchicalCode::new(vec![], vec![q], &c).unwrap();
            table.insert(id, &code, vec![]).unwrap();
            items.push((id, code));
        }
        let s = suf_over_codes(&table, &items).unwrap();
        // Mean retrieved = mean over items of (own bucket size - 1).
        let mean: f64 = items
            .iter()
            .map(|(_, code)| (table.bucket(leaf_indices(code, &c)[0]).len() - 1) as f64)
            .sum::<f64>()
            / items.len() as f64;
        assert!((s - 200.0 / mean).abs() < 1e-9);
    }

    #[test]
    fn precision_examples() {
        let labels: BTreeMap<u64, i64> =
            [(0, 1), (1, 1), (2, 1), (3, 2), (4, 2)].into_iter().collect();
        let all_hits = vec![vec![0, 1, 2]];
        assert_eq!(
            precision_at_k(&all_hits, &[1], &labels, 3, PrecisionMode::Truncated).unwrap(),
            1.0
        );
        let all_misses = vec![vec![3, 4]];
        assert_eq!(
            precision_at_k(&all_misses, &[1], &labels, 2, PrecisionMode::Truncated).unwrap(),
            0.0
        );
        let mixed = vec![vec![0, 1, 3, 2]];
        assert_eq!(
            precision_at_k(&mixed, &[1], &labels, 4, PrecisionMode::Truncated).unwrap(),
            0.75
        );
        // Truncated vs padded for a short retrieval.
        let short = vec![vec![0, 1]];
        assert_eq!(
            precision_at_k(&short, &[1], &labels, 4, PrecisionMode::Truncated).unwrap(),
            1.0
        );
        assert_eq!(
            precision_at_k(&short, &[1], &labels, 4, PrecisionMode::Padded).unwrap(),
            0.5
        );
    }

    #[test]
    fn nmi_extremes() {
        let c = cfg(4, 1, 1);
        // Buckets identical to classes.
        let mut table = HashTable::new(c.clone()).unwrap();
        let mut labels = BTreeMap::new();
        for id in 0..8u64 {
            let class = (id % 4) as usize;
            let code = HierarchicalCode::new(vec![], vec![class], &c).unwrap();
            table.insert(id, &code, vec![]).unwrap();
            labels.insert(id, class as i64);
        }
        assert!((nmi(&table, &labels).unwrap() - 1.0).abs() < 1e-12);

        // Everything in one bucket.
        let mut table = HashTable::new(c.clone()).unwrap();
        for id in 0..8u64 {
            let code = HierarchicalCode::new(vec![], vec![0], &c).unwrap();
            table.insert(id, &code, vec![]).unwrap();
        }
        assert_eq!(nmi(&table, &labels).unwrap(), 0.0);

        // Refuses k_s != 1.
        let c2 = cfg(4, 1, 2);
        let table2 = HashTable::new(c2).unwrap();
        assert!(nmi(&table2, &labels).is_err());
    }

    #[test]
    fn nmi_matches_direct_contingency_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let pairs: Vec<(u64, i64)> = (0..60)
            .map(|_| (rng.random_range(0..4u64), rng.random_range(0..3i64)))
            .collect();
        let ours = nmi_from_pairs(&pairs);

        // Independent route: explicit contingency table, log2 entropies.
        let mut counts = [[0f64; 3]; 4];
        for &(c, l) in &pairs {
            counts[c as usize][l as usize] += 1.0;
        }
        let n = pairs.len() as f64;
        let row: Vec<f64> = (0..4).map(|c| counts[c].iter().sum()).collect();
        let col: Vec<f64> = (0..3).map(|l| (0..4).map(|c| counts[c][l]).sum()).collect();
        let h = |v: &[f64]| -> f64 {
            v.iter()
                .filter(|&&x| x > 0.0)
                .map(|&x| {
                    let p = x / n;
                    -p * p.log2()
                })
                .sum()
        };
        let mut mi = 0.0;
        for c in 0..4 {
            for l in 0..3 {
                if counts[c][l] > 0.0 {
                    let p = counts[c][l] / n;
                    mi += p * (p / (row[c] / n * col[l] / n)).log2();
                }
            }
        }
        let expect = 2.0 * mi / (h(&row) + h(&col));
        assert!((ours - expect).abs() < 1e-12, "{} vs {}", ours, expect);
    }

    #[test]
    fn jsonl_roundtrip_preserves_buckets() {
        let c = cfg(3, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut table = HashTable::new(c.clone()).unwrap();
        for id in 0..20u64 {
            let code = HierarchicalCode::new(
                vec![rng.random_range(0..3)],
                vec![rng.random_range(0..3)],
                &c,
            )
            .unwrap();
            table.insert(id, &code, vec![id as f64]).unwrap();
        }
        let dump = table.export_jsonl();
        let back = HashTable::import_jsonl(&dump, &c).unwrap();
        let a: Vec<(u64, Vec<u64>)> = table
            .occupied_buckets()
            .map(|(i, ids)| (i, ids.to_vec()))
            .collect();
        let b: Vec<(u64, Vec<u64>)> = back
            .occupied_buckets()
            .map(|(i, ids)| (i, ids.to_vec()))
            .collect();
        assert_eq!(a, b);

        // Shape mismatch is rejected.
        let other = cfg(4, 2, 1);
        assert!(HashTable::import_jsonl(&dump, &other).is_err());
    }
}
