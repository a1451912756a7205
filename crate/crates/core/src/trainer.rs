//! Alternating optimization: discrete code assignment per minibatch, then
//! one gradient step on the embedding model.
//!
//! Each iteration forwards a class-balanced minibatch, assigns codes level
//! by level via the flow solver on the pre-update activations, remaps
//! labels, and takes one adaptive gradient step on the summed per-level
//! metric loss. The history records the loss, the attained assignment
//! objective, the class-mean slack, and per-level code occupancy.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::batch::EmbeddingBatch;
use crate::code::HierarchicalCode;
use crate::config::HashConfig;
use crate::data::Dataset;
use crate::error::{HiqError, Result};
use crate::flownet;
use crate::hashopt::{bound_gap, cascade_assign, RemapMode};
use crate::metric::{total_embedding_loss, LossKind};
use crate::model::{AdamState, EmbeddingModel};

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_iter: usize,
    /// Distinct classes per minibatch.
    pub classes_per_batch: usize,
    /// Examples per class in a minibatch.
    pub examples_per_class: usize,
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_eps")]
    pub adam_eps: f64,
    /// Learning-rate multiplier applied at each milestone.
    #[serde(default = "default_decay")]
    pub lr_decay_factor: f64,
    /// Iterations at which the learning rate is decayed.
    #[serde(default)]
    pub lr_decay_milestones: Vec<usize>,
    pub loss: LossKind,
    #[serde(default = "default_remap")]
    pub remap: RemapMode,
    #[serde(default)]
    pub freeze_base: bool,
    pub seed: u64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_decay() -> f64 {
    0.3
}
fn default_remap() -> RemapMode {
    RemapMode::PerLevel
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes_per_batch == 0 || self.examples_per_class == 0 {
            return Err(HiqError::Config("batch shape must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(HiqError::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(HiqError::Config("moment decay rates must be in [0, 1)".into()));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return Err(HiqError::Config("decay factor must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// A sampled minibatch in input space: `n_c * m` rows, class-major.
#[derive(Debug, Clone)]
pub struct Minibatch {
    pub inputs: Array2<f64>,
    pub labels: Vec<i64>,
}

/// Samples `n_c` distinct classes and `m` items per class, uniformly
/// without replacement.
pub fn sample_minibatch(
    dataset: &Dataset,
    n_c: usize,
    m: usize,
    rng: &mut impl Rng,
) -> Result<Minibatch> {
    let n_classes = dataset.classes().len();
    if n_c > n_classes {
        return Err(HiqError::Input(format!(
            "requested {} classes but the dataset has {}",
            n_c, n_classes
        )));
    }
    let mut class_order: Vec<usize> = (0..n_classes).collect();
    for i in (1..n_classes).rev() {
        class_order.swap(i, rng.random_range(0..=i));
    }
    let mut rows = Vec::with_capacity(n_c * m);
    let mut labels = Vec::with_capacity(n_c * m);
    for &c in class_order.iter().take(n_c) {
        let items = dataset.items_of_class(c);
        if items.len() < m {
            return Err(HiqError::Input(format!(
                "class {} has {} items, need {}",
                dataset.classes()[c],
                items.len(),
                m
            )));
        }
        let mut order: Vec<usize> = (0..items.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        for &slot in order.iter().take(m) {
            rows.push(items[slot]);
            labels.push(dataset.classes()[c]);
        }
    }
    let inputs = Array2::from_shape_fn((rows.len(), dataset.input_dim()), |(i, j)| {
        dataset.features()[(rows[i], j)]
    });
    Ok(Minibatch { inputs, labels })
}

/// One history record per iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub loss: f64,
    /// Sum over levels of the attained assignment objective (real-valued).
    pub assignment_objective: f64,
    /// Sum over levels of the class-mean slack.
    pub bound_gap: f64,
    /// Distinct class codes per level.
    pub occupancy: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub rows: Vec<HistoryRow>,
    /// Iterations on which a loss warning fired.
    pub warning_iterations: Vec<usize>,
}

/// Runs the alternating optimization for `max_iter` iterations, mutating
/// the model in place. Codes are assigned on pre-update activations. Aborts
/// with a diagnostic when the loss stops being finite.
pub fn train(
    dataset: &Dataset,
    model: &mut EmbeddingModel,
    tcfg: &TrainConfig,
    hcfg: &HashConfig,
) -> Result<TrainHistory> {
    tcfg.validate()?;
    hcfg.validate()?;
    if model.output_dim() != hcfg.activation_width() {
        return Err(HiqError::Config(format!(
            "model outputs {} activations, config needs {}",
            model.output_dim(),
            hcfg.activation_width()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut adam = AdamState::new(model, tcfg.adam_beta1, tcfg.adam_beta2, tcfg.adam_eps);
    let mut history = TrainHistory::default();
    let mut prev_codes: BTreeMap<i64, HierarchicalCode> = BTreeMap::new();

    for t in 0..tcfg.max_iter {
        let decays = tcfg
            .lr_decay_milestones
            .iter()
            .filter(|&&ms| t >= ms)
            .count();
        let lr = tcfg.learning_rate * tcfg.lr_decay_factor.powi(decays as i32);

        let batch = sample_minibatch(dataset, tcfg.classes_per_batch, tcfg.examples_per_class, &mut rng)?;
        let (activations, hidden) = model.forward_cached(batch.inputs.view());
        // Magnitudes beyond any sane embedding scale mean the optimization
        // has blown up; downstream sums would overflow to non-finite.
        if activations.iter().any(|x| !x.is_finite() || x.abs() > 1e100) {
            return Err(HiqError::Diverged {
                iteration: t,
                loss: f64::NAN,
                grad_norm: f64::NAN,
                learning_rate: lr,
            });
        }
        let ebatch = EmbeddingBatch::new(activations, batch.labels.clone(), hcfg)?;
        let cascade = cascade_assign(&ebatch, hcfg, tcfg.remap)?;

        // Per-batch optimality: the fresh codes can be no worse than last
        // iteration's codes evaluated on the current means and partition.
        if ebatch
            .class_ids()
            .iter()
            .all(|id| prev_codes.contains_key(id))
        {
            for (v, lvl) in cascade.levels.iter().enumerate() {
                let s_v = hcfg.level_sparsity(v + 1);
                let prev: Vec<Vec<usize>> = ebatch
                    .class_ids()
                    .iter()
                    .map(|id| prev_codes[id].level_dims(v + 1).to_vec())
                    .collect();
                let prev_cost =
                    flownet::fixed_objective(&prev, lvl.means.means(), &lvl.partition, s_v, hcfg)?;
                assert!(
                    lvl.solver_cost <= prev_cost,
                    "iteration {} level {}: solver cost {} exceeds previous codes' cost {}",
                    t,
                    v + 1,
                    lvl.solver_cost,
                    prev_cost
                );
            }
        }

        let loss_out = total_embedding_loss(&ebatch, &cascade.assignments, tcfg.loss, t)?;
        let grads = model.backward(batch.inputs.view(), hidden.as_ref(), loss_out.grad.view());
        let grad_norm = grads
            .iter()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        if !loss_out.value.is_finite() || !grad_norm.is_finite() {
            return Err(HiqError::Diverged {
                iteration: t,
                loss: loss_out.value,
                grad_norm,
                learning_rate: lr,
            });
        }

        let assignment_objective: f64 = cascade
            .levels
            .iter()
            .map(|lvl| lvl.solver_cost as f64 / hcfg.cost_scale as f64)
            .sum();
        let gap: f64 = cascade
            .levels
            .iter()
            .enumerate()
            .map(|(v, lvl)| bound_gap(&ebatch, &lvl.means, v + 1, hcfg.level_sparsity(v + 1)))
            .sum();
        let occupancy: Vec<usize> = cascade
            .assignments
            .iter()
            .map(|a| {
                let mut distinct: Vec<&Vec<usize>> = a.class_codes.iter().collect();
                distinct.sort();
                distinct.dedup();
                distinct.len()
            })
            .collect();
        if !loss_out.warnings.is_empty() {
            history.warning_iterations.push(t);
        }
        history.rows.push(HistoryRow {
            iteration: t,
            loss: loss_out.value,
            assignment_objective,
            bound_gap: gap,
            occupancy,
        });

        adam.step(model, &grads, lr, tcfg.freeze_base);

        for (p, id) in ebatch.class_ids().iter().enumerate() {
            prev_codes.insert(*id, cascade.class_codes[p].clone());
        }
    }
    Ok(history)
}

/// Serializable training state: model weights, both configs, and the
/// position of the sampling stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub hash_config: HashConfig,
    pub train_config: TrainConfig,
    pub model: EmbeddingModel,
    pub rng_seed: u64,
    pub rng_word_pos: u128,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn new(
        hash_config: HashConfig,
        train_config: TrainConfig,
        model: EmbeddingModel,
        rng: &ChaCha8Rng,
        seed: u64,
    ) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            hash_config,
            train_config,
            model,
            rng_seed: seed,
            rng_word_pos: rng.get_word_pos(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| HiqError::Serde(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ckpt: Self =
            serde_json::from_str(s).map_err(|e| HiqError::Serde(e.to_string()))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(HiqError::Serde(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }

    /// Rebuilds the sampling stream at its stored position.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_word_pos(self.rng_word_pos);
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_clusters;

    fn small_setup() -> (Dataset, HashConfig, TrainConfig) {
        let dataset = synthetic_clusters(4, 10, 8, 8.0, 3).unwrap();
        let hcfg = HashConfig::new(3, 2, 1, 0.1, 0.1).unwrap();
        let tcfg = TrainConfig {
            max_iter: 5,
            classes_per_batch: 4,
            examples_per_class: 2,
            learning_rate: 0.05,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            lr_decay_factor: 0.3,
            lr_decay_milestones: vec![],
            loss: LossKind::Npairs { l2_reg: 0.001 },
            remap: RemapMode::PerLevel,
            freeze_base: false,
            seed: 11,
        };
        (dataset, hcfg, tcfg)
    }

    #[test]
    fn minibatch_shape_and_counts() {
        let dataset = synthetic_clusters(4, 6, 5, 4.0, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mb = sample_minibatch(&dataset, 2, 2, &mut rng).unwrap();
        assert_eq!(mb.inputs.nrows(), 4);
        assert_eq!(mb.labels.len(), 4);
        let mut counts = BTreeMap::new();
        for &y in &mb.labels {
            *counts.entry(y).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 2);
        assert!(counts.values().all(|&c| c == 2));
    }

    #[test]
    fn minibatch_is_deterministic_for_a_seed() {
        let dataset = synthetic_clusters(5, 8, 4, 4.0, 9).unwrap();
        let a = sample_minibatch(&dataset, 3, 2, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = sample_minibatch(&dataset, 3, 2, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a.inputs, b.inputs);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn minibatch_rejects_impossible_requests() {
        let dataset = synthetic_clusters(3, 2, 4, 4.0, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_minibatch(&dataset, 4, 1, &mut rng).is_err());
        assert!(sample_minibatch(&dataset, 2, 3, &mut rng).is_err());
    }

    #[test]
    fn zero_iterations_leave_the_model_unchanged() {
        let (dataset, hcfg, mut tcfg) = small_setup();
        tcfg.max_iter = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut model = EmbeddingModel::linear(8, hcfg.activation_width(), &mut rng);
        let before = model.clone();
        let history = train(&dataset, &mut model, &tcfg, &hcfg).unwrap();
        assert!(history.rows.is_empty());
        assert_eq!(model, before);
    }

    #[test]
    fn training_is_reproducible_for_a_seed() {
        let (dataset, hcfg, tcfg) = small_setup();
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut model = EmbeddingModel::linear(8, hcfg.activation_width(), &mut rng);
            let history = train(&dataset, &mut model, &tcfg, &hcfg).unwrap();
            (history, model)
        };
        let (h1, m1) = run(5);
        let (h2, m2) = run(5);
        assert_eq!(h1.rows, h2.rows);
        assert_eq!(m1, m2);
        let (h3, _) = run(6);
        assert_ne!(h1.rows, h3.rows);
    }

    #[test]
    fn freeze_base_keeps_trunk_weights_bit_identical() {
        let (dataset, hcfg, mut tcfg) = small_setup();
        tcfg.freeze_base = true;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut model = EmbeddingModel::one_hidden(8, 6, hcfg.activation_width(), &mut rng);
        let (w1, b1) = match &model {
            EmbeddingModel::OneHidden { w1, b1, .. } => (w1.clone(), b1.clone()),
            _ => unreachable!(),
        };
        train(&dataset, &mut model, &tcfg, &hcfg).unwrap();
        match &model {
            EmbeddingModel::OneHidden {
                w1: w1b, b1: b1b, ..
            } => {
                assert_eq!(&w1, w1b);
                assert_eq!(&b1, b1b);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn diverging_learning_rate_aborts_with_diagnostics() {
        let (dataset, hcfg, mut tcfg) = small_setup();
        tcfg.learning_rate = 1e307;
        tcfg.max_iter = 20;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut model = EmbeddingModel::linear(8, hcfg.activation_width(), &mut rng);
        match train(&dataset, &mut model, &tcfg, &hcfg) {
            Err(HiqError::Diverged { iteration, .. }) => {
                assert!(iteration < 20);
            }
            other => panic!("expected divergence, got {:?}", other.map(|h| h.rows.len())),
        }
    }

    #[test]
    fn history_records_every_iteration() {
        let (dataset, hcfg, tcfg) = small_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut model = EmbeddingModel::linear(8, hcfg.activation_width(), &mut rng);
        let history = train(&dataset, &mut model, &tcfg, &hcfg).unwrap();
        assert_eq!(history.rows.len(), 5);
        for (t, row) in history.rows.iter().enumerate() {
            assert_eq!(row.iteration, t);
            assert_eq!(row.occupancy.len(), hcfg.k);
            assert!(row.bound_gap >= -1e-12);
            assert!(row.loss.is_finite());
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let (_, hcfg, tcfg) = small_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = EmbeddingModel::one_hidden(8, 4, hcfg.activation_width(), &mut rng);
        let mut stream = ChaCha8Rng::seed_from_u64(tcfg.seed);
        let _: u64 = stream.random();
        let ckpt = Checkpoint::new(hcfg, tcfg, model.clone(), &stream, 11);
        let json = ckpt.to_json().unwrap();
        let back = Checkpoint::from_json(&json).unwrap();
        assert_eq!(back.model, model);
        let mut restored = back.rng();
        let mut original = stream.clone();
        assert_eq!(restored.random::<u64>(), original.random::<u64>());
    }
}
