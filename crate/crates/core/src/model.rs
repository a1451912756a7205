//! Small differentiable embedding models.
//!
//! The hash activations come from a trainable head on top of a base trunk;
//! the trunk output doubles as the base embedding used for reranking at
//! query time. The linear model has an identity trunk (the base embedding
//! is the raw input), the one-hidden model a tanh trunk whose weights can
//! be frozen while the head trains.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Differentiable map from input features to `d*k` hash activations.
/// Biases are stored as single-row matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbeddingModel {
    Linear {
        w: Array2<f64>,
        b: Array2<f64>,
    },
    OneHidden {
        w1: Array2<f64>,
        b1: Array2<f64>,
        w2: Array2<f64>,
        b2: Array2<f64>,
    },
}

/// Per-parameter gradients, aligned with [`EmbeddingModel::params`].
pub type ModelGrads = Vec<Array2<f64>>;

fn init_weight(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let normal = Normal::new(0.0, 1.0 / (rows as f64).sqrt()).expect("valid stddev");
    Array2::from_shape_fn((rows, cols), |_| normal.sample(rng))
}

impl EmbeddingModel {
    pub fn linear(input_dim: usize, output_dim: usize, rng: &mut impl Rng) -> Self {
        Self::Linear {
            w: init_weight(input_dim, output_dim, rng),
            b: Array2::zeros((1, output_dim)),
        }
    }

    pub fn one_hidden(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self::OneHidden {
            w1: init_weight(input_dim, hidden_dim, rng),
            b1: Array2::zeros((1, hidden_dim)),
            w2: init_weight(hidden_dim, output_dim, rng),
            b2: Array2::zeros((1, output_dim)),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Self::Linear { w, .. } => w.nrows(),
            Self::OneHidden { w1, .. } => w1.nrows(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Self::Linear { w, .. } => w.ncols(),
            Self::OneHidden { w2, .. } => w2.ncols(),
        }
    }

    /// Width of the base embedding used for reranking.
    pub fn base_dim(&self) -> usize {
        match self {
            Self::Linear { w, .. } => w.nrows(),
            Self::OneHidden { w1, .. } => w1.ncols(),
        }
    }

    /// Hash activations, `n x (d*k)`.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward_cached(x).0
    }

    /// Forward pass keeping the trunk output for the backward pass.
    pub fn forward_cached(&self, x: ArrayView2<f64>) -> (Array2<f64>, Option<Array2<f64>>) {
        match self {
            Self::Linear { w, b } => (x.dot(w) + b, None),
            Self::OneHidden { w1, b1, w2, b2 } => {
                let hidden = (x.dot(w1) + b1).mapv(f64::tanh);
                let out = hidden.dot(w2) + b2;
                (out, Some(hidden))
            }
        }
    }

    /// Base embedding for reranking: raw input for the linear model, the
    /// tanh trunk output otherwise.
    pub fn base_embedding(&self, x: ArrayView2<f64>) -> Array2<f64> {
        match self {
            Self::Linear { .. } => x.to_owned(),
            Self::OneHidden { w1, b1, .. } => (x.dot(w1) + b1).mapv(f64::tanh),
        }
    }

    /// Parameter gradients given the gradient of the activations.
    /// `hidden` must be the cache returned by [`forward_cached`](Self::forward_cached).
    pub fn backward(
        &self,
        x: ArrayView2<f64>,
        hidden: Option<&Array2<f64>>,
        grad_out: ArrayView2<f64>,
    ) -> ModelGrads {
        match self {
            Self::Linear { .. } => {
                let gw = x.t().dot(&grad_out);
                let gb = grad_out.sum_axis(Axis(0)).insert_axis(Axis(0));
                vec![gw, gb]
            }
            Self::OneHidden { w2, .. } => {
                let h = hidden.expect("one-hidden backward needs the trunk cache");
                let gw2 = h.t().dot(&grad_out);
                let gb2 = grad_out.sum_axis(Axis(0)).insert_axis(Axis(0));
                let gh = grad_out.dot(&w2.t()) * (1.0 - h.mapv(|v| v * v));
                let gw1 = x.t().dot(&gh);
                let gb1 = gh.sum_axis(Axis(0)).insert_axis(Axis(0));
                vec![gw1, gb1, gw2, gb2]
            }
        }
    }

    /// Mutable parameter references paired with whether each belongs to the
    /// base trunk (frozen under `freeze_base`).
    pub fn params_mut(&mut self) -> Vec<(&mut Array2<f64>, bool)> {
        match self {
            Self::Linear { w, b } => vec![(w, false), (b, false)],
            Self::OneHidden { w1, b1, w2, b2 } => {
                vec![(w1, true), (b1, true), (w2, false), (b2, false)]
            }
        }
    }

    pub fn params(&self) -> Vec<&Array2<f64>> {
        match self {
            Self::Linear { w, b } => vec![w, b],
            Self::OneHidden { w1, b1, w2, b2 } => vec![w1, b1, w2, b2],
        }
    }
}

/// First and second moment estimates for the gradient update rule, one
/// slot per model parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    t: usize,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl AdamState {
    pub fn new(model: &EmbeddingModel, beta1: f64, beta2: f64, eps: f64) -> Self {
        let shapes: Vec<Array2<f64>> = model
            .params()
            .iter()
            .map(|p| Array2::zeros(p.dim()))
            .collect();
        Self {
            t: 0,
            beta1,
            beta2,
            eps,
            m: shapes.clone(),
            v: shapes,
        }
    }

    /// One update step with bias-corrected moments. Trunk parameters are
    /// skipped when `freeze_base` is set.
    pub fn step(
        &mut self,
        model: &mut EmbeddingModel,
        grads: &ModelGrads,
        lr: f64,
        freeze_base: bool,
    ) {
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (slot, (param, is_base)) in model.params_mut().into_iter().enumerate() {
            if freeze_base && is_base {
                continue;
            }
            let g = &grads[slot];
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            m.zip_mut_with(g, |m, &g| *m = self.beta1 * *m + (1.0 - self.beta1) * g);
            v.zip_mut_with(g, |v, &g| *v = self.beta2 * *v + (1.0 - self.beta2) * g * g);
            ndarray::Zip::from(param)
                .and(&*m)
                .and(&*v)
                .for_each(|p, &m, &v| {
                    *p -= lr * (m / bc1) / ((v / bc2).sqrt() + self.eps);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_output_width_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = EmbeddingModel::one_hidden(5, 7, 8, &mut rng);
        let x = Array2::from_elem((3, 5), 0.5);
        let (out, hidden) = model.forward_cached(x.view());
        assert_eq!(out.dim(), (3, 8));
        assert_eq!(hidden.unwrap().dim(), (3, 7));
        assert_eq!(model.base_embedding(x.view()).dim(), (3, 7));

        let linear = EmbeddingModel::linear(5, 8, &mut rng);
        assert_eq!(linear.forward(x.view()).dim(), (3, 8));
        assert_eq!(linear.base_embedding(x.view()), x);
    }

    #[test]
    fn forward_is_deterministic_given_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = EmbeddingModel::one_hidden(4, 6, 4, &mut rng);
        let x = Array2::from_shape_fn((2, 4), |(i, j)| (i + j) as f64 * 0.3);
        assert_eq!(model.forward(x.view()), model.forward(x.view()));
    }

    #[test]
    fn backward_matches_finite_differences() {
        use crate::gradcheck::{finite_diff_grad, rel_error};
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for model in [
            EmbeddingModel::linear(4, 3, &mut rng),
            EmbeddingModel::one_hidden(4, 5, 3, &mut rng),
        ] {
            let x = Array2::from_shape_fn((6, 4), |_| rng.random_range(-1.0..1.0));
            let target = Array2::from_shape_fn((6, 3), |_| rng.random_range(-1.0..1.0));
            // Loss: 0.5 * ||f(x) - target||^2, so grad_out = f(x) - target.
            let (out, hidden) = model.forward_cached(x.view());
            let grad_out = &out - &target;
            let grads = model.backward(x.view(), hidden.as_ref(), grad_out.view());

            for (slot, param) in model.params().iter().enumerate() {
                let numeric = finite_diff_grad(
                    |p| {
                        let mut m = model.clone();
                        let mut refs = m.params_mut();
                        *refs[slot].0 = p.clone();
                        let out = m.forward(x.view());
                        0.5 * (&out - &target).mapv(|v| v * v).sum()
                    },
                    param,
                    1e-6,
                );
                assert!(
                    rel_error(&grads[slot], &numeric) < 1e-6,
                    "param slot {}",
                    slot
                );
            }
        }
    }

    #[test]
    fn adam_moves_head_but_not_frozen_trunk() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut model = EmbeddingModel::one_hidden(3, 4, 2, &mut rng);
        let before = model.params().into_iter().cloned().collect::<Vec<_>>();
        let mut adam = AdamState::new(&model, 0.9, 0.999, 1e-8);
        let grads: ModelGrads = model
            .params()
            .iter()
            .map(|p| Array2::from_elem(p.dim(), 0.5))
            .collect();
        adam.step(&mut model, &grads, 0.01, true);
        let after = model.params().into_iter().cloned().collect::<Vec<_>>();
        assert_eq!(before[0], after[0]);
        assert_eq!(before[1], after[1]);
        assert_ne!(before[2], after[2]);
        assert_ne!(before[3], after[3]);
    }
}
