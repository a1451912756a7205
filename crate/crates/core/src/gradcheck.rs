//! Central finite differences for verifying analytic gradients, plus random
//! loss-input generation with kink screening.
//!
//! Masked L1 distances are piecewise linear and the triplet hinge adds
//! selection and activation boundaries; finite differences are only
//! meaningful away from these kinks. `reject_near_kinks` screens a random
//! case so every boundary is at least `threshold` away, far beyond the
//! finite-difference step.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::metric::masked_distance;

/// Random loss inputs: an activation slice, a code per item, a label per item.
#[derive(Debug, Clone)]
pub struct GradCase {
    pub slice: Array2<f64>,
    pub codes: Vec<Vec<usize>>,
    pub labels: Vec<i64>,
}

/// Draws a case with 2..=4 classes of 2..=4 examples (at most `n_max`
/// items), width 2..=`d_max`, uniform activations in [-1, 1], and a random
/// 1- or 2-sparse code per item.
pub fn random_case(seed: u64, n_max: usize, d_max: usize) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(2..=d_max.max(2));
    let n_c = rng.random_range(2..=4usize);
    let m_cap = (n_max / n_c).clamp(2, 4);
    let m = rng.random_range(2..=m_cap);
    let n = n_c * m;
    let slice = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
    let sparsity = rng.random_range(1..=2usize.min(d));
    let codes = (0..n)
        .map(|_| {
            let mut dims: Vec<usize> = (0..d).collect();
            for i in (1..d).rev() {
                dims.swap(i, rng.random_range(0..=i));
            }
            let mut code = dims[..sparsity].to_vec();
            code.sort_unstable();
            code
        })
        .collect();
    let labels = (0..n_c as i64).flat_map(|c| vec![c; m]).collect();
    GradCase {
        slice,
        codes,
        labels,
    }
}

/// Smallest in-mask coordinate gap over all item pairs: the distance to the
/// nearest L1 kink.
pub fn l1_kink_margin(case: &GradCase) -> f64 {
    let n = case.slice.nrows();
    let mut min_gap = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            for &q in case.codes[i].iter().chain(&case.codes[j]) {
                min_gap = min_gap.min((case.slice[(i, q)] - case.slice[(j, q)]).abs());
            }
        }
    }
    min_gap
}

/// Distance to the nearest triplet-loss boundary: hinge activations and
/// semi-hard selection gaps (negative vs. positive distance, and gaps
/// between two negatives of the same anchor).
pub fn triplet_kink_margin(case: &GradCase, margin: f64) -> f64 {
    let n = case.slice.nrows();
    let dist = |i: usize, j: usize| {
        masked_distance(
            case.slice.row(i),
            case.slice.row(j),
            &case.codes[i],
            &case.codes[j],
        )
        .expect("rows share a width")
    };
    let mut min_gap = f64::INFINITY;
    for a in 0..n {
        let negatives: Vec<usize> = (0..n).filter(|&x| case.labels[x] != case.labels[a]).collect();
        for w in 0..negatives.len() {
            for v in (w + 1)..negatives.len() {
                min_gap = min_gap.min((dist(a, negatives[w]) - dist(a, negatives[v])).abs());
            }
        }
        for p in 0..n {
            if p == a || case.labels[p] != case.labels[a] {
                continue;
            }
            let d_ap = dist(a, p);
            for &neg in &negatives {
                let d_an = dist(a, neg);
                min_gap = min_gap.min((d_an - d_ap).abs());
                min_gap = min_gap.min((margin + d_ap - d_an).abs());
            }
        }
    }
    min_gap
}

/// Returns the case unless some loss boundary (L1 kink, hinge activation
/// at margin 1, or negative-selection tie) lies within `threshold`.
pub fn reject_near_kinks(case: GradCase, threshold: f64) -> Option<GradCase> {
    if l1_kink_margin(&case) < threshold || triplet_kink_margin(&case, 1.0) < threshold {
        None
    } else {
        Some(case)
    }
}

/// Central finite differences of a scalar function of a matrix.
pub fn finite_diff_grad<F>(f: F, point: &Array2<f64>, eps: f64) -> Array2<f64>
where
    F: Fn(&Array2<f64>) -> f64,
{
    let mut grad = Array2::zeros(point.dim());
    let mut work = point.clone();
    for idx in ndarray::indices(point.dim()) {
        let orig = work[idx];
        work[idx] = orig + eps;
        let plus = f(&work);
        work[idx] = orig - eps;
        let minus = f(&work);
        work[idx] = orig;
        grad[idx] = (plus - minus) / (2.0 * eps);
    }
    grad
}

/// Relative error between two gradients: `||a - b|| / max(||a||, ||b||, 1e-8)`.
pub fn rel_error(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let diff = (a - b).mapv(|x| x * x).sum().sqrt();
    let na = a.mapv(|x| x * x).sum().sqrt();
    let nb = b.mapv(|x| x * x).sum().sqrt();
    diff / na.max(nb).max(1e-8)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_diff_on_a_quadratic() {
        let point = ndarray::array![[1.0, 2.0], [3.0, 4.0]];
        let grad = finite_diff_grad(|m| m.iter().map(|x| x * x).sum(), &point, 1e-6);
        let expect = &point * 2.0;
        assert!(rel_error(&grad, &expect) < 1e-8);
    }

    #[test]
    fn random_case_shapes_are_consistent() {
        for seed in 0..10 {
            let case = random_case(seed, 16, 8);
            assert_eq!(case.slice.nrows(), case.labels.len());
            assert_eq!(case.slice.nrows(), case.codes.len());
            assert!(case.slice.nrows() <= 16);
            assert!(case.slice.ncols() <= 8);
            let s = case.codes[0].len();
            assert!(case.codes.iter().all(|c| c.len() == s));
        }
    }

    #[test]
    fn kink_margins_detect_planted_ties() {
        let mut case = random_case(3, 8, 4);
        case.slice[(1, 0)] = case.slice[(0, 0)];
        case.codes[0] = vec![0];
        case.codes[1] = vec![0];
        assert_eq!(l1_kink_margin(&case), 0.0);
    }
}
