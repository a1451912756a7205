//! Independent brute-force certification of the flow-based optimizer.
//!
//! The enumeration evaluates the assignment objective directly from its
//! formula, sharing nothing with the flow solver beyond the fixed-point
//! rounding rule (shared rounding is what makes integer objectives
//! comparable).

use ndarray::{Array2, ArrayView2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::HashConfig;
use crate::error::{HiqError, Result};
use crate::flownet::{self, fixed_cost, solve_min_cost_flow, FlowNetwork};
use crate::partition::SiblingPartition;

pub use crate::flownet::flow_from_codes;

/// Enumeration guard: assignments to evaluate may not exceed this.
pub const MAX_ASSIGNMENTS: u64 = 10_000_000;

/// Exhaustive minimizer result. The objective is reported both in fixed
/// point (comparable with solver flow costs by exact equality) and as the
/// real-valued objective of the winning codes.
#[derive(Debug, Clone)]
pub struct BruteForceResult {
    pub codes: Vec<Vec<usize>>,
    pub objective_fixed: i64,
    pub objective: f64,
}

/// All size-`s` subsets of `0..d`, in colex order.
fn subsets_colex(d: usize, s: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, d: usize, s: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == s {
            out.push(cur.clone());
            return;
        }
        for q in start..d {
            cur.push(q);
            rec(q + 1, d, s, cur, out);
            cur.pop();
        }
    }
    rec(0, d, s, &mut cur, &mut out);
    out.sort_by(|a, b| {
        let ra = a.iter().rev();
        let rb = b.iter().rev();
        ra.cmp(rb)
    });
    out
}

fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let mut acc = 1u64;
    for i in 0..k.min(n - k) {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

/// Global minimum of the per-level assignment objective over all
/// `s_v`-sparse binary codes, by odometer enumeration over per-class subset
/// ranks (colex order). Ties keep the first tuple found, i.e. the smallest
/// rank tuple.
pub fn brute_force_minimize(
    costs: ArrayView2<f64>,
    partition: &SiblingPartition,
    s_v: usize,
    cfg: &HashConfig,
) -> Result<BruteForceResult> {
    let n_c = costs.nrows();
    let d = cfg.d;
    if costs.ncols() != d {
        return Err(HiqError::Input(format!(
            "cost rows have width {}, expected {}",
            costs.ncols(),
            d
        )));
    }
    if partition.n_classes() != n_c {
        return Err(HiqError::Input("partition does not match cost rows".into()));
    }
    if n_c == 0 {
        return Ok(BruteForceResult {
            codes: Vec::new(),
            objective_fixed: 0,
            objective: 0.0,
        });
    }
    if s_v < 1 || s_v > d {
        return Err(HiqError::Input(format!("sparsity {} outside [1, {}]", s_v, d)));
    }
    let per_class = binomial(d, s_v);
    let total = per_class.checked_pow(n_c as u32).filter(|&t| t <= MAX_ASSIGNMENTS);
    let Some(_) = total else {
        return Err(HiqError::InstanceTooLarge(format!(
            "C({}, {})^{} exceeds {} assignments",
            d, s_v, n_c, MAX_ASSIGNMENTS
        )));
    };

    let subsets = subsets_colex(d, s_v);
    let scale = cfg.cost_scale;

    // Per-class fixed unary value of each candidate subset.
    let unary: Vec<Vec<i64>> = (0..n_c)
        .map(|p| {
            subsets
                .iter()
                .map(|sub| sub.iter().map(|&q| -fixed_cost(costs[(p, q)], scale)).sum())
                .collect()
        })
        .collect();

    // Penalty ladders: cost of y simultaneous uses of one dimension.
    let ladder = |weight: f64| -> Vec<i64> {
        let mut acc = vec![0i64; n_c + 1];
        for y in 1..=n_c {
            acc[y] = acc[y - 1] + fixed_cost(2.0 * weight * (y - 1) as f64, scale);
        }
        acc
    };
    let ladder_alpha = ladder(cfg.alpha);
    let ladder_beta = ladder(cfg.beta);

    let groups: Vec<&[usize]> = (0..partition.group_count())
        .map(|r| partition.group(r))
        .collect();

    let mut ranks = vec![0usize; n_c];
    let mut best_fixed = i64::MAX;
    let mut best_ranks = ranks.clone();
    let mut y_group = vec![0i64; d];
    let mut y_all = vec![0i64; d];
    loop {
        let mut obj = 0i64;
        for (p, &rank) in ranks.iter().enumerate() {
            obj += unary[p][rank];
        }
        for members in &groups {
            y_group[..].fill(0);
            for &p in *members {
                for &q in &subsets[ranks[p]] {
                    y_group[q] += 1;
                }
            }
            for &y in y_group.iter() {
                obj += ladder_alpha[y as usize];
            }
        }
        y_all[..].fill(0);
        for &rank in &ranks {
            for &q in &subsets[rank] {
                y_all[q] += 1;
            }
        }
        for &y in y_all.iter() {
            obj += ladder_beta[y as usize];
        }

        if obj < best_fixed {
            best_fixed = obj;
            best_ranks.copy_from_slice(&ranks);
        }

        // Odometer: last class advances fastest.
        let mut i = n_c;
        loop {
            if i == 0 {
                let codes: Vec<Vec<usize>> =
                    best_ranks.iter().map(|&r| subsets[r].clone()).collect();
                let objective =
                    flownet::flow_cost_closed_form(&codes, costs, partition, s_v, cfg)?;
                return Ok(BruteForceResult {
                    codes,
                    objective_fixed: best_fixed,
                    objective,
                });
            }
            i -= 1;
            ranks[i] += 1;
            if ranks[i] < subsets.len() {
                break;
            }
            ranks[i] = 0;
        }
    }
}

/// A random small assignment instance for solver certification.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub cfg: HashConfig,
    pub costs: Array2<f64>,
    pub partition: SiblingPartition,
    pub s_v: usize,
}

/// Draws an instance with `d` in 2..=6, `n_c` in 1..=4, `s_v` in {1, 2},
/// penalty weights in [0, 2], and mean entries in [-1, 1].
pub fn random_instance(seed: u64) -> RandomInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(2..=6usize);
    let n_c = rng.random_range(1..=4usize);
    let s_v = rng.random_range(1..=2usize.min(d));
    let alpha = rng.random_range(0.0..=2.0);
    let beta = rng.random_range(0.0..=2.0);
    let cfg = HashConfig::new(d, 1, s_v, alpha, beta).expect("valid random config");
    let costs = Array2::from_shape_fn((n_c, d), |_| rng.random_range(-1.0..=1.0));

    let mut ids: Vec<usize> = (0..n_c).collect();
    for i in (1..ids.len()).rev() {
        ids.swap(i, rng.random_range(0..=i));
    }
    let mut sets: Vec<Vec<usize>> = Vec::new();
    let mut i = 0;
    while i < n_c {
        let take = rng.random_range(1..=(n_c - i));
        sets.push(ids[i..i + take].to_vec());
        i += take;
    }
    let partition = SiblingPartition::from_groups(sets, n_c).expect("valid random partition");

    RandomInstance {
        cfg,
        costs,
        partition,
        s_v,
    }
}

/// Draws a uniformly random `s_v`-sparse code per class of an instance.
pub fn random_codes(inst: &RandomInstance, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    (0..inst.costs.nrows())
        .map(|_| {
            let mut dims: Vec<usize> = (0..inst.cfg.d).collect();
            for i in (1..dims.len()).rev() {
                dims.swap(i, rng.random_range(0..=i));
            }
            let mut code: Vec<usize> = dims[..inst.s_v].to_vec();
            code.sort_unstable();
            code
        })
        .collect()
}

/// Outcome of checking the flow solver against the exhaustive oracle on one
/// instance: the two fixed-point objectives must be exactly equal.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyOutcome {
    pub seed: u64,
    pub solver_objective: i64,
    pub oracle_objective: i64,
    pub matches: bool,
}

/// Solves one instance both ways and compares fixed-point objectives.
pub fn verify_instance(seed: u64) -> Result<VerifyOutcome> {
    let inst = random_instance(seed);
    let net = FlowNetwork::build(inst.costs.view(), &inst.partition, inst.s_v, &inst.cfg)?;
    let sol = solve_min_cost_flow(&net)?;
    net.check_flow(&sol.flow)?;
    let oracle = brute_force_minimize(inst.costs.view(), &inst.partition, inst.s_v, &inst.cfg)?;
    Ok(VerifyOutcome {
        seed,
        solver_objective: sol.total_cost,
        oracle_objective: oracle.objective_fixed,
        matches: sol.total_cost == oracle.objective_fixed,
    })
}

/// Checks the cost identity and feasibility of the induced flow for random
/// codes on one instance: the network edge-cost total of the induced flow
/// must equal the fixed-point closed form exactly, and the flow must pass
/// conservation and capacity checks.
pub fn verify_cost_identity(seed: u64) -> Result<bool> {
    let inst = random_instance(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    let codes = random_codes(&inst, &mut rng);
    let net = FlowNetwork::build(inst.costs.view(), &inst.partition, inst.s_v, &inst.cfg)?;
    let flow = flow_from_codes(&codes, &inst.partition, inst.s_v, &net)?;
    net.check_flow(&flow)?;
    let edge_total = net.flow_cost(&flow);
    let closed_fixed =
        flownet::fixed_objective(&codes, inst.costs.view(), &inst.partition, inst.s_v, &inst.cfg)?;
    Ok(edge_total == closed_fixed)
}
