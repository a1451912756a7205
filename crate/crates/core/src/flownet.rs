//! Per-level code assignment solved exactly as minimum cost flow.
//!
//! One network per hierarchy level. A unit of flow from a class vertex into
//! dimension `q` activates bit `q` of that class's code. Unary edge costs
//! reward high class-mean activations; collisions are charged through
//! parallel unit-capacity arcs with increasing costs `2*alpha*i` (within a
//! sibling group) and `2*beta*j` (across all classes), so any min-cost flow
//! fills the cheapest copies first and the total matches the pairwise
//! penalty objective.
//!
//! Costs are mapped to integers by `round(cost_scale * cost)` so solutions
//! are bit-reproducible across runs and platforms.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use ndarray::ArrayView2;

use crate::batch::ClassMeanSet;
use crate::config::HashConfig;
use crate::error::{HiqError, Result};
use crate::partition::SiblingPartition;

/// Role of an edge in the assignment network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    /// Source to class vertex; capacity is the level sparsity, cost 0.
    Source { class: usize },
    /// Class vertex to a dimension vertex; capacity 1, cost `-c_p[q]`.
    Unary { class: usize, dim: usize },
    /// `rank`-th parallel arc from a group's dimension vertex to the shared
    /// dimension vertex; capacity 1, cost `2*alpha*rank`.
    Sibling { group: usize, dim: usize, rank: usize },
    /// `rank`-th parallel arc from a shared dimension vertex to the sink;
    /// capacity 1, cost `2*beta*rank`.
    Sink { dim: usize, rank: usize },
}

/// A directed edge with integer capacity and fixed-point cost.
#[derive(Debug, Clone)]
pub struct NetEdge {
    pub tail: usize,
    pub head: usize,
    pub capacity: i64,
    pub cost: i64,
    pub kind: EdgeKind,
}

/// The assignment network for one level: source, one vertex per class, one
/// block of `d` dimension vertices per sibling group, a shared block of `d`
/// dimension vertices, and the sink.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    n_classes: usize,
    dims: usize,
    sparsity: usize,
    n_vertices: usize,
    source: usize,
    sink: usize,
    edges: Vec<NetEdge>,
}

/// Largest magnitude a fixed-point cost may take. Bounds path and
/// potential sums far away from 64-bit overflow; desk-scale costs never
/// come close.
pub const MAX_FIXED_COST: i64 = 1 << 45;

/// Rounds a real cost into fixed point, saturating at [`MAX_FIXED_COST`].
pub fn fixed_cost(cost: f64, cost_scale: i64) -> i64 {
    let scaled = (cost * cost_scale as f64).round();
    scaled.clamp(-(MAX_FIXED_COST as f64), MAX_FIXED_COST as f64) as i64
}

impl FlowNetwork {
    /// Builds the network from raw per-class cost rows (`n_c x d`). Accepts
    /// zero classes, which yields a network with zero supply.
    pub fn build(
        costs: ArrayView2<f64>,
        partition: &SiblingPartition,
        s_v: usize,
        cfg: &HashConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let n_c = costs.nrows();
        let d = cfg.d;
        if costs.ncols() != d {
            return Err(HiqError::Config(format!(
                "cost rows have width {}, expected d = {}",
                costs.ncols(),
                d
            )));
        }
        if costs.iter().any(|c| !c.is_finite()) {
            return Err(HiqError::Input("cost rows must be finite".into()));
        }
        if partition.n_classes() != n_c {
            return Err(HiqError::Config(format!(
                "partition covers {} classes, costs have {}",
                partition.n_classes(),
                n_c
            )));
        }
        if s_v < 1 || s_v > d {
            return Err(HiqError::Config(format!(
                "level sparsity {} outside [1, {}]",
                s_v, d
            )));
        }
        let l = partition.group_count();

        // Vertex layout (ids are a topological order of the initial network):
        // 0 = source; 1+p = class p; group blocks of d; shared block of d; sink.
        let source = 0;
        let class_base = 1;
        let group_base = |r: usize| class_base + n_c + r * d;
        let shared_base = class_base + n_c + l * d;
        let sink = shared_base + d;
        let n_vertices = sink + 1;

        let scale = cfg.cost_scale;
        let mut edges = Vec::new();
        for p in 0..n_c {
            edges.push(NetEdge {
                tail: source,
                head: class_base + p,
                capacity: s_v as i64,
                cost: 0,
                kind: EdgeKind::Source { class: p },
            });
        }
        for p in 0..n_c {
            let block = match partition.group_of(p) {
                Some(r) => group_base(r),
                None => shared_base,
            };
            for q in 0..d {
                edges.push(NetEdge {
                    tail: class_base + p,
                    head: block + q,
                    capacity: 1,
                    cost: -fixed_cost(costs[(p, q)], scale),
                    kind: EdgeKind::Unary { class: p, dim: q },
                });
            }
        }
        for r in 0..l {
            let g_r = partition.group_size(r);
            for q in 0..d {
                for i in 0..g_r {
                    edges.push(NetEdge {
                        tail: group_base(r) + q,
                        head: shared_base + q,
                        capacity: 1,
                        cost: fixed_cost(2.0 * cfg.alpha * i as f64, scale),
                        kind: EdgeKind::Sibling { group: r, dim: q, rank: i },
                    });
                }
            }
        }
        for q in 0..d {
            for j in 0..n_c {
                edges.push(NetEdge {
                    tail: shared_base + q,
                    head: sink,
                    capacity: 1,
                    cost: fixed_cost(2.0 * cfg.beta * j as f64, scale),
                    kind: EdgeKind::Sink { dim: q, rank: j },
                });
            }
        }

        Ok(Self {
            n_classes: n_c,
            dims: d,
            sparsity: s_v,
            n_vertices,
            source,
            sink,
            edges,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Level sparsity: units of flow each class must ship.
    pub fn sparsity(&self) -> usize {
        self.sparsity
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn edges(&self) -> &[NetEdge] {
        &self.edges
    }

    /// Units of flow shipped from source to sink: `n_c * s_v`.
    pub fn supply(&self) -> i64 {
        (self.n_classes * self.sparsity) as i64
    }

    /// Total edge cost of a per-edge flow vector.
    pub fn flow_cost(&self, flow: &[i64]) -> i64 {
        self.edges
            .iter()
            .zip(flow)
            .map(|(e, &f)| e.cost * f)
            .sum()
    }

    /// Verifies capacity bounds on every edge and conservation at every
    /// non-terminal vertex; the source must emit exactly the supply.
    pub fn check_flow(&self, flow: &[i64]) -> Result<()> {
        if flow.len() != self.edges.len() {
            return Err(HiqError::InvalidFlow(format!(
                "{} flow values for {} edges",
                flow.len(),
                self.edges.len()
            )));
        }
        let mut balance = vec![0i64; self.n_vertices];
        for (e, &f) in self.edges.iter().zip(flow) {
            if f < 0 || f > e.capacity {
                return Err(HiqError::InvalidFlow(format!(
                    "flow {} outside [0, {}] on edge {:?}",
                    f, e.capacity, e.kind
                )));
            }
            balance[e.tail] -= f;
            balance[e.head] += f;
        }
        let supply = self.supply();
        for v in 0..self.n_vertices {
            let expect = if v == self.source {
                -supply
            } else if v == self.sink {
                supply
            } else {
                0
            };
            if balance[v] != expect {
                return Err(HiqError::InvalidFlow(format!(
                    "conservation violated at vertex {}: balance {}, expected {}",
                    v, balance[v], expect
                )));
            }
        }
        Ok(())
    }

    /// DIMACS min-cost-flow text dump for cross-checking with external
    /// solvers. Vertices are 1-indexed; the problem line is `p min <nodes> <arcs>`.
    pub fn to_dimacs(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "c assignment network: {} classes, {} dims, sparsity {}",
            self.n_classes, self.dims, self.sparsity
        )
        .unwrap();
        writeln!(out, "p min {} {}", self.n_vertices, self.edges.len()).unwrap();
        writeln!(out, "n {} {}", self.source + 1, self.supply()).unwrap();
        writeln!(out, "n {} {}", self.sink + 1, -self.supply()).unwrap();
        for e in &self.edges {
            writeln!(
                out,
                "a {} {} 0 {} {}",
                e.tail + 1,
                e.head + 1,
                e.capacity,
                e.cost
            )
            .unwrap();
        }
        out
    }
}

/// Builds the assignment network for one level from class means.
pub fn build_flow_network(
    means: &ClassMeanSet,
    partition: &SiblingPartition,
    s_v: usize,
    cfg: &HashConfig,
) -> Result<FlowNetwork> {
    FlowNetwork::build(means.means(), partition, s_v, cfg)
}

/// An exact integral min-cost flow together with the codes it encodes.
#[derive(Debug, Clone)]
pub struct FlowSolution {
    /// Flow on each network edge, aligned with [`FlowNetwork::edges`].
    pub flow: Vec<i64>,
    /// Total fixed-point edge cost.
    pub total_cost: i64,
    /// Per-class selected dimensions, each sorted and of length `s_v`.
    pub codes: Vec<Vec<usize>>,
}

const INF: i64 = i64::MAX / 4;

/// Successive shortest augmenting paths with vertex potentials.
///
/// Potentials are initialized by one relaxation pass in vertex-id order
/// (the initial network is acyclic and ids are topological), which absorbs
/// the negative unary costs; afterwards each augmentation runs Dijkstra on
/// reduced costs with early exit at the sink. Ties are broken by vertex id,
/// so repeated runs produce identical flows.
pub fn solve_min_cost_flow(net: &FlowNetwork) -> Result<FlowSolution> {
    let n = net.n_vertices();
    let m = net.edges.len();

    // Residual arcs: 2e forward, 2e+1 backward.
    let mut arc_to = vec![0u32; 2 * m];
    let mut arc_cap = vec![0i64; 2 * m];
    let mut arc_cost = vec![0i64; 2 * m];
    let mut degree = vec![0u32; n];
    for (e, edge) in net.edges.iter().enumerate() {
        arc_to[2 * e] = edge.head as u32;
        arc_cap[2 * e] = edge.capacity;
        arc_cost[2 * e] = edge.cost;
        arc_to[2 * e + 1] = edge.tail as u32;
        arc_cap[2 * e + 1] = 0;
        arc_cost[2 * e + 1] = -edge.cost;
        degree[edge.tail] += 1;
        degree[edge.head] += 1;
    }
    let mut adj_start = vec![0u32; n + 1];
    for v in 0..n {
        adj_start[v + 1] = adj_start[v] + degree[v];
    }
    let mut adj = vec![0u32; 2 * m];
    let mut cursor = adj_start.clone();
    for (e, edge) in net.edges.iter().enumerate() {
        adj[cursor[edge.tail] as usize] = (2 * e) as u32;
        cursor[edge.tail] += 1;
        adj[cursor[edge.head] as usize] = (2 * e + 1) as u32;
        cursor[edge.head] += 1;
    }

    // Potential init: single pass in id order over the acyclic network.
    let mut potential = vec![INF; n];
    potential[net.source] = 0;
    for v in 0..n {
        if potential[v] == INF {
            continue;
        }
        for &a in &adj[adj_start[v] as usize..adj_start[v + 1] as usize] {
            let a = a as usize;
            if arc_cap[a] > 0 {
                let w = arc_to[a] as usize;
                let cand = potential[v] + arc_cost[a];
                if cand < potential[w] {
                    potential[w] = cand;
                }
            }
        }
    }
    for p in potential.iter_mut() {
        if *p == INF {
            *p = 0;
        }
    }

    let mut dist = vec![INF; n];
    let mut settled = vec![u32::MAX; n];
    let mut labeled = vec![u32::MAX; n];
    let mut parent_arc = vec![u32::MAX; n];
    let mut heap: BinaryHeap<Reverse<(i64, u32)>> = BinaryHeap::new();

    let supply = net.supply();
    let mut shipped = 0i64;
    let mut round = 0u32;
    while shipped < supply {
        heap.clear();
        dist[net.source] = 0;
        labeled[net.source] = round;
        heap.push(Reverse((0, net.source as u32)));
        let mut sink_dist = None;
        while let Some(Reverse((du, u))) = heap.pop() {
            let u = u as usize;
            if settled[u] == round {
                continue;
            }
            settled[u] = round;
            if u == net.sink {
                sink_dist = Some(du);
                break;
            }
            for &a in &adj[adj_start[u] as usize..adj_start[u + 1] as usize] {
                let a = a as usize;
                if arc_cap[a] <= 0 {
                    continue;
                }
                let w = arc_to[a] as usize;
                if settled[w] == round {
                    continue;
                }
                let nd = du + arc_cost[a] + potential[u] - potential[w];
                if labeled[w] != round || nd < dist[w] {
                    labeled[w] = round;
                    dist[w] = nd;
                    parent_arc[w] = a as u32;
                    heap.push(Reverse((nd, w as u32)));
                }
            }
        }
        let sink_dist = sink_dist.ok_or_else(|| {
            HiqError::Infeasible(format!(
                "sink unreachable with {} of {} units shipped",
                shipped, supply
            ))
        })?;

        for v in 0..n {
            potential[v] += if settled[v] == round {
                dist[v]
            } else {
                sink_dist
            };
        }

        let mut bottleneck = supply - shipped;
        let mut v = net.sink;
        while v != net.source {
            let a = parent_arc[v] as usize;
            bottleneck = bottleneck.min(arc_cap[a]);
            v = arc_to[a ^ 1] as usize;
        }
        let mut v = net.sink;
        while v != net.source {
            let a = parent_arc[v] as usize;
            arc_cap[a] -= bottleneck;
            arc_cap[a ^ 1] += bottleneck;
            v = arc_to[a ^ 1] as usize;
        }
        shipped += bottleneck;
        round += 1;
    }

    let mut flow = vec![0i64; m];
    for (e, edge) in net.edges.iter().enumerate() {
        flow[e] = edge.capacity - arc_cap[2 * e];
    }
    let total_cost = net.flow_cost(&flow);

    let mut codes = vec![Vec::new(); net.n_classes];
    for (e, edge) in net.edges.iter().enumerate() {
        if let EdgeKind::Unary { class, dim } = edge.kind {
            if flow[e] > 0 {
                codes[class].push(dim);
            }
        }
    }
    for (p, code) in codes.iter_mut().enumerate() {
        code.sort_unstable();
        debug_assert_eq!(
            code.len(),
            net.sparsity,
            "class {} extracted {} dims, expected {}",
            p,
            code.len(),
            net.sparsity
        );
    }

    Ok(FlowSolution {
        flow,
        total_cost,
        codes,
    })
}

fn validate_codes(
    codes: &[Vec<usize>],
    n_classes: usize,
    dims: usize,
    s_v: usize,
) -> Result<()> {
    if codes.len() != n_classes {
        return Err(HiqError::Input(format!(
            "{} codes for {} classes",
            codes.len(),
            n_classes
        )));
    }
    for (p, code) in codes.iter().enumerate() {
        if code.len() != s_v {
            return Err(HiqError::Input(format!(
                "class {} code has {} active bits, expected {}",
                p,
                code.len(),
                s_v
            )));
        }
        if code.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HiqError::Input(format!(
                "class {} code must be sorted and duplicate-free",
                p
            )));
        }
        if code.iter().any(|&q| q >= dims) {
            return Err(HiqError::Input(format!(
                "class {} code has a dimension outside [0, {})",
                p, dims
            )));
        }
    }
    Ok(())
}

/// Per-dimension collision counts: `y[q]` = number of classes in `members`
/// whose code activates dimension `q`.
fn collision_counts(codes: &[Vec<usize>], members: &[usize], dims: usize) -> Vec<i64> {
    let mut y = vec![0i64; dims];
    for &p in members {
        for &q in &codes[p] {
            y[q] += 1;
        }
    }
    y
}

/// Real-valued assignment objective of a code configuration:
/// `sum_p -c_p.z_p + alpha * sum_sibling-pairs z.z + beta * sum_pairs z.z`,
/// where both pairwise sums run over ordered pairs of distinct classes, so
/// each unordered collision counts twice.
pub fn flow_cost_closed_form(
    codes: &[Vec<usize>],
    costs: ArrayView2<f64>,
    partition: &SiblingPartition,
    s_v: usize,
    cfg: &HashConfig,
) -> Result<f64> {
    let n_c = costs.nrows();
    validate_codes(codes, n_c, cfg.d, s_v)?;
    let mut total = 0.0;
    for (p, code) in codes.iter().enumerate() {
        for &q in code {
            total -= costs[(p, q)];
        }
    }
    // Ordered pairwise collisions via y*(y-1) per dimension.
    for r in 0..partition.group_count() {
        for y in collision_counts(codes, partition.group(r), cfg.d) {
            total += cfg.alpha * (y * (y - 1)) as f64;
        }
    }
    let all: Vec<usize> = (0..n_c).collect();
    for y in collision_counts(codes, &all, cfg.d) {
        total += cfg.beta * (y * (y - 1)) as f64;
    }
    Ok(total)
}

/// Fixed-point assignment objective of a code configuration, using exactly
/// the rounded per-edge costs of the network. Equals the edge-cost total of
/// the induced flow, and of the solver's flow for its own codes.
pub fn fixed_objective(
    codes: &[Vec<usize>],
    costs: ArrayView2<f64>,
    partition: &SiblingPartition,
    s_v: usize,
    cfg: &HashConfig,
) -> Result<i64> {
    let n_c = costs.nrows();
    validate_codes(codes, n_c, cfg.d, s_v)?;
    let scale = cfg.cost_scale;
    let mut total = 0i64;
    for (p, code) in codes.iter().enumerate() {
        for &q in code {
            total -= fixed_cost(costs[(p, q)], scale);
        }
    }
    for r in 0..partition.group_count() {
        for y in collision_counts(codes, partition.group(r), cfg.d) {
            for i in 0..y {
                total += fixed_cost(2.0 * cfg.alpha * i as f64, scale);
            }
        }
    }
    let all: Vec<usize> = (0..n_c).collect();
    for y in collision_counts(codes, &all, cfg.d) {
        for j in 0..y {
            total += fixed_cost(2.0 * cfg.beta * j as f64, scale);
        }
    }
    Ok(total)
}

/// The canonical feasible flow induced by a code configuration: source
/// edges saturated, one unit on each selected unary edge, and the first
/// `y` parallel penalty arcs filled on every dimension with `y` collisions.
pub fn flow_from_codes(
    codes: &[Vec<usize>],
    partition: &SiblingPartition,
    s_v: usize,
    net: &FlowNetwork,
) -> Result<Vec<i64>> {
    validate_codes(codes, net.n_classes(), net.dims(), s_v)?;
    if s_v != net.sparsity() {
        return Err(HiqError::Input(format!(
            "sparsity {} does not match network sparsity {}",
            s_v,
            net.sparsity()
        )));
    }
    let mut group_y = Vec::with_capacity(partition.group_count());
    for r in 0..partition.group_count() {
        group_y.push(collision_counts(codes, partition.group(r), net.dims()));
    }
    let all: Vec<usize> = (0..net.n_classes()).collect();
    let shared_y = collision_counts(codes, &all, net.dims());

    let flow = net
        .edges
        .iter()
        .map(|edge| match edge.kind {
            EdgeKind::Source { .. } => s_v as i64,
            EdgeKind::Unary { class, dim } => i64::from(codes[class].binary_search(&dim).is_ok()),
            EdgeKind::Sibling { group, dim, rank } => i64::from((rank as i64) < group_y[group][dim]),
            EdgeKind::Sink { dim, rank } => i64::from((rank as i64) < shared_y[dim]),
        })
        .collect();
    Ok(flow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn cfg(d: usize, alpha: f64, beta: f64) -> HashConfig {
        HashConfig::new(d, 1, 1, alpha, beta).unwrap()
    }

    #[test]
    fn singleton_class_network_shape() {
        let cfg = cfg(3, 0.5, 0.5);
        let costs = array![[3.0, 1.0, 2.0]];
        let part = SiblingPartition::all_singletons(1);
        let net = FlowNetwork::build(costs.view(), &part, 2, &cfg).unwrap();
        // 1 class vertex, 3 shared dimension vertices, no group blocks.
        assert_eq!(net.n_vertices(), 2 + 1 + 3);
        assert!(net
            .edges()
            .iter()
            .all(|e| !matches!(e.kind, EdgeKind::Sibling { .. })));
        assert_eq!(net.supply(), 2);
    }

    #[test]
    fn parallel_arc_costs_follow_the_penalty_ladder() {
        let alpha = 0.7;
        let beta = 0.3;
        let cfg = cfg(2, alpha, beta);
        let costs = ndarray::Array2::zeros((4, 2));
        let part =
            SiblingPartition::from_groups(vec![vec![0, 1], vec![2, 3]], 4).unwrap();
        let net = FlowNetwork::build(costs.view(), &part, 1, &cfg).unwrap();

        let scale = cfg.cost_scale;
        for r in 0..2 {
            for q in 0..2 {
                let costs: Vec<i64> = net
                    .edges()
                    .iter()
                    .filter(|e| matches!(e.kind, EdgeKind::Sibling { group, dim, .. } if group == r && dim == q))
                    .map(|e| e.cost)
                    .collect();
                assert_eq!(
                    costs,
                    vec![0, fixed_cost(2.0 * alpha, scale)],
                    "group {} dim {}",
                    r,
                    q
                );
            }
        }
        for q in 0..2 {
            let costs: Vec<i64> = net
                .edges()
                .iter()
                .filter(|e| matches!(e.kind, EdgeKind::Sink { dim, .. } if dim == q))
                .map(|e| e.cost)
                .collect();
            let expect: Vec<i64> = (0..4)
                .map(|j| fixed_cost(2.0 * beta * j as f64, scale))
                .collect();
            assert_eq!(costs, expect);
        }
        assert_eq!(net.supply(), 4);
    }

    #[test]
    fn vertex_and_edge_counts_match_construction() {
        let cfg = cfg(3, 0.1, 0.1);
        let costs = ndarray::Array2::zeros((5, 3));
        let part =
            SiblingPartition::from_groups(vec![vec![0, 1, 2], vec![3], vec![4]], 5).unwrap();
        let net = FlowNetwork::build(costs.view(), &part, 1, &cfg).unwrap();
        let (n_c, d, l) = (5, 3, 1);
        let sum_g: usize = 3;
        assert_eq!(net.n_vertices(), 2 + n_c + d * (l + 1));
        assert_eq!(net.edges().len(), n_c + n_c * d + d * sum_g + d * n_c);
    }

    #[test]
    fn solves_single_class_top_k() {
        let cfg = cfg(3, 0.0, 0.0);
        let costs = array![[3.0, 1.0, 2.0]];
        let part = SiblingPartition::all_singletons(1);
        let net = FlowNetwork::build(costs.view(), &part, 2, &cfg).unwrap();
        let sol = solve_min_cost_flow(&net).unwrap();
        assert_eq!(sol.codes, vec![vec![0, 2]]);
        assert_eq!(sol.total_cost, -5 * cfg.cost_scale);
        net.check_flow(&sol.flow).unwrap();
    }

    #[test]
    fn siblings_avoid_collision_when_penalty_dominates() {
        let cfg = cfg(2, 10.0, 1.0);
        let costs = array![[2.0, 1.0], [1.9, 1.0]];
        let part = SiblingPartition::from_groups(vec![vec![0, 1]], 2).unwrap();
        let net = FlowNetwork::build(costs.view(), &part, 1, &cfg).unwrap();
        let sol = solve_min_cost_flow(&net).unwrap();
        // Colliding on dim 0 gains 0.9 of unary value but costs 2a + 2b = 22.
        assert_eq!(sol.codes, vec![vec![0], vec![1]]);
        assert_eq!(sol.total_cost, -3 * cfg.cost_scale);
    }

    #[test]
    fn closed_form_examples() {
        let cfg0 = cfg(3, 0.0, 0.0);
        let part0 = SiblingPartition::all_singletons(1);
        let costs0 = array![[3.0, 1.0, 2.0]];
        let v = flow_cost_closed_form(&[vec![0, 2]], costs0.view(), &part0, 2, &cfg0).unwrap();
        assert_eq!(v, -5.0);

        let cfg1 = cfg(2, 10.0, 1.0);
        let part1 = SiblingPartition::from_groups(vec![vec![0, 1]], 2).unwrap();
        let costs1 = array![[2.0, 1.0], [1.9, 1.0]];
        let v = flow_cost_closed_form(&[vec![0], vec![0]], costs1.view(), &part1, 1, &cfg1)
            .unwrap();
        assert!((v - 18.1).abs() < 1e-12);
    }

    #[test]
    fn closed_form_rejects_sparsity_violations() {
        let cfg = cfg(3, 0.0, 0.0);
        let part = SiblingPartition::all_singletons(1);
        let costs = array![[3.0, 1.0, 2.0]];
        assert!(flow_cost_closed_form(&[vec![0]], costs.view(), &part, 2, &cfg).is_err());
        assert!(flow_cost_closed_form(&[vec![0, 0]], costs.view(), &part, 2, &cfg).is_err());
        assert!(flow_cost_closed_form(&[vec![0, 7]], costs.view(), &part, 2, &cfg).is_err());
    }

    #[test]
    fn solver_flow_cost_equals_fixed_objective_of_its_codes() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..20 {
            let d = rng.random_range(2..=5);
            let n_c = rng.random_range(1..=4);
            let s_v = rng.random_range(1..=2.min(d));
            let cfg = HashConfig::new(
                d,
                1,
                s_v,
                rng.random_range(0.0..2.0),
                rng.random_range(0.0..2.0),
            )
            .unwrap();
            let costs = ndarray::Array2::from_shape_fn((n_c, d), |_| rng.random_range(-1.0..1.0));
            let part = random_partition(n_c, &mut rng);
            let net = FlowNetwork::build(costs.view(), &part, s_v, &cfg).unwrap();
            let sol = solve_min_cost_flow(&net).unwrap();
            net.check_flow(&sol.flow).unwrap();
            let fixed = fixed_objective(&sol.codes, costs.view(), &part, s_v, &cfg).unwrap();
            assert_eq!(sol.total_cost, fixed, "trial {}", trial);
        }
    }

    fn random_partition(n_c: usize, rng: &mut impl rand::Rng) -> SiblingPartition {
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
        SiblingPartition::from_groups(sets, n_c).unwrap()
    }

    #[test]
    fn dimacs_dump_has_problem_and_node_lines() {
        let cfg = cfg(2, 0.5, 0.5);
        let costs = array![[1.0, 2.0], [3.0, 4.0]];
        let part = SiblingPartition::from_groups(vec![vec![0, 1]], 2).unwrap();
        let net = FlowNetwork::build(costs.view(), &part, 1, &cfg).unwrap();
        let dump = net.to_dimacs();
        let lines: Vec<&str> = dump.lines().collect();
        assert!(lines[0].starts_with("c "));
        assert_eq!(
            lines[1],
            format!("p min {} {}", net.n_vertices(), net.edges().len())
        );
        assert_eq!(lines[2], "n 1 2");
        assert!(lines[3].starts_with(&format!("n {} -2", net.n_vertices())));
        assert_eq!(
            dump.lines().filter(|l| l.starts_with("a ")).count(),
            net.edges().len()
        );
    }

    #[test]
    fn zero_classes_yield_empty_solution() {
        let cfg = cfg(3, 1.0, 1.0);
        let costs = ndarray::Array2::zeros((0, 3));
        let part = SiblingPartition::all_singletons(0);
        let net = FlowNetwork::build(costs.view(), &part, 1, &cfg).unwrap();
        assert_eq!(net.supply(), 0);
        let sol = solve_min_cost_flow(&net).unwrap();
        assert_eq!(sol.total_cost, 0);
        assert!(sol.codes.is_empty());
        let flow = flow_from_codes(&[], &part, 1, &net).unwrap();
        net.check_flow(&flow).unwrap();
    }
}
