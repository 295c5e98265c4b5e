//! First-level passenger-to-taxi assignment.
//!
//! Every objective reduces to a [`CostModel`]:
//!
//! ```text
//! Σ_p lin[p][y_p] + quad · Σ_v load_v² + chain_w · Σ_v Σ_{p≠q on v} TR(D_p, O_q) + constant
//! ```
//!
//! Linear models are solved row by row, convex load models by min-cost flow
//! with marginal-priced parallel arcs, and anything else by branch-and-bound
//! (small instances) or greedy insertion plus local search.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use thiserror::Error;

use crate::network::TravelTimeMatrix;
use crate::objective::{classify, evaluate, CostComponent, EvalError, ObjectiveClass, ObjectiveSpec};
use crate::sim::DynContext;

/// Largest passenger count handed to branch-and-bound by [`solve`].
pub const DEFAULT_EXACT_THRESHOLD: usize = 10;
/// Local-search move evaluations granted per millisecond of budget.
pub const EVALS_PER_MS: u64 = 10_000;
/// Node limit for branch-and-bound inside [`solve`].
pub const DEFAULT_NODE_CAP: u64 = 5_000_000;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum AssignError {
    #[error("snapshot has no taxis")]
    NoTaxis,
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{passengers} passengers exceed the exact threshold {threshold}")]
    ThresholdExceeded { passengers: usize, threshold: usize },
}

/// `taxi_of[i]` is the vehicle slot (index into `snap.vehicles`) serving the
/// passenger at `snap.passengers[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment {
    pub taxi_of: Vec<usize>,
}

impl Assignment {
    pub fn loads(&self, n_vehicles: usize) -> Vec<usize> {
        let mut loads = vec![0; n_vehicles];
        for &v in &self.taxi_of {
            loads[v] += 1;
        }
        loads
    }

    /// Passenger slots per vehicle slot, in passenger order.
    pub fn groups(&self, n_vehicles: usize) -> Vec<Vec<usize>> {
        let mut g = vec![Vec::new(); n_vehicles];
        for (p, &v) in self.taxi_of.iter().enumerate() {
            g[v].push(p);
        }
        g
    }

    /// passenger id → taxi id
    pub fn to_map(&self, snap: &DynContext) -> BTreeMap<usize, usize> {
        snap.passengers
            .iter()
            .zip(&self.taxi_of)
            .map(|(p, &v)| (p.id, snap.vehicles[v].taxi))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct AssignConfig {
    pub exact_threshold: usize,
    pub budget_ms: u64,
    pub node_cap: u64,
}

impl Default for AssignConfig {
    fn default() -> Self {
        Self {
            exact_threshold: DEFAULT_EXACT_THRESHOLD,
            budget_ms: 50,
            node_cap: DEFAULT_NODE_CAP,
        }
    }
}

/// Dense numeric form of an objective on one snapshot.
#[derive(Clone, Debug)]
pub struct CostModel {
    pub n_p: usize,
    pub n_v: usize,
    /// row-major `n_p × n_v`
    pub lin: Vec<f64>,
    pub quad: f64,
    pub chain_w: f64,
    /// row-major `n_p × n_p`, `TR(D_p, O_q)`
    pub chain: Vec<f64>,
    pub constant: f64,
}

impl CostModel {
    pub fn build(spec: &ObjectiveSpec, snap: &DynContext, matrix: &TravelTimeMatrix) -> Result<Self, AssignError> {
        snap.check_zones(matrix).map_err(EvalError::ZoneOutOfRange)?;
        let n_p = snap.passengers.len();
        let n_v = snap.vehicles.len();
        let mut lin = vec![0.0; n_p * n_v];
        let mut quad = 0.0;
        let mut chain_w = 0.0;
        let mut constant = 0.0;
        for (c, &w) in spec.components.iter().zip(&spec.weights) {
            match c {
                CostComponent::PairLinear(e) => {
                    for (i, p) in snap.passengers.iter().enumerate() {
                        for (j, v) in snap.vehicles.iter().enumerate() {
                            lin[i * n_v + j] += w * e.eval(p, v, matrix, spec.big_m);
                        }
                    }
                }
                CostComponent::LoadQuadratic => quad += w,
                CostComponent::LoadDeviation => {
                    quad += w;
                    if n_v > 0 {
                        constant -= w * (n_p * n_p) as f64 / n_v as f64;
                    }
                }
                CostComponent::ChainQuadratic => chain_w += w,
            }
        }
        let mut chain = vec![0.0; n_p * n_p];
        if chain_w != 0.0 {
            for (i, a) in snap.passengers.iter().enumerate() {
                for (j, b) in snap.passengers.iter().enumerate() {
                    if i != j {
                        chain[i * n_p + j] = matrix.tr(a.destination, b.origin) as f64;
                    }
                }
            }
        }
        Ok(Self {
            n_p,
            n_v,
            lin,
            quad,
            chain_w,
            chain,
            constant,
        })
    }

    #[inline]
    pub fn lin(&self, p: usize, v: usize) -> f64 {
        self.lin[p * self.n_v + v]
    }

    /// Symmetric chain cost of putting `p` and `q` on the same taxi.
    #[inline]
    fn pair(&self, p: usize, q: usize) -> f64 {
        self.chain[p * self.n_p + q] + self.chain[q * self.n_p + p]
    }

    pub fn value(&self, y: &Assignment) -> f64 {
        let mut total = self.constant;
        for (p, &v) in y.taxi_of.iter().enumerate() {
            total += self.lin(p, v);
        }
        for l in y.loads(self.n_v) {
            total += self.quad * (l * l) as f64;
        }
        if self.chain_w != 0.0 {
            let mut s = 0.0;
            for p in 0..self.n_p {
                for q in p + 1..self.n_p {
                    if y.taxi_of[p] == y.taxi_of[q] {
                        s += self.pair(p, q);
                    }
                }
            }
            total += self.chain_w * s;
        }
        total
    }
}

#[inline]
fn tol(x: f64) -> f64 {
    1e-9 * x.abs().max(1.0)
}

/// Solves with default settings and the given local-search budget.
pub fn solve(
    spec: &ObjectiveSpec,
    snap: &DynContext,
    matrix: &TravelTimeMatrix,
    budget_ms: u64,
) -> Result<Assignment, AssignError> {
    let cfg = AssignConfig {
        budget_ms,
        ..AssignConfig::default()
    };
    solve_with(spec, snap, matrix, &cfg)
}

pub fn solve_with(
    spec: &ObjectiveSpec,
    snap: &DynContext,
    matrix: &TravelTimeMatrix,
    cfg: &AssignConfig,
) -> Result<Assignment, AssignError> {
    if snap.vehicles.is_empty() {
        return Err(AssignError::NoTaxis);
    }
    let model = CostModel::build(spec, snap, matrix)?;
    if model.n_p == 0 {
        return Ok(Assignment { taxi_of: Vec::new() });
    }
    Ok(match classify(spec) {
        ObjectiveClass::Linear => solve_linear(&model),
        ObjectiveClass::ConvexLoad => solve_flow(&model),
        ObjectiveClass::GeneralQuadratic => {
            let evals = cfg.budget_ms.saturating_mul(EVALS_PER_MS);
            let start = improve_local_model(&model, greedy(&model), evals);
            if model.n_p <= cfg.exact_threshold {
                bnb(&model, Some(start), cfg.node_cap).0
            } else {
                start
            }
        }
    })
}

/// Per-passenger argmin; exact when the model has no quadratic terms.
pub fn solve_linear(model: &CostModel) -> Assignment {
    let taxi_of = (0..model.n_p)
        .map(|p| {
            let mut best = 0;
            for v in 1..model.n_v {
                if model.lin(p, v) < model.lin(p, best) {
                    best = v;
                }
            }
            best
        })
        .collect();
    Assignment { taxi_of }
}

#[derive(Copy, Clone, PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Edge {
    to: usize,
    cap: u32,
    cost: f64,
}

struct FlowGraph {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl FlowGraph {
    fn new(n: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: vec![Vec::new(); n],
        }
    }

    fn add(&mut self, from: usize, to: usize, cost: f64) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap: 1, cost });
        self.edges.push(Edge { to: from, cap: 0, cost: -cost });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }
}

/// Exact for `quad ≥ 0` and no chain term: successive shortest paths on
/// source → passenger → taxi → sink, where taxi `v` has one unit arc to the
/// sink per possible load `k` priced at the marginal `quad · (2k − 1)`.
pub fn solve_flow(model: &CostModel) -> Assignment {
    debug_assert!(model.chain_w == 0.0 && model.quad >= 0.0);
    if model.quad == 0.0 {
        return solve_linear(model);
    }
    let (n_p, n_v) = (model.n_p, model.n_v);
    let src = 0;
    let sink = n_p + n_v + 1;
    let mut g = FlowGraph::new(n_p + n_v + 2);
    let mut pv_edges = Vec::with_capacity(n_p * n_v);
    for p in 0..n_p {
        g.add(src, 1 + p, 0.0);
        // shifting a row by a constant leaves the argmin unchanged and keeps costs non-negative
        let row_min = (0..n_v).map(|v| model.lin(p, v)).fold(f64::INFINITY, f64::min);
        for v in 0..n_v {
            pv_edges.push(g.add(1 + p, 1 + n_p + v, model.lin(p, v) - row_min));
        }
    }
    for v in 0..n_v {
        for k in 1..=n_p {
            g.add(1 + n_p + v, sink, model.quad * (2 * k - 1) as f64);
        }
    }

    let n = g.adj.len();
    let mut potential = vec![0.0; n];
    let mut dist = vec![f64::INFINITY; n];
    let mut prev_edge = vec![usize::MAX; n];
    for _ in 0..n_p {
        dist.fill(f64::INFINITY);
        prev_edge.fill(usize::MAX);
        dist[src] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(HeapItem { dist: 0.0, node: src });
        while let Some(HeapItem { dist: d, node: u }) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &e in &g.adj[u] {
                let edge = &g.edges[e];
                if edge.cap == 0 {
                    continue;
                }
                let reduced = (edge.cost + potential[u] - potential[edge.to]).max(0.0);
                let nd = d + reduced;
                if nd < dist[edge.to] {
                    dist[edge.to] = nd;
                    prev_edge[edge.to] = e;
                    heap.push(HeapItem { dist: nd, node: edge.to });
                }
            }
        }
        assert!(dist[sink].is_finite(), "flow network always has an augmenting path");
        for (pot, d) in potential.iter_mut().zip(&dist) {
            if d.is_finite() {
                *pot += d;
            }
        }
        let mut node = sink;
        while node != src {
            let e = prev_edge[node];
            g.edges[e].cap -= 1;
            g.edges[e ^ 1].cap += 1;
            node = g.edges[e ^ 1].to;
        }
    }

    let taxi_of = (0..n_p)
        .map(|p| {
            (0..n_v)
                .find(|&v| g.edges[pv_edges[p * n_v + v]].cap == 0)
                .expect("every passenger carries one unit of flow")
        })
        .collect();
    Assignment { taxi_of }
}

/// Exact branch-and-bound for any objective; rejects instances above
/// [`DEFAULT_EXACT_THRESHOLD`] passengers.
pub fn solve_exact_bnb(
    spec: &ObjectiveSpec,
    snap: &DynContext,
    matrix: &TravelTimeMatrix,
) -> Result<Assignment, AssignError> {
    if snap.vehicles.is_empty() {
        return Err(AssignError::NoTaxis);
    }
    if snap.passengers.len() > DEFAULT_EXACT_THRESHOLD {
        return Err(AssignError::ThresholdExceeded {
            passengers: snap.passengers.len(),
            threshold: DEFAULT_EXACT_THRESHOLD,
        });
    }
    let model = CostModel::build(spec, snap, matrix)?;
    Ok(bnb(&model, None, u64::MAX).0)
}

struct Bnb<'a> {
    m: &'a CostModel,
    y: Vec<usize>,
    loads: Vec<usize>,
    /// `s[q * n_v + v]`: symmetric chain cost between `q` and the passengers
    /// already placed on `v`
    s: Vec<f64>,
    /// chain_w · Σ pairs among passengers `k..`, used only when chain_w < 0
    neg_suffix: Vec<f64>,
    best: Option<(f64, Vec<usize>)>,
    nodes: u64,
    cap: u64,
}

impl Bnb<'_> {
    fn marginal(&self, q: usize, v: usize, remaining: usize) -> f64 {
        let m = self.m;
        let l = self.loads[v] as f64;
        let load = if m.quad >= 0.0 {
            m.quad * (2.0 * l + 1.0)
        } else {
            m.quad * (2.0 * l + remaining as f64)
        };
        m.lin(q, v) + load + m.chain_w * self.s[q * m.n_v + v]
    }

    fn bound(&self, k: usize, partial: f64) -> f64 {
        let remaining = self.m.n_p - k;
        let mut b = partial + self.neg_suffix[k];
        for q in k..self.m.n_p {
            b += (0..self.m.n_v)
                .map(|v| self.marginal(q, v, remaining))
                .fold(f64::INFINITY, f64::min);
        }
        b
    }

    fn place(&mut self, p: usize, v: usize, sign: f64) {
        let m = self.m;
        for q in p + 1..m.n_p {
            self.s[q * m.n_v + v] += sign * m.pair(p, q);
        }
        if sign > 0.0 {
            self.loads[v] += 1;
        } else {
            self.loads[v] -= 1;
        }
    }

    fn dfs(&mut self, k: usize, partial: f64) {
        self.nodes += 1;
        if self.nodes > self.cap {
            return;
        }
        let m = self.m;
        if k == m.n_p {
            let better = match &self.best {
                None => true,
                Some((bv, by)) => partial < bv - tol(*bv) || (partial <= bv + tol(*bv) && self.y < *by),
            };
            if better {
                self.best = Some((partial, self.y.clone()));
            }
            return;
        }
        if let Some((bv, _)) = &self.best {
            if self.bound(k, partial) > bv + tol(*bv) {
                return;
            }
        }
        for v in 0..m.n_v {
            let l = self.loads[v] as f64;
            let inc = m.lin(k, v) + m.quad * (2.0 * l + 1.0) + m.chain_w * self.s[k * m.n_v + v];
            self.y.push(v);
            self.place(k, v, 1.0);
            self.dfs(k + 1, partial + inc);
            self.place(k, v, -1.0);
            self.y.pop();
        }
    }
}

/// Returns the lexicographically smallest optimal assignment (or the best
/// found when the node cap is hit) and whether the search completed.
fn bnb(model: &CostModel, incumbent: Option<Assignment>, cap: u64) -> (Assignment, bool) {
    let n_p = model.n_p;
    let mut neg_suffix = vec![0.0; n_p + 1];
    if model.chain_w < 0.0 {
        for k in (0..n_p).rev() {
            let row: f64 = (k + 1..n_p).map(|q| model.pair(k, q)).sum();
            neg_suffix[k] = neg_suffix[k + 1] + model.chain_w * row;
        }
    }
    let best = incumbent.map(|a| (model.value(&a) - model.constant, a.taxi_of));
    let mut b = Bnb {
        m: model,
        y: Vec::with_capacity(n_p),
        loads: vec![0; model.n_v],
        s: vec![0.0; n_p * model.n_v],
        neg_suffix,
        best,
        nodes: 0,
        cap,
    };
    b.dfs(0, 0.0);
    let complete = b.nodes <= cap;
    let (_, taxi_of) = b.best.expect("search visits at least one leaf or has an incumbent");
    (Assignment { taxi_of }, complete)
}

/// Passengers in order, each to the taxi with the smallest incremental cost.
pub fn greedy(model: &CostModel) -> Assignment {
    let (n_p, n_v) = (model.n_p, model.n_v);
    let mut loads = vec![0usize; n_v];
    let mut s = vec![0.0; n_p * n_v];
    let mut taxi_of = Vec::with_capacity(n_p);
    for p in 0..n_p {
        let inc = |v: usize| model.lin(p, v) + model.quad * (2 * loads[v] + 1) as f64 + model.chain_w * s[p * n_v + v];
        let mut best = 0;
        for v in 1..n_v {
            if inc(v) < inc(best) {
                best = v;
            }
        }
        taxi_of.push(best);
        loads[best] += 1;
        if model.chain_w != 0.0 {
            for q in p + 1..n_p {
                s[q * n_v + best] += model.pair(p, q);
            }
        }
    }
    Assignment { taxi_of }
}

/// Relocate/swap descent from `start`; the result is never worse than `start`.
pub fn improve_local(
    start: Assignment,
    spec: &ObjectiveSpec,
    snap: &DynContext,
    matrix: &TravelTimeMatrix,
    budget_ms: u64,
) -> Result<Assignment, AssignError> {
    evaluate(spec, &start, snap, matrix)?;
    let model = CostModel::build(spec, snap, matrix)?;
    Ok(improve_local_model(&model, start, budget_ms.saturating_mul(EVALS_PER_MS)))
}

/// First-improvement descent bounded by `max_evals` move evaluations.
pub fn improve_local_model(model: &CostModel, start: Assignment, max_evals: u64) -> Assignment {
    let (n_p, n_v) = (model.n_p, model.n_v);
    if max_evals == 0 || n_p == 0 {
        return start;
    }
    let mut y = start.taxi_of;
    let mut loads = vec![0usize; n_v];
    for &v in &y {
        loads[v] += 1;
    }
    let chained = model.chain_w != 0.0;
    // s[x * n_v + v] = Σ_{r on v, r ≠ x} pair(x, r)
    let mut s = vec![0.0; n_p * n_v];
    if chained {
        for x in 0..n_p {
            for r in 0..n_p {
                if r != x {
                    s[x * n_v + y[r]] += model.pair(x, r);
                }
            }
        }
    }
    let mut evals = 0u64;

    let move_passenger = |y: &mut Vec<usize>, loads: &mut Vec<usize>, s: &mut Vec<f64>, p: usize, to: usize| {
        let from = y[p];
        if chained {
            for x in 0..n_p {
                if x != p {
                    let c = model.pair(x, p);
                    s[x * n_v + from] -= c;
                    s[x * n_v + to] += c;
                }
            }
        }
        loads[from] -= 1;
        loads[to] += 1;
        y[p] = to;
    };

    loop {
        let mut improved = false;
        for p in 0..n_p {
            for b in 0..n_v {
                let a = y[p];
                if a == b {
                    continue;
                }
                if evals >= max_evals {
                    return Assignment { taxi_of: y };
                }
                evals += 1;
                let delta = model.lin(p, b) - model.lin(p, a)
                    + model.quad * (2.0 * loads[b] as f64 - 2.0 * loads[a] as f64 + 2.0)
                    + model.chain_w * (s[p * n_v + b] - s[p * n_v + a]);
                if delta < -1e-9 {
                    move_passenger(&mut y, &mut loads, &mut s, p, b);
                    improved = true;
                }
            }
        }
        for p in 0..n_p {
            for q in p + 1..n_p {
                let (a, b) = (y[p], y[q]);
                if a == b {
                    continue;
                }
                if evals >= max_evals {
                    return Assignment { taxi_of: y };
                }
                evals += 1;
                let pq = model.pair(p, q);
                let delta = model.lin(p, b) + model.lin(q, a) - model.lin(p, a) - model.lin(q, b)
                    + model.chain_w
                        * ((s[p * n_v + b] - pq) - s[p * n_v + a] + (s[q * n_v + a] - pq) - s[q * n_v + b]);
                if delta < -1e-9 {
                    move_passenger(&mut y, &mut loads, &mut s, p, b);
                    move_passenger(&mut y, &mut loads, &mut s, q, a);
                    improved = true;
                }
            }
        }
        if !improved {
            return Assignment { taxi_of: y };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{PassengerRequest, ZoneId};
    use crate::objective::builtin;
    use crate::sim::VehicleState;

    fn veh(taxi: usize, zone: usize) -> VehicleState {
        VehicleState {
            taxi,
            zone: ZoneId(zone),
            free_at: 0,
        }
    }

    fn pass(id: usize, o: usize, d: usize) -> PassengerRequest {
        PassengerRequest {
            id,
            origin: ZoneId(o),
            destination: ZoneId(d),
            request_time: 0,
        }
    }

    fn enumerate_min(spec: &ObjectiveSpec, snap: &DynContext, m: &TravelTimeMatrix) -> f64 {
        let (p, v) = (snap.passengers.len(), snap.vehicles.len());
        let mut best = f64::INFINITY;
        for code in 0..v.pow(p as u32) {
            let mut c = code;
            let taxi_of = (0..p)
                .map(|_| {
                    let t = c % v;
                    c /= v;
                    t
                })
                .collect();
            best = best.min(evaluate(spec, &Assignment { taxi_of }, snap, m).unwrap());
        }
        best
    }

    #[test]
    fn co_located_linear() {
        let m = TravelTimeMatrix::from_rows(vec![vec![0, 300, 600], vec![300, 0, 600], vec![600, 600, 0]]).unwrap();
        let snap = DynContext {
            clock: 0,
            vehicles: vec![veh(0, 0), veh(1, 1)],
            passengers: vec![pass(0, 0, 2), pass(1, 1, 2)],
        };
        let spec = builtin("distance").unwrap();
        let y = solve(&spec, &snap, &m, 10).unwrap();
        assert_eq!(y.taxi_of, vec![0, 1]);
        assert_eq!(evaluate(&spec, &y, &snap, &m).unwrap(), enumerate_min(&spec, &snap, &m));
    }

    #[test]
    fn balanced_utilization() {
        let m = TravelTimeMatrix::from_rows(vec![vec![0, 100], vec![100, 0]]).unwrap();
        let snap = DynContext {
            clock: 0,
            vehicles: vec![veh(0, 0), veh(1, 1)],
            passengers: (0..4).map(|i| pass(i, 0, 1)).collect(),
        };
        let spec = builtin("utilization").unwrap();
        let y = solve(&spec, &snap, &m, 10).unwrap();
        assert_eq!(y.loads(2), vec![2, 2]);
        assert_eq!(evaluate(&spec, &y, &snap, &m).unwrap(), 8.0);
        let skewed = Assignment { taxi_of: vec![0, 0, 0, 1] };
        assert_eq!(evaluate(&spec, &skewed, &snap, &m).unwrap(), 10.0);
    }

    #[test]
    fn single_passenger_goes_to_argmin() {
        let m = TravelTimeMatrix::from_rows(vec![vec![0, 100, 50], vec![100, 0, 70], vec![50, 70, 0]]).unwrap();
        let snap = DynContext {
            clock: 0,
            vehicles: vec![veh(0, 1), veh(1, 2), veh(2, 0)],
            passengers: vec![pass(0, 0, 1)],
        };
        let mut spec = builtin("default_composite").unwrap();
        spec.components.push(CostComponent::ChainQuadratic);
        spec.weights.push(3.0);
        let y = solve(&spec, &snap, &m, 10).unwrap();
        let values: Vec<f64> = (0..3)
            .map(|v| evaluate(&spec, &Assignment { taxi_of: vec![v] }, &snap, &m).unwrap())
            .collect();
        let best = (0..3).fold(0, |b, v| if values[v] < values[b] { v } else { b });
        assert_eq!(y.taxi_of, vec![best]);
    }

    #[test]
    fn zero_budget_returns_start() {
        let m = TravelTimeMatrix::from_rows(vec![vec![0, 100], vec![100, 0]]).unwrap();
        let snap = DynContext {
            clock: 0,
            vehicles: vec![veh(0, 0), veh(1, 1)],
            passengers: (0..3).map(|i| pass(i, 0, 1)).collect(),
        };
        let spec = builtin("utilization").unwrap();
        let start = Assignment { taxi_of: vec![0, 0, 0] };
        assert_eq!(improve_local(start.clone(), &spec, &snap, &m, 0).unwrap(), start);
        let better = improve_local(start.clone(), &spec, &snap, &m, 1).unwrap();
        assert!(evaluate(&spec, &better, &snap, &m).unwrap() < evaluate(&spec, &start, &snap, &m).unwrap());
    }

    #[test]
    fn bnb_threshold() {
        let m = TravelTimeMatrix::from_rows(vec![vec![0, 100], vec![100, 0]]).unwrap();
        let snap = DynContext {
            clock: 0,
            vehicles: vec![veh(0, 0)],
            passengers: (0..11).map(|i| pass(i, 0, 1)).collect(),
        };
        assert!(matches!(
            solve_exact_bnb(&builtin("distance").unwrap(), &snap, &m),
            Err(AssignError::ThresholdExceeded { .. })
        ));
    }

    #[test]
    fn model_matches_evaluate() {
        let m = TravelTimeMatrix::from_rows(vec![vec![0, 120, 40], vec![90, 0, 70], vec![30, 60, 0]]).unwrap();
        let snap = DynContext {
            clock: 5,
            vehicles: vec![veh(0, 1), veh(1, 2)],
            passengers: vec![pass(0, 0, 1), pass(1, 2, 0), pass(2, 1, 2)],
        };
        let spec = ObjectiveSpec::new(
            vec![
                CostComponent::PairLinear(crate::objective::parse_expr("TR_trip - 2 * abs(time_gap)").unwrap()),
                CostComponent::LoadDeviation,
                CostComponent::ChainQuadratic,
            ],
            vec![1.0, 0.5, -0.25],
        );
        let model = CostModel::build(&spec, &snap, &m).unwrap();
        for code in 0..8 {
            let y = Assignment {
                taxi_of: vec![code & 1, (code >> 1) & 1, (code >> 2) & 1],
            };
            let a = model.value(&y);
            let b = evaluate(&spec, &y, &snap, &m).unwrap();
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }
}
