use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{gap_cost, ConstraintGraph, OrderingError};
use crate::geometry::Point;

/// Node expansions allowed before the search settles for its incumbent.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderResult {
    pub order: Vec<usize>,
    pub cost: f64,
    pub gaps: Vec<[f64; 3]>,
    /// Complete orders reached during the search.
    pub explored_orders: u64,
    pub expansions: u64,
    /// The budget ran out before optimality was proven.
    pub suboptimal: bool,
}

/// Recorded gap: location and the node end it came from
/// (`2 * node` for an entry, `2 * node + 1` for an exit).
#[derive(Debug, Clone, Copy)]
struct Gap {
    p: Point,
    id: u32,
}

struct Costs<'a> {
    g: &'a ConstraintGraph,
    eps: f64,
    weighted: bool,
    /// `matched[a * n + b]`: exit of `a` within `eps` of entry of `b`.
    matched: Vec<bool>,
}

impl<'a> Costs<'a> {
    fn new(g: &'a ConstraintGraph, eps: f64, weighted: bool) -> Self {
        let n = g.len();
        let mut matched = vec![false; n * n];
        for a in 0..n {
            for b in 0..n {
                matched[a * n + b] = a != b && (g.nodes[a].exit - g.nodes[b].entry).norm() <= eps;
            }
        }
        Costs { g, eps, weighted, matched }
    }

    fn matched(&self, a: usize, b: usize) -> bool {
        self.matched[a * self.g.len() + b]
    }

    fn known(&self, gaps: &[Gap], p: &Point) -> bool {
        gaps.iter().any(|q| (q.p - p).norm() <= self.eps)
    }

    /// Cost of moving from `a` to `b`; new gap locations are pushed on `gaps`.
    fn step(&self, a: usize, b: usize, gaps: &mut Vec<Gap>) -> f64 {
        if self.matched(a, b) {
            return 0.0;
        }
        let (na, nb) = (&self.g.nodes[a], &self.g.nodes[b]);
        let mut c = 0.0;
        for (p, theta, id) in [(na.exit, na.exit_theta, 2 * a + 1), (nb.entry, nb.entry_theta, 2 * b)] {
            if !self.known(gaps, &p) {
                let w = if self.weighted { gap_cost(theta) } else { 1.0 };
                gaps.push(Gap { p, id: id as u32 });
                c += w;
            }
        }
        c
    }
}

/// Seam cost of a given order: each transition whose exit and entry are
/// farther apart than `eps_gap` costs its two endpoints, counting every
/// location once.
pub fn evaluate_order(graph: &ConstraintGraph, order: &[usize], eps_gap: f64, weighted: bool) -> (f64, Vec<[f64; 3]>) {
    let c = Costs::new(graph, eps_gap, weighted);
    let mut gaps = Vec::new();
    let cost = order.windows(2).map(|w| c.step(w[0], w[1], &mut gaps)).sum();
    (cost, gaps.iter().map(|g| [g.p.x, g.p.y, g.p.z]).collect())
}

/// Partial orders remembered for pruning repeated states.
const MEMO_CAP: usize = 1 << 22;

/// Random 128-bit keys hashing a search state: placed nodes, last node and
/// recorded gap ends.
struct Zobrist {
    placed: Vec<u128>,
    last: Vec<u128>,
    gap: Vec<u128>,
}

impl Zobrist {
    fn new(n: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut keys = |k: usize| (0..k).map(|_| rng.gen::<u128>()).collect::<Vec<_>>();
        Zobrist { placed: keys(n), last: keys(n), gap: keys(2 * n) }
    }
}

struct Search<'a> {
    c: Costs<'a>,
    succ: Vec<Vec<usize>>,
    /// Matched successors and predecessors of every node.
    match_out: Vec<Vec<usize>>,
    match_in: Vec<Vec<usize>>,
    /// Unplaced nodes whose exit reaches this node's entry, and unplaced
    /// nodes whose entry this node's exit reaches.
    fed: Vec<u32>,
    feeds: Vec<u32>,
    placed: Vec<bool>,
    budget: u64,
    expansions: u64,
    explored: u64,
    best: f64,
    best_order: Vec<usize>,
    out_of_budget: bool,
    zobrist: Zobrist,
    placed_hash: u128,
    memo: HashMap<u128, f64>,
}

const COST_EPS: f64 = 1e-9;

impl<'a> Search<'a> {
    fn new(graph: &'a ConstraintGraph, eps_gap: f64, weighted: bool, budget: u64) -> Self {
        let n = graph.len();
        let c = Costs::new(graph, eps_gap, weighted);
        let match_out: Vec<Vec<usize>> = (0..n).map(|a| (0..n).filter(|&b| c.matched(a, b)).collect()).collect();
        let match_in: Vec<Vec<usize>> = (0..n).map(|b| (0..n).filter(|&a| c.matched(a, b)).collect()).collect();
        Search {
            fed: match_in.iter().map(|v| v.len() as u32).collect(),
            feeds: match_out.iter().map(|v| v.len() as u32).collect(),
            match_out,
            match_in,
            c,
            succ: graph.successors(),
            placed: vec![false; n],
            budget,
            expansions: 0,
            explored: 0,
            best: f64::INFINITY,
            best_order: Vec::new(),
            out_of_budget: false,
            zobrist: Zobrist::new(n),
            placed_hash: 0,
            memo: HashMap::new(),
        }
    }

    fn place(&mut self, r: usize, on: bool) {
        self.placed[r] = on;
        self.placed_hash ^= self.zobrist.placed[r];
        for &b in &self.match_out[r] {
            if on {
                self.fed[b] -= 1;
            } else {
                self.fed[b] += 1;
            }
        }
        for &a in &self.match_in[r] {
            if on {
                self.feeds[a] -= 1;
            } else {
                self.feeds[a] += 1;
            }
        }
    }

    /// Admissible bound on the rest of the order. An entry that no other
    /// remaining exit reaches, or an exit that reaches no remaining entry,
    /// must be paid for unless an earlier gap covers it; locations more than
    /// `2 eps` apart cannot share one gap, and the last exit of the order is
    /// never paid.
    fn lower_bound(&self, last: usize, gaps: &[Gap]) -> f64 {
        let nodes = &self.c.g.nodes;
        let mut packed: Vec<Point> = Vec::new();
        let mut add = |p: Point| {
            if !self.c.known(gaps, &p) && packed.iter().all(|q| (q - p).norm() > 2.0 * self.c.eps) {
                packed.push(p);
            }
        };
        if self.feeds[last] == 0 {
            add(nodes[last].exit);
        }
        for r in (0..nodes.len()).filter(|&r| !self.placed[r]) {
            if self.fed[r] == 0 && !self.c.matched(last, r) {
                add(nodes[r].entry);
            }
            if self.feeds[r] == 0 {
                add(nodes[r].exit);
            }
        }
        (packed.len() as f64 - 1.0).max(0.0)
    }

    /// False when an equal state was already reached at no higher cost.
    fn first_visit(&mut self, last: usize, gaps: &[Gap], cost: f64) -> bool {
        let key = gaps.iter().fold(self.placed_hash ^ self.zobrist.last[last], |h, g| h ^ self.zobrist.gap[g.id as usize]);
        match self.memo.get_mut(&key) {
            Some(c) if *c <= cost + COST_EPS => false,
            Some(c) => {
                *c = cost;
                true
            }
            None => {
                if self.memo.len() < MEMO_CAP {
                    self.memo.insert(key, cost);
                }
                true
            }
        }
    }

    fn dfs(&mut self, order: &mut Vec<usize>, indeg: &mut [u32], gaps: &mut Vec<Gap>, cost: f64) {
        if self.out_of_budget {
            return;
        }
        let n = indeg.len();
        if order.len() == n {
            self.explored += 1;
            if cost < self.best - COST_EPS {
                self.best = cost;
                self.best_order = order.clone();
            }
            return;
        }
        let last = order.last().copied();
        if let Some(l) = last {
            if cost >= self.best - COST_EPS || cost + self.lower_bound(l, gaps) >= self.best - COST_EPS {
                return;
            }
            if !self.first_visit(l, gaps, cost) {
                return;
            }
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| !self.placed[i] && indeg[i] == 0).collect();
        let nodes = &self.c.g.nodes;
        ready.sort_by(|&a, &b| {
            let ma = last.is_some_and(|l| self.c.matched(l, a));
            let mb = last.is_some_and(|l| self.c.matched(l, b));
            mb.cmp(&ma).then(nodes[a].height.total_cmp(&nodes[b].height)).then(a.cmp(&b))
        });
        for r in ready {
            self.expansions += 1;
            if self.expansions > self.budget {
                self.out_of_budget = true;
                return;
            }
            let mark = gaps.len();
            let step = last.map_or(0.0, |l| self.c.step(l, r, gaps));
            for &s in &self.succ[r] {
                indeg[s] -= 1;
            }
            order.push(r);
            self.place(r, true);
            self.dfs(order, indeg, gaps, cost + step);
            self.place(r, false);
            order.pop();
            for &s in &self.succ[r] {
                indeg[s] += 1;
            }
            gaps.truncate(mark);
        }
    }
}

/// Topological order of minimal seam cost by depth-first branch and bound.
pub fn order_paths(graph: &ConstraintGraph, eps_gap: f64, weighted: bool, budget: u64) -> Result<OrderResult, OrderingError> {
    if let Some(c) = graph.find_cycle() {
        return Err(OrderingError::Cycle(c));
    }
    let mut indeg = vec![0u32; graph.len()];
    for &(_, v) in &graph.edges {
        indeg[v] += 1;
    }
    let mut s = Search::new(graph, eps_gap, weighted, budget);
    s.dfs(&mut Vec::new(), &mut indeg, &mut Vec::new(), 0.0);
    let mut suboptimal = s.out_of_budget;
    if s.best_order.len() != graph.len() {
        // budget ran out before a single complete order: fall back to Kahn order
        s.best_order = kahn(graph);
        suboptimal = true;
    }
    let (cost, gaps) = evaluate_order(graph, &s.best_order, eps_gap, weighted);
    Ok(OrderResult { order: s.best_order, cost, gaps, explored_orders: s.explored, expansions: s.expansions, suboptimal })
}

fn kahn(graph: &ConstraintGraph) -> Vec<usize> {
    let succ = graph.successors();
    let mut indeg = vec![0u32; graph.len()];
    for &(_, v) in &graph.edges {
        indeg[v] += 1;
    }
    let mut ready: Vec<usize> = (0..graph.len()).filter(|&i| indeg[i] == 0).rev().collect();
    let mut out = Vec::new();
    while let Some(u) = ready.pop() {
        out.push(u);
        for &v in &succ[u] {
            indeg[v] -= 1;
            if indeg[v] == 0 {
                ready.push(v);
            }
        }
    }
    out
}

/// Calls `f` on every topological order of `graph`.
pub fn enumerate_orders(graph: &ConstraintGraph, mut f: impl FnMut(&[usize])) {
    fn rec(succ: &[Vec<usize>], indeg: &mut [u32], used: &mut [bool], order: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if order.len() == indeg.len() {
            f(order);
            return;
        }
        for u in 0..indeg.len() {
            if used[u] || indeg[u] != 0 {
                continue;
            }
            used[u] = true;
            for &v in &succ[u] {
                indeg[v] -= 1;
            }
            order.push(u);
            rec(succ, indeg, used, order, f);
            order.pop();
            for &v in &succ[u] {
                indeg[v] += 1;
            }
            used[u] = false;
        }
    }
    let succ = graph.successors();
    let mut indeg = vec![0u32; graph.len()];
    for &(_, v) in &graph.edges {
        indeg[v] += 1;
    }
    rec(&succ, &mut indeg, &mut vec![false; graph.len()], &mut Vec::new(), &mut f);
}
