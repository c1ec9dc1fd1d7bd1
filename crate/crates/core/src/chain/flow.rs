//! Dinic max-flow over integer capacities.
//!
//! Edges are scanned in insertion order, so equal inputs give equal flows.

use num_bigint::BigInt;
use num_traits::{Signed, Zero};

/// Integer capacity arithmetic the solver needs.
pub trait Capacity: Clone + Ord + std::fmt::Debug {
    fn zero() -> Self;
    fn plus(&self, other: &Self) -> Self;
    fn minus(&self, other: &Self) -> Self;
    fn is_positive(&self) -> bool;
}

impl Capacity for u64 {
    fn zero() -> Self {
        0
    }
    fn plus(&self, other: &Self) -> Self {
        self.saturating_add(*other)
    }
    fn minus(&self, other: &Self) -> Self {
        self - other
    }
    fn is_positive(&self) -> bool {
        *self > 0
    }
}

impl Capacity for BigInt {
    fn zero() -> Self {
        Zero::zero()
    }
    fn plus(&self, other: &Self) -> Self {
        self + other
    }
    fn minus(&self, other: &Self) -> Self {
        self - other
    }
    fn is_positive(&self) -> bool {
        Signed::is_positive(self)
    }
}

#[derive(Clone, Debug)]
struct Edge<C> {
    to: usize,
    cap: C,
}

/// A directed network; edge `2i` is the `i`-th added edge and `2i + 1` its
/// residual twin.
#[derive(Clone, Debug)]
pub struct FlowNetwork<C> {
    edges: Vec<Edge<C>>,
    original: Vec<C>,
    adj: Vec<Vec<usize>>,
}

impl<C: Capacity> FlowNetwork<C> {
    pub fn new(nodes: usize) -> Self {
        FlowNetwork {
            edges: Vec::new(),
            original: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    /// Adds `u → v` and returns its id for [`FlowNetwork::flow_on`].
    pub fn add_edge(&mut self, u: usize, v: usize, cap: C) -> usize {
        let id = self.original.len();
        self.adj[u].push(self.edges.len());
        self.edges.push(Edge { to: v, cap: cap.clone() });
        self.adj[v].push(self.edges.len());
        self.edges.push(Edge { to: u, cap: C::zero() });
        self.original.push(cap);
        id
    }

    /// Flow currently routed through edge `id`.
    pub fn flow_on(&self, id: usize) -> C {
        self.original[id].minus(&self.edges[2 * id].cap)
    }

    pub fn max_flow(&mut self, s: usize, t: usize) -> C {
        let mut total = C::zero();
        loop {
            let level = self.levels(s);
            if level[t] == usize::MAX {
                return total;
            }
            let mut next = vec![0usize; self.adj.len()];
            loop {
                let pushed = self.augment(s, t, None, &level, &mut next);
                match pushed {
                    Some(f) if f.is_positive() => total = total.plus(&f),
                    _ => break,
                }
            }
        }
    }

    fn levels(&self, s: usize) -> Vec<usize> {
        let mut level = vec![usize::MAX; self.adj.len()];
        let mut queue = std::collections::VecDeque::new();
        level[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let Edge { to, cap } = &self.edges[e];
                if cap.is_positive() && level[*to] == usize::MAX {
                    level[*to] = level[u] + 1;
                    queue.push_back(*to);
                }
            }
        }
        level
    }

    /// Pushes one blocking-flow path; `limit = None` means unbounded.
    fn augment(&mut self, u: usize, t: usize, limit: Option<C>, level: &[usize], next: &mut [usize]) -> Option<C> {
        if u == t {
            return limit;
        }
        while next[u] < self.adj[u].len() {
            let e = self.adj[u][next[u]];
            let to = self.edges[e].to;
            if self.edges[e].cap.is_positive() && level[to] == level[u] + 1 {
                let cap = self.edges[e].cap.clone();
                let room = match &limit {
                    Some(l) if *l < cap => l.clone(),
                    _ => cap,
                };
                if let Some(f) = self.augment(to, t, Some(room), level, next) {
                    if f.is_positive() {
                        self.edges[e].cap = self.edges[e].cap.minus(&f);
                        self.edges[e ^ 1].cap = self.edges[e ^ 1].cap.plus(&f);
                        return Some(f);
                    }
                }
            }
            next[u] += 1;
        }
        None
    }
}
