//! Increasing chains `T_1 ⊂ T_2 ⊂ ⋯` of uniform trees.
//!
//! For each size `k` an exact coupling of the uniform laws on sizes `k` and
//! `k + 1`, supported on containment pairs, is found as an integer max-flow.
//! Chaining those couplings gives nested trees that are each exactly
//! uniform. Past the enumerated sizes growth falls back to attaching a new
//! last child under a uniformly chosen vertex, which keeps nesting but not
//! uniformity, and every such step is flagged.

pub mod flow;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::rng::RngHandle;
use crate::trees::{enumerate_trees, OrderedTree, TruncatedTree, TruncationStatus, DEFAULT_ENUMERATION_CAP};
use flow::FlowNetwork;

/// Largest source size with an exact plan unless configured otherwise.
pub const DEFAULT_EXACT_CAP: u64 = 9;

/// All trees of one size with a reverse index.
#[derive(Debug)]
pub struct ShapeSet {
    pub k: u64,
    pub trees: Vec<OrderedTree>,
    index: HashMap<Vec<u32>, u32>,
}

impl ShapeSet {
    pub fn new(k: u64) -> Result<Self> {
        let trees = enumerate_trees(k, DEFAULT_ENUMERATION_CAP)?;
        let index = trees
            .iter()
            .enumerate()
            .map(|(i, t)| (t.degrees().to_vec(), i as u32))
            .collect();
        Ok(ShapeSet { k, trees, index })
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn index_of(&self, t: &OrderedTree) -> Result<u32> {
        self.index
            .get(t.degrees())
            .copied()
            .ok_or_else(|| Error::UnknownShape(t.encode()))
    }
}

/// Exact coupling of the uniform laws on sizes `k` and `k + 1`.
///
/// `flow(i, j) / (c_k c_{k+1})` is the probability of the pair
/// `(small[i], large[j])`; row flows total `c_{k+1}` and column flows
/// total `c_k`.
#[derive(Debug)]
pub struct TransportPlan {
    pub k: u64,
    pub small: Arc<ShapeSet>,
    pub large: Arc<ShapeSet>,
    rows: Vec<Vec<(u32, u64)>>,
    cols: Vec<Vec<(u32, u64)>>,
    row_total: u64,
    col_total: u64,
}

impl TransportPlan {
    fn from_flows(k: u64, small: Arc<ShapeSet>, large: Arc<ShapeSet>, entries: Vec<(u32, u32, u64)>) -> Self {
        let mut rows = vec![Vec::new(); small.len()];
        let mut cols = vec![Vec::new(); large.len()];
        for (i, j, f) in entries {
            if f > 0 {
                rows[i as usize].push((j, f));
                cols[j as usize].push((i, f));
            }
        }
        for r in rows.iter_mut() {
            r.sort_unstable();
        }
        for c in cols.iter_mut() {
            c.sort_unstable();
        }
        let row_total = large.len() as u64;
        let col_total = small.len() as u64;
        TransportPlan {
            k,
            small,
            large,
            rows,
            cols,
            row_total,
            col_total,
        }
    }

    /// Probability of the pair `(small[i], large[j])`.
    pub fn weight(&self, i: u32, j: u32) -> BigRational {
        let f = self.rows[i as usize]
            .iter()
            .find(|&&(jj, _)| jj == j)
            .map_or(0, |&(_, f)| f);
        BigRational::new(BigInt::from(f), BigInt::from(self.row_total) * BigInt::from(self.col_total))
    }

    /// Every positive entry as `(i, j, weight)`, row by row.
    pub fn entries(&self) -> Vec<(u32, u32, BigRational)> {
        let den = BigInt::from(self.row_total) * BigInt::from(self.col_total);
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| {
                let den = den.clone();
                r.iter()
                    .map(move |&(j, f)| (i as u32, j, BigRational::new(BigInt::from(f), den.clone())))
            })
            .collect()
    }

    pub fn row(&self, i: u32) -> &[(u32, u64)] {
        &self.rows[i as usize]
    }

    pub fn column(&self, j: u32) -> &[(u32, u64)] {
        &self.cols[j as usize]
    }

    /// Largest deviation of any row sum from `1/c_k` or column sum from
    /// `1/c_{k+1}`; zero for a valid plan.
    pub fn marginal_residual(&self) -> BigRational {
        let den = BigInt::from(self.row_total) * BigInt::from(self.col_total);
        let mut worst = BigRational::zero();
        let row_target = BigRational::new(BigInt::from(1), BigInt::from(self.col_total));
        let col_target = BigRational::new(BigInt::from(1), BigInt::from(self.row_total));
        for r in &self.rows {
            let s: u64 = r.iter().map(|&(_, f)| f).sum();
            let d = (BigRational::new(BigInt::from(s), den.clone()) - row_target.clone()).abs();
            worst = worst.max(d);
        }
        for c in &self.cols {
            let s: u64 = c.iter().map(|&(_, f)| f).sum();
            let d = (BigRational::new(BigInt::from(s), den.clone()) - col_target.clone()).abs();
            worst = worst.max(d);
        }
        worst
    }

    /// First support pair that is not a containment pair, if any.
    pub fn non_containment_pair(&self) -> Option<(u32, u32)> {
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, _) in r {
                if !crate::trees::contains(&self.small.trees[i], &self.large.trees[j as usize]) {
                    return Some((i as u32, j));
                }
            }
        }
        None
    }

    /// Draws the larger shape given the smaller one.
    pub fn step_forward(&self, i: u32, rng: &mut RngHandle) -> u32 {
        pick(&self.rows[i as usize], rng.below(self.row_total))
    }

    /// Draws the smaller shape given the larger one.
    pub fn step_back(&self, j: u32, rng: &mut RngHandle) -> u32 {
        pick(&self.cols[j as usize], rng.below(self.col_total))
    }

    /// CSV rows of canonical text forms and reduced weights.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tree_k_canonical", "tree_k1_canonical", "weight_numerator", "weight_denominator"])?;
        for (i, j, wgt) in self.entries() {
            w.write_record([
                self.small.trees[i as usize].encode(),
                self.large.trees[j as usize].encode(),
                wgt.numer().to_string(),
                wgt.denom().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a plan written by [`TransportPlan::write_csv`] and checks it.
    pub fn read_csv<R: std::io::Read>(k: u64, small: Arc<ShapeSet>, large: Arc<ShapeSet>, input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let scale = BigInt::from(small.len() as u64) * BigInt::from(large.len() as u64);
        let mut entries = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 4 {
                return Err(domain("plan rows need four fields"));
            }
            let a = small.index_of(&OrderedTree::decode(&rec[0])?)?;
            let b = large.index_of(&OrderedTree::decode(&rec[1])?)?;
            let num: BigInt = rec[2].parse().map_err(|_| domain("bad weight numerator"))?;
            let den: BigInt = rec[3].parse().map_err(|_| domain("bad weight denominator"))?;
            if den.is_zero() {
                return Err(domain("zero weight denominator"));
            }
            let f = BigRational::new(num, den) * BigRational::from_integer(scale.clone());
            if !f.is_integer() {
                return Err(domain("plan weight is not a multiple of 1/(c_k c_{k+1})"));
            }
            let f = f.to_integer().to_u64().ok_or_else(|| domain("plan weight out of range"))?;
            entries.push((a, b, f));
        }
        let plan = TransportPlan::from_flows(k, small, large, entries);
        if !plan.marginal_residual().is_zero() || plan.non_containment_pair().is_some() {
            return Err(domain(format!("cached plan for size {k} is invalid")));
        }
        Ok(plan)
    }
}

fn pick(cells: &[(u32, u64)], mut r: u64) -> u32 {
    for &(j, f) in cells {
        if r < f {
            return j;
        }
        r -= f;
    }
    unreachable!("cell flows cover the draw range")
}

fn solve_plan(k: u64, small: Arc<ShapeSet>, large: Arc<ShapeSet>) -> Result<TransportPlan> {
    let (ns, nl) = (small.len(), large.len());
    let source = ns + nl;
    let sink = source + 1;
    let mut g = FlowNetwork::<u64>::new(ns + nl + 2);
    for i in 0..ns {
        g.add_edge(source, i, nl as u64);
    }
    let unbounded = (ns as u64) * (nl as u64);
    let mut pair_edges = Vec::new();
    for (j, t) in large.trees.iter().enumerate() {
        for leaf in t.removable_leaves() {
            let i = small.index_of(&t.remove_leaf(leaf))?;
            let id = g.add_edge(i as usize, ns + j, unbounded);
            pair_edges.push((i, j as u32, id));
        }
    }
    for j in 0..nl {
        g.add_edge(ns + j, sink, ns as u64);
    }
    let flow = g.max_flow(source, sink);
    if flow != unbounded {
        return Err(Error::Infeasible {
            k: k as usize,
            flow: flow.to_string(),
            required: unbounded.to_string(),
        });
    }
    // removing different leaves can give the same smaller tree
    let mut merged: HashMap<(u32, u32), u64> = HashMap::new();
    for (i, j, id) in pair_edges {
        *merged.entry((i, j)).or_default() += g.flow_on(id);
    }
    let entries = merged.into_iter().map(|((i, j), f)| (i, j, f)).collect();
    Ok(TransportPlan::from_flows(k, small, large, entries))
}

/// Exact plan from size `k` to size `k + 1`.
pub fn build_transport(k: u64) -> Result<TransportPlan> {
    if k == 0 {
        return Err(domain("tree sizes start at 1"));
    }
    let small = Arc::new(ShapeSet::new(k)?);
    let large = Arc::new(ShapeSet::new(k + 1)?);
    solve_plan(k, small, large)
}

/// Plans for every size from 1 to `exact_cap`.
#[derive(Debug)]
pub struct ChainPlans {
    shapes: Vec<Arc<ShapeSet>>,
    plans: Vec<TransportPlan>,
}

impl ChainPlans {
    pub fn build(exact_cap: u64) -> Result<Self> {
        Self::load_or_build(exact_cap, None)
    }

    /// Reuses plans cached as CSV files in `cache_dir`, solving and writing
    /// any that are missing or invalid.
    pub fn load_or_build(exact_cap: u64, cache_dir: Option<&Path>) -> Result<Self> {
        if exact_cap + 1 > DEFAULT_ENUMERATION_CAP {
            return Err(Error::Resource(format!(
                "exact plans up to size {} exceed the enumeration cap {DEFAULT_ENUMERATION_CAP}",
                exact_cap + 1
            )));
        }
        let shapes: Vec<Arc<ShapeSet>> = (1..=exact_cap + 1)
            .map(|k| ShapeSet::new(k).map(Arc::new))
            .collect::<Result<_>>()?;
        let mut plans = Vec::new();
        for k in 1..=exact_cap {
            let small = shapes[k as usize - 1].clone();
            let large = shapes[k as usize].clone();
            let cached = cache_dir.and_then(|d| {
                let f = fs::File::open(plan_path(d, k)).ok()?;
                TransportPlan::read_csv(k, small.clone(), large.clone(), f).ok()
            });
            let plan = match cached {
                Some(p) => p,
                None => {
                    let p = solve_plan(k, small, large)?;
                    if let Some(d) = cache_dir {
                        fs::create_dir_all(d)?;
                        p.write_csv(fs::File::create(plan_path(d, k))?)?;
                    }
                    p
                }
            };
            plans.push(plan);
        }
        Ok(ChainPlans { shapes, plans })
    }

    pub fn exact_cap(&self) -> u64 {
        self.plans.len() as u64
    }

    /// Largest size reached by exact steps.
    pub fn exact_size(&self) -> u64 {
        self.exact_cap() + 1
    }

    pub fn plan(&self, k: u64) -> Option<&TransportPlan> {
        self.plans.get((k as usize).checked_sub(1)?)
    }

    pub fn shapes(&self, k: u64) -> Option<&Arc<ShapeSet>> {
        self.shapes.get((k as usize).checked_sub(1)?)
    }

    /// One exact forward step from the tree `t`.
    pub fn chain_step_exact(&self, t: &OrderedTree, rng: &mut RngHandle) -> Result<OrderedTree> {
        let k = t.size() as u64;
        let plan = self
            .plan(k)
            .ok_or_else(|| domain(format!("no exact plan from size {k}")))?;
        let i = plan.small.index_of(t)?;
        let j = plan.step_forward(i, rng);
        Ok(plan.large.trees[j as usize].clone())
    }

    /// Shape indices of an exact chain from size 1 up to `k`.
    pub(crate) fn exact_indices(&self, k: u64, rng: &mut RngHandle) -> Vec<u32> {
        let mut out = vec![0u32];
        for s in 1..k {
            let i = *out.last().expect("non-empty");
            out.push(self.plans[s as usize - 1].step_forward(i, rng));
        }
        out
    }

    /// Walks down from shape `j` of size `from` to size `to`, returning
    /// indices for sizes `to..=from`.
    pub(crate) fn descend(&self, from: u64, j: u32, to: u64, rng: &mut RngHandle) -> Vec<u32> {
        let mut out = vec![j];
        let mut cur = j;
        for s in (to..from).rev() {
            cur = self.plans[s as usize - 1].step_back(cur, rng);
            out.push(cur);
        }
        out.reverse();
        out
    }
}

fn plan_path(dir: &Path, k: u64) -> PathBuf {
    dir.join(format!("plan_k{k}.csv"))
}

/// Attaches a new last child under a uniformly chosen vertex.
pub fn heuristic_grow(t: &OrderedTree, rng: &mut RngHandle) -> OrderedTree {
    let v = rng.below(t.size() as u64) as usize;
    t.append_child(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StepMode {
    Exact,
    Heuristic,
}

/// `T_1 ⊂ ⋯ ⊂ T_K` with the mode of each step.
#[derive(Clone, Debug)]
pub struct ChainSample {
    pub trees: Vec<OrderedTree>,
    /// Largest size produced by exact steps only.
    pub exact_upto: u64,
    /// `modes[i]` produced `trees[i + 1]`.
    pub modes: Vec<StepMode>,
}

/// Runs the chain to size `k_max`.
pub fn sample_chain(k_max: u64, plans: &ChainPlans, rng: &mut RngHandle) -> Result<ChainSample> {
    if k_max == 0 {
        return Err(domain("tree sizes start at 1"));
    }
    let exact_top = k_max.min(plans.exact_size());
    let idx = plans.exact_indices(exact_top, rng);
    let mut trees: Vec<OrderedTree> = idx
        .iter()
        .enumerate()
        .map(|(s, &i)| plans.shapes[s].trees[i as usize].clone())
        .collect();
    let mut modes = vec![StepMode::Exact; trees.len() - 1];
    while (trees.len() as u64) < k_max {
        let next = heuristic_grow(trees.last().expect("non-empty"), rng);
        trees.push(next);
        modes.push(StepMode::Heuristic);
    }
    Ok(ChainSample {
        trees,
        exact_upto: exact_top,
        modes,
    })
}

/// Depth-limited view of a tree under heuristic growth: vertices up to the
/// horizon are kept explicitly, deeper ones are only counted.
#[derive(Clone, Debug)]
pub(crate) struct PrefixGrower {
    horizon: u32,
    children: Vec<Vec<u32>>,
    depth: Vec<u32>,
    deeper: u64,
}

impl PrefixGrower {
    pub(crate) fn from_tree(t: &OrderedTree, horizon: u32) -> Self {
        let mut g = PrefixGrower {
            horizon,
            children: Vec::new(),
            depth: Vec::new(),
            deeper: 0,
        };
        // preorder index -> explicit id
        let mut ids: Vec<u32> = Vec::with_capacity(t.size());
        let mut parents: Vec<u32> = Vec::new();
        let mut remaining: Vec<u32> = Vec::new();
        for &d in t.degrees() {
            let depth = parents.len() as u32;
            let id = if depth <= horizon {
                let id = g.children.len() as u32;
                g.children.push(Vec::new());
                g.depth.push(depth);
                if let Some(&par) = parents.last() {
                    g.children[par as usize].push(id);
                }
                id
            } else {
                g.deeper += 1;
                u32::MAX
            };
            ids.push(id);
            if d > 0 {
                parents.push(id);
                remaining.push(d);
            } else {
                while let Some(r) = remaining.last_mut() {
                    *r -= 1;
                    if *r > 0 {
                        break;
                    }
                    remaining.pop();
                    parents.pop();
                }
            }
        }
        g
    }

    pub(crate) fn size(&self) -> u64 {
        self.children.len() as u64 + self.deeper
    }

    pub(crate) fn grow(&mut self, rng: &mut RngHandle) {
        let explicit = self.children.len() as u64;
        let r = rng.below(explicit + self.deeper);
        if r < explicit && self.depth[r as usize] < self.horizon {
            let id = self.children.len() as u32;
            let d = self.depth[r as usize] + 1;
            self.children.push(Vec::new());
            self.depth.push(d);
            self.children[r as usize].push(id);
        } else {
            self.deeper += 1;
        }
    }

    pub(crate) fn snapshot(&self) -> TruncatedTree {
        let mut degrees = Vec::with_capacity(self.children.len());
        let mut stack = vec![0u32];
        while let Some(v) = stack.pop() {
            let ch = &self.children[v as usize];
            degrees.push(ch.len() as u32);
            stack.extend(ch.iter().rev());
        }
        let n = degrees.len();
        TruncatedTree::from_raw(degrees, vec![false; n], self.horizon, TruncationStatus::Clean)
    }
}

/// Nested depth-`horizon` prefixes of one chain at the given
/// non-decreasing sizes, and whether any heuristic step was needed.
pub(crate) fn chain_prefixes(
    sizes: &[u64],
    horizon: u32,
    plans: &ChainPlans,
    rng: &mut RngHandle,
) -> (Vec<TruncatedTree>, bool) {
    let k_max = *sizes.last().expect("at least one size");
    let exact_top = k_max.min(plans.exact_size());
    let idx = if horizon == 0 { Vec::new() } else { plans.exact_indices(exact_top, rng) };
    let shape = |k: u64| &plans.shapes[k as usize - 1].trees[idx[k as usize - 1] as usize];
    let mut out = Vec::with_capacity(sizes.len());
    if horizon == 0 {
        out.resize(sizes.len(), OrderedTree::singleton().truncate(0));
        return (out, k_max > exact_top);
    }
    let mut grower: Option<PrefixGrower> = None;
    for &k in sizes {
        if k <= exact_top {
            out.push(shape(k).truncate(horizon));
            continue;
        }
        let g = grower.get_or_insert_with(|| PrefixGrower::from_tree(shape(exact_top), horizon));
        while g.size() < k {
            g.grow(rng);
        }
        out.push(g.snapshot());
    }
    (out, k_max > exact_top)
}
