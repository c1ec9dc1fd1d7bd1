//! Shared-randomness coupling of conditioned-infinite prefixes across an
//! increasing parameter grid.
//!
//! Every node runs one ladder for the whole grid. A slot whose outcomes are
//! all finite gets nested prefixes from a single chain, an all-infinite slot
//! recurses on the grid, and a mixed slot couples the chain's largest tree
//! with the infinite side: exactly through a small transport plan when the
//! slot horizon is 1 and the size is small, otherwise by absorbing the
//! chain's top prefix into each recursive sample (a union, which keeps the
//! nesting but may perturb the infinite-side law; such slots are flagged).

use std::fmt;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::chain::flow::FlowNetwork;
use crate::chain::{chain_prefixes, ChainPlans, ShapeSet, DEFAULT_EXACT_CAP};
use crate::error::{domain, Error, Result};
use crate::infinite::{CHAIN_STREAM, INF_STREAM, LADDER_STREAM};
use crate::ladder::{draw_x, run_grid_into, GridScratch, LadderConfig, LadderOutcome, LadderParam, LadderTrace};
use crate::numerics::{naive_comparison, rational_to_f64};
use crate::rng::RngHandle;
use crate::trees::{first_missing, OrderedTree, TruncatedTree, TruncationReason, TruncationStatus, VertexAddress};
use crate::unif_sampling::uniform_prefix_into;

/// How the finite children of one slot were coupled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum CouplingMode {
    /// Nested prefixes from exact transport steps (or a single uniform tree).
    ExactChain,
    /// The chain needed heuristic growth past the enumerated sizes.
    ChainHeuristic,
    /// A mixed slot resolved by the union repair.
    FiniteInfiniteApprox,
    /// A mixed slot resolved by the exact small transport plan.
    ExactTiny,
}

/// Slot counts per coupling mode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FlagCounts {
    pub exact_chain: u64,
    pub chain_heuristic: u64,
    pub finite_infinite_approx: u64,
    pub exact_tiny: u64,
}

impl FlagCounts {
    pub fn add(&mut self, mode: CouplingMode) {
        *self.slot(mode) += 1;
    }

    pub fn get(&self, mode: CouplingMode) -> u64 {
        match mode {
            CouplingMode::ExactChain => self.exact_chain,
            CouplingMode::ChainHeuristic => self.chain_heuristic,
            CouplingMode::FiniteInfiniteApprox => self.finite_infinite_approx,
            CouplingMode::ExactTiny => self.exact_tiny,
        }
    }

    fn slot(&mut self, mode: CouplingMode) -> &mut u64 {
        match mode {
            CouplingMode::ExactChain => &mut self.exact_chain,
            CouplingMode::ChainHeuristic => &mut self.chain_heuristic,
            CouplingMode::FiniteInfiniteApprox => &mut self.finite_infinite_approx,
            CouplingMode::ExactTiny => &mut self.exact_tiny,
        }
    }

    pub fn merge(&mut self, other: &FlagCounts) {
        self.exact_chain += other.exact_chain;
        self.chain_heuristic += other.chain_heuristic;
        self.finite_infinite_approx += other.finite_infinite_approx;
        self.exact_tiny += other.exact_tiny;
    }

    /// True when no slot used an approximation.
    pub fn is_exact(&self) -> bool {
        self.chain_heuristic == 0 && self.finite_infinite_approx == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplerConfig {
    pub ladder: LadderConfig,
    /// Largest source size with an exact chain step.
    pub exact_cap: u64,
    /// Largest finite size of a mixed slot handled by the exact small
    /// plan at slot horizon 1; 0 disables it.
    pub tiny_max_size: u64,
}

impl Default for CouplerConfig {
    fn default() -> Self {
        CouplerConfig {
            ladder: LadderConfig::default(),
            exact_cap: DEFAULT_EXACT_CAP,
            tiny_max_size: 4,
        }
    }
}

/// `P(min(D, cap) = d)` for `d = 1..=cap`, where `D` is the root degree
/// of `T_∞(p)`.
pub fn root_degree_law(p: &BigRational, cap: u32) -> Result<Vec<BigRational>> {
    let one = <BigRational as One>::one();
    let half = BigRational::new(1.into(), 2.into());
    if *p < half || *p >= one {
        return Err(domain("root degree law needs 1/2 <= p < 1"));
    }
    if cap == 0 {
        return Err(domain("root degree cap must be positive"));
    }
    let q = &one - p;
    let mut law = Vec::with_capacity(cap as usize);
    let mut below = <BigRational as Zero>::zero();
    for d in 1..cap {
        let mass = if *p == half {
            BigRational::new(d.into(), BigInt::one() << (d + 1))
        } else {
            let pd = num_traits::pow(p.clone(), d as usize);
            let qd = num_traits::pow(q.clone(), d as usize);
            p * &q / (p * BigInt::from(2) - &one) * (pd - qd)
        };
        below += &mass;
        law.push(mass);
    }
    law.push(one - below);
    Ok(law)
}

fn below_big(total: &BigUint, rng: &mut RngHandle) -> BigUint {
    if let Some(t) = total.to_u64() {
        return BigUint::from(rng.below(t));
    }
    let bits = total.bits();
    let words = bits.div_ceil(64);
    let spare = words * 64 - bits;
    loop {
        let mut digits = Vec::with_capacity(2 * words as usize);
        for w in 0..words {
            let mut x = rng.next_u64();
            if w == words - 1 && spare > 0 {
                x >>= spare;
            }
            digits.push(x as u32);
            digits.push((x >> 32) as u32);
        }
        let v = BigUint::new(digits);
        if &v < total {
            return v;
        }
    }
}

/// Exact coupling of a uniform size-`k` shape with `min(D, k - 1)` for the
/// root degree `D` of `T_∞(p)`, supported on pairs where the shape's root
/// degree is at most that value.
#[derive(Clone, Debug)]
pub struct TinyPlan {
    k: u64,
    p: f64,
    shapes: Arc<ShapeSet>,
    /// `cells[d - 1]`: shape indices with positive flow into degree `d`.
    cells: Vec<Vec<(u32, BigUint)>>,
    col_totals: Vec<BigUint>,
    total: BigUint,
}

impl TinyPlan {
    pub fn build(p: f64, k: u64, shapes: Arc<ShapeSet>) -> Result<Self> {
        if k < 2 || shapes.k != k {
            return Err(domain("small plans need k >= 2 and the size-k shapes"));
        }
        let q = BigRational::from_float(p).ok_or_else(|| domain("parameter is not finite"))?;
        let cap = (k - 1) as u32;
        let law = root_degree_law(&q, cap)?;
        let n = shapes.len();
        let mut total = BigInt::from(n);
        for m in &law {
            total = total.lcm(m.denom());
        }
        let cols = cap as usize;
        let source = n + cols;
        let sink = source + 1;
        let mut g = FlowNetwork::<BigInt>::new(n + cols + 2);
        let share = &total / BigInt::from(n);
        let mut edges = Vec::new();
        for (i, t) in shapes.trees.iter().enumerate() {
            g.add_edge(source, i, share.clone());
            for d in t.root_degree()..=cap {
                let id = g.add_edge(i, n + d as usize - 1, total.clone());
                edges.push((i as u32, d, id));
            }
        }
        for (c, m) in law.iter().enumerate() {
            let cap = (m * BigRational::from_integer(total.clone())).to_integer();
            g.add_edge(n + c, sink, cap);
        }
        let flow = g.max_flow(source, sink);
        if flow != total {
            return Err(Error::Infeasible {
                k: k as usize,
                flow: flow.to_string(),
                required: total.to_string(),
            });
        }
        let mut cells = vec![Vec::new(); cols];
        let mut col_totals = vec![BigUint::zero(); cols];
        for (i, d, id) in edges {
            let f = g.flow_on(id).to_biguint().expect("flows are non-negative");
            if !f.is_zero() {
                col_totals[d as usize - 1] += &f;
                cells[d as usize - 1].push((i, f));
            }
        }
        Ok(TinyPlan {
            k,
            p,
            shapes,
            cells,
            col_totals,
            total: total.to_biguint().expect("positive"),
        })
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn shapes(&self) -> &Arc<ShapeSet> {
        &self.shapes
    }

    /// `(shape index, capped degree, probability)` for every cell.
    pub fn joint_law(&self) -> Vec<(u32, u32, BigRational)> {
        let total = BigInt::from(self.total.clone());
        let mut out = Vec::new();
        for (c, cells) in self.cells.iter().enumerate() {
            for (i, f) in cells {
                out.push((*i, c as u32 + 1, BigRational::new(BigInt::from(f.clone()), total.clone())));
            }
        }
        out
    }

    /// A shape index given the infinite side's root degree `d`.
    pub fn sample_shape(&self, d: u32, rng: &mut RngHandle) -> u32 {
        let c = (d.min(self.k as u32 - 1) as usize).max(1) - 1;
        let mut r = below_big(&self.col_totals[c], rng);
        for (i, f) in &self.cells[c] {
            if r < *f {
                return *i;
            }
            r -= f;
        }
        unreachable!("cell flows cover the column")
    }
}

/// One coupled draw: a nested prefix per grid parameter.
#[derive(Clone, Debug)]
pub struct CoupledSample {
    pub params: Vec<f64>,
    pub depth: u32,
    pub trees: Vec<TruncatedTree>,
    /// The root node's ladder.
    pub trace: LadderTrace,
    pub flags: FlagCounts,
    /// Flags of the root's own slots only.
    pub root_flags: FlagCounts,
    /// Ladder monotonicity violations over all nodes.
    pub ladder_violations: usize,
}

impl CoupledSample {
    pub fn is_compromised(&self) -> bool {
        self.trees.iter().any(|t| !t.is_clean())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let verdict = verify_containment(self);
        serde_json::json!({
            "params": self.params,
            "depth": self.depth,
            "trees": self.trees.iter().map(|t| t.encode()).collect::<Vec<_>>(),
            "flags": self.flags,
            "root_flags": self.root_flags,
            "trace": self.trace,
            "ladder_violations": self.ladder_violations,
            "compromised": self.is_compromised(),
            "verdict": verdict,
        })
    }
}

#[derive(Clone, Debug, Default)]
struct Builder {
    degrees: Vec<u32>,
    frontier: Vec<bool>,
    status: TruncationStatus,
}

impl Builder {
    fn open(&mut self) -> usize {
        self.degrees.push(0);
        self.frontier.push(false);
        self.degrees.len() - 1
    }

    fn leaf(&mut self, frontier: bool) {
        self.degrees.push(0);
        self.frontier.push(frontier);
    }

    fn append(&mut self, t: &TruncatedTree) {
        self.degrees.extend_from_slice(t.degrees());
        self.frontier.extend_from_slice(t.frontier());
        self.status.merge(t.status());
    }

    fn copy_from(&mut self, other: &Builder, start: usize) {
        self.degrees.extend_from_slice(&other.degrees[start..]);
        self.frontier.extend_from_slice(&other.frontier[start..]);
    }

    fn segment(&self, start: usize, horizon: u32) -> TruncatedTree {
        TruncatedTree::from_raw(
            self.degrees[start..].to_vec(),
            self.frontier[start..].to_vec(),
            horizon,
            TruncationStatus::Clean,
        )
    }

    fn finish(self, horizon: u32) -> TruncatedTree {
        TruncatedTree::from_raw(self.degrees, self.frontier, horizon, self.status)
    }
}

/// Depth-`horizon` prefix of a uniform size-`k` tree, written in place.
fn emit_uniform_prefix(k: u64, horizon: u32, rng: &mut RngHandle, out: &mut Builder) {
    uniform_prefix_into(k, horizon, rng, &mut out.degrees);
    out.frontier.resize(out.degrees.len(), false);
}

#[derive(Default)]
struct Tally {
    flags: FlagCounts,
    root_flags: FlagCounts,
    violations: usize,
    root_trace: Option<LadderTrace>,
}

impl Tally {
    fn add(&mut self, mode: CouplingMode, root: bool) {
        self.flags.add(mode);
        if root {
            self.root_flags.add(mode);
        }
    }
}

/// Couples conditioned-infinite prefixes across a fixed grid.
#[derive(Clone, Debug)]
pub struct Coupler {
    params: Vec<LadderParam>,
    plans: Arc<ChainPlans>,
    config: CouplerConfig,
    /// `tiny[i][k - 2]`: small plan against parameter `i`.
    tiny: Vec<Vec<TinyPlan>>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(domain("parameter grid is empty"));
    }
    for &p in grid {
        if p == 1.0 {
            return Err(domain(
                "p = 1 is excluded: T(1) is infinite with probability 1 and every vertex has infinitely many children",
            ));
        }
        if !(0.5..1.0).contains(&p) {
            return Err(domain(format!("grid parameter {p} must lie in [1/2, 1)")));
        }
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(domain("grid must be strictly increasing"));
    }
    Ok(())
}

impl Coupler {
    pub fn new(grid: &[f64], config: CouplerConfig) -> Result<Self> {
        let plans = Arc::new(ChainPlans::build(config.exact_cap)?);
        Self::with_plans(grid, config, plans)
    }

    pub fn with_plans(grid: &[f64], config: CouplerConfig, plans: Arc<ChainPlans>) -> Result<Self> {
        check_grid(grid)?;
        let params = grid
            .iter()
            .map(|&p| LadderParam::new(p, &config.ladder))
            .collect::<Result<Vec<_>>>()?;
        let tiny_max = config.tiny_max_size.min(plans.exact_size());
        let mut tiny = Vec::with_capacity(grid.len());
        for &p in grid {
            let mut row = Vec::new();
            for k in 2..=tiny_max {
                let shapes = plans.shapes(k).expect("sizes up to the exact size are enumerated").clone();
                row.push(TinyPlan::build(p, k, shapes)?);
            }
            tiny.push(row);
        }
        Ok(Coupler {
            params,
            plans,
            config,
            tiny,
        })
    }

    pub fn grid(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.p()).collect()
    }

    pub fn plans(&self) -> &Arc<ChainPlans> {
        &self.plans
    }

    pub fn tiny_plan(&self, param: usize, k: u64) -> Option<&TinyPlan> {
        self.tiny.get(param)?.get((k as usize).checked_sub(2)?)
    }

    /// Nested depth-`depth` prefixes, one per grid parameter.
    pub fn sample(&self, depth: u32, rng: &RngHandle) -> Result<CoupledSample> {
        if depth == 0 {
            return Err(domain("coupled sampling needs depth >= 1"));
        }
        let r = self.params.len();
        let mut outs = vec![Builder::default(); r];
        let mut scratch = vec![GridScratch::default(); depth as usize];
        let mut tally = Tally::default();
        self.node(0, depth, rng, &mut outs, &mut scratch, &mut tally, true);
        Ok(CoupledSample {
            params: self.grid(),
            depth,
            trees: outs.into_iter().map(|b| b.finish(depth)).collect(),
            trace: tally.root_trace.take().expect("the root runs a ladder"),
            flags: tally.flags,
            root_flags: tally.root_flags,
            ladder_violations: tally.violations,
        })
    }

    /// Writes the depth-`h` prefixes of parameters `base..base + outs.len()`.
    #[allow(clippy::too_many_arguments)]
    fn node(
        &self,
        base: usize,
        h: u32,
        rng: &RngHandle,
        outs: &mut [Builder],
        scratch: &mut [GridScratch],
        tally: &mut Tally,
        root: bool,
    ) {
        if h == 0 {
            for b in outs.iter_mut() {
                b.leaf(true);
            }
            return;
        }
        let r = outs.len();
        let params = &self.params[base..base + r];
        let (below, here) = scratch.split_at_mut(h as usize - 1);
        let s = &mut here[0];
        let mut lr = rng.substream(LADDER_STREAM);
        let x = draw_x(&mut lr);
        run_grid_into(params, x, || lr.uniform(), &self.config.ladder, s);
        tally.violations += s.violations;
        if root {
            tally.root_trace = Some(s.to_trace(params, x));
        }
        let pos: Vec<usize> = outs.iter_mut().map(|b| b.open()).collect();
        if s.cut_off {
            for b in outs.iter_mut() {
                b.status.add(TruncationReason::BreadthCap);
            }
        }
        if h > 1 {
            for &(_, i) in &s.oversize {
                outs[i].status.add(TruncationReason::OversizeSubtree);
            }
        }
        for m in 1..=s.slots {
            let row = &s.outcomes[(m - 1) * r..m * r];
            let Some(a) = row.iter().position(|o| *o != LadderOutcome::Zero) else {
                continue;
            };
            let b = row[a..].iter().position(|o| *o == LadderOutcome::Infinite).map_or(r, |q| a + q);
            for (i, o) in row.iter().enumerate() {
                if *o != LadderOutcome::Zero {
                    outs[i].degrees[pos[i]] += 1;
                }
            }
            let trivial = |o: &LadderOutcome| match o {
                LadderOutcome::Finite(k) => h == 1 || *k == 1,
                _ => false,
            };
            if row[a..].iter().all(trivial) {
                // only lone roots: nothing to draw
                for out in &mut outs[a..] {
                    out.leaf(false);
                }
                if h > 1 {
                    tally.add(CouplingMode::ExactChain, root);
                }
                continue;
            }
            let slot = rng.substream(m as u64);
            let regular = row[a..b].iter().all(LadderOutcome::is_finite)
                && row[a..b].windows(2).all(|w| w[0] <= w[1])
                && row[b..].iter().all(|o| *o == LadderOutcome::Infinite);
            if regular {
                self.slot(base, a, b, h - 1, row, &slot, outs, below, tally, root);
            } else {
                // only reachable after a counted ladder violation
                for i in a..r {
                    match row[i] {
                        LadderOutcome::Zero => {}
                        LadderOutcome::Finite(k) => {
                            emit_uniform_prefix(k, h - 1, &mut slot.substream(CHAIN_STREAM), &mut outs[i])
                        }
                        LadderOutcome::Infinite => self.node(
                            base + i,
                            h - 1,
                            &slot.substream(INF_STREAM),
                            &mut outs[i..=i],
                            below,
                            tally,
                            false,
                        ),
                    }
                }
            }
        }
    }

    /// One slot with finite outcomes at `a..b` and infinite ones at `b..`.
    #[allow(clippy::too_many_arguments)]
    fn slot(
        &self,
        base: usize,
        a: usize,
        b: usize,
        hc: u32,
        row: &[LadderOutcome],
        slot: &RngHandle,
        outs: &mut [Builder],
        scratch: &mut [GridScratch],
        tally: &mut Tally,
        root: bool,
    ) {
        let r = outs.len();
        if a == b {
            self.node(base + b, hc, &slot.substream(INF_STREAM), &mut outs[b..], scratch, tally, false);
            return;
        }
        let size = |i: usize| match row[i] {
            LadderOutcome::Finite(k) => k,
            _ => unreachable!("finite range"),
        };
        let k_top = size(b - 1);
        if b < r && hc == 1 && (2..=self.config.tiny_max_size).contains(&k_top) {
            if let Some(plan) = self.tiny_plan(base + b, k_top) {
                let start = outs[b].degrees.len();
                self.node(base + b, hc, &slot.substream(INF_STREAM), &mut outs[b..], scratch, tally, false);
                let d = outs[b].degrees[start];
                let mut crng = slot.substream(CHAIN_STREAM);
                let j = plan.sample_shape(d, &mut crng);
                let k_low = size(a);
                let idx = self.plans.descend(k_top, j, k_low, &mut crng);
                for (i, out) in outs.iter_mut().enumerate().take(b).skip(a) {
                    let k = size(i);
                    let deg = self.plans.shapes(k).expect("enumerated").trees[idx[(k - k_low) as usize] as usize]
                        .root_degree();
                    out.degrees.push(deg);
                    out.frontier.push(false);
                    for _ in 0..deg {
                        out.leaf(false);
                    }
                }
                tally.add(CouplingMode::ExactTiny, root);
                return;
            }
        }
        let top_start = outs[b - 1].degrees.len();
        let heuristic = self.finite_side(a, b, hc, row, &mut slot.substream(CHAIN_STREAM), outs);
        if hc > 0 {
            let mode = if heuristic { CouplingMode::ChainHeuristic } else { CouplingMode::ExactChain };
            tally.add(mode, root);
        }
        if b == r {
            return;
        }
        let inf = slot.substream(INF_STREAM);
        if hc == 0 || k_top == 1 {
            // the top finite prefix is a lone root
            self.node(base + b, hc, &inf, &mut outs[b..], scratch, tally, false);
            return;
        }
        let top = outs[b - 1].segment(top_start, hc);
        let mut side = vec![Builder::default(); r - b];
        self.node(base + b, hc, &inf, &mut side, scratch, tally, false);
        for (q, part) in side.into_iter().enumerate() {
            let merged = part.finish(hc).union(&top);
            outs[b + q].append(&merged);
        }
        tally.add(CouplingMode::FiniteInfiniteApprox, root);
    }

    /// Nested prefixes for the finite outcomes at `a..b`; returns whether
    /// heuristic growth was used.
    fn finite_side(
        &self,
        a: usize,
        b: usize,
        hc: u32,
        row: &[LadderOutcome],
        rng: &mut RngHandle,
        outs: &mut [Builder],
    ) -> bool {
        let sizes: Vec<u64> = row[a..b]
            .iter()
            .map(|o| match o {
                LadderOutcome::Finite(k) => *k,
                _ => unreachable!("finite range"),
            })
            .collect();
        if hc == 0 || sizes[0] == sizes[sizes.len() - 1] {
            let start = outs[a].degrees.len();
            emit_uniform_prefix(sizes[0], hc, rng, &mut outs[a]);
            let (head, tail) = outs.split_at_mut(a + 1);
            for out in &mut tail[..b - a - 1] {
                out.copy_from(&head[a], start);
            }
            return false;
        }
        let (prefixes, heuristic) = chain_prefixes(&sizes, hc, &self.plans, rng);
        for (q, t) in prefixes.iter().enumerate() {
            outs[a + q].append(t);
        }
        heuristic
    }
}

/// One coupled draw on a fresh coupler.
pub fn sample_coupled(grid: &[f64], depth: u32, config: CouplerConfig, rng: &RngHandle) -> Result<CoupledSample> {
    Coupler::new(grid, config)?.sample(depth, rng)
}

/// A pair `smaller ⊄ larger` and a vertex of the smaller tree missing from
/// the larger one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub smaller: usize,
    pub larger: usize,
    pub vertex: String,
}

/// Pairwise containment, recomputed from the trees alone.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ContainmentVerdict {
    /// `matrix[i][j]`: tree `i` is contained in tree `j`.
    pub matrix: Vec<Vec<bool>>,
    pub witness: Option<Witness>,
}

impl ContainmentVerdict {
    /// Every tree is contained in each later one.
    pub fn nested(&self) -> bool {
        self.witness.is_none()
    }
}

pub fn containment_verdict(trees: &[TruncatedTree]) -> ContainmentVerdict {
    let n = trees.len();
    let mut matrix = vec![vec![false; n]; n];
    let mut witness = None;
    for i in 0..n {
        for j in 0..n {
            let missing: Option<VertexAddress> = first_missing(&trees[i], &trees[j]);
            matrix[i][j] = missing.is_none();
            if let (Some(v), true, None) = (missing, i < j, &witness) {
                witness = Some(Witness {
                    smaller: i,
                    larger: j,
                    vertex: v.to_string(),
                });
            }
        }
    }
    ContainmentVerdict { matrix, witness }
}

pub fn verify_containment(s: &CoupledSample) -> ContainmentVerdict {
    containment_verdict(&s.trees)
}

/// Outcome of composing a uniform chain tree with a coupled sample.
#[derive(Clone, Debug, Serialize)]
pub struct CorollaryReport {
    pub k: u64,
    pub p: f64,
    pub depth: u32,
    pub samples: u64,
    /// Samples with `T_k ⊆ T(1/2) ⊆ T(p)` up to the depth.
    pub contained: u64,
    /// Samples where absorbing `T_k` changed the critical-side prefix.
    pub repaired: u64,
    /// Draws of each size-`k` shape, indexed as in the enumeration.
    pub shape_counts: Vec<u64>,
    pub flags: FlagCounts,
}

impl CorollaryReport {
    pub fn containment_rate(&self) -> f64 {
        self.contained as f64 / self.samples as f64
    }
}

/// Draws an exact chain up to size `k` and a coupled sample on the grid
/// `(1/2, p)`, absorbs the chain's top tree into both infinite-side
/// prefixes, and re-checks `T_k ⊆ T(1/2) ⊆ T(p)` with the containment test.
pub fn corollary_check(
    k: u64,
    p: f64,
    depth: u32,
    samples: u64,
    seed: u64,
    config: CouplerConfig,
) -> Result<CorollaryReport> {
    let grid: Vec<f64> = if p == 0.5 { vec![0.5] } else { vec![0.5, p] };
    let coupler = Coupler::new(&grid, config)?;
    if k == 0 || k > coupler.plans.exact_size() {
        return Err(domain(format!(
            "chain size {k} must lie in 1..={}",
            coupler.plans.exact_size()
        )));
    }
    let shapes = coupler.plans.shapes(k).expect("enumerated").clone();
    let mut report = CorollaryReport {
        k,
        p,
        depth,
        samples,
        contained: 0,
        repaired: 0,
        shape_counts: vec![0; shapes.len()],
        flags: FlagCounts::default(),
    };
    let master = RngHandle::new(seed);
    for n in 0..samples {
        let rng = master.substream(n);
        let idx = coupler.plans.exact_indices(k, &mut rng.substream(CHAIN_STREAM));
        let j = idx[k as usize - 1];
        report.shape_counts[j as usize] += 1;
        let tk: &OrderedTree = &shapes.trees[j as usize];
        let top = tk.truncate(depth);
        let s = coupler.sample(depth, &rng.substream(INF_STREAM))?;
        report.flags.merge(&s.flags);
        let sides: Vec<TruncatedTree> = s.trees.iter().map(|t| t.union(&top)).collect();
        if sides[0] != s.trees[0] {
            report.repaired += 1;
        }
        let mut chain = vec![top];
        chain.extend(sides);
        if containment_verdict(&chain).nested() {
            report.contained += 1;
        }
    }
    Ok(report)
}

/// `p1` against `p2 η_∞(p2) = 2 p2 - 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NaiveFailure {
    pub p1: f64,
    pub p2: f64,
    pub threshold: f64,
    /// True when `p1 > p2 η_∞(p2)`, so the sequential coupling cannot nest.
    pub fails: bool,
}

impl fmt::Display for NaiveFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rel = if self.fails {
            ">"
        } else if self.p1 == self.threshold {
            "="
        } else {
            "<"
        };
        write!(f, "{} {} {}", self.p1, rel, self.threshold)
    }
}

pub fn naive_failure_demo(p1: &BigRational, p2: &BigRational) -> Result<NaiveFailure> {
    let (_, threshold, fails) = naive_comparison(p1, p2)?;
    Ok(NaiveFailure {
        p1: rational_to_f64(p1),
        p2: rational_to_f64(p2),
        threshold: rational_to_f64(&threshold),
        fails,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infinite::InfiniteSampler;
    use crate::trees::contains;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn coupler(grid: &[f64]) -> Coupler {
        Coupler::new(grid, CouplerConfig::default()).unwrap()
    }

    #[test]
    fn root_degree_law_at_half_and_three_quarters() {
        let law = root_degree_law(&q(1, 2), 3).unwrap();
        assert_eq!(law, vec![q(1, 4), q(2, 8), q(1, 2)]);
        let law = root_degree_law(&q(3, 4), 3).unwrap();
        assert_eq!(law, vec![q(3, 16), q(3, 16), q(5, 8)]);
        assert!(root_degree_law(&q(1, 1), 3).is_err());
    }

    #[test]
    fn tiny_plans_have_exact_marginals() {
        let c = coupler(&[0.5, 0.75]);
        for i in 0..2 {
            let p = q(1, 2) + q(i as i64, 4);
            for k in 2..=4u64 {
                let plan = c.tiny_plan(i, k).unwrap();
                let law = root_degree_law(&p, k as u32 - 1).unwrap();
                let n = plan.shapes().len();
                let mut rows = vec![<BigRational as Zero>::zero(); n];
                let mut cols = vec![<BigRational as Zero>::zero(); k as usize - 1];
                for (s, d, w) in plan.joint_law() {
                    assert!(plan.shapes().trees[s as usize].root_degree() <= d);
                    rows[s as usize] += &w;
                    cols[d as usize - 1] += &w;
                }
                assert!(rows.iter().all(|r| *r == q(1, n as i64)));
                assert_eq!(cols, law);
            }
        }
    }

    #[test]
    fn grid_validation() {
        let cfg = CouplerConfig::default();
        assert!(Coupler::new(&[], cfg).is_err());
        assert!(Coupler::new(&[0.75, 0.5], cfg).is_err());
        assert!(Coupler::new(&[0.5, 0.5], cfg).is_err());
        assert!(Coupler::new(&[0.4, 0.5], cfg).is_err());
        let err = Coupler::new(&[0.5, 1.0], cfg).unwrap_err().to_string();
        assert!(err.contains("p = 1"));
        assert!(coupler(&[0.5]).sample(0, &RngHandle::new(0)).is_err());
    }

    #[test]
    fn depth_one_child_counts_are_ordered() {
        let c = coupler(&[0.5, 0.75]);
        for n in 0..2000 {
            let s = c.sample(1, &RngHandle::new(n)).unwrap();
            assert!(s.trees[0].root_degree() <= s.trees[1].root_degree());
            let t = &s.trace.params;
            assert_eq!(t[0].children(), s.trees[0].root_degree() as usize);
        }
    }

    #[test]
    fn coupled_samples_are_nested() {
        for grid in [vec![0.5, 0.75], vec![0.75, 0.9], vec![0.5, 0.6, 0.9]] {
            let c = coupler(&grid);
            for depth in 1..=3 {
                for n in 0..300 {
                    let s = c.sample(depth, &RngHandle::new(n)).unwrap();
                    assert_eq!(s.ladder_violations, 0);
                    let v = verify_containment(&s);
                    assert!(v.nested(), "grid {grid:?} depth {depth} seed {n}: {:?}", v.witness);
                    for t in &s.trees {
                        assert_eq!(t.horizon(), depth);
                    }
                }
            }
        }
    }

    #[test]
    fn single_parameter_grid_is_the_plain_sampler() {
        let c = coupler(&[0.75]);
        let plain = InfiniteSampler::new(0.75, LadderConfig::default()).unwrap();
        for n in 0..200 {
            let rng = RngHandle::new(n);
            assert_eq!(c.sample(3, &rng).unwrap().trees[0], plain.sample(3, &rng));
        }
    }

    #[test]
    fn root_ladder_matches_single_parameter_run() {
        let c = coupler(&[0.5, 0.6, 0.9]);
        let solo = coupler(&[0.6]);
        for n in 0..200 {
            let rng = RngHandle::new(n);
            let a = c.sample(2, &rng).unwrap();
            let b = solo.sample(2, &rng).unwrap();
            assert_eq!(a.trace.params[1].outcomes, b.trace.params[0].outcomes);
        }
    }

    #[test]
    fn samples_are_reproducible() {
        let c = coupler(&[0.5, 0.75]);
        let a = c.sample(3, &RngHandle::new(42)).unwrap();
        let b = c.sample(3, &RngHandle::new(42)).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn tiny_mode_is_used_at_depth_two() {
        let c = coupler(&[0.5, 0.75]);
        let mut tiny = 0;
        for n in 0..3000 {
            let s = c.sample(2, &RngHandle::new(n)).unwrap();
            tiny += s.root_flags.exact_tiny;
            assert!(verify_containment(&s).nested());
        }
        assert!(tiny > 0);
    }

    #[test]
    fn verdict_reports_a_witness() {
        let small = TruncatedTree::decode("[[],[]]", 1).unwrap();
        let large = TruncatedTree::decode("[[]*]", 1).unwrap();
        let v = containment_verdict(&[small.clone(), large.clone()]);
        assert!(!v.nested());
        assert_eq!(v.witness.as_ref().unwrap().vertex, "(2)");
        assert!(v.matrix[0][0] && v.matrix[1][1] && v.matrix[1][0]);
        assert!(contains(&large, &small));
    }

    #[test]
    fn corollary_small_run() {
        let r = corollary_check(1, 0.75, 2, 50, 3, CouplerConfig::default()).unwrap();
        assert_eq!(r.contained, 50);
        assert_eq!(r.repaired, 0);
        let r = corollary_check(5, 0.75, 3, 300, 4, CouplerConfig::default()).unwrap();
        assert_eq!(r.contained, 300);
        assert_eq!(r.shape_counts.len(), 14);
        assert!(corollary_check(11, 0.75, 3, 1, 4, CouplerConfig::default()).is_err());
    }

    #[test]
    fn naive_demo_examples() {
        let d = naive_failure_demo(&q(6, 10), &q(7, 10)).unwrap();
        assert_eq!(d.to_string(), "0.6 > 0.4");
        let d = naive_failure_demo(&q(6, 10), &q(9, 10)).unwrap();
        assert_eq!(d.to_string(), "0.6 < 0.8");
        assert!(!d.fails);
        let d = naive_failure_demo(&q(51, 100), &q(52, 100)).unwrap();
        assert!(d.fails);
        assert_eq!(d.threshold, 0.04);
    }
}
