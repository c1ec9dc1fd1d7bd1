//! Baseline samplers: uniform trees of a fixed size, plain geometric
//! Galton–Watson trees, and the sequential conditioned sampler.

use crate::error::{domain, Result};
use crate::ladder::{LadderConfig, LadderParam};
use crate::rng::RngHandle;
use crate::numerics::ln_catalan;
use crate::trees::{for_each_vertex, OrderedTree, TruncatedTree, TruncationReason, TruncationStatus};
use statrs::function::gamma::ln_gamma;

/// Child counts, in preorder, of a uniformly random tree with `k` vertices.
///
/// A uniform arrangement of `k - 1` up-steps and `k` down-steps is rotated
/// to start right after its first minimum; exactly one rotation of each
/// arrangement is a valid walk, so the result is uniform.
pub fn uniform_tree_degrees(k: u64, rng: &mut RngHandle) -> Vec<u32> {
    assert!(k >= 1, "tree sizes start at 1");
    if k == 1 {
        return vec![0];
    }
    let n = 2 * k - 1;
    let mut ups_left = k - 1;
    let mut steps = Vec::with_capacity(n as usize);
    let mut level: i64 = 0;
    let mut min_level = i64::MAX;
    let mut min_at = 0usize;
    for i in 0..n {
        let up = rng.below(n - i) < ups_left;
        if up {
            ups_left -= 1;
            level += 1;
        } else {
            level -= 1;
        }
        steps.push(up);
        if level < min_level {
            min_level = level;
            min_at = i as usize;
        }
    }
    let mut degrees = Vec::with_capacity(k as usize);
    let mut ups = 0u32;
    for j in 0..n as usize {
        if steps[(min_at + 1 + j) % n as usize] {
            ups += 1;
        } else {
            degrees.push(ups);
            ups = 0;
        }
    }
    degrees
}

/// A uniformly random tree with `k` vertices.
pub fn sample_uniform_tree(k: u64, rng: &mut RngHandle) -> Result<OrderedTree> {
    if k == 0 {
        return Err(domain("tree sizes start at 1"));
    }
    Ok(OrderedTree::from_degrees_unchecked(uniform_tree_degrees(k, rng)))
}

/// Sizes up to this are drawn with the full walk; larger ones top-down.
const WALK_MAX: u64 = 2048;

/// Depth-`horizon` prefix of a uniform tree with `k` vertices; skips the
/// sampling entirely when only the root is visible.
pub fn uniform_prefix(k: u64, horizon: u32, rng: &mut RngHandle) -> TruncatedTree {
    let mut degrees = Vec::new();
    uniform_prefix_into(k, horizon, rng, &mut degrees);
    let n = degrees.len();
    TruncatedTree::from_raw(degrees, vec![false; n], horizon, TruncationStatus::Clean)
}

/// Appends the preorder child counts of a depth-`horizon` prefix of a
/// uniform size-`k` tree.
///
/// Large trees are never built: the root degree and the subtree sizes are
/// drawn from their exact conditional laws (forest counts, in floating
/// point), and subtrees recurse with their own sizes, since given its size
/// each subtree is again uniform.
pub(crate) fn uniform_prefix_into(k: u64, horizon: u32, rng: &mut RngHandle, out: &mut Vec<u32>) {
    prefix_with(k, horizon, rng, out, WALK_MAX);
}

fn prefix_with(k: u64, horizon: u32, rng: &mut RngHandle, out: &mut Vec<u32>, walk_max: u64) {
    if horizon == 0 || k == 1 {
        out.push(0);
        return;
    }
    if k <= walk_max {
        let degrees = uniform_tree_degrees(k, rng);
        for_each_vertex(&degrees, |i, path| {
            let depth = path.len() as u32;
            if depth < horizon {
                out.push(degrees[i]);
            } else if depth == horizon {
                out.push(0);
            }
        });
        return;
    }
    let d = root_degree_given_size(k, rng);
    out.push(d as u32);
    let mut left = k - 1;
    for trees in (1..=d).rev() {
        let j = first_tree_size(trees, left, rng);
        prefix_with(j, horizon - 1, rng, out, walk_max);
        left -= j;
    }
}

/// `ln` of the number of ordered forests of `d` trees with `m` vertices,
/// `(d/m)·C(2m-d-1, m-1)`.
fn ln_forests(d: u64, m: u64) -> f64 {
    let (d, m) = (d as f64, m as f64);
    d.ln() - m.ln() + ln_gamma(2.0 * m - d) - ln_gamma(m) - ln_gamma(m - d + 1.0)
}

/// Root degree of a uniform size-`n` tree: `P(d) = F(d, n-1) / F(1, n)`.
fn root_degree_given_size(n: u64, rng: &mut RngHandle) -> u64 {
    let m = n - 1;
    let u = rng.uniform();
    // F(1, n-1)/F(1, n) = c_{n-1}/c_n
    let mut pr = n as f64 / (2.0 * (2 * n - 3) as f64);
    let mut acc = 0.0;
    for d in 1..m {
        acc += pr;
        if u < acc {
            return d;
        }
        // F(d+1, m)/F(d, m)
        pr *= ((d + 1) as f64 / d as f64) * ((m - d) as f64 / (2 * m - d - 1) as f64);
    }
    m
}

/// Size of the first tree of a uniform forest of `d` trees on `m`
/// vertices: `P(j) = c_j F(d-1, m-j) / F(d, m)`.
///
/// The law puts its mass near both ends, so it is inverted by scanning from
/// both ends at once.
fn first_tree_size(d: u64, m: u64, rng: &mut RngHandle) -> u64 {
    if d == 1 {
        return m;
    }
    let e = d - 1;
    let hi = m - e;
    if hi == 1 {
        return 1;
    }
    let total = ln_forests(d, m);
    let mut pl = (ln_forests(e, m - 1) - total).exp();
    let mut pr = (ln_catalan(hi) - total).exp();
    let (mut jl, mut jr) = (1u64, hi);
    let (mut below, mut above) = (0.0, 0.0);
    let u = rng.uniform();
    while jl < jr {
        if u < below + pl {
            return jl;
        }
        below += pl;
        // step j -> j+1 on the left, t = m - j
        let (j, t) = (jl as f64, (m - jl) as f64);
        let ef = e as f64;
        pl *= 2.0 * (2.0 * j - 1.0) / (j + 1.0) * t * (t - ef) / ((2.0 * t - ef - 1.0) * (2.0 * t - ef - 2.0));
        jl += 1;
        if jl >= jr {
            break;
        }
        if u >= 1.0 - above - pr {
            return jr;
        }
        above += pr;
        // step j -> j-1 on the right, t = m - j
        let (j, t) = (jr as f64, (m - jr) as f64);
        pr *= j / (2.0 * (2.0 * j - 3.0)) * ((2.0 * t - ef + 1.0) * (2.0 * t - ef)) / ((t + 1.0) * (t + 1.0 - ef));
        jr -= 1;
    }
    jl
}

/// Limits for the plain Galton–Watson sampler.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GwCaps {
    pub depth: u32,
    pub size: usize,
}

impl Default for GwCaps {
    fn default() -> Self {
        GwCaps {
            depth: 64,
            size: 1 << 20,
        }
    }
}

/// The geometric Galton–Watson tree `T(p)`, each vertex having `j`
/// children with probability `p^j (1 - p)`.
///
/// Generated depth-first with one uniform per vertex. A tree that dies out
/// within the caps is `Clean`; otherwise the returned prefix is marked
/// with the caps that were hit and its unfinished slots are left childless.
pub fn sample_gw(p: f64, caps: GwCaps, rng: &mut RngHandle) -> Result<TruncatedTree> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain(format!("Galton-Watson parameter {p} must lie in (0, 1)")));
    }
    let mut status = TruncationStatus::Clean;
    let mut degrees: Vec<u32> = Vec::new();
    // unvisited children of each open ancestor
    let mut stack: Vec<u32> = Vec::new();
    loop {
        if degrees.len() >= caps.size {
            status.add(TruncationReason::SizeCap);
            let pending: u64 = 1 + stack.iter().map(|&r| r as u64).sum::<u64>();
            degrees.extend(std::iter::repeat_n(0, pending as usize));
            break;
        }
        let depth = stack.len() as u32;
        let mut d = rng.geometric(p).min(u32::MAX as u64 / 2) as u32;
        if depth >= caps.depth && d > 0 {
            status.add(TruncationReason::DepthCap);
            d = 0;
        }
        degrees.push(d);
        if d > 0 {
            stack.push(d);
        }
        while stack.last() == Some(&0) {
            stack.pop();
        }
        match stack.last_mut() {
            None => break,
            Some(top) => *top -= 1,
        }
    }
    let n = degrees.len();
    Ok(TruncatedTree::from_raw(degrees, vec![false; n], caps.depth, status))
}

/// The sequential conditioned sampler.
///
/// Children are decided one at a time. Until the first infinite child
/// appears a slot is infinite with probability `p` and finite of size `k`
/// with probability `pη_k(p)`; afterwards it is infinite with probability
/// `pη_∞(p) = 2p - 1`, finite of size `k` with probability `pη_k(p)`, and
/// ends the child list with probability `1 - p`. The marginal law is the
/// right one; the sampler is kept because coupling two parameters this way
/// fails when `p_1 > p_2 η_∞(p_2)`.
#[derive(Clone, Debug)]
pub struct NaiveSampler {
    param: LadderParam,
    config: LadderConfig,
}

impl NaiveSampler {
    pub fn new(p: f64, config: LadderConfig) -> Result<Self> {
        if !(p > 0.5 && p < 1.0) {
            return Err(domain(format!("sequential conditioned sampler needs 1/2 < p < 1, got {p}")));
        }
        Ok(NaiveSampler {
            param: LadderParam::new(p, &config)?,
            config,
        })
    }

    /// Depth-`depth` prefix; infinite lines reaching the horizon are
    /// frontier vertices.
    pub fn sample(&self, depth: u32, rng: &RngHandle) -> TruncatedTree {
        if depth == 0 {
            return TruncatedTree::frontier_leaf();
        }
        let p = self.param.p();
        let mut slots = rng.substream(0);
        let mut children = Vec::new();
        let mut status = TruncationStatus::Clean;
        let mut seen_infinite = false;
        for m in 1u64.. {
            if children.len() >= self.config.breadth_cap {
                status.add(TruncationReason::BreadthCap);
                break;
            }
            let u = slots.uniform();
            // layout of [0, 1): [finite sizes | infinite | end]
            let finite_end = 1.0 - p;
            let infinite_end = if seen_infinite { finite_end + 2.0 * p - 1.0 } else { 1.0 };
            let child = if u < finite_end {
                let (k, exact) = self.param.finite_at(u);
                let mut sub = rng.substream(m);
                let mut t = uniform_prefix(k, depth - 1, &mut sub);
                if !exact && depth > 1 {
                    t.mark(TruncationReason::OversizeSubtree);
                }
                t
            } else if u < infinite_end {
                seen_infinite = true;
                self.sample(depth - 1, &rng.substream(m))
            } else {
                break;
            };
            children.push(child);
        }
        let mut t = TruncatedTree::from_children(depth, &children);
        t.status_mut().merge(&status);
        t
    }
}

/// One draw from [`NaiveSampler`].
pub fn sample_naive_conditioned(p: f64, depth: u32, config: LadderConfig, rng: &RngHandle) -> Result<TruncatedTree> {
    Ok(NaiveSampler::new(p, config)?.sample(depth, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::eta_f64;
    use crate::trees::enumerate_trees;
    use std::collections::HashMap;

    fn within(freq: f64, expect: f64, n: usize, sigmas: f64) -> bool {
        (freq - expect).abs() <= sigmas * (expect * (1.0 - expect) / n as f64).sqrt()
    }

    #[test]
    fn tiny_sizes_are_forced() {
        let mut rng = RngHandle::new(0);
        for _ in 0..20 {
            assert_eq!(sample_uniform_tree(1, &mut rng).unwrap().encode(), "[]");
            assert_eq!(sample_uniform_tree(2, &mut rng).unwrap().encode(), "[[]]");
        }
        assert!(sample_uniform_tree(0, &mut rng).is_err());
    }

    #[test]
    fn uniform_size_three_is_balanced() {
        let mut rng = RngHandle::new(1);
        let n = 100_000;
        let paths = (0..n)
            .filter(|_| sample_uniform_tree(3, &mut rng).unwrap().encode() == "[[[]]]")
            .count();
        assert!(within(paths as f64 / n as f64, 0.5, n, 3.0));
    }

    #[test]
    fn uniform_large_trees_are_valid() {
        let mut rng = RngHandle::new(2);
        for k in [10u64, 100, 1000, 12345] {
            let t = sample_uniform_tree(k, &mut rng).unwrap();
            assert_eq!(t.size() as u64, k);
            assert!(OrderedTree::from_degrees(t.degrees().to_vec()).is_ok());
        }
    }

    #[test]
    fn uniform_hits_every_shape() {
        let mut rng = RngHandle::new(3);
        let shapes = enumerate_trees(5, 12).unwrap();
        let mut seen: HashMap<OrderedTree, usize> = HashMap::new();
        for _ in 0..5000 {
            *seen.entry(sample_uniform_tree(5, &mut rng).unwrap()).or_default() += 1;
        }
        assert_eq!(seen.len(), shapes.len());
    }

    #[test]
    fn top_down_prefixes_are_uniform() {
        // every vertex split top-down, against exact shape counts
        let mut rng = RngHandle::new(9);
        for k in [4u64, 6] {
            let shapes = enumerate_trees(k, 12).unwrap();
            let mut expect: HashMap<String, usize> = HashMap::new();
            for t in &shapes {
                *expect.entry(t.truncate(2).encode()).or_default() += 1;
            }
            let n = 60_000;
            let mut seen: HashMap<String, usize> = HashMap::new();
            for _ in 0..n {
                let mut out = Vec::new();
                prefix_with(k, 2, &mut rng, &mut out, 1);
                let len = out.len();
                let t = TruncatedTree::from_raw(out, vec![false; len], 2, TruncationStatus::Clean);
                *seen.entry(t.encode()).or_default() += 1;
            }
            assert_eq!(seen.len(), expect.len());
            for (text, c) in &expect {
                let prob = *c as f64 / shapes.len() as f64;
                assert!(within(seen[text] as f64 / n as f64, prob, n, 4.0), "{k} {text}");
            }
        }
    }

    #[test]
    fn huge_prefixes_are_cheap_and_valid() {
        let mut rng = RngHandle::new(10);
        let mut root_one = 0;
        let n = 4000;
        for _ in 0..n {
            let t = uniform_prefix(1 << 30, 3, &mut rng);
            assert!(TruncatedTree::from_parts(t.degrees().to_vec(), t.frontier().to_vec(), 3).is_ok());
            if t.root_degree() == 1 {
                root_one += 1;
            }
        }
        // root degree law tends to d/2^{d+1}
        assert!(within(root_one as f64 / n as f64, 0.25, n, 4.0));
    }

    #[test]
    fn gw_singleton_and_size_three() {
        let mut rng = RngHandle::new(4);
        let n = 200_000;
        let mut ones = 0;
        let mut threes = 0;
        let mut path3 = 0;
        let caps = GwCaps { depth: 64, size: 16 };
        for _ in 0..n {
            let t = sample_gw(0.5, caps, &mut rng).unwrap();
            if !t.is_clean() {
                continue;
            }
            match t.size() {
                1 => ones += 1,
                3 => {
                    threes += 1;
                    if t.degrees() == [1, 1, 0] {
                        path3 += 1;
                    }
                }
                _ => {}
            }
        }
        assert!(within(ones as f64 / n as f64, 0.5, n, 3.0));
        assert!(within(threes as f64 / n as f64, 1.0 / 16.0, n, 3.0));
        assert!(within(path3 as f64 / threes as f64, 0.5, threes, 3.0));
        assert!((eta_f64(3, 0.5) - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn gw_caps_are_flagged() {
        let mut rng = RngHandle::new(5);
        let caps = GwCaps { depth: 3, size: 50 };
        let mut flagged = 0;
        for _ in 0..2000 {
            let t = sample_gw(0.7, caps, &mut rng).unwrap();
            assert!(t.size() <= 50 + 64);
            assert!(OrderedTree::from_degrees(t.degrees().to_vec()).is_ok());
            if !t.is_clean() {
                flagged += 1;
            }
        }
        assert!(flagged > 0);
        assert!(sample_gw(1.0, caps, &mut rng).is_err());
        assert!(sample_gw(0.0, caps, &mut rng).is_err());
    }

    #[test]
    fn naive_slot_frequencies() {
        let sampler = NaiveSampler::new(0.75, LadderConfig::default()).unwrap();
        let n = 100_000;
        let mut first_inf = 0;
        let mut first_fin = 0;
        let mut second_given_fin = 0;
        let mut second_given_inf = 0;
        for i in 0..n {
            let t = sampler.sample(1, &RngHandle::new(1000 + i as u64));
            let lines = t.root_children_infinite();
            if lines[0] {
                first_inf += 1;
                if lines.get(1) == Some(&true) {
                    second_given_inf += 1;
                }
            } else {
                first_fin += 1;
                if lines[1] {
                    second_given_fin += 1;
                }
            }
        }
        assert!(within(first_inf as f64 / n as f64, 0.75, n, 3.0));
        assert!(within(second_given_fin as f64 / first_fin as f64, 0.75, first_fin, 3.0));
        assert!(within(second_given_inf as f64 / first_inf as f64, 0.5, first_inf, 3.0));
    }

    #[test]
    fn naive_rejects_critical_parameter() {
        assert!(NaiveSampler::new(0.5, LadderConfig::default()).is_err());
    }
}
