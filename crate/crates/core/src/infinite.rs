//! The conditioned-infinite tree `T_∞(p)` to a fixed depth, and exact laws
//! of its shallow prefixes.
//!
//! A node runs the ladder once. Finite slots receive uniform trees of the
//! drawn size and infinite slots recurse with fresh randomness, so the
//! depth-`d` prefix is exact for every `1/2 ≤ p < 1`.

use std::collections::BTreeMap;

use crate::error::{domain, Error, Result};
use crate::ladder::{sample_ladder, LadderConfig, LadderOutcome, LadderParam, LadderTrace};
use crate::numerics::{eta, eta_inf, Scalar};
use crate::rng::RngHandle;
use crate::trees::{TruncatedTree, TruncationReason};
use crate::unif_sampling::uniform_prefix;

/// Substream of a node that feeds its ladder.
pub(crate) const LADDER_STREAM: u64 = u64::MAX;
/// Under a slot's substream: randomness for a finite subtree.
pub(crate) const CHAIN_STREAM: u64 = 0;
/// Under a slot's substream: randomness for an infinite subtree.
pub(crate) const INF_STREAM: u64 = 1;

fn check_sampling_range(p: f64) -> Result<()> {
    if p == 1.0 {
        return Err(domain(
            "p = 1 has no finite representation: every slot is infinite and the child list never ends",
        ));
    }
    if !(0.5..1.0).contains(&p) {
        return Err(domain(format!("conditioned sampler needs 1/2 <= p < 1, got {p}")));
    }
    Ok(())
}

/// Sampler for depth-limited prefixes of `T_∞(p)`.
#[derive(Clone, Debug)]
pub struct InfiniteSampler {
    param: LadderParam,
    config: LadderConfig,
}

impl InfiniteSampler {
    pub fn new(p: f64, config: LadderConfig) -> Result<Self> {
        check_sampling_range(p)?;
        Ok(InfiniteSampler {
            param: LadderParam::new(p, &config)?,
            config,
        })
    }

    pub fn p(&self) -> f64 {
        self.param.p()
    }

    /// Depth-`depth` prefix; a depth-0 call is a lone frontier root.
    pub fn sample(&self, depth: u32, rng: &RngHandle) -> TruncatedTree {
        self.sample_with_trace(depth, rng).0
    }

    /// As [`InfiniteSampler::sample`], also returning the root's ladder.
    pub fn sample_with_trace(&self, depth: u32, rng: &RngHandle) -> (TruncatedTree, Option<LadderTrace>) {
        if depth == 0 {
            return (TruncatedTree::frontier_leaf(), None);
        }
        let trace = sample_ladder(
            std::slice::from_ref(&self.param),
            &mut rng.substream(LADDER_STREAM),
            &self.config,
        );
        let pt = &trace.params[0];
        let mut children = Vec::with_capacity(pt.children());
        for (i, &o) in pt.outcomes.iter().enumerate() {
            let m = i as u64 + 1;
            let slot = rng.substream(m);
            match o {
                LadderOutcome::Zero => break,
                LadderOutcome::Finite(k) => {
                    let mut t = uniform_prefix(k, depth - 1, &mut slot.substream(CHAIN_STREAM));
                    if depth > 1 && pt.oversize_slots.contains(&(i + 1)) {
                        t.mark(TruncationReason::OversizeSubtree);
                    }
                    children.push(t);
                }
                LadderOutcome::Infinite => {
                    children.push(self.sample(depth - 1, &slot.substream(INF_STREAM)));
                }
            }
        }
        let mut t = TruncatedTree::from_children(depth, &children);
        if pt.cut_off {
            t.mark(TruncationReason::BreadthCap);
        }
        (t, Some(trace))
    }
}

/// One draw from [`InfiniteSampler`].
pub fn sample_conditioned_infinite(p: f64, depth: u32, config: LadderConfig, rng: &RngHandle) -> Result<TruncatedTree> {
    Ok(InfiniteSampler::new(p, config)?.sample(depth, rng))
}

/// Root-level outcome pattern: one entry per child slot, in order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PatternSpec {
    slots: Vec<LadderOutcome>,
}

impl PatternSpec {
    pub fn new(slots: Vec<LadderOutcome>) -> Result<Self> {
        if slots.is_empty() {
            return Err(domain("a pattern has at least one slot"));
        }
        if slots.iter().any(|s| matches!(s, LadderOutcome::Zero | LadderOutcome::Finite(0))) {
            return Err(domain("pattern slots are finite sizes or infinite"));
        }
        Ok(PatternSpec { slots })
    }

    pub fn slots(&self) -> &[LadderOutcome] {
        &self.slots
    }

    pub fn infinite_count(&self) -> usize {
        self.slots.iter().filter(|s| **s == LadderOutcome::Infinite).count()
    }
}

/// Probability that the root of `T_∞(p)` has exactly these child slots:
/// `p(1-p) (pη_∞)^{I-1} ∏ pη_{k}` over the finite slots.
pub fn pattern_probability<S: Scalar>(p: &S, pattern: &PatternSpec) -> Result<S> {
    check_closed_half_open(p)?;
    let infinite = pattern.infinite_count() as u64;
    if infinite == 0 {
        return Ok(S::zero());
    }
    let pinf = p.clone() * eta_inf(p)?;
    let mut acc = p.clone() * (S::one() - p.clone()) * pinf.powu(infinite - 1);
    for s in pattern.slots() {
        if let LadderOutcome::Finite(k) = s {
            acc = acc * p.clone() * eta(*k, p)?;
        }
    }
    Ok(acc)
}

fn check_closed_half_open<S: Scalar>(p: &S) -> Result<()> {
    if !(*p >= S::pow2(-1) && *p < S::one()) {
        return Err(domain(format!("p = {p:?} must lie in [1/2, 1)")));
    }
    Ok(())
}

/// Exact law of a depth-limited prefix on an enumerated support.
#[derive(Clone, Debug)]
pub struct PrefixLaw<S> {
    pub depth: u32,
    /// Canonical text form (with frontier markers) to probability.
    pub support: BTreeMap<String, S>,
    /// Mass of prefixes outside the enumerated support.
    pub escaped: S,
}

/// Limits for [`prefix_law`].
#[derive(Clone, Copy, Debug)]
pub struct PrefixLawCaps {
    /// Most children of any enumerated vertex.
    pub breadth: u32,
    /// Most vertices of any enumerated prefix.
    pub size: usize,
    /// Most support entries before giving up.
    pub budget: usize,
}

impl Default for PrefixLawCaps {
    fn default() -> Self {
        PrefixLawCaps {
            breadth: 3,
            size: 64,
            budget: 1_000_000,
        }
    }
}

/// Exact law of the depth-`depth` prefix of `T_∞(p)`, restricted to
/// prefixes within the caps.
///
/// A finite child contributes `p·P(T(p) finite with this prefix)`, which is
/// `p · ∏ p^{deg}(1-p)` over its inner vertices times `(1-η_∞)` per vertex
/// at its horizon; an infinite child recurses. The root weight is
/// `p(1-p)(pη_∞)^{I-1}` for `I` infinite children.
pub fn prefix_law<S: Scalar>(p: &S, depth: u32, caps: PrefixLawCaps) -> Result<PrefixLaw<S>> {
    check_closed_half_open(p)?;
    let survive = eta_inf(p)?;
    let mut finite_memo: Vec<Vec<(TruncatedTree, S)>> = Vec::new();
    for h in 0..depth {
        let level = if h == 0 {
            vec![(TruncatedTree::point(), S::one() - survive.clone())]
        } else {
            let kids: Vec<(TruncatedTree, S)> = finite_memo[h as usize - 1].clone();
            let mut out = Vec::new();
            for c in 0..=caps.breadth {
                for (combo, w) in products(&kids, c, caps)? {
                    let t = TruncatedTree::from_children(h, &combo);
                    let weight = w * p.powu(c as u64) * (S::one() - p.clone());
                    out.push((t, weight));
                }
            }
            out
        };
        finite_memo.push(level);
    }
    let mut infinite: Vec<(TruncatedTree, S)> = vec![(TruncatedTree::frontier_leaf(), S::one())];
    let pinf = p.clone() * survive;
    for h in 1..=depth {
        // each child is a finite prefix (weight p·w) or an infinite one (w)
        let mut options: Vec<(TruncatedTree, S, bool)> = finite_memo[h as usize - 1]
            .iter()
            .map(|(t, w)| (t.clone(), p.clone() * w.clone(), false))
            .collect();
        options.extend(infinite.iter().map(|(t, w)| (t.clone(), w.clone(), true)));
        let mut out = Vec::new();
        for c in 1..=caps.breadth {
            let mut partial: Vec<(Vec<usize>, S, usize, usize)> = vec![(Vec::new(), S::one(), 0, 1)];
            for _ in 0..c {
                let mut next = Vec::new();
                for (picks, w, inf, size) in &partial {
                    for (o, (t, ow, is_inf)) in options.iter().enumerate() {
                        let size = size + t.size();
                        if size > caps.size {
                            continue;
                        }
                        let mut picks = picks.clone();
                        picks.push(o);
                        next.push((picks, w.clone() * ow.clone(), inf + *is_inf as usize, size));
                    }
                }
                if next.len() > caps.budget {
                    return Err(Error::Resource(format!("prefix support exceeds budget {}", caps.budget)));
                }
                partial = next;
            }
            for (picks, w, inf, _) in partial {
                if inf == 0 {
                    continue;
                }
                let kids: Vec<TruncatedTree> = picks.iter().map(|&o| options[o].0.clone()).collect();
                let t = TruncatedTree::from_children(h, &kids);
                let weight = p.clone() * (S::one() - p.clone()) * pinf.powu(inf as u64 - 1) * w;
                out.push((t, weight));
            }
        }
        infinite = out;
    }
    let mut support: BTreeMap<String, S> = BTreeMap::new();
    let mut total = S::zero();
    for (t, w) in infinite {
        if w.is_zero_value() {
            continue;
        }
        total = total + w.clone();
        let e = support.entry(t.encode()).or_insert_with(S::zero);
        *e = e.clone() + w;
    }
    Ok(PrefixLaw {
        depth,
        escaped: S::one() - total,
        support,
    })
}

/// All ordered `c`-tuples from `kids`, with product weights, within caps.
fn products<S: Scalar>(kids: &[(TruncatedTree, S)], c: u32, caps: PrefixLawCaps) -> Result<Vec<(Vec<TruncatedTree>, S)>> {
    let mut partial: Vec<(Vec<TruncatedTree>, S, usize)> = vec![(Vec::new(), S::one(), 1)];
    for _ in 0..c {
        let mut next = Vec::new();
        for (combo, w, size) in &partial {
            for (t, tw) in kids {
                let size = size + t.size();
                if size > caps.size {
                    continue;
                }
                let mut combo = combo.clone();
                combo.push(t.clone());
                next.push((combo, w.clone() * tw.clone(), size));
            }
        }
        if next.len() > caps.budget {
            return Err(Error::Resource(format!("prefix support exceeds budget {}", caps.budget)));
        }
        partial = next;
    }
    Ok(partial.into_iter().map(|(c, w, _)| (c, w)).collect())
}

/// Sum of [`pattern_probability`] over every pattern with at most
/// `max_infinite` infinite slots and finite sizes at most `size_cap`.
///
/// Arrangements of `I` infinite and `J` finite slots number
/// `C(I+J, I)`, so the sum over `J` is `(1 - a)^{-(I+1)}` with
/// `a = Σ_{k ≤ size_cap} pη_k`.
pub fn pattern_partial_mass<S: Scalar>(p: &S, size_cap: u64, max_infinite: u32) -> Result<S> {
    check_closed_half_open(p)?;
    let mut a = S::zero();
    for k in 1..=size_cap {
        a = a + p.clone() * eta(k, p)?;
    }
    let inv = S::one() / (S::one() - a);
    let pinf = p.clone() * eta_inf(p)?;
    let mut total = S::zero();
    for i in 1..=max_infinite as u64 {
        total = total + p.clone() * (S::one() - p.clone()) * pinf.powu(i - 1) * inv.powu(i + 1);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{ladder_thresholds, parse_rational, Stage};
    use num_rational::BigRational;

    fn q(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    fn zero() -> BigRational {
        q("0")
    }

    fn one() -> BigRational {
        q("1")
    }

    fn pattern(slots: &[Option<u64>]) -> PatternSpec {
        PatternSpec::new(
            slots
                .iter()
                .map(|s| s.map_or(LadderOutcome::Infinite, LadderOutcome::Finite))
                .collect(),
        )
        .unwrap()
    }

    /// Probability of a root pattern straight from the ladder: sum over the
    /// position of the forced slot of the product of interval masses.
    fn ladder_oracle(p: &BigRational, slots: &[LadderOutcome]) -> BigRational {
        let mass = |stage: Stage, o: LadderOutcome| -> BigRational {
            let t = ladder_thresholds(p, stage, 0).unwrap();
            match o {
                LadderOutcome::Zero => t.zero_mass.clone(),
                LadderOutcome::Infinite => t.infinite_mass.clone(),
                LadderOutcome::Finite(k) => {
                    let scale = if stage == Stage::PreX { 2u64 } else { 1 };
                    BigRational::from_integer(scale.into()) * p * eta(k, p).unwrap()
                }
            }
        };
        let mut total = zero();
        for x in 1..=slots.len() {
            if slots[x - 1] != LadderOutcome::Infinite {
                continue;
            }
            let mut prob = q(&format!("1/{}", 1u64 << x));
            let mut n_inf = 0u32;
            for (m, &o) in slots.iter().enumerate().map(|(i, o)| (i + 1, o)) {
                if m < x {
                    prob *= mass(Stage::PreX, o);
                } else if m > x {
                    prob *= mass(Stage::PostX(n_inf), o);
                }
                if o == LadderOutcome::Infinite {
                    n_inf += 1;
                }
            }
            prob *= mass(Stage::PostX(n_inf), LadderOutcome::Zero);
            total += prob;
        }
        total
    }

    #[test]
    fn pattern_examples() {
        let p = q("3/4");
        assert_eq!(pattern_probability(&p, &pattern(&[None])).unwrap(), q("3/16"));
        let h = q("1/2");
        assert_eq!(pattern_probability(&h, &pattern(&[Some(1), None])).unwrap(), q("1/16"));
        assert_eq!(pattern_probability(&h, &pattern(&[None, None])).unwrap(), zero());
        assert_eq!(pattern_probability(&h, &pattern(&[None])).unwrap(), q("1/4"));
        assert_eq!(pattern_probability(&p, &pattern(&[Some(2)])).unwrap(), zero());
        assert!(PatternSpec::new(vec![]).is_err());
        assert!(pattern_probability(&one(), &pattern(&[None])).is_err());
    }

    #[test]
    fn closed_form_matches_ladder_oracle() {
        let patterns: Vec<Vec<Option<u64>>> = vec![
            vec![None],
            vec![None, None],
            vec![Some(1), None],
            vec![None, Some(2), None],
            vec![Some(3), Some(1), None, None, Some(2)],
            vec![None, None, None, Some(1)],
        ];
        for ps in ["1/2", "3/4", "9/10", "51/100"] {
            let p = q(ps);
            for pat in &patterns {
                let spec = pattern(pat);
                assert_eq!(
                    pattern_probability(&p, &spec).unwrap(),
                    ladder_oracle(&p, spec.slots()),
                    "p = {ps}, pattern {pat:?}"
                );
            }
        }
    }

    #[test]
    fn pattern_mass_accounts_for_everything() {
        let p = q("3/4");
        // with every size allowed the I ≤ n mass is exactly 1 - η_∞^n = 1 - (2/3)^n
        let partial = pattern_partial_mass(&p, 64, 8).unwrap();
        let all_sizes = one() - q("2/3").powu(8);
        assert!(partial < all_sizes);
        assert!(all_sizes.clone() - partial.clone() < q("1/1000000"));
        assert!(partial > q("96/100"));
        assert!(pattern_partial_mass(&p, 64, 12).unwrap() > q("99/100"));
        let more = pattern_partial_mass(&p, 65, 8).unwrap();
        assert!(more > partial);
    }

    #[test]
    fn depth_one_law() {
        let p = q("3/4");
        let law = prefix_law(&p, 1, PrefixLawCaps::default()).unwrap();
        assert_eq!(law.support["[[]*]"], q("3/16"));
        // two children, first finite: p(1-p)(1-p)
        assert_eq!(law.support["[[],[]*]"], q("3/64"));
        assert_eq!(law.support["[[]*,[]*]"], q("3/32"));
        let total = law.support.values().fold(zero(), |a, b| a + b);
        assert_eq!(total + law.escaped.clone(), one());
        assert!(law.escaped > zero());
        let half = prefix_law(&q("1/2"), 1, PrefixLawCaps::default()).unwrap();
        assert_eq!(half.support["[[]*]"], q("1/4"));
        assert!(!half.support.contains_key("[[]*,[]*]"));
    }

    #[test]
    fn deeper_law_is_consistent_with_depth_one() {
        let p = q("3/4");
        let caps = PrefixLawCaps {
            breadth: 2,
            size: 64,
            budget: 100_000,
        };
        let d2 = prefix_law(&p, 2, caps).unwrap();
        let d1 = prefix_law(&p, 1, caps).unwrap();
        // project depth-2 prefixes to depth 1: each projection can only lose mass to the cap
        let mut proj: BTreeMap<String, BigRational> = BTreeMap::new();
        for (k, w) in &d2.support {
            let t = TruncatedTree::decode(k, 2).unwrap().truncate(1);
            *proj.entry(t.encode()).or_insert_with(BigRational::zero) += w;
        }
        for (k, w) in &proj {
            assert!(w <= &d1.support[k], "{k}");
        }
        // a lone infinite child carries a depth-1 prefix law of its own
        assert_eq!(proj["[[]*]"], q("3/16") * (one() - d1.escaped.clone()));
    }

    #[test]
    fn sampler_examples() {
        let s = InfiniteSampler::new(0.5, LadderConfig::default()).unwrap();
        let t0 = s.sample(0, &RngHandle::new(1));
        assert_eq!(t0.encode(), "[]*");
        assert!(InfiniteSampler::new(1.0, LadderConfig::default()).is_err());
        assert!(InfiniteSampler::new(0.4, LadderConfig::default()).is_err());
    }

    #[test]
    fn critical_samples_have_one_line() {
        let s = InfiniteSampler::new(0.5, LadderConfig::default()).unwrap();
        for seed in 0..2000 {
            let t = s.sample(3, &RngHandle::new(seed));
            assert_eq!(t.frontier_count(), 1, "seed {seed}: {}", t.encode());
            assert_eq!(t.root_children_infinite().iter().filter(|&&b| b).count(), 1);
        }
    }

    #[test]
    fn single_infinite_child_frequency() {
        for (p, expect) in [(0.5, 0.25), (0.75, 3.0 / 16.0)] {
            let s = InfiniteSampler::new(p, LadderConfig::default()).unwrap();
            let n = 100_000;
            let hits = (0..n)
                .filter(|&i| s.sample(1, &RngHandle::new(i)).encode() == "[[]*]")
                .count();
            let sd = (expect * (1.0 - expect) / n as f64).sqrt();
            assert!((hits as f64 / n as f64 - expect).abs() < 4.0 * sd, "p = {p}");
        }
    }

    #[test]
    fn reproducible_by_seed() {
        let s = InfiniteSampler::new(0.75, LadderConfig::default()).unwrap();
        let a = s.sample(3, &RngHandle::new(42));
        let b = s.sample(3, &RngHandle::new(42));
        assert_eq!(a, b);
    }
}
