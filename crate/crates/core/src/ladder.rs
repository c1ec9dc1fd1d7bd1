//! Turning shared uniforms into per-slot subtree sizes.
//!
//! A node draws `X` with `P(X = l) = 2^{-l}` and one uniform per slot
//! `m ≠ X`. Slot `X` is infinite. Before `X` a slot is finite of size `k`
//! with mass `2pη_k(p)` and infinite otherwise; after `X` the outcome is 0
//! (no further child) with the mass returned by [`zero_mass`], then finite
//! sizes with mass `pη_k(p)`, then infinite. The node stops at the first 0.
//! Evaluating several parameters against the same uniforms is the source of
//! every monotone coupling in this crate.

use std::fmt;

use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Serialize, Serializer};

use crate::error::{domain, Result};
use crate::numerics::{eta_f64, zero_mass};
use crate::rng::RngHandle;

/// Size of the subtree rooted at one child slot.
///
/// The derived order is `Zero < Finite(1) < Finite(2) < … < Infinite`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LadderOutcome {
    /// No child at this slot or any later one.
    Zero,
    Finite(u64),
    Infinite,
}

impl LadderOutcome {
    pub fn is_finite(&self) -> bool {
        matches!(self, LadderOutcome::Finite(_))
    }
}

impl fmt::Display for LadderOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LadderOutcome::Zero => f.write_str("0"),
            LadderOutcome::Finite(k) => write!(f, "{k}"),
            LadderOutcome::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for LadderOutcome {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LadderOutcome::Zero => s.serialize_u64(0),
            LadderOutcome::Finite(k) => s.serialize_u64(*k),
            LadderOutcome::Infinite => s.serialize_str("inf"),
        }
    }
}

/// Limits applied while running the ladder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LadderConfig {
    /// Finite sizes whose cumulative mass is tabulated up front.
    pub table_cap: u64,
    /// Sizes beyond the table are found by walking the mass recurrence up
    /// to this size; larger sizes are reported as this size and flagged.
    pub scan_cap: u64,
    /// Most slots one node may open before it is flagged and cut off.
    pub breadth_cap: usize,
}

impl Default for LadderConfig {
    fn default() -> Self {
        LadderConfig {
            table_cap: 1 << 16,
            scan_cap: 1 << 22,
            breadth_cap: 1 << 16,
        }
    }
}

/// Float lookup tables for one parameter.
///
/// `cum[k-1] = Σ_{l ≤ k} pη_l(p)`; all finite masses together total `1 - p`.
#[derive(Clone, Debug)]
pub struct LadderParam {
    p: f64,
    cum: Vec<f64>,
    finite_total: f64,
    pre_infinite_from: f64,
    zero_cache: Vec<f64>,
    scan_cap: u64,
}

impl LadderParam {
    pub fn new(p: f64, config: &LadderConfig) -> Result<Self> {
        if !(0.5..=1.0).contains(&p) {
            return Err(domain(format!("ladder parameter {p} must lie in [1/2, 1]")));
        }
        let finite_total = 1.0 - p;
        let mut cum = Vec::new();
        if p < 1.0 {
            let mut term = p * eta_f64(1, p);
            let mut acc = 0.0;
            let ratio = 4.0 * p * (1.0 - p);
            for k in 1..=config.table_cap {
                acc += term;
                cum.push(acc);
                if acc >= finite_total || term == 0.0 {
                    break;
                }
                // η_{k+1}/η_k = 2(2k-1)/(k+1) · p(1-p)
                term *= ratio * (2 * k - 1) as f64 / (2 * (k + 1)) as f64;
            }
        }
        let zero_cache = (0..64)
            .map(|n| if p < 1.0 { zero_mass(&p, n).unwrap_or(0.0) } else { 0.0 })
            .collect();
        Ok(LadderParam {
            p,
            cum,
            finite_total,
            pre_infinite_from: 2.0 * finite_total,
            zero_cache,
            scan_cap: config.scan_cap,
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    fn zero(&self, n: u32) -> f64 {
        match self.zero_cache.get(n as usize) {
            Some(&z) => z,
            None => zero_mass(&self.p, n).unwrap_or(0.0),
        }
    }

    /// Smallest `k` with `offset + scale·cum[k] > u`; the flag is false when
    /// the size could only be bounded below.
    fn finite_size(&self, u: f64, offset: f64, scale: f64) -> (u64, bool) {
        // small sizes carry most of the mass
        let head = self.cum.len().min(8);
        let idx = match self.cum[..head].iter().position(|&c| offset + scale * c > u) {
            Some(i) => i,
            None => head + self.cum[head..].partition_point(|&c| offset + scale * c <= u),
        };
        if idx < self.cum.len() {
            return (idx as u64 + 1, true);
        }
        let k0 = self.cum.len() as u64;
        if k0 == 0 {
            return (1, false);
        }
        let p = self.p;
        if p == 0.5 {
            return self.critical_tail_size(k0, (u - offset) / scale);
        }
        let ratio = 4.0 * p * (1.0 - p);
        let mut acc = *self.cum.last().expect("non-empty");
        let mut term = p * eta_f64(k0, p);
        let mut k = k0;
        while k < self.scan_cap {
            term *= ratio * (2 * k - 1) as f64 / (2 * (k + 1)) as f64;
            k += 1;
            acc += term;
            if offset + scale * acc > u {
                return (k, true);
            }
            if term == 0.0 {
                break;
            }
        }
        (k.max(k0 + 1), false)
    }

    /// At `p = 1/2` the cumulative mass is `1/2 - b_k/2` with
    /// `b_k = C(2k, k)/4^k`, so the tail is searched by bisection.
    fn critical_tail_size(&self, k0: u64, target: f64) -> (u64, bool) {
        // smallest k with cum(k) > target, i.e. b_k < 1 - 2 target
        let bound = 1.0 - 2.0 * target;
        if central_binomial_ratio(self.scan_cap) >= bound {
            return (self.scan_cap, false);
        }
        let (mut lo, mut hi) = (k0, self.scan_cap);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if central_binomial_ratio(mid) < bound {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        (hi, true)
    }

    /// Outcome of a slot before the forced infinite slot.
    pub fn pre_x(&self, u: f64) -> (LadderOutcome, bool) {
        if u >= self.pre_infinite_from {
            return (LadderOutcome::Infinite, true);
        }
        let (k, exact) = self.finite_size(u, 0.0, 2.0);
        (LadderOutcome::Finite(k), exact)
    }

    /// Outcome of a slot after the forced infinite slot, with `n` infinite
    /// outcomes so far.
    pub fn post_x(&self, n: u32, u: f64) -> (LadderOutcome, bool) {
        let z = self.zero(n);
        if u < z {
            return (LadderOutcome::Zero, true);
        }
        if u >= z + self.finite_total {
            return (LadderOutcome::Infinite, true);
        }
        let (k, exact) = self.finite_size(u, z, 1.0);
        (LadderOutcome::Finite(k), exact)
    }

    /// Finite size with mass `pη_k(p)` for `u` in `[0, 1 - p)`.
    pub fn finite_at(&self, u: f64) -> (u64, bool) {
        self.finite_size(u, 0.0, 1.0)
    }
}

/// `C(2k, k)/4^k` for large `k`, from its asymptotic series (the terms
/// kept are accurate far below f64 resolution once `k` exceeds a few
/// thousand).
fn central_binomial_ratio(k: u64) -> f64 {
    let x = 1.0 / k as f64;
    let series = 1.0 - x / 8.0 + x * x / 128.0 + 5.0 * x * x * x / 1024.0 - 21.0 * x * x * x * x / 32768.0;
    series / (std::f64::consts::PI * k as f64).sqrt()
}

/// Draws `X` with `P(X = l) = 2^{-l}`.
pub fn draw_x(rng: &mut RngHandle) -> u32 {
    rng.half_geometric()
}

/// One parameter's outcomes at one node.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTrace {
    pub p: f64,
    /// `L_1, L_2, …`, ending at the first `Zero` unless cut off.
    pub outcomes: Vec<LadderOutcome>,
    /// Slot index of the first `Zero`.
    pub m0: Option<usize>,
    /// Cut off by the breadth cap before a `Zero` appeared.
    pub cut_off: bool,
    /// Slots (1-based) whose finite size is only a lower bound.
    pub oversize_slots: Vec<usize>,
}

impl ParamTrace {
    /// `n_∞(p, m)`: infinite outcomes among slots before `m`.
    pub fn n_inf(&self, m: usize) -> usize {
        self.outcomes
            .iter()
            .take(m.saturating_sub(1))
            .filter(|o| **o == LadderOutcome::Infinite)
            .count()
    }

    /// Number of children, `m_0 - 1` (or the cut-off slot count).
    pub fn children(&self) -> usize {
        match self.m0 {
            Some(m0) => m0 - 1,
            None => self.outcomes.len(),
        }
    }

    /// Outcome at slot `m`, with stopped slots reading as `Zero`.
    pub fn at(&self, m: usize) -> LadderOutcome {
        self.outcomes.get(m - 1).copied().unwrap_or(LadderOutcome::Zero)
    }

    pub fn is_compromised(&self) -> bool {
        self.cut_off || !self.oversize_slots.is_empty()
    }
}

/// Shared randomness of one node and what each parameter made of it.
#[derive(Clone, Debug, PartialEq)]
pub struct LadderTrace {
    pub x: u32,
    /// Uniforms in slot order, skipping slot `X`.
    pub u: Vec<f64>,
    pub params: Vec<ParamTrace>,
    /// Slots where a smaller parameter got a larger outcome.
    pub monotonicity_violations: usize,
}

impl LadderTrace {
    /// Largest slot count over parameters.
    pub fn slots(&self) -> usize {
        self.params.iter().map(|t| t.children()).max().unwrap_or(0)
    }
}

impl Serialize for ParamTrace {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(3))?;
        map.serialize_entry("p", &self.p)?;
        map.serialize_entry("L", &self.outcomes)?;
        map.serialize_entry("m0", &self.m0)?;
        map.end()
    }
}

impl Serialize for LadderTrace {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        struct Us<'a>(&'a [f64]);
        impl Serialize for Us<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                let mut seq = s.serialize_seq(Some(self.0.len()))?;
                for u in self.0 {
                    seq.serialize_element(u)?;
                }
                seq.end()
            }
        }
        let mut map = s.serialize_map(Some(3))?;
        map.serialize_entry("X", &self.x)?;
        map.serialize_entry("U", &Us(&self.u))?;
        map.serialize_entry("params", &self.params)?;
        map.end()
    }
}

/// Runs one parameter. `next_u` is called once per slot other than `X`.
pub fn run_ladder(param: &LadderParam, x: u32, next_u: impl FnMut() -> f64, config: &LadderConfig) -> LadderTrace {
    run_ladder_grid_unchecked(std::slice::from_ref(param), x, next_u, config)
}

/// Runs a sorted grid of parameters on shared uniforms.
pub fn run_ladder_grid(
    params: &[LadderParam],
    x: u32,
    next_u: impl FnMut() -> f64,
    config: &LadderConfig,
) -> Result<LadderTrace> {
    if params.is_empty() {
        return Err(domain("parameter grid is empty"));
    }
    if params.windows(2).any(|w| w[0].p >= w[1].p) {
        return Err(domain("parameter grid must be strictly increasing"));
    }
    Ok(run_ladder_grid_unchecked(params, x, next_u, config))
}

pub(crate) fn run_ladder_grid_unchecked(
    params: &[LadderParam],
    x: u32,
    next_u: impl FnMut() -> f64,
    config: &LadderConfig,
) -> LadderTrace {
    let mut s = GridScratch::default();
    run_grid_into(params, x, next_u, config, &mut s);
    s.to_trace(params, x)
}

/// Reusable buffers for running a grid at one node.
///
/// `outcomes[(m - 1) * r + i]` is parameter `i` at slot `m`, with slots at
/// or after a parameter's first `Zero` reading as `Zero`.
#[derive(Clone, Debug, Default)]
pub(crate) struct GridScratch {
    pub outcomes: Vec<LadderOutcome>,
    pub r: usize,
    /// Slots in which some parameter still has a child.
    pub slots: usize,
    pub m0: Vec<Option<usize>>,
    /// `(slot, parameter)` pairs whose finite size is only a lower bound.
    pub oversize: Vec<(usize, usize)>,
    pub cut_off: bool,
    pub violations: usize,
    pub us: Vec<f64>,
    n_inf: Vec<u32>,
}

impl GridScratch {
    pub fn at(&self, m: usize, i: usize) -> LadderOutcome {
        self.outcomes[(m - 1) * self.r + i]
    }

    pub fn to_trace(&self, params: &[LadderParam], x: u32) -> LadderTrace {
        let traces = params
            .iter()
            .enumerate()
            .map(|(i, lp)| {
                let len = match self.m0[i] {
                    Some(m0) => m0,
                    None => self.outcomes.len() / self.r.max(1),
                };
                ParamTrace {
                    p: lp.p,
                    outcomes: (1..=len).map(|m| self.at(m, i)).collect(),
                    m0: self.m0[i],
                    cut_off: self.m0[i].is_none(),
                    oversize_slots: self.oversize.iter().filter(|o| o.1 == i).map(|o| o.0).collect(),
                }
            })
            .collect();
        LadderTrace {
            x,
            u: self.us.clone(),
            params: traces,
            monotonicity_violations: self.violations,
        }
    }
}

pub(crate) fn run_grid_into(
    params: &[LadderParam],
    x: u32,
    mut next_u: impl FnMut() -> f64,
    config: &LadderConfig,
    s: &mut GridScratch,
) {
    let r = params.len();
    s.r = r;
    s.outcomes.clear();
    s.m0.clear();
    s.m0.resize(r, None);
    s.oversize.clear();
    s.cut_off = false;
    s.violations = 0;
    s.us.clear();
    s.n_inf.clear();
    s.n_inf.resize(r, 0);
    s.slots = 0;
    let mut alive = r;
    let mut m = 0usize;
    while alive > 0 {
        m += 1;
        if m > config.breadth_cap {
            s.cut_off = true;
            break;
        }
        s.slots = m;
        if m == x as usize {
            for n in s.n_inf.iter_mut() {
                *n += 1;
            }
            s.outcomes.extend(std::iter::repeat_n(LadderOutcome::Infinite, r));
            continue;
        }
        let u = next_u();
        s.us.push(u);
        let mut prev = LadderOutcome::Zero;
        for (i, lp) in params.iter().enumerate() {
            let outcome = if s.m0[i].is_some() {
                LadderOutcome::Zero
            } else {
                let (o, exact) = if m < x as usize { lp.pre_x(u) } else { lp.post_x(s.n_inf[i], u) };
                if !exact {
                    s.oversize.push((m, i));
                }
                match o {
                    LadderOutcome::Zero => {
                        s.m0[i] = Some(m);
                        alive -= 1;
                    }
                    LadderOutcome::Infinite => s.n_inf[i] += 1,
                    LadderOutcome::Finite(_) => {}
                }
                o
            };
            if outcome < prev {
                s.violations += 1;
            }
            prev = outcome;
            s.outcomes.push(outcome);
        }
        if alive == 0 {
            // the final slot only records stops
            s.slots = m - 1;
        }
    }
}

/// Draws `X` and the uniforms from `rng` and runs the grid.
pub fn sample_ladder(params: &[LadderParam], rng: &mut RngHandle, config: &LadderConfig) -> LadderTrace {
    let x = draw_x(rng);
    run_ladder_grid_unchecked(params, x, || rng.uniform(), config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_tail_matches_the_scan() {
        let cfg = LadderConfig {
            table_cap: 1 << 12,
            ..LadderConfig::default()
        };
        let fast = param(0.5);
        let small = LadderParam::new(0.5, &cfg).unwrap();
        for u in [0.49, 0.499, 0.4995, 0.4998] {
            let (a, ea) = fast.finite_at(u);
            let (b, eb) = small.finite_at(u);
            assert!(ea && eb);
            assert!(a.abs_diff(b) <= 1 + a / 1_000_000, "{u}: {a} vs {b}");
        }
        assert!(!small.finite_at(0.49999).1 && !fast.finite_at(0.49999).1);
        let b = central_binomial_ratio(5000);
        let exact = (1..=5000).fold(1.0f64, |acc, j| acc * (2 * j - 1) as f64 / (2 * j) as f64);
        assert!((b - exact).abs() < 1e-14 * exact);
    }
    use crate::numerics::{eta_inf, post_infinite_mass};

    fn param(p: f64) -> LadderParam {
        LadderParam::new(p, &LadderConfig::default()).unwrap()
    }

    fn run_fixed(p: &[f64], x: u32, us: &[f64]) -> LadderTrace {
        let params: Vec<_> = p.iter().map(|&p| param(p)).collect();
        // once the listed uniforms run out, 0.0 stops every p < 1
        let mut it = us.iter().copied();
        let cfg = LadderConfig {
            breadth_cap: 20,
            ..LadderConfig::default()
        };
        run_ladder_grid(&params, x, || it.next().unwrap_or(0.0), &cfg).unwrap()
    }

    #[test]
    fn outcome_order() {
        use LadderOutcome::*;
        assert!(Zero < Finite(1));
        assert!(Finite(1) < Finite(7));
        assert!(Finite(1_000_000) < Infinite);
        assert_eq!(serde_json::to_string(&[Zero, Finite(3), Infinite]).unwrap(), r#"[0,3,"inf"]"#);
    }

    #[test]
    fn worked_single_run() {
        // thresholds at 1/2: PreX cuts 1/2, 5/8; PostX(1) zero mass 1/2
        let t = run_fixed(&[0.5], 2, &[0.6, 0.2]);
        use LadderOutcome::*;
        assert_eq!(t.params[0].outcomes, vec![Finite(2), Infinite, Zero]);
        assert_eq!(t.params[0].m0, Some(3));
        assert_eq!(t.u, vec![0.6, 0.2]);
        assert_eq!(t.params[0].n_inf(3), 1);
        assert_eq!(t.params[0].children(), 2);
    }

    #[test]
    fn p_one_is_infinite_before_x() {
        let t = run_fixed(&[1.0], 4, &[0.1, 0.5, 0.99, 0.3, 0.7]);
        let o = &t.params[0].outcomes;
        assert!(o[..4].iter().all(|&l| l == LadderOutcome::Infinite));
    }

    #[test]
    fn p_one_never_stops() {
        let cfg = LadderConfig {
            breadth_cap: 50,
            ..LadderConfig::default()
        };
        let lp = LadderParam::new(1.0, &cfg).unwrap();
        let mut rng = RngHandle::new(3);
        let t = sample_ladder(&[lp], &mut rng, &cfg);
        assert!(t.params[0].cut_off);
        assert_eq!(t.params[0].m0, None);
    }

    #[test]
    fn grid_example_before_x() {
        let t = run_fixed(&[0.5, 0.75], 3, &[0.45]);
        assert_eq!(t.params[0].outcomes[0], LadderOutcome::Finite(1));
        assert_eq!(t.params[1].outcomes[0], LadderOutcome::Finite(3));
    }

    #[test]
    fn grid_example_after_x() {
        let t = run_fixed(&[0.5, 0.75], 1, &[0.45, 0.1]);
        assert_eq!(t.params[0].outcomes, vec![LadderOutcome::Infinite, LadderOutcome::Zero]);
        // zero mass at 3/4 with one infinite slot is 3/8 < 0.45
        assert!(t.params[1].outcomes[1] > LadderOutcome::Zero);
        assert_eq!(t.monotonicity_violations, 0);
    }

    #[test]
    fn unsorted_grid_rejected() {
        let ps = [param(0.75), param(0.5)];
        assert!(run_ladder_grid(&ps, 1, || 0.5, &LadderConfig::default()).is_err());
        assert!(LadderParam::new(0.4, &LadderConfig::default()).is_err());
    }

    #[test]
    fn grid_matches_single_runs_bitwise() {
        let cfg = LadderConfig::default();
        let grid = [param(0.5), param(0.6), param(0.9)];
        for seed in 0..300 {
            let t = sample_ladder(&grid, &mut RngHandle::new(seed), &cfg);
            assert_eq!(t.monotonicity_violations, 0);
            for (i, lp) in grid.iter().enumerate() {
                let single = sample_ladder(std::slice::from_ref(lp), &mut RngHandle::new(seed), &cfg);
                assert_eq!(single.params[0], t.params[i]);
                assert_eq!(single.x, t.x);
            }
            for w in t.params.windows(2) {
                assert!(w[0].children() <= w[1].children());
            }
        }
    }

    #[test]
    fn infinite_frequency_before_x() {
        let p = 0.75;
        let lp = param(p);
        let mut rng = RngHandle::new(11);
        let n = 200_000;
        let hits = (0..n).filter(|_| lp.pre_x(rng.uniform()).0 == LadderOutcome::Infinite).count();
        let expect = p * eta_inf(&p).unwrap();
        assert!((expect - 0.5).abs() < 1e-12);
        let sd = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - expect).abs() < 3.0 * sd);
    }

    #[test]
    fn infinite_frequency_after_x() {
        let p = 0.75;
        let lp = param(p);
        let mut rng = RngHandle::new(12);
        let n = 200_000;
        for k in 1..=3u32 {
            let hits = (0..n).filter(|_| lp.post_x(k, rng.uniform()).0 == LadderOutcome::Infinite).count();
            let expect = post_infinite_mass(&p, k).unwrap();
            let sd = (expect * (1.0 - expect) / n as f64).sqrt();
            assert!((hits as f64 / n as f64 - expect).abs() < 3.0 * sd, "n = {k}");
        }
    }

    #[test]
    fn finite_lookup_matches_cumulative_mass() {
        let lp = param(0.5);
        // P(size 1) = pη_1 = 1/4, P(size 2) = pη_2 = 1/16
        assert_eq!(lp.finite_at(0.0), (1, true));
        assert_eq!(lp.finite_at(0.2499), (1, true));
        assert_eq!(lp.finite_at(0.25), (2, true));
        assert_eq!(lp.finite_at(0.3124), (2, true));
        assert_eq!(lp.finite_at(0.3125), (3, true));
    }

    #[test]
    fn tail_beyond_table_is_scanned() {
        let cfg = LadderConfig {
            table_cap: 8,
            scan_cap: 1 << 20,
            breadth_cap: 1 << 10,
        };
        let small = LadderParam::new(0.5, &cfg).unwrap();
        let big = param(0.5);
        for u in [0.49, 0.495, 0.499] {
            assert_eq!(small.finite_at(u), big.finite_at(u));
        }
        let tiny = LadderConfig { scan_cap: 16, ..cfg };
        let capped = LadderParam::new(0.5, &tiny).unwrap();
        assert!(!capped.finite_at(0.4999).1);
    }

    #[test]
    fn x_has_half_geometric_law() {
        let mut rng = RngHandle::new(5);
        let n = 1_000_000;
        let xs: Vec<u32> = (0..n).map(|_| draw_x(&mut rng)).collect();
        let mean = xs.iter().map(|&x| x as f64).sum::<f64>() / n as f64;
        assert!((mean - 2.0).abs() < 3.0 * (2.0 / n as f64).sqrt());
        let threes = xs.iter().filter(|&&x| x == 3).count() as f64 / n as f64;
        assert!((threes - 0.125).abs() < 3.0 * (0.125 * 0.875 / n as f64).sqrt());
    }

    #[test]
    fn trace_json_shape() {
        let t = run_fixed(&[0.5], 2, &[0.6, 0.2]);
        let v = serde_json::to_value(&t).unwrap();
        assert_eq!(v["X"], 2);
        assert_eq!(v["U"], serde_json::json!([0.6, 0.2]));
        assert_eq!(v["params"][0]["L"], serde_json::json!([2, "inf", 0]));
        assert_eq!(v["params"][0]["m0"], 3);
    }
}
