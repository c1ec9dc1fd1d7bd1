//! Closed-form quantities for geometric Galton-Watson trees.
//!
//! Every formula here is written once, generically over [`Scalar`], so the
//! same code evaluates exactly on [`BigRational`] (identity checks must come
//! out bit-exact) and approximately on `f64` (sampling hot paths). [`Prob`]
//! is the mode-tagged value that carries either representation.
//!
//! Throughout, `p` is the geometric offspring parameter: a vertex has `j`
//! children with probability `p^j (1 - p)`.

use std::fmt;
use std::ops::{Add, Div, Mul, Sub};
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::ladder::LadderOutcome;

/// Tolerance carried by float-mode probabilities.
pub const FLOAT_TOLERANCE: f64 = 1e-12;

/// Arithmetic needed by the closed forms.
pub trait Scalar:
    Clone
    + PartialOrd
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_u64(n: u64) -> Self;
    fn from_biguint(n: &BigUint) -> Self;
    /// `2^e` for any integer exponent.
    fn pow2(e: i32) -> Self;
    fn is_zero_value(&self) -> bool;
    fn to_f64_lossy(&self) -> f64;

    fn powu(&self, mut e: u64) -> Self {
        let mut base = self.clone();
        let mut acc = Self::one();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base.clone();
            }
            base = base.clone() * base;
            e >>= 1;
        }
        acc
    }

    /// `c_k p^(k-1) (1-p)^k`; overridden by `f64` to work in log space.
    fn eta_value(k: u64, p: &Self) -> Self {
        Self::from_biguint(&catalan(k)) * p.powu(k - 1) * (Self::one() - p.clone()).powu(k)
    }
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_u64(n: u64) -> Self {
        n as f64
    }
    fn from_biguint(n: &BigUint) -> Self {
        n.to_f64().unwrap_or(f64::INFINITY)
    }
    fn pow2(e: i32) -> Self {
        2f64.powi(e)
    }
    fn is_zero_value(&self) -> bool {
        *self == 0.0
    }
    fn to_f64_lossy(&self) -> f64 {
        *self
    }
    fn eta_value(k: u64, p: &Self) -> Self {
        eta_f64(k, *p)
    }
}

impl Scalar for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_u64(n: u64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }
    fn from_biguint(n: &BigUint) -> Self {
        BigRational::from_integer(BigInt::from(n.clone()))
    }
    fn pow2(e: i32) -> Self {
        let p = BigInt::one() << e.unsigned_abs();
        if e >= 0 {
            BigRational::from_integer(p)
        } else {
            BigRational::new(BigInt::one(), p)
        }
    }
    fn is_zero_value(&self) -> bool {
        self.is_zero()
    }
    fn to_f64_lossy(&self) -> f64 {
        rational_to_f64(self)
    }
}

/// Converts a rational to the nearest-ish `f64`, surviving huge numerators
/// and denominators.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    if let Some(v) = r.to_f64() {
        if v.is_finite() {
            return v;
        }
    }
    let n = r.numer();
    let d = r.denom();
    let shift = (n.bits() as i64).max(d.bits() as i64) - 60;
    if shift <= 0 {
        return n.to_f64().unwrap_or(0.0) / d.to_f64().unwrap_or(1.0);
    }
    let ns = (n.abs() >> shift as usize).to_f64().unwrap_or(0.0);
    let ds = (d >> shift as usize).to_f64().unwrap_or(1.0);
    let v = ns / ds;
    if n.is_negative() {
        -v
    } else {
        v
    }
}

/// A probability value, either exact or a float.
#[derive(Clone, Debug, PartialEq)]
pub enum Prob {
    Exact(BigRational),
    Float(f64),
}

impl Prob {
    pub fn ratio(numer: i64, denom: i64) -> Self {
        Prob::Exact(BigRational::new(BigInt::from(numer), BigInt::from(denom)))
    }

    pub fn half() -> Self {
        Prob::ratio(1, 2)
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Prob::Exact(_))
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Prob::Exact(r) => rational_to_f64(r),
            Prob::Float(x) => *x,
        }
    }

    /// Exact value; a float converts to the rational it denotes in binary.
    pub fn to_rational(&self) -> BigRational {
        match self {
            Prob::Exact(r) => r.clone(),
            Prob::Float(x) => BigRational::from_float(*x).unwrap_or_else(<BigRational as Zero>::zero),
        }
    }

    /// Zero test honoring the float tolerance.
    pub fn is_negligible(&self) -> bool {
        match self {
            Prob::Exact(r) => r.is_zero(),
            Prob::Float(x) => x.abs() <= FLOAT_TOLERANCE,
        }
    }

    fn combine(
        self,
        rhs: Prob,
        exact: impl FnOnce(BigRational, BigRational) -> BigRational,
        float: impl FnOnce(f64, f64) -> f64,
    ) -> Prob {
        match (self, rhs) {
            (Prob::Exact(a), Prob::Exact(b)) => Prob::Exact(exact(a, b)),
            (a, b) => Prob::Float(float(a.to_f64(), b.to_f64())),
        }
    }
}

impl fmt::Display for Prob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prob::Exact(r) if r.denom().is_one() => write!(f, "{}", r.numer()),
            Prob::Exact(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            Prob::Float(x) => write!(f, "{x}"),
        }
    }
}

impl FromStr for Prob {
    type Err = Error;

    /// Accepts `a/b` or a plain decimal such as `0.75`; both parse exactly.
    fn from_str(s: &str) -> Result<Self> {
        parse_rational(s).map(Prob::Exact)
    }
}

/// Parses `a/b`, an integer, or a decimal literal into an exact rational.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || domain(format!("cannot parse {s:?} as a number"));
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(n, d));
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let digits = if digits == "-" || digits == "+" || digits.is_empty() {
        return Err(bad());
    } else {
        digits
    };
    let n: BigInt = digits.parse().map_err(|_| bad())?;
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10u32);
    Ok(if scale >= 0 {
        BigRational::from_integer(n * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(n, num_traits::pow(ten, (-scale) as usize))
    })
}

impl Add for Prob {
    type Output = Prob;
    fn add(self, rhs: Prob) -> Prob {
        self.combine(rhs, |a, b| a + b, |a, b| a + b)
    }
}

impl Sub for Prob {
    type Output = Prob;
    fn sub(self, rhs: Prob) -> Prob {
        self.combine(rhs, |a, b| a - b, |a, b| a - b)
    }
}

impl Mul for Prob {
    type Output = Prob;
    fn mul(self, rhs: Prob) -> Prob {
        self.combine(rhs, |a, b| a * b, |a, b| a * b)
    }
}

impl Div for Prob {
    type Output = Prob;
    fn div(self, rhs: Prob) -> Prob {
        self.combine(rhs, |a, b| a / b, |a, b| a / b)
    }
}

impl PartialOrd for Prob {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        match (self, other) {
            (Prob::Exact(a), Prob::Exact(b)) => a.partial_cmp(b),
            (a, b) => a.to_f64().partial_cmp(&b.to_f64()),
        }
    }
}

impl Scalar for Prob {
    fn zero() -> Self {
        Prob::Exact(<BigRational as Zero>::zero())
    }
    fn one() -> Self {
        Prob::Exact(<BigRational as One>::one())
    }
    fn from_u64(n: u64) -> Self {
        Prob::Exact(<BigRational as Scalar>::from_u64(n))
    }
    fn from_biguint(n: &BigUint) -> Self {
        Prob::Exact(<BigRational as Scalar>::from_biguint(n))
    }
    fn pow2(e: i32) -> Self {
        Prob::Exact(<BigRational as Scalar>::pow2(e))
    }
    fn is_zero_value(&self) -> bool {
        match self {
            Prob::Exact(r) => r.is_zero(),
            Prob::Float(x) => *x == 0.0,
        }
    }
    fn to_f64_lossy(&self) -> f64 {
        self.to_f64()
    }
    fn eta_value(k: u64, p: &Self) -> Self {
        match p {
            Prob::Exact(r) => Prob::Exact(BigRational::eta_value(k, r)),
            Prob::Float(x) => Prob::Float(eta_f64(k, *x)),
        }
    }
}

/// Number of ordered trees with `k` vertices, `c_k = Catalan(k - 1)`.
pub fn catalan(k: u64) -> BigUint {
    assert!(k >= 1, "tree sizes start at 1");
    let mut c = BigUint::one();
    // c_{j+1} = c_j * 2(2j - 1) / (j + 1), exact at every step
    for j in 1..k {
        c = c * BigUint::from(2 * (2 * j - 1)) / BigUint::from(j + 1);
    }
    c
}

/// `c_1 ..= c_max` held in one table.
#[derive(Clone, Debug)]
pub struct CatalanTable {
    counts: Vec<BigUint>,
}

impl CatalanTable {
    pub fn new(max_k: u64) -> Self {
        let mut counts = vec![BigUint::zero(), BigUint::one()];
        for j in 1..max_k {
            let next = &counts[j as usize] * BigUint::from(2 * (2 * j - 1)) / BigUint::from(j + 1);
            counts.push(next);
        }
        CatalanTable { counts }
    }

    pub fn get(&self, k: u64) -> &BigUint {
        &self.counts[k as usize]
    }

    pub fn max_k(&self) -> u64 {
        self.counts.len() as u64 - 1
    }
}

/// `ln c_k`.
pub fn ln_catalan(k: u64) -> f64 {
    if k <= 60 {
        let mut c: u128 = 1;
        for j in 1..k as u128 {
            c = c * (2 * (2 * j - 1)) / (j + 1);
        }
        (c as f64).ln()
    } else {
        use statrs::function::gamma::ln_gamma;
        let k = k as f64;
        ln_gamma(2.0 * k - 1.0) - ln_gamma(k) - ln_gamma(k + 1.0)
    }
}

/// `η_k(p)` in floating point, evaluated in log space so huge `k` neither
/// overflows nor underflows prematurely.
pub fn eta_f64(k: u64, p: f64) -> f64 {
    if p >= 1.0 || p <= 0.0 {
        return if k == 1 && p <= 0.0 { 1.0 } else { 0.0 };
    }
    let ln = ln_catalan(k) + (k - 1) as f64 * p.ln() + k as f64 * (1.0 - p).ln();
    ln.exp()
}

fn check_open_unit<S: Scalar>(p: &S, what: &str) -> Result<()> {
    if !(*p > S::zero() && *p <= S::one()) {
        return Err(domain(format!("{what}: p = {p:?} must lie in (0, 1]")));
    }
    Ok(())
}

fn check_supercritical_range<S: Scalar>(p: &S, what: &str) -> Result<()> {
    let half = S::pow2(-1);
    if !(*p >= half && *p <= S::one()) {
        return Err(domain(format!("{what}: p = {p:?} must lie in [1/2, 1]")));
    }
    Ok(())
}

/// `η_k(p) = P(|T(p)| = k) = c_k p^(k-1) (1-p)^k`.
pub fn eta<S: Scalar>(k: u64, p: &S) -> Result<S> {
    if k == 0 {
        return Err(domain("eta: size must be at least 1"));
    }
    check_open_unit(p, "eta")?;
    let v = S::eta_value(k, p);
    if v.to_f64_lossy().is_nan() {
        return Err(domain(format!("eta({k}, {p:?}) evaluated to NaN")));
    }
    Ok(v)
}

/// Survival probability `η_∞(p)`: zero up to criticality, `(2p - 1)/p` above.
pub fn eta_inf<S: Scalar>(p: &S) -> Result<S> {
    check_open_unit(p, "eta_inf")?;
    Ok(eta_inf_unchecked(p))
}

fn eta_inf_unchecked<S: Scalar>(p: &S) -> S {
    if *p <= S::pow2(-1) {
        S::zero()
    } else {
        (S::from_u64(2) * p.clone() - S::one()) / p.clone()
    }
}

/// `2^n p(1-p) / ((2^n - 2)p + 1)`: the mass of the "no further child"
/// outcome once `n` infinite subtrees have been placed.
pub fn zero_mass<S: Scalar>(p: &S, n: u32) -> Result<S> {
    // divide numerator and denominator by 2^n to keep f64 finite for large n
    let inv = S::pow2(-(n.min(i32::MAX as u32) as i32));
    let den = (S::one() - S::from_u64(2) * inv.clone()) * p.clone() + inv;
    if den.is_zero_value() {
        return Err(domain(format!("zero_mass undefined at p = {p:?}, n = {n}")));
    }
    Ok(p.clone() * (S::one() - p.clone()) / den)
}

/// `p η_∞(p) (2^n - 1)p / ((2^n - 2)p + 1)`: infinite-outcome mass after `n`
/// infinite subtrees.
pub fn post_infinite_mass<S: Scalar>(p: &S, n: u32) -> Result<S> {
    let inv = S::pow2(-(n.min(i32::MAX as u32) as i32));
    let den = (S::one() - S::from_u64(2) * inv.clone()) * p.clone() + inv.clone();
    if den.is_zero_value() {
        return Err(domain(format!("infinite mass undefined at p = {p:?}, n = {n}")));
    }
    let pinf = p.clone() * eta_inf_unchecked(p);
    Ok(pinf * (S::one() - inv) * p.clone() / den)
}

/// Which step of the ladder a threshold table serves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    /// Slots before the forced infinite slot.
    PreX,
    /// Slots after it, with the count of infinite outcomes so far.
    PostX(u32),
}

/// Cut-points partitioning `[0, 1]` into ladder outcomes.
///
/// `cut_points[i]` is the right end of the `i`-th listed outcome; outcomes
/// are `1..=K` for [`Stage::PreX`] and `0, 1..=K` for [`Stage::PostX`].
/// Finite outcomes beyond `K` occupy `[last cut, finite_total)` and the
/// infinite outcome takes `[finite_total, 1]`.
#[derive(Clone, Debug)]
pub struct ThresholdTable<S> {
    pub stage: Stage,
    pub zero_mass: S,
    pub cut_points: Vec<S>,
    pub finite_total: S,
    pub infinite_mass: S,
}

impl<S: Scalar> ThresholdTable<S> {
    /// Largest finite size listed.
    pub fn size_cap(&self) -> u64 {
        match self.stage {
            Stage::PreX => self.cut_points.len() as u64,
            Stage::PostX(_) => self.cut_points.len() as u64 - 1,
        }
    }

    /// Mass of finite outcomes larger than the table lists.
    pub fn tail_mass(&self) -> S {
        let last = self.cut_points.last().cloned().unwrap_or_else(S::zero);
        self.finite_total.clone() - last
    }

    /// Listed masses, in outcome order.
    pub fn masses(&self) -> Vec<(LadderOutcome, S)> {
        let mut prev = S::zero();
        let offset = matches!(self.stage, Stage::PostX(_)) as u64;
        self.cut_points
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let m = c.clone() - prev.clone();
                prev = c.clone();
                let idx = i as u64 + 1 - offset;
                let outcome = if idx == 0 {
                    LadderOutcome::Zero
                } else {
                    LadderOutcome::Finite(idx)
                };
                (outcome, m)
            })
            .collect()
    }

    /// Everything including the tail and the infinite remainder; equals one
    /// exactly when the closed forms are consistent.
    pub fn total_mass(&self) -> S {
        let listed = self.cut_points.last().cloned().unwrap_or_else(S::zero);
        listed + self.tail_mass() + self.infinite_mass.clone()
    }

    /// Outcome at `u` on half-open intervals; `None` when `u` falls among
    /// finite sizes beyond the listed range.
    pub fn outcome_at(&self, u: &S) -> Option<LadderOutcome> {
        if *u >= self.finite_total {
            return Some(LadderOutcome::Infinite);
        }
        let idx = self.cut_points.partition_point(|c| c <= u);
        if idx == self.cut_points.len() {
            return None;
        }
        Some(match self.stage {
            Stage::PreX => LadderOutcome::Finite(idx as u64 + 1),
            Stage::PostX(_) if idx == 0 => LadderOutcome::Zero,
            Stage::PostX(_) => LadderOutcome::Finite(idx as u64),
        })
    }
}

/// Builds the cut-points used by the ladder at one stage.
pub fn ladder_thresholds<S: Scalar>(p: &S, stage: Stage, size_cap: u64) -> Result<ThresholdTable<S>> {
    check_supercritical_range(p, "ladder_thresholds")?;
    let one = S::one();
    let (zero, scale, infinite_mass) = match stage {
        Stage::PreX => {
            let pinf = p.clone() * eta_inf_unchecked(p);
            (S::zero(), S::from_u64(2), pinf)
        }
        Stage::PostX(n) => (zero_mass(p, n)?, one.clone(), post_infinite_mass(p, n)?),
    };
    let mut cut_points = Vec::with_capacity(size_cap as usize + 1);
    if let Stage::PostX(_) = stage {
        cut_points.push(zero.clone());
    }
    let mut acc = zero.clone();
    for k in 1..=size_cap {
        acc = acc + scale.clone() * p.clone() * S::eta_value(k, p);
        cut_points.push(acc.clone());
    }
    // Σ_k p η_k(p) = p (1 - η_∞(p)) = 1 - p on [1/2, 1]
    let finite_total = zero.clone() + scale * (one - p.clone());
    Ok(ThresholdTable {
        stage,
        zero_mass: zero,
        cut_points,
        finite_total,
        infinite_mass,
    })
}

/// Result of [`check_partition_identity`].
#[derive(Clone, Debug)]
pub struct PartitionCheck<S> {
    /// Closed-form total minus one; zero when the outcome masses partition `[0, 1]`.
    pub residual: S,
    /// `Σ_{k > tail_cap} η_k(p)`, obtained as `1 - η_∞ - Σ_{k ≤ tail_cap} η_k`.
    pub tail_remainder: S,
}

/// Sums the outcome masses of one ladder stage in closed form.
///
/// `n = 0` is the pre-X stage (`p η_∞ + Σ 2p η_k`), `n ≥ 1` the post-X stage
/// with `n` infinite outcomes so far.
pub fn check_partition_identity<S: Scalar>(p: &S, n: u32, tail_cap: u64) -> Result<PartitionCheck<S>> {
    check_supercritical_range(p, "check_partition_identity")?;
    if *p >= S::one() {
        return Err(domain("check_partition_identity requires p < 1"));
    }
    let one = S::one();
    let einf = eta_inf_unchecked(p);
    let finite_sum = one.clone() - einf.clone();
    let total = if n == 0 {
        p.clone() * einf.clone() + S::from_u64(2) * p.clone() * finite_sum.clone()
    } else {
        zero_mass(p, n)? + post_infinite_mass(p, n)? + p.clone() * finite_sum.clone()
    };
    let mut partial = S::zero();
    for k in 1..=tail_cap {
        partial = partial + S::eta_value(k, p);
    }
    Ok(PartitionCheck {
        residual: total - one,
        tail_remainder: finite_sum - partial,
    })
}

/// Left side of the induction identity minus one.
///
/// `Σ_{l=1}^{I} 2^{-l} (Π_{m=l}^{I-1} (2^m-1)p/((2^m-2)p+1)) 2^I/((2^I-2)p+1) - 1`,
/// with the empty product equal to one.
pub fn check_induction_identity<S: Scalar>(p: &S, big_i: u32) -> Result<S> {
    check_supercritical_range(p, "check_induction_identity")?;
    if big_i == 0 {
        return Err(domain("check_induction_identity requires I >= 1"));
    }
    let one = S::one();
    let ratio = |m: u32| {
        let two_m = S::pow2(m as i32);
        (two_m.clone() - one.clone()) * p.clone() / ((two_m - S::from_u64(2)) * p.clone() + one.clone())
    };
    // suffix products Π_{m=l}^{I-1}, built from l = I downwards
    let mut sum = S::zero();
    let mut product = one.clone();
    for l in (1..=big_i).rev() {
        if l < big_i {
            product = product * ratio(l);
        }
        sum = sum + S::pow2(-(l as i32)) * product.clone();
    }
    let two_i = S::pow2(big_i as i32);
    let lhs = sum * two_i.clone() / ((two_i - S::from_u64(2)) * p.clone() + one.clone());
    Ok(lhs - one)
}

/// `(1 - η_∞) - (1 - p)/(1 - p(1 - η_∞))`: the extinction fixed point.
pub fn eta_inf_fixed_point_residual<S: Scalar>(p: &S) -> Result<S> {
    let q = S::one() - eta_inf(p)?;
    let rhs = (S::one() - p.clone()) / (S::one() - p.clone() * q.clone());
    Ok(q - rhs)
}

/// Which monotonicity property was broken.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum MonotonicityKind {
    /// `p η_k(p)` increased in `p`.
    FiniteMassInP { k: u64 },
    /// The zero-outcome mass increased in `p`.
    ZeroMassInP { n: u32 },
    /// The zero-outcome mass increased in `n`.
    ZeroMassInN { n: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicityViolation {
    pub kind: MonotonicityKind,
    pub at: String,
    pub before: f64,
    pub after: f64,
}

/// Checks the three monotonicity properties the coupling relies on over a
/// parameter grid; returns every violation found.
pub fn monotonicity_report<S: Scalar>(p_grid: &[S], k_max: u64, n_max: u32) -> Result<Vec<MonotonicityViolation>> {
    for p in p_grid {
        check_supercritical_range(p, "monotonicity_report")?;
    }
    let mut grid: Vec<S> = p_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("comparable grid"));
    let mut out = Vec::new();
    let fcn1 = |k: u64, p: &S| p.clone() * S::eta_value(k, p);
    for k in 1..=k_max {
        for w in grid.windows(2) {
            let (a, b) = (fcn1(k, &w[0]), fcn1(k, &w[1]));
            if b > a {
                out.push(MonotonicityViolation {
                    kind: MonotonicityKind::FiniteMassInP { k },
                    at: format!("p {:?} -> {:?}", w[0], w[1]),
                    before: a.to_f64_lossy(),
                    after: b.to_f64_lossy(),
                });
            }
        }
    }
    for n in 1..=n_max {
        for w in grid.windows(2) {
            let (a, b) = (zero_mass(&w[0], n)?, zero_mass(&w[1], n)?);
            if b > a {
                out.push(MonotonicityViolation {
                    kind: MonotonicityKind::ZeroMassInP { n },
                    at: format!("p {:?} -> {:?}", w[0], w[1]),
                    before: a.to_f64_lossy(),
                    after: b.to_f64_lossy(),
                });
            }
        }
    }
    for p in grid.iter().filter(|p| **p < S::one()) {
        for n in 1..n_max {
            let (a, b) = (zero_mass(p, n)?, zero_mass(p, n + 1)?);
            if b > a {
                out.push(MonotonicityViolation {
                    kind: MonotonicityKind::ZeroMassInN { n },
                    at: format!("p {:?}, n {} -> {}", p, n, n + 1),
                    before: a.to_f64_lossy(),
                    after: b.to_f64_lossy(),
                });
            }
        }
    }
    Ok(out)
}

/// `(p1, p2 η_∞(p2), p1 > p2 η_∞(p2))`: the comparison that breaks the naive
/// sequential coupling.
pub fn naive_comparison<S: Scalar>(p1: &S, p2: &S) -> Result<(S, S, bool)> {
    let half = S::pow2(-1);
    if !(*p1 > half && *p1 < *p2 && *p2 <= S::one()) {
        return Err(domain("naive comparison requires 1/2 < p1 < p2 <= 1"));
    }
    let rhs = p2.clone() * eta_inf(p2)?;
    let fails = *p1 > rhs;
    Ok((p1.clone(), rhs, fails))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn catalan_matches_recurrence() {
        // c_{k+1} = Σ_{i=1}^{k} c_i c_{k+1-i}
        let mut c: Vec<BigUint> = vec![BigUint::zero(), BigUint::one()];
        for k in 1..30usize {
            let next = (1..=k).map(|i| &c[i] * &c[k + 1 - i]).sum();
            c.push(next);
        }
        for k in 1..=30u64 {
            assert_eq!(catalan(k), c[k as usize], "k = {k}");
        }
        assert_eq!(catalan(1), BigUint::from(1u32));
        assert_eq!(catalan(4), BigUint::from(5u32));
        assert_eq!(catalan(10), BigUint::from(4862u32));
        let table = CatalanTable::new(30);
        assert_eq!(table.get(30), &c[30]);
    }

    #[test]
    fn eta_examples() {
        assert_eq!(eta(1, &q(1, 2)).unwrap(), q(1, 2));
        assert_eq!(eta(2, &q(1, 2)).unwrap(), q(1, 8));
        assert_eq!(eta(1, &q(3, 4)).unwrap(), q(1, 4));
        assert!(eta(0, &q(1, 2)).is_err());
        assert!(eta(1, &q(0, 1)).is_err());
    }

    #[test]
    fn eta_float_agrees_with_exact() {
        for &(n, d) in &[(1, 2), (3, 4), (3, 10), (99, 100)] {
            let exact = q(n, d);
            let x = n as f64 / d as f64;
            for k in [1u64, 2, 5, 30, 61, 100] {
                let e = rational_to_f64(&eta(k, &exact).unwrap());
                let f = eta(k, &x).unwrap();
                assert!((e - f).abs() <= 1e-12 * e.max(1e-300), "k={k} p={x}: {e} vs {f}");
            }
        }
        // huge k stays finite and tiny in log space
        let v = eta_f64(1 << 20, 0.5);
        assert!(v > 0.0 && v < 1e-8);
    }

    #[test]
    fn eta_inf_examples() {
        assert_eq!(eta_inf(&q(1, 2)).unwrap(), q(0, 1));
        assert_eq!(eta_inf(&q(3, 4)).unwrap(), q(2, 3));
        assert_eq!(eta_inf(&q(1, 1)).unwrap(), q(1, 1));
        assert_eq!(eta_inf(&q(1, 3)).unwrap(), q(0, 1));
    }

    #[test]
    fn threshold_examples() {
        let t = ladder_thresholds(&q(1, 2), Stage::PreX, 3).unwrap();
        assert_eq!(t.cut_points, vec![q(1, 2), q(5, 8), q(11, 16)]);
        assert_eq!(t.infinite_mass, q(0, 1));
        assert_eq!(t.tail_mass(), q(5, 16));

        let t = ladder_thresholds(&q(1, 2), Stage::PostX(1), 1).unwrap();
        assert_eq!(t.zero_mass, q(1, 2));
        assert_eq!(t.cut_points[0], q(1, 2));
        assert_eq!(t.outcome_at(&q(1, 4)), Some(LadderOutcome::Zero));
        assert_eq!(t.outcome_at(&q(1, 2)), Some(LadderOutcome::Finite(1)));

        let t = ladder_thresholds(&q(3, 4), Stage::PreX, 2).unwrap();
        assert_eq!(t.cut_points, vec![q(3, 8), q(57, 128)]);
        assert_eq!(rational_to_f64(&t.cut_points[1]), 0.4453125);

        assert!(ladder_thresholds(&q(1, 3), Stage::PreX, 2).is_err());
    }

    #[test]
    fn threshold_table_at_p_one_is_all_infinite() {
        let t = ladder_thresholds(&q(1, 1), Stage::PreX, 5).unwrap();
        assert!(t.cut_points.iter().all(|c| c.is_zero()));
        assert_eq!(t.outcome_at(&q(0, 1)), Some(LadderOutcome::Infinite));
        let t = ladder_thresholds(&q(1, 1), Stage::PostX(3), 5).unwrap();
        assert_eq!(t.total_mass(), q(1, 1));
        assert!(ladder_thresholds(&q(1, 1), Stage::PostX(0), 5).is_err());
    }

    #[test]
    fn partition_identity_examples() {
        for (p, n) in [(q(1, 2), 0), (q(3, 4), 1), (q(9, 10), 5)] {
            let check = check_partition_identity(&p, n, 20).unwrap();
            assert!(check.residual.is_zero(), "p={p} n={n}");
            assert!(check.tail_remainder > q(0, 1));
        }
    }

    #[test]
    fn induction_identity_examples() {
        for p in [q(1, 2), q(3, 4), q(1, 1), q(17, 20)] {
            assert!(check_induction_identity(&p, 1).unwrap().is_zero());
        }
        assert!(check_induction_identity(&q(3, 4), 2).unwrap().is_zero());
        assert!(check_induction_identity(&q(1, 2), 10).unwrap().is_zero());
        assert!(check_induction_identity(&q(1, 2), 0).is_err());
    }

    #[test]
    fn monotonicity_examples() {
        let f = |p: BigRational| p.clone() * eta(1, &p).unwrap();
        assert_eq!(f(q(1, 2)), q(1, 4));
        assert_eq!(f(q(3, 4)), q(3, 16));
        assert_eq!(zero_mass(&q(1, 2), 1).unwrap(), q(1, 2));
        assert_eq!(zero_mass(&q(1, 2), 2).unwrap(), q(1, 2));
        // n = 1, p = 3/4: 2·(3/16)/(0·p + 1) = 3/8; n = 2: 4·(3/16)/(2·3/4 + 1) = 3/10
        assert_eq!(zero_mass(&q(3, 4), 1).unwrap(), q(3, 8));
        assert_eq!(zero_mass(&q(3, 4), 2).unwrap(), q(3, 10));
        let grid: Vec<BigRational> = (50..=100).map(|i| q(i, 100)).collect();
        assert!(monotonicity_report(&grid, 10, 10).unwrap().is_empty());
    }

    #[test]
    fn monotonicity_flags_subcritical_behaviour() {
        // below 1/2 the grid is rejected outright
        assert!(monotonicity_report(&[q(1, 4), q(1, 2)], 3, 3).is_err());
    }

    #[test]
    fn naive_examples() {
        let (a, b, fails) = naive_comparison(&q(6, 10), &q(7, 10)).unwrap();
        assert_eq!((a, b.clone(), fails), (q(3, 5), q(2, 5), true));
        let (_, b, fails) = naive_comparison(&q(6, 10), &q(9, 10)).unwrap();
        assert_eq!((b, fails), (q(4, 5), false));
        let (_, b, fails) = naive_comparison(&q(51, 100), &q(52, 100)).unwrap();
        assert_eq!((b, fails), (q(1, 25), true));
    }

    #[test]
    fn prob_parsing_and_modes() {
        assert_eq!("0.75".parse::<Prob>().unwrap(), Prob::ratio(3, 4));
        assert_eq!("3/4".parse::<Prob>().unwrap(), Prob::ratio(3, 4));
        assert_eq!("1".parse::<Prob>().unwrap(), Prob::ratio(1, 1));
        assert_eq!("5e-1".parse::<Prob>().unwrap(), Prob::ratio(1, 2));
        assert!("abc".parse::<Prob>().is_err());
        assert!("1/0".parse::<Prob>().is_err());
        let e = eta(2, &Prob::ratio(1, 2)).unwrap();
        assert_eq!(e, Prob::ratio(1, 8));
        let f = eta(2, &Prob::Float(0.5)).unwrap();
        assert!((f.to_f64() - 0.125).abs() < FLOAT_TOLERANCE);
        assert_eq!(Prob::ratio(3, 4).to_string(), "3/4");
    }

    #[test]
    fn rational_to_f64_handles_huge_terms() {
        let big = BigInt::one() << 3000usize;
        let r = BigRational::new(big.clone() * 3, big * 4);
        assert_eq!(rational_to_f64(&r), 0.75);
    }
}
