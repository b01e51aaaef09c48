//! The θ-expansion map, its digits, convergents and cylinders.
//!
//! T(x) = 1/x − θ⌊1/(xθ)⌋ on [0, θ], with T(0) = 0. Every digit is at least m.

use std::cmp::Ordering;

use astro_float::BigFloat;
use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hiprec;
use crate::quadfield::{Field, QuadRat, Rational};

#[derive(Clone, Debug)]
pub struct ThetaParams {
    field: Field,
    theta: QuadRat,
    log_norm: BigFloat,
    log_norm_f64: f64,
}

impl ThetaParams {
    pub fn new(m: u64) -> Result<Self> {
        let field = Field::new(m)?;
        let log_norm = hiprec::log_norm(m);
        let log_norm_f64 = hiprec::to_f64(&log_norm);
        Ok(ThetaParams {
            field,
            theta: field.theta(),
            log_norm,
            log_norm_f64,
        })
    }

    #[inline]
    pub fn m(&self) -> u64 {
        self.field.m()
    }

    #[inline]
    pub fn field(&self) -> Field {
        self.field
    }

    #[inline]
    pub fn theta(&self) -> &QuadRat {
        &self.theta
    }

    pub fn theta_f64(&self) -> f64 {
        1.0 / (self.m() as f64).sqrt()
    }

    /// log(1 + θ²) = log(1 + 1/m) at working precision.
    #[inline]
    pub fn log_norm(&self) -> &BigFloat {
        &self.log_norm
    }

    #[inline]
    pub fn log_norm_f64(&self) -> f64 {
        self.log_norm_f64
    }

    fn check_field(&self, x: &QuadRat) -> Result<()> {
        if x.m() == self.m() {
            Ok(())
        } else {
            Err(Error::FieldMismatch { left: self.m(), right: x.m() })
        }
    }

    fn check_word(&self, word: &[u64]) -> Result<()> {
        match word.iter().find(|&&d| d < self.m()) {
            Some(&digit) => Err(Error::DigitBelowFloor { digit, m: self.m() }),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpansionStatus {
    /// The orbit reached 0; the digits are the whole expansion.
    Terminated,
    /// The digit budget ran out first.
    Truncated,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DigitSeq {
    pub field: Field,
    pub digits: Vec<u64>,
    pub status: ExpansionStatus,
}

impl DigitSeq {
    pub fn m(&self) -> u64 {
        self.field.m()
    }

    pub fn len(&self) -> usize {
        self.digits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }

    pub fn is_terminated(&self) -> bool {
        self.status == ExpansionStatus::Terminated
    }
}

fn in_closed_range(x: &QuadRat, params: &ThetaParams) -> Result<bool> {
    params.check_field(x)?;
    Ok(x.signum() != Ordering::Less && x.try_cmp(params.theta())? != Ordering::Greater)
}

fn digit_from(n: BigInt) -> Result<u64> {
    n.to_u64().ok_or(Error::DigitOverflow)
}

/// a₁(x) = ⌊1/(xθ)⌋ for 0 < x ≤ θ.
pub fn first_digit(x: &QuadRat, params: &ThetaParams) -> Result<u64> {
    if x.is_zero() || !in_closed_range(x, params)? {
        return Err(Error::domain("x in (0, θ]", x));
    }
    digit_from(x.mul_theta().inv()?.floor())
}

/// One application of the map; T(0) = 0.
pub fn step(x: &QuadRat, params: &ThetaParams) -> Result<QuadRat> {
    if !in_closed_range(x, params)? {
        return Err(Error::domain("x in [0, θ]", x));
    }
    if x.is_zero() {
        return Ok(x.clone());
    }
    let a = first_digit(x, params)?;
    Ok(&x.inv()? - &params.theta().scale_int(a))
}

fn check_open_unit(x: &QuadRat, params: &ThetaParams) -> Result<()> {
    params.check_field(x)?;
    if x.signum() != Ordering::Greater || x.try_cmp(params.theta())? != Ordering::Less {
        return Err(Error::domain("x in (0, θ)", x));
    }
    Ok(())
}

/// Orbit of `x = θ·P/Q` in the scaled coordinate r = x/θ.
///
/// With r = P/Q the digit is ⌊mQ/P⌋ and the next ratio is (mQ − aP)/P, so the
/// whole orbit stays in unsigned integers.
#[derive(Clone, Debug)]
pub struct RationalOrbit {
    m: BigUint,
    p: BigUint,
    q: BigUint,
}

impl RationalOrbit {
    /// `p/q` must lie in (0, 1).
    pub fn new(m: u64, p: BigUint, q: BigUint) -> Self {
        debug_assert!(!p.is_zero() && p < q);
        RationalOrbit { m: BigUint::from(m), p, q }
    }

    pub fn is_done(&self) -> bool {
        self.p.is_zero()
    }

    /// Current point divided by θ.
    pub fn ratio(&self) -> (&BigUint, &BigUint) {
        (&self.p, &self.q)
    }

    /// Next digit, or `None` once the orbit has reached zero.
    pub fn next_digit(&mut self) -> Option<Result<u64>> {
        if self.p.is_zero() {
            return None;
        }
        let (a, r) = (&self.m * &self.q).div_rem(&self.p);
        self.q = std::mem::replace(&mut self.p, r);
        Some(a.to_u64().ok_or(Error::DigitOverflow))
    }
}

impl Iterator for RationalOrbit {
    type Item = Result<u64>;
    fn next(&mut self) -> Option<Self::Item> {
        self.next_digit()
    }
}

fn to_biguint_pair(r: &Rational) -> (BigUint, BigUint) {
    let p = r.numer().magnitude().clone();
    let q = r.denom().magnitude().clone();
    (p, q)
}

fn finish(field: Field, digits: Vec<u64>, done: bool) -> Result<DigitSeq> {
    let status = if done { ExpansionStatus::Terminated } else { ExpansionStatus::Truncated };
    if done {
        if let Some(&last) = digits.last() {
            if last < field.m() + 1 {
                return Err(Error::InvariantViolated(format!(
                    "finite expansion ends with digit {last} < m + 1"
                )));
            }
        }
    }
    Ok(DigitSeq { field, digits, status })
}

/// Digits of `x ∈ (0, θ)` until the orbit hits 0 or `max_digits` run out.
pub fn expand(x: &QuadRat, params: &ThetaParams, max_digits: usize) -> Result<DigitSeq> {
    check_open_unit(x, params)?;
    if max_digits == 0 {
        return Err(Error::InvalidConfig("max_digits must be at least 1".into()));
    }
    if let Some(r) = x.theta_ratio() {
        let (p, q) = to_biguint_pair(&r);
        let mut orbit = RationalOrbit::new(params.m(), p, q);
        let mut digits = Vec::with_capacity(max_digits.min(1 << 16));
        while digits.len() < max_digits {
            match orbit.next_digit() {
                Some(d) => digits.push(d?),
                None => break,
            }
        }
        return finish(params.field(), digits, orbit.is_done());
    }
    let (digits, orbit) = expand_orbit(x, params, max_digits)?;
    let done = orbit.last().is_some_and(QuadRat::is_zero);
    finish(params.field(), digits, done)
}

/// Digits together with the orbit T¹x, T²x, … (one point per digit).
pub fn expand_orbit(x: &QuadRat, params: &ThetaParams, max_digits: usize) -> Result<(Vec<u64>, Vec<QuadRat>)> {
    check_open_unit(x, params)?;
    let mut digits = Vec::new();
    let mut orbit = Vec::new();
    let mut cur = x.clone();
    while digits.len() < max_digits && !cur.is_zero() {
        let a = first_digit(&cur, params)?;
        cur = &cur.inv()? - &params.theta().scale_int(a);
        digits.push(a);
        orbit.push(cur.clone());
    }
    Ok((digits, orbit))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvergentPair {
    /// n ≥ −1.
    pub index: i64,
    pub p: QuadRat,
    pub q: QuadRat,
}

impl ConvergentPair {
    /// pₙ/qₙ; `None` for n = −1 where q₋₁ = 0.
    pub fn value(&self) -> Option<QuadRat> {
        self.p.try_div(&self.q).ok()
    }
}

/// Incremental pₙ, qₙ recursion: pₙ = aₙθpₙ₋₁ + pₙ₋₂, likewise for q.
#[derive(Clone, Debug)]
pub struct Convergents {
    theta: QuadRat,
    n: i64,
    p_prev: QuadRat,
    p: QuadRat,
    q_prev: QuadRat,
    q: QuadRat,
}

impl Convergents {
    pub fn new(params: &ThetaParams) -> Self {
        let f = params.field();
        Convergents {
            theta: params.theta().clone(),
            n: 0,
            p_prev: f.one(),
            p: f.zero(),
            q_prev: f.zero(),
            q: f.one(),
        }
    }

    pub fn push(&mut self, a: u64) {
        let at = self.theta.scale_int(a);
        let p = &(&at * &self.p) + &self.p_prev;
        let q = &(&at * &self.q) + &self.q_prev;
        self.p_prev = std::mem::replace(&mut self.p, p);
        self.q_prev = std::mem::replace(&mut self.q, q);
        self.n += 1;
    }

    pub fn index(&self) -> i64 {
        self.n
    }

    pub fn current(&self) -> ConvergentPair {
        ConvergentPair { index: self.n, p: self.p.clone(), q: self.q.clone() }
    }

    pub fn previous(&self) -> ConvergentPair {
        ConvergentPair { index: self.n - 1, p: self.p_prev.clone(), q: self.q_prev.clone() }
    }

    pub fn p(&self) -> &QuadRat {
        &self.p
    }

    pub fn q(&self) -> &QuadRat {
        &self.q
    }

    pub fn p_prev(&self) -> &QuadRat {
        &self.p_prev
    }

    pub fn q_prev(&self) -> &QuadRat {
        &self.q_prev
    }
}

/// (pₙ, qₙ) for n = −1, 0, …, `up_to`.
pub fn convergents(seq: &DigitSeq, up_to: usize) -> Result<Vec<ConvergentPair>> {
    if up_to > seq.digits.len() {
        return Err(Error::InsufficientDigits { requested: up_to, available: seq.digits.len() });
    }
    let params = ThetaParams::new(seq.m())?;
    params.check_word(&seq.digits)?;
    let mut c = Convergents::new(&params);
    let mut out = Vec::with_capacity(up_to + 2);
    out.push(c.previous());
    out.push(c.current());
    for &a in &seq.digits[..up_to] {
        c.push(a);
        out.push(c.current());
    }
    Ok(out)
}

/// 1/(a₁θ + 1/(a₂θ + … + 1/(aₙθ))), evaluated from the bottom up.
pub fn evaluate(word: &[u64], params: &ThetaParams) -> Result<QuadRat> {
    if word.is_empty() {
        return Err(Error::domain("nonempty digit word", "[]"));
    }
    params.check_word(word)?;
    if let Some(k) = params.field().square_root() {
        return Ok(params.field().rational(evaluate_scaled(word, params.m()) / Rational::from_integer(k.into())));
    }
    let mut t = params.field().zero();
    for &a in word.iter().rev() {
        t = (&params.theta().scale_int(a) + &t).inv()?;
    }
    Ok(t)
}

// In the scaled coordinate the tail t = θ·s obeys s ← m/(a + s).
fn evaluate_scaled(word: &[u64], m: u64) -> Rational {
    let m = Rational::from_integer(m.into());
    let mut s = Rational::zero();
    for &a in word.iter().rev() {
        s = &m / (Rational::from_integer(a.into()) + s);
    }
    s
}

/// The set of points whose expansion begins with `word`.
///
/// For even n it is [pₙ/qₙ, (pₙ+θpₙ₋₁)/(qₙ+θqₙ₋₁)), for odd n the mirror
/// image ((pₙ+θpₙ₋₁)/(qₙ+θqₙ₋₁), pₙ/qₙ]. The empty word gives all of [0, θ].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cylinder {
    pub word: Vec<u64>,
    pub lo: QuadRat,
    pub hi: QuadRat,
    pub closed_at_lo: bool,
    pub closed_at_hi: bool,
    pub p: QuadRat,
    pub q: QuadRat,
    pub p_prev: QuadRat,
    pub q_prev: QuadRat,
}

impl Cylinder {
    pub fn rank(&self) -> usize {
        self.word.len()
    }

    pub fn m(&self) -> u64 {
        self.lo.m()
    }

    /// Exact membership, honoring the endpoint closures.
    pub fn contains(&self, x: &QuadRat) -> Result<bool> {
        let lo = x.try_cmp(&self.lo)?;
        let hi = x.try_cmp(&self.hi)?;
        let above = lo == Ordering::Greater || (self.closed_at_lo && lo == Ordering::Equal);
        let below = hi == Ordering::Less || (self.closed_at_hi && hi == Ordering::Equal);
        Ok(above && below)
    }

    /// hi − lo.
    pub fn length(&self) -> QuadRat {
        &self.hi - &self.lo
    }

    /// Is `other` contained in `self` (as closed intervals)?
    pub fn encloses(&self, other: &Cylinder) -> Result<bool> {
        Ok(other.lo.try_cmp(&self.lo)? != Ordering::Less && other.hi.try_cmp(&self.hi)? != Ordering::Greater)
    }
}

pub fn cylinder(word: &[u64], params: &ThetaParams) -> Result<Cylinder> {
    params.check_word(word)?;
    let mut c = Convergents::new(params);
    for &a in word {
        c.push(a);
    }
    let exact = c.p().try_div(c.q())?;
    let num = c.p() + &c.p_prev().mul_theta();
    let den = c.q() + &c.q_prev().mul_theta();
    let other = num.try_div(&den)?;
    let even = word.len() % 2 == 0;
    let (lo, hi) = if even { (exact, other) } else { (other, exact) };
    Ok(Cylinder {
        word: word.to_vec(),
        lo,
        hi,
        closed_at_lo: even,
        closed_at_hi: !even || word.is_empty(),
        p: c.p().clone(),
        q: c.q().clone(),
        p_prev: c.p_prev().clone(),
        q_prev: c.q_prev().clone(),
    })
}

/// Right-hand side of pₙ₋₁qₙ − pₙqₙ₋₁ = (−1)ⁿ.
pub fn determinant_sign(n: i64) -> BigInt {
    if n.rem_euclid(2) == 0 { BigInt::one() } else { -BigInt::one() }
}
