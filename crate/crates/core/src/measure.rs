//! The invariant measure γ, normalized Lebesgue measure λ on [0, θ], the digit
//! tail law and the mixing constant q.
//!
//! dγ = θ dx / ((1 + θx)·L) with L = log(1 + 1/m).

use std::cmp::Ordering;

use astro_float::BigFloat;
use num_bigint::BigInt;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expansion::{cylinder, Cylinder, ThetaParams};
use crate::hiprec;
use crate::quadfield::{QuadRat, Rational};

/// A high-precision value with an absolute error bound.
#[derive(Clone, Debug)]
pub struct MeasureValue {
    pub value: BigFloat,
    pub error_bound: f64,
}

impl MeasureValue {
    fn closed_form(value: BigFloat) -> Self {
        let error_bound = hiprec::rel_bound(&value);
        MeasureValue { value, error_bound }
    }

    /// Clamps a probability into [0, 1]; rounding can push it just outside.
    fn probability(value: BigFloat, error_bound: f64) -> Self {
        let zero = hiprec::from_u64(0);
        let one = hiprec::from_u64(1);
        let value = if hiprec::cmp(&value, &zero) == Some(Ordering::Less) {
            zero
        } else if hiprec::cmp(&value, &one) == Some(Ordering::Greater) {
            one
        } else {
            value
        };
        MeasureValue { value, error_bound }
    }

    pub fn to_f64(&self) -> f64 {
        hiprec::to_f64(&self.value)
    }
}

fn check_unit(x: &QuadRat, params: &ThetaParams) -> Result<()> {
    if x.m() != params.m() {
        return Err(Error::FieldMismatch { left: params.m(), right: x.m() });
    }
    if x.signum() == Ordering::Less || x.try_cmp(params.theta())? == Ordering::Greater {
        return Err(Error::domain("x in [0, θ]", x));
    }
    Ok(())
}

/// θ / ((1 + θx)·L). Not a probability: it reaches 1/log 2 at x = 0 for m = 1.
pub fn gamma_density(x: &QuadRat, params: &ThetaParams) -> Result<MeasureValue> {
    check_unit(x, params)?;
    let one_plus = &params.field().one() + &x.mul_theta();
    let den = hiprec::mul(&hiprec::from_quad(&one_plus), params.log_norm());
    Ok(MeasureValue::closed_form(hiprec::div(&hiprec::theta(params.m()), &den)))
}

/// γ([0, x]) = log(1 + θx)/L.
pub fn gamma_cdf(x: &QuadRat, params: &ThetaParams) -> Result<MeasureValue> {
    check_unit(x, params)?;
    let v = hiprec::div(&hiprec::ln_1p(&hiprec::from_quad(&x.mul_theta())), params.log_norm());
    Ok(MeasureValue::probability(v.clone(), hiprec::rel_bound(&v)))
}

/// Inverse of [`gamma_cdf`]: ((1 + 1/m)^u − 1)/θ.
pub fn gamma_quantile(u: f64, params: &ThetaParams) -> Result<BigFloat> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::domain("u in [0, 1]", u));
    }
    let pow = hiprec::exp(&hiprec::mul(&hiprec::from_f64(u), params.log_norm()));
    let num = hiprec::sub(&pow, &hiprec::from_u64(1));
    Ok(hiprec::div(&num, &hiprec::theta(params.m())))
}

pub fn gamma_density_f64(x: f64, params: &ThetaParams) -> f64 {
    let th = params.theta_f64();
    th / ((1.0 + th * x) * params.log_norm_f64())
}

pub fn gamma_cdf_f64(x: f64, params: &ThetaParams) -> f64 {
    let th = params.theta_f64();
    ((th * x).ln_1p() / params.log_norm_f64()).clamp(0.0, 1.0)
}

pub fn gamma_quantile_f64(u: f64, params: &ThetaParams) -> f64 {
    (u * params.log_norm_f64()).exp_m1() / params.theta_f64()
}

/// p(w) = γ(a₁ ≥ w) = log(1 + 1/w)/L for w ≥ m.
pub fn tail_p(w: u64, params: &ThetaParams) -> Result<MeasureValue> {
    if w < params.m() {
        return Err(Error::DigitBelowFloor { digit: w, m: params.m() });
    }
    if w == params.m() {
        return Ok(MeasureValue { value: hiprec::from_u64(1), error_bound: 0.0 });
    }
    let inv_w = hiprec::div(&hiprec::from_u64(1), &hiprec::from_u64(w));
    let v = hiprec::div(&hiprec::ln_1p(&inv_w), params.log_norm());
    Ok(MeasureValue::probability(v.clone(), hiprec::rel_bound(&v)))
}

/// Double-precision tail law; `w` below m reads as m.
pub fn tail_p_f64(w: u64, params: &ThetaParams) -> f64 {
    if w <= params.m() {
        return 1.0;
    }
    (1.0 / w as f64).ln_1p() / params.log_norm_f64()
}

/// Normalized Lebesgue measure 1/(qₙ(qₙ + θqₙ₋₁)), always rational.
pub fn lambda_cyl(c: &Cylinder) -> Result<Rational> {
    let den = &c.q * &(&c.q + &c.q_prev.mul_theta());
    let den = den
        .as_rational()
        .cloned()
        .ok_or_else(|| Error::InvariantViolated(format!("cylinder measure denominator {den} is irrational")))?;
    Ok(den.recip())
}

/// γ of the interval between two points of [0, θ], computed as
/// log(1 + δ)/L with δ = θ(hi − lo)/(1 + θ·lo) formed exactly.
pub fn gamma_interval(a: &QuadRat, b: &QuadRat, params: &ThetaParams) -> Result<MeasureValue> {
    check_unit(a, params)?;
    check_unit(b, params)?;
    let (lo, hi) = if a.try_cmp(b)? == Ordering::Greater { (b, a) } else { (a, b) };
    let gap = (hi - lo).mul_theta();
    if gap.is_zero() {
        return Ok(MeasureValue { value: hiprec::from_u64(0), error_bound: 0.0 });
    }
    let delta = gap.try_div(&(&params.field().one() + &lo.mul_theta()))?;
    let v = hiprec::div(&hiprec::ln_1p(&hiprec::from_quad(&delta)), params.log_norm());
    Ok(MeasureValue::probability(v.clone(), hiprec::rel_bound(&v)))
}

pub fn gamma_cyl(c: &Cylinder, params: &ThetaParams) -> Result<MeasureValue> {
    gamma_interval(&c.lo, &c.hi, params)
}

/// λ(C(word, k))/λ(C(word)), with 1/(6k²) < ratio < (m + 1)/k² enforced.
pub fn child_ratio(word: &[u64], k: u64, params: &ThetaParams) -> Result<Rational> {
    if k < params.m() {
        return Err(Error::DigitBelowFloor { digit: k, m: params.m() });
    }
    let parent = lambda_cyl(&cylinder(word, params)?)?;
    let mut child_word = word.to_vec();
    child_word.push(k);
    let child = lambda_cyl(&cylinder(&child_word, params)?)?;
    let ratio = child / parent;
    let k2 = Rational::from_integer(BigInt::from(k) * BigInt::from(k));
    let lower = (Rational::from_integer(6.into()) * &k2).recip();
    let upper = Rational::from_integer(BigInt::from(params.m() + 1)) / &k2;
    if !(lower < ratio && ratio < upper) {
        return Err(Error::InvariantViolated(format!(
            "child ratio {ratio} outside ({lower}, {upper}) for word {word:?}, k = {k}"
        )));
    }
    Ok(ratio)
}

/// q = m·Σ_{i≥m} (m/(i³(i+1)) + (i+1−m)/(i(i+1)³)) with a certified tail.
#[derive(Clone, Debug, Serialize)]
pub struct MixRate {
    pub m: u64,
    pub q_theta: f64,
    /// Last index included in the partial sum.
    pub truncation_index: u64,
    /// Bound on the omitted tail plus the summation rounding.
    pub tail_bound: f64,
}

impl MixRate {
    /// The certified upper bound on q.
    pub fn upper(&self) -> f64 {
        self.q_theta + self.tail_bound
    }
}

/// Sums the series until the certified remainder drops below `tol`.
///
/// Each term is at most m/i⁴ + 1/i³, so the tail past I is bounded by
/// m·(m/(3I³) + 1/(2I²)) from the integral comparison.
pub fn mixing_rate(m: u64, tol: f64) -> Result<MixRate> {
    if m == 0 {
        return Err(Error::InvalidField(m));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::domain("tolerance > 0", tol));
    }
    let mf = m as f64;
    let tail = |i: f64| mf * (mf / (3.0 * i * i * i) + 1.0 / (2.0 * i * i));
    // Smallest I with tail(I) ≤ tol/2; the rest of tol absorbs rounding.
    let mut hi = m.max(2);
    while tail(hi as f64) > tol / 2.0 {
        hi = hi.checked_mul(2).ok_or_else(|| Error::CertificationFailed("q tail".into()))?;
    }
    let mut lo = hi / 2;
    while lo + 1 < hi {
        let mid = lo + (hi - lo) / 2;
        if tail(mid as f64) > tol / 2.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let last = hi.max(m);
    // Smallest terms first.
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for i in (m..=last).rev() {
        let x = i as f64;
        let x1 = x + 1.0;
        let term = mf / (x * x * x * x1) + (x1 - mf) / (x * x1 * x1 * x1);
        // Kahan summation.
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    let q = mf * sum;
    let n_terms = (last - m + 1) as f64;
    let rounding = q * f64::EPSILON * (8.0 + 4.0 * n_terms * f64::EPSILON);
    let tail_bound = tail(last as f64) + rounding;
    let out = MixRate { m, q_theta: q, truncation_index: last, tail_bound };
    if out.upper() >= 1.0 {
        return Err(Error::CertificationFailed(format!("q < 1 for m = {m}: {} + {}", q, tail_bound)));
    }
    Ok(out)
}

/// Exact γ of a set given as a union of the rank-1 cylinders C(k), k in `digits`.
pub fn gamma_digit_set(digits: impl IntoIterator<Item = u64>, params: &ThetaParams) -> Result<MeasureValue> {
    let mut total = hiprec::from_u64(0);
    let mut err = 0.0;
    for k in digits {
        let g = gamma_cyl(&cylinder(&[k], params)?, params)?;
        total = hiprec::add(&total, &g.value);
        err += g.error_bound + hiprec::rel_bound(&total);
    }
    Ok(MeasureValue { value: total, error_bound: err })
}

/// 0 as a measure value.
pub fn zero() -> MeasureValue {
    MeasureValue { value: hiprec::from_u64(0), error_bound: 0.0 }
}
