//! Binary floating point at 256 bits for the closed-form measure values.
//!
//! astro-float does the transcendental work. Conversions in and out go
//! through exact integers so no intermediate `f64` ever touches a value.

use std::cell::RefCell;
use std::cmp::Ordering;

use astro_float::{BigFloat, Consts, RoundingMode, Sign, Word};
use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, Zero};

use crate::quadfield::{rational_to_f64, QuadRat, Rational};

/// Working precision in bits (about 77 decimal digits).
pub const PRECISION: usize = 256;

/// Relative error granted to a single closed-form evaluation. The working
/// precision leaves ample guard bits for the handful of rounded operations
/// each formula performs.
pub const REL_ERROR: f64 = 1.0e-70;

const RM: RoundingMode = RoundingMode::ToEven;

thread_local! {
    static CONSTS: RefCell<Consts> = RefCell::new(Consts::new().expect("constant cache"));
}

fn with_consts<R>(f: impl FnOnce(&mut Consts) -> R) -> R {
    CONSTS.with(|c| f(&mut c.borrow_mut()))
}

pub fn from_u64(n: u64) -> BigFloat {
    BigFloat::from_u64(n, PRECISION)
}

pub fn from_f64(x: f64) -> BigFloat {
    BigFloat::from_f64(x, PRECISION)
}

/// Exact for any size; the result carries as many words as `n` needs.
pub fn from_biguint(n: &BigUint) -> BigFloat {
    if n.is_zero() {
        return BigFloat::from_u64(0, PRECISION);
    }
    let words: Vec<Word> = n.to_u64_digits();
    let e = (words.len() * 64) as i32;
    BigFloat::from_words(&words, Sign::Pos, e)
}

pub fn from_bigint(n: &BigInt) -> BigFloat {
    let mut f = from_biguint(n.magnitude());
    if n.is_negative() {
        f.inv_sign();
    }
    f
}

pub fn from_rational(r: &Rational) -> BigFloat {
    from_bigint(r.numer()).div(&from_bigint(r.denom()), PRECISION, RM)
}

/// `θ = 1/√m` rounded to the working precision.
pub fn theta(m: u64) -> BigFloat {
    from_u64(m).sqrt(PRECISION, RM).reciprocal(PRECISION, RM)
}

/// Evaluates `u + vθ` without catastrophic cancellation: when the two terms
/// have opposite signs the value is rewritten as `norm / (u − vθ)`, whose
/// denominator adds like-signed terms.
pub fn from_quad(x: &QuadRat) -> BigFloat {
    let th = theta(x.m());
    let (u, v) = (x.u(), x.v());
    if v.is_zero() {
        return from_rational(u);
    }
    if u.is_zero() || u.is_positive() == v.is_positive() {
        return from_rational(u).add(&from_rational(v).mul(&th, PRECISION, RM), PRECISION, RM);
    }
    let conj = from_rational(u).sub(&from_rational(v).mul(&th, PRECISION, RM), PRECISION, RM);
    from_rational(&x.norm()).div(&conj, PRECISION, RM)
}

/// Exact dyadic value of a finite float.
pub fn to_rational(x: &BigFloat) -> Option<Rational> {
    let (words, _, sign, e, _) = x.as_raw_parts()?;
    let mant = BigInt::from(BigUint::from_slice(
        &words.iter().flat_map(|w| [*w as u32, (*w >> 32) as u32]).collect::<Vec<_>>(),
    ));
    let shift = e as i64 - 64 * words.len() as i64;
    let mag = if shift >= 0 {
        Rational::from_integer(mant << shift as usize)
    } else {
        Rational::new(mant, BigInt::one() << (-shift) as usize)
    };
    Some(if sign == Sign::Neg { -mag } else { mag })
}

/// Correctly rounded double; NaN for NaN, ±∞ for infinities.
pub fn to_f64(x: &BigFloat) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x.is_inf_pos() {
        return f64::INFINITY;
    }
    if x.is_inf_neg() {
        return f64::NEG_INFINITY;
    }
    if x.is_zero() {
        return 0.0;
    }
    rational_to_f64(&to_rational(x).expect("finite value"))
}

pub fn ln(x: &BigFloat) -> BigFloat {
    with_consts(|cc| x.ln(PRECISION, RM, cc))
}

pub fn exp(x: &BigFloat) -> BigFloat {
    with_consts(|cc| x.exp(PRECISION, RM, cc))
}

/// `ln(1 + δ)` with full relative accuracy for tiny `δ ≥ 0`.
pub fn ln_1p(delta: &BigFloat) -> BigFloat {
    if delta.is_zero() {
        return delta.clone();
    }
    match delta.exponent() {
        // |δ| < 2^-64: four series terms leave a relative error below δ⁴.
        Some(e) if e < -64 => {
            let d2 = delta.mul(delta, PRECISION, RM);
            let d3 = d2.mul(delta, PRECISION, RM);
            let d4 = d3.mul(delta, PRECISION, RM);
            let half = d2.div(&from_u64(2), PRECISION, RM);
            let third = d3.div(&from_u64(3), PRECISION, RM);
            let quarter = d4.div(&from_u64(4), PRECISION, RM);
            delta.sub(&half, PRECISION, RM).add(&third, PRECISION, RM).sub(&quarter, PRECISION, RM)
        }
        _ => {
            // Up to 64 leading bits cancel in 1 + δ; carry them as guard bits.
            let p = PRECISION + 64;
            let one_plus = BigFloat::from_u64(1, p).add(delta, p, RM);
            with_consts(|cc| one_plus.ln(p, RM, cc)).div(&from_u64(1), PRECISION, RM)
        }
    }
}

/// `log(1 + 1/m)`, the normalizer of the invariant measure.
pub fn log_norm(m: u64) -> BigFloat {
    ln_1p(&from_u64(1).div(&from_u64(m), PRECISION, RM))
}

pub fn add(a: &BigFloat, b: &BigFloat) -> BigFloat {
    a.add(b, PRECISION, RM)
}

pub fn sub(a: &BigFloat, b: &BigFloat) -> BigFloat {
    a.sub(b, PRECISION, RM)
}

pub fn mul(a: &BigFloat, b: &BigFloat) -> BigFloat {
    a.mul(b, PRECISION, RM)
}

pub fn div(a: &BigFloat, b: &BigFloat) -> BigFloat {
    a.div(b, PRECISION, RM)
}

pub fn cmp(a: &BigFloat, b: &BigFloat) -> Option<Ordering> {
    a.cmp(b).map(|s| s.cmp(&0))
}

/// Upper bound on the rounding error of a value computed to [`REL_ERROR`].
pub fn rel_bound(x: &BigFloat) -> f64 {
    to_f64(x).abs() * REL_ERROR
}
