//! Exact arithmetic in the real quadratic field ℚ(√m) that contains θ = 1/√m.
//!
//! Every value is stored as `u + v·θ` with big-integer rationals `u` and `v`.
//! Since θ² = 1/m, the field is closed under the theta map, its convergents
//! and the cylinder endpoints, so nothing in the exact paths ever rounds.
//!
//! When `m = k²` is a perfect square θ = 1/k is rational; the canonical form
//! then folds `v·θ` into `u` and keeps `v = 0`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::{Integer, Roots};
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Canonical big rational: gcd-reduced with a positive denominator.
pub type Rational = num_rational::BigRational;

/// The field parameter `m` of ℚ(√m), with θ² = 1/m.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Field {
    m: u64,
    root: Option<u64>,
}

impl Field {
    pub fn new(m: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidField(m));
        }
        let k = m.sqrt();
        let root = (k * k == m).then_some(k);
        Ok(Field { m, root })
    }

    #[inline]
    pub fn m(self) -> u64 {
        self.m
    }

    /// `Some(k)` when `m = k²`, i.e. when θ = 1/k is rational.
    #[inline]
    pub fn square_root(self) -> Option<u64> {
        self.root
    }

    pub fn zero(self) -> QuadRat {
        QuadRat::from_parts_unchecked(Rational::zero(), Rational::zero(), self)
    }

    pub fn one(self) -> QuadRat {
        self.rational(Rational::one())
    }

    /// The element 0 + 1·θ.
    pub fn theta(self) -> QuadRat {
        self.element(Rational::zero(), Rational::one())
    }

    pub fn integer(self, n: impl Into<BigInt>) -> QuadRat {
        self.rational(Rational::from_integer(n.into()))
    }

    pub fn rational(self, u: Rational) -> QuadRat {
        QuadRat::from_parts_unchecked(u, Rational::zero(), self)
    }

    /// Builds `u + v·θ` in canonical form.
    pub fn element(self, u: Rational, v: Rational) -> QuadRat {
        QuadRat::new(u, v, self)
    }

    fn m_big(self) -> BigInt {
        BigInt::from(self.m)
    }

    fn check(self, other: Field) -> Result<()> {
        if self.m == other.m {
            Ok(())
        } else {
            Err(Error::FieldMismatch {
                left: self.m,
                right: other.m,
            })
        }
    }
}

/// An exact element `u + v·θ` of ℚ(√m).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QuadRat {
    u: Rational,
    v: Rational,
    field: Field,
}

impl QuadRat {
    pub fn new(u: Rational, v: Rational, field: Field) -> Self {
        match field.root {
            Some(k) if !v.is_zero() => {
                let folded = u + v / Rational::from_integer(BigInt::from(k));
                Self::from_parts_unchecked(folded, Rational::zero(), field)
            }
            _ => Self::from_parts_unchecked(u, v, field),
        }
    }

    #[inline]
    fn from_parts_unchecked(u: Rational, v: Rational, field: Field) -> Self {
        QuadRat { u, v, field }
    }

    /// Rational part.
    #[inline]
    pub fn u(&self) -> &Rational {
        &self.u
    }

    /// Coefficient of θ.
    #[inline]
    pub fn v(&self) -> &Rational {
        &self.v
    }

    #[inline]
    pub fn field(&self) -> Field {
        self.field
    }

    #[inline]
    pub fn m(&self) -> u64 {
        self.field.m
    }

    pub fn is_zero(&self) -> bool {
        self.u.is_zero() && self.v.is_zero()
    }

    /// True when the value lies in ℚ.
    pub fn is_rational(&self) -> bool {
        self.v.is_zero()
    }

    pub fn as_rational(&self) -> Option<&Rational> {
        self.v.is_zero().then_some(&self.u)
    }

    /// The ratio `self / θ` when it is rational, which is always the case in
    /// a square field and for pure multiples of θ otherwise.
    pub fn theta_ratio(&self) -> Option<Rational> {
        match self.field.root {
            Some(k) => Some(&self.u * Rational::from_integer(BigInt::from(k))),
            None if self.u.is_zero() => Some(self.v.clone()),
            None => None,
        }
    }

    pub fn try_add(&self, rhs: &QuadRat) -> Result<QuadRat> {
        self.field.check(rhs.field)?;
        Ok(self.add_same(rhs))
    }

    pub fn try_sub(&self, rhs: &QuadRat) -> Result<QuadRat> {
        self.field.check(rhs.field)?;
        Ok(self.sub_same(rhs))
    }

    pub fn try_mul(&self, rhs: &QuadRat) -> Result<QuadRat> {
        self.field.check(rhs.field)?;
        Ok(self.mul_same(rhs))
    }

    pub fn try_div(&self, rhs: &QuadRat) -> Result<QuadRat> {
        self.field.check(rhs.field)?;
        Ok(self.mul_same(&rhs.inv()?))
    }

    /// Exact ordering of the represented reals.
    pub fn try_cmp(&self, rhs: &QuadRat) -> Result<Ordering> {
        self.field.check(rhs.field)?;
        Ok(self.sub_same(rhs).signum())
    }

    fn add_same(&self, rhs: &QuadRat) -> QuadRat {
        Self::from_parts_unchecked(&self.u + &rhs.u, &self.v + &rhs.v, self.field)
    }

    fn sub_same(&self, rhs: &QuadRat) -> QuadRat {
        Self::from_parts_unchecked(&self.u - &rhs.u, &self.v - &rhs.v, self.field)
    }

    // (u₁ + v₁θ)(u₂ + v₂θ) = (u₁u₂ + v₁v₂/m) + (u₁v₂ + u₂v₁)θ
    fn mul_same(&self, rhs: &QuadRat) -> QuadRat {
        if self.v.is_zero() && rhs.v.is_zero() {
            return self.field.rational(&self.u * &rhs.u);
        }
        let m = Rational::from_integer(self.field.m_big());
        let u = &self.u * &rhs.u + &self.v * &rhs.v / m;
        let v = &self.u * &rhs.v + &rhs.u * &self.v;
        Self::from_parts_unchecked(u, v, self.field)
    }

    /// Multiplication by θ: (u + vθ)θ = v/m + uθ.
    pub fn mul_theta(&self) -> QuadRat {
        match self.field.root {
            Some(k) => self.field.rational(&self.u / Rational::from_integer(BigInt::from(k))),
            None => {
                let m = Rational::from_integer(self.field.m_big());
                Self::from_parts_unchecked(&self.v / m, self.u.clone(), self.field)
            }
        }
    }

    pub fn scale(&self, r: &Rational) -> QuadRat {
        Self::from_parts_unchecked(&self.u * r, &self.v * r, self.field)
    }

    pub fn scale_int(&self, k: u64) -> QuadRat {
        let r = Rational::from_integer(BigInt::from(k));
        self.scale(&r)
    }

    /// Field norm `u² − v²/m`; zero only for the zero element.
    pub fn norm(&self) -> Rational {
        let m = Rational::from_integer(self.field.m_big());
        &self.u * &self.u - &self.v * &self.v / m
    }

    /// Exact reciprocal `(u − vθ)/(u² − v²/m)`.
    pub fn inv(&self) -> Result<QuadRat> {
        if self.is_zero() {
            return Err(Error::DivisionByZero);
        }
        if self.v.is_zero() {
            return Ok(self.field.rational(self.u.recip()));
        }
        let n = self.norm();
        Ok(Self::from_parts_unchecked(&self.u / &n, -&self.v / n, self.field))
    }

    /// Sign of the represented real as an ordering against zero.
    pub fn signum(&self) -> Ordering {
        let su = self.u.cmp(&Rational::zero());
        let sv = self.v.cmp(&Rational::zero());
        match (su, sv) {
            (s, Ordering::Equal) => s,
            (Ordering::Equal, s) => s,
            (a, b) if a == b => a,
            // Opposite signs: compare u² against v²/m.
            (Ordering::Greater, _) => (&self.u * &self.u * self.field.m_big()).cmp(&(&self.v * &self.v)),
            (Ordering::Less, _) => (&self.v * &self.v).cmp(&(&self.u * &self.u * self.field.m_big())),
        }
    }

    pub fn abs(&self) -> QuadRat {
        if self.signum() == Ordering::Less {
            -self
        } else {
            self.clone()
        }
    }

    /// Exact floor of the represented real.
    pub fn floor(&self) -> BigInt {
        if self.v.is_zero() {
            return self.u.floor().to_integer();
        }
        // u + s·√(v²/m) with u = a/b, v²/m = n/d:
        //   value = (a·d + s·√(b²·n·d)) / (b·d)
        // and ⌊(c + t)/e⌋ = ⌊(c + ⌊t⌋)/e⌋ for integers c, e > 0.
        let a = self.u.numer();
        let b = self.u.denom();
        let vsq = &self.v * &self.v / Rational::from_integer(self.field.m_big());
        let n = vsq.numer();
        let d = vsq.denom();
        let radicand = b * b * n * d;
        let root = radicand.sqrt();
        let t = if self.v.is_positive() {
            root
        } else if &root * &root == radicand {
            -root
        } else {
            -(root + BigInt::one())
        };
        (a * d + t).div_floor(&(b * d))
    }

    /// Nearest-even rounding to an IEEE double, decided with exact
    /// comparisons. Overflow yields ±∞.
    pub fn to_f64(&self) -> f64 {
        let sign = self.signum();
        if sign == Ordering::Equal {
            return 0.0;
        }
        let mag = self.abs();
        let e = mag.floor_log2();
        if e > 1023 {
            return if sign == Ordering::Less { f64::NEG_INFINITY } else { f64::INFINITY };
        }
        // Scale so the integer part carries the 53 significant bits, or the
        // fixed subnormal quantum 2^-1074.
        let k: i64 = if e < -1022 { 1074 } else { 52 - e };
        let scaled = mag.scale(&pow2(k));
        let mut f = scaled.floor();
        let frac = scaled.sub_same(&self.field.integer(f.clone()));
        match frac.sub_same(&self.field.rational(Rational::new(1.into(), 2.into()))).signum() {
            Ordering::Greater => f += 1,
            Ordering::Equal if f.is_odd() => f += 1,
            _ => {}
        }
        let f = f.to_u64().expect("rounded significand fits in 54 bits") as f64;
        let out = ldexp(f, -k);
        if sign == Ordering::Less {
            -out
        } else {
            out
        }
    }

    /// Like [`QuadRat::to_f64`] but reports overflow as an error.
    pub fn to_f64_checked(&self) -> Result<f64> {
        let x = self.to_f64();
        if x.is_finite() {
            Ok(x)
        } else {
            Err(Error::domain("finite double", self))
        }
    }

    /// ⌊log₂ |self|⌋ for a nonzero value.
    fn floor_log2(&self) -> i64 {
        debug_assert!(!self.is_zero());
        let mag = self.abs();
        // Upper bound from |u| + |v| ≥ |u + vθ| (θ ≤ 1).
        let bound = mag.u.abs() + mag.v.abs();
        let hint = bound.numer().bits() as i64 - bound.denom().bits() as i64 + 1;
        let mut k = 64 - hint;
        loop {
            let f = mag.scale(&pow2(k)).floor();
            if f.bits() >= 60 {
                return f.bits() as i64 - 1 - k;
            }
            // Cancellation between u and vθ: look further down.
            k += 64 - f.bits() as i64;
        }
    }
}

fn pow2(k: i64) -> Rational {
    let p = BigInt::one() << k.unsigned_abs();
    if k >= 0 {
        Rational::from_integer(p)
    } else {
        Rational::new(BigInt::one(), p)
    }
}

/// `x · 2^n`, exact whenever the result is representable.
pub(crate) fn ldexp(mut x: f64, mut n: i64) -> f64 {
    let pow = |e: i64| f64::from_bits(((e + 1023) as u64) << 52);
    while n > 1023 {
        x *= pow(1023);
        n -= 1023;
    }
    while n < -1022 {
        x *= pow(-1022);
        n += 1022;
    }
    x * pow(n)
}

/// Nearest-even double for an exact rational.
pub fn rational_to_f64(r: &Rational) -> f64 {
    // Any field works for a rational value.
    Field { m: 1, root: Some(1) }.rational(r.clone()).to_f64()
}

/// Parses `"p/q"` or `"p"` into a canonical rational.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::domain("rational literal \"p/q\"", s);
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let num: BigInt = num.parse().map_err(|_| bad())?;
    let den: BigInt = den.parse().map_err(|_| bad())?;
    if den.is_zero() {
        return Err(Error::DivisionByZero);
    }
    Ok(Rational::new(num, den))
}

impl PartialOrd for QuadRat {
    /// `None` when the operands live in different fields.
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.try_cmp(other).ok()
    }
}

impl Neg for &QuadRat {
    type Output = QuadRat;
    fn neg(self) -> QuadRat {
        QuadRat::from_parts_unchecked(-&self.u, -&self.v, self.field)
    }
}

impl Neg for QuadRat {
    type Output = QuadRat;
    fn neg(self) -> QuadRat {
        QuadRat::from_parts_unchecked(-self.u, -self.v, self.field)
    }
}

// Operator sugar for code that already knows both operands share a field.
// Mixing fields through these operators is a programming error and panics;
// use the `try_*` methods for untrusted operands.
macro_rules! forward_binop {
    ($tr:ident, $method:ident, $same:ident) => {
        impl $tr<&QuadRat> for &QuadRat {
            type Output = QuadRat;
            fn $method(self, rhs: &QuadRat) -> QuadRat {
                self.field.check(rhs.field).expect("operands from different fields");
                self.$same(rhs)
            }
        }
        impl $tr<QuadRat> for QuadRat {
            type Output = QuadRat;
            fn $method(self, rhs: QuadRat) -> QuadRat {
                (&self).$method(&rhs)
            }
        }
        impl $tr<&QuadRat> for QuadRat {
            type Output = QuadRat;
            fn $method(self, rhs: &QuadRat) -> QuadRat {
                (&self).$method(rhs)
            }
        }
    };
}

forward_binop!(Add, add, add_same);
forward_binop!(Sub, sub, sub_same);
forward_binop!(Mul, mul, mul_same);

impl QuadRat {
    fn div_same(&self, rhs: &QuadRat) -> QuadRat {
        self.mul_same(&rhs.inv().expect("division by zero"))
    }
}
forward_binop!(Div, div, div_same);

fn fmt_rational(r: &Rational, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if r.is_integer() {
        write!(f, "{}", r.numer())
    } else {
        write!(f, "{}/{}", r.numer(), r.denom())
    }
}

impl fmt::Display for QuadRat {
    /// `p/q`, `r/s θ` or `p/q + r/s θ`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.v.is_zero() {
            return fmt_rational(&self.u, f);
        }
        if self.u.is_zero() {
            fmt_rational(&self.v, f)?;
            return f.write_str(" θ");
        }
        fmt_rational(&self.u, f)?;
        if self.v.is_negative() {
            f.write_str(" - ")?;
            fmt_rational(&-&self.v, f)?;
        } else {
            f.write_str(" + ")?;
            fmt_rational(&self.v, f)?;
        }
        f.write_str(" θ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    fn el(m: u64, u: (i64, i64), v: (i64, i64)) -> QuadRat {
        Field::new(m).unwrap().element(q(u.0, u.1), q(v.0, v.1))
    }

    #[test]
    fn addition_examples() {
        assert_eq!(el(2, (1, 2), (0, 1)) + el(2, (0, 1), (1, 1)), el(2, (1, 2), (1, 1)));
        assert_eq!(el(3, (1, 1), (1, 1)) + el(3, (1, 1), (-1, 1)), el(3, (2, 1), (0, 1)));
        assert_eq!(el(5, (1, 3), (2, 1)) + el(5, (1, 6), (1, 1)), el(5, (1, 2), (3, 1)));
    }

    #[test]
    fn multiplication_examples() {
        let f2 = Field::new(2).unwrap();
        assert_eq!(f2.theta() * f2.theta(), f2.rational(q(1, 2)));
        // m = 4 is a square field: θ = 1/2 folds into the rational part.
        assert_eq!(el(4, (1, 1), (1, 1)) * el(4, (1, 1), (-1, 1)), el(4, (3, 4), (0, 1)));
        let prod = el(1, (2, 1), (3, 1)) * el(1, (1, 1), (1, 1));
        assert_eq!(prod, Field::new(1).unwrap().integer(10));
        assert_eq!(prod.to_f64(), 10.0);
    }

    #[test]
    fn inverse_examples() {
        for m in [2u64, 3, 5, 7, 12] {
            let f = Field::new(m).unwrap();
            assert_eq!(f.theta().inv().unwrap(), f.theta().scale_int(m));
        }
        let one = Field::new(3).unwrap().one();
        assert_eq!(one.inv().unwrap(), one);
        assert_eq!(el(2, (1, 1), (1, 1)).inv().unwrap(), el(2, (2, 1), (-2, 1)));
        assert_eq!(Field::new(2).unwrap().zero().inv(), Err(Error::DivisionByZero));
    }

    #[test]
    fn comparison_examples() {
        let f2 = Field::new(2).unwrap();
        assert_eq!(f2.theta().try_cmp(&f2.rational(q(7, 10))).unwrap(), Ordering::Greater);
        assert_eq!(f2.theta().try_cmp(&f2.theta()).unwrap(), Ordering::Equal);
        let f1 = Field::new(1).unwrap();
        assert_eq!(f1.rational(q(1, 2)).try_cmp(&f1.theta()).unwrap(), Ordering::Less);
    }

    #[test]
    fn mismatched_fields_are_rejected() {
        let a = Field::new(2).unwrap().theta();
        let b = Field::new(3).unwrap().theta();
        let err = Error::FieldMismatch { left: 2, right: 3 };
        assert_eq!(a.try_add(&b), Err(err.clone()));
        assert_eq!(a.try_mul(&b), Err(err.clone()));
        assert_eq!(a.try_cmp(&b), Err(err));
        assert!(a.partial_cmp(&b).is_none());
    }

    #[test]
    fn float_conversion_examples() {
        assert_eq!(Field::new(4).unwrap().theta().to_f64(), 0.5);
        assert_eq!(Field::new(2).unwrap().theta().to_f64(), std::f64::consts::FRAC_1_SQRT_2);
        assert_eq!(Field::new(7).unwrap().zero().to_f64(), 0.0);
        // Correctly rounded 1/√3; 1.0 / 3f64.sqrt() rounds twice and lands one ulp high.
        assert_eq!(Field::new(3).unwrap().theta().to_f64(), 0.5773502691896257);
    }

    #[test]
    fn float_conversion_edge_cases() {
        let f = Field::new(2).unwrap();
        let huge = f.integer(BigInt::one() << 1100);
        assert_eq!(huge.to_f64(), f64::INFINITY);
        assert!(huge.to_f64_checked().is_err());
        assert_eq!((-huge).to_f64(), f64::NEG_INFINITY);
        let tiny = f.rational(Rational::new(BigInt::one(), BigInt::one() << 1074));
        assert_eq!(tiny.to_f64(), f64::from_bits(1));
        let below = f.rational(Rational::new(BigInt::one(), BigInt::one() << 1076));
        assert_eq!(below.to_f64(), 0.0);
        // Ties round to even.
        let tie = f.rational(Rational::from_integer((BigInt::one() << 53) + 1));
        assert_eq!(tie.to_f64(), 9007199254740992.0);
        assert_eq!(f.rational(q(1, 3)).to_f64(), 1.0 / 3.0);
        assert_eq!(f.rational(q(-2, 7)).to_f64(), -2.0 / 7.0);
    }

    #[test]
    fn float_conversion_survives_cancellation() {
        // 1 − 1.414213562373095·θ with θ = 1/√2; oracle from 300-bit mpmath.
        let f = Field::new(2).unwrap();
        let close = f.element(q(1, 1), q(-1414213562373095, 1000000000000000));
        assert_eq!(close.to_f64(), 3.450800503024375e-17);
    }

    #[test]
    fn floor_is_exact_near_integers() {
        let f2 = Field::new(2).unwrap();
        // √2 = 2θ
        assert_eq!(f2.theta().scale_int(2).floor(), BigInt::from(1));
        assert_eq!((-f2.theta().scale_int(2)).floor(), BigInt::from(-2));
        assert_eq!(f2.element(q(3, 1), q(-2, 1)).floor(), BigInt::from(1)); // 3 − √2
        let f9 = Field::new(9).unwrap();
        assert_eq!(f9.theta().scale_int(6).floor(), BigInt::from(2));
        assert_eq!(f9.rational(q(-1, 3)).floor(), BigInt::from(-1));
    }

    #[test]
    fn canonical_form_in_square_fields() {
        let f = Field::new(9).unwrap();
        let t = f.theta();
        assert!(t.v().is_zero());
        assert_eq!(t.u(), &q(1, 3));
        assert_eq!(t.theta_ratio().unwrap(), q(1, 1));
    }

    #[test]
    fn display_forms() {
        assert_eq!(el(2, (1, 2), (3, 4)).to_string(), "1/2 + 3/4 θ");
        assert_eq!(el(2, (1, 2), (-3, 1)).to_string(), "1/2 - 3 θ");
        assert_eq!(el(2, (0, 1), (5, 1)).to_string(), "5 θ");
        assert_eq!(el(2, (-7, 3), (0, 1)).to_string(), "-7/3");
    }

    #[test]
    fn parse_rational_literals() {
        assert_eq!(parse_rational("3/10").unwrap(), q(3, 10));
        assert_eq!(parse_rational(" 6/4 ").unwrap(), q(3, 2));
        assert_eq!(parse_rational("5").unwrap(), q(5, 1));
        assert!(parse_rational("0.3").is_err());
        assert!(parse_rational("1/0").is_err());
    }
}
