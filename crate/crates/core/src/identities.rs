//! Exact checks of the algebraic identities satisfied by a digit word:
//! the determinant identity, reconstruction from the orbit, the
//! approximation sandwich, the growth bound on qₙ, and the cylinder
//! measure with its bounds and child ratios.
//!
//! Every comparison is exact; a single failure is a bug, not noise.

use std::cmp::Ordering;

use num_bigint::BigInt;
use serde::Serialize;

use crate::error::Result;
use crate::expansion::{determinant_sign, evaluate, Convergents, ThetaParams};
use crate::quadfield::{QuadRat, Rational};

pub const DETERMINANT: &str = "determinant";
pub const RECONSTRUCTION: &str = "reconstruction";
pub const SANDWICH: &str = "sandwich";
pub const GROWTH: &str = "growth";
pub const CYLINDER_MEASURE: &str = "cylinder-measure";
pub const MEASURE_BOUNDS: &str = "measure-bounds";
pub const CHILD_RATIO: &str = "child-ratio";

pub const ALL: [&str; 7] = [DETERMINANT, RECONSTRUCTION, SANDWICH, GROWTH, CYLINDER_MEASURE, MEASURE_BOUNDS, CHILD_RATIO];

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct IdentityTally {
    pub name: &'static str,
    pub checked: u64,
    pub failed: u64,
    /// First failure, for diagnostics.
    pub first_failure: Option<String>,
}

impl IdentityTally {
    pub fn passed(&self) -> bool {
        self.failed == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IdentityReport {
    pub tallies: Vec<IdentityTally>,
}

impl Default for IdentityReport {
    fn default() -> Self {
        IdentityReport {
            tallies: ALL.iter().map(|&name| IdentityTally { name, ..Default::default() }).collect(),
        }
    }
}

impl IdentityReport {
    pub fn passed(&self) -> bool {
        self.tallies.iter().all(IdentityTally::passed)
    }

    pub fn get(&self, name: &str) -> Option<&IdentityTally> {
        self.tallies.iter().find(|t| t.name == name)
    }

    fn record(&mut self, name: &'static str, ok: bool, detail: impl FnOnce() -> String) {
        let t = self.tallies.iter_mut().find(|t| t.name == name).expect("known identity");
        t.checked += 1;
        if !ok {
            t.failed += 1;
            if t.first_failure.is_none() {
                t.first_failure = Some(detail());
            }
        }
    }

    pub fn merge(&mut self, other: &IdentityReport) {
        for o in &other.tallies {
            let t = self.tallies.iter_mut().find(|t| t.name == o.name).expect("known identity");
            t.checked += o.checked;
            t.failed += o.failed;
            if t.first_failure.is_none() {
                t.first_failure.clone_from(&o.first_failure);
            }
        }
    }
}

fn le(a: &QuadRat, b: &QuadRat) -> bool {
    a.try_cmp(b).map(|o| o != Ordering::Greater).unwrap_or(false)
}

fn rational_of(x: &QuadRat) -> Option<Rational> {
    x.as_rational().cloned()
}

/// Checks every identity along the word, taking x = value of the whole word.
///
/// The tails T^n x are the values of the suffixes, so the orbit needs no
/// separate expansion (and the word need not be the canonical expansion of
/// x when it ends in the digit m).
pub fn check_word(word: &[u64], params: &ThetaParams) -> Result<IdentityReport> {
    let mut report = IdentityReport::default();
    if word.is_empty() {
        return Ok(report);
    }
    let f = params.field();
    let theta = params.theta();
    let x = evaluate(word, params)?;
    let n_total = word.len();
    // tails[n] = T^n x, with T^N x = 0.
    let mut tails = Vec::with_capacity(n_total + 1);
    for n in 0..n_total {
        tails.push(evaluate(&word[n..], params)?);
    }
    tails.push(f.zero());

    let mut c = Convergents::new(params);
    let mut lambda_prev: Option<Rational> = None;
    for (idx, &a) in word.iter().enumerate() {
        c.push(a);
        let n = idx + 1;
        let (p, q, pp, qp) = (c.p(), c.q(), c.p_prev(), c.q_prev());

        let det = &(pp * q) - &(p * qp);
        report.record(DETERMINANT, det == f.integer(determinant_sign(n as i64)), || {
            format!("{word:?} n={n}: {det}")
        });

        let t = &tails[n];
        let rec = (p + &(t * pp)).try_div(&(q + &(t * qp)))?;
        report.record(RECONSTRUCTION, rec == x, || format!("{word:?} n={n}: {rec} != {x}"));

        let growth = f.rational(Rational::new(BigInt::from((n / 2) as u64), BigInt::from(params.m())));
        report.record(GROWTH, le(&growth, q), || format!("{word:?} n={n}: q={q}"));

        // λ(C) = 1/(qₙ(qₙ + θqₙ₋₁)) must equal |hi − lo|/θ.
        let den = q * &(q + &qp.mul_theta());
        let lambda = rational_of(&den).map(|d| d.recip());
        let lo = p.try_div(q)?;
        let hi = (p + &pp.mul_theta()).try_div(&(q + &qp.mul_theta()))?;
        let length = (&hi - &lo).abs().try_div(theta)?;
        let measure_ok = lambda.as_ref().is_some_and(|l| f.rational(l.clone()) == length);
        report.record(CYLINDER_MEASURE, measure_ok, || format!("{word:?} n={n}: {den} vs {length}"));

        if let (Some(l), Some(q2)) = (&lambda, rational_of(&(q * q))) {
            let upper = q2.recip();
            let lower = &upper / Rational::from_integer(2.into());
            report.record(MEASURE_BOUNDS, &lower <= l && l <= &upper, || format!("{word:?} n={n}: λ={l}"));
            // The parent of a rank-1 cylinder is the whole space, λ = 1.
            let ratio = match &lambda_prev {
                Some(parent) => l / parent,
                None => l.clone(),
            };
            let k2 = Rational::from_integer(BigInt::from(a) * BigInt::from(a));
            let lower = (Rational::from_integer(6.into()) * &k2).recip();
            let upper = Rational::from_integer(BigInt::from(params.m() + 1)) / &k2;
            report.record(CHILD_RATIO, lower < ratio && ratio < upper, || {
                format!("{word:?} n={n}: ratio {ratio}")
            });
        } else {
            report.record(MEASURE_BOUNDS, false, || format!("{word:?} n={n}: irrational qₙ²"));
        }
        lambda_prev = lambda;

        // 1/(qₙ(qₙ₊₁ + θqₙ)) ≤ |x − pₙ/qₙ| ≤ 1/(qₙqₙ₊₁), for n < N.
        if n < n_total {
            let next = word[n];
            let q_next = &(&theta.scale_int(next) * q) + qp;
            let err = (&x - &lo).abs();
            let upper = (q * &q_next).inv()?;
            let lower = (q * &(&q_next + &q.mul_theta())).inv()?;
            report.record(SANDWICH, le(&lower, &err) && le(&err, &upper), || {
                format!("{word:?} n={n}: |x − pₙ/qₙ| = {err}")
            });
        }
    }
    Ok(report)
}
