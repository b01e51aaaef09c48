use std::cmp::Ordering;

use num_bigint::BigInt;
use proptest::prelude::*;
use thetaexp::expansion::{cylinder, evaluate, expand, expand_orbit, Convergents};
use thetaexp::identities::check_word;
use thetaexp::{Field, QuadRat, Rational, ThetaParams};

const FIELDS: [u64; 6] = [1, 2, 3, 4, 5, 9];

fn word_for(m: u64) -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(m..=m + 20, 1..=30)
}

fn field_and_word() -> impl Strategy<Value = (u64, Vec<u64>)> {
    prop::sample::select(FIELDS.to_vec()).prop_flat_map(|m| (Just(m), word_for(m)))
}

/// A point of (0, θ) that is not a rational multiple of θ when m is not a square.
fn generic_point() -> impl Strategy<Value = QuadRat> {
    (prop::sample::select(vec![2u64, 3, 5, 6, 7, 10]), 1i64..200, 1i64..200, -100i64..100, 1i64..200)
        .prop_filter_map("outside (0, θ)", |(m, a, b, c, d)| {
            let f = Field::new(m).unwrap();
            let x = f.element(
                Rational::new(BigInt::from(a), BigInt::from(b)),
                Rational::new(BigInt::from(c), BigInt::from(d)),
            );
            let inside = x.signum() == Ordering::Greater && x.try_cmp(&f.theta()).unwrap() == Ordering::Less;
            inside.then_some(x)
        })
}

/// θ·P/Q with 0 < P < Q: finite expansion.
fn theta_multiple() -> impl Strategy<Value = QuadRat> {
    (prop::sample::select(FIELDS.to_vec()), 2u64..1_000_000)
        .prop_flat_map(|(m, q)| (Just(m), 1..q, Just(q)))
        .prop_map(|(m, p, q)| {
            let params = ThetaParams::new(m).unwrap();
            params.theta().scale(&Rational::new(BigInt::from(p), BigInt::from(q)))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn word_identities_hold_exactly((m, word) in field_and_word()) {
        let params = ThetaParams::new(m).unwrap();
        let report = check_word(&word, &params).unwrap();
        prop_assert!(report.passed(), "{:?}", report);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn reconstruction_along_exact_orbit(x in generic_point()) {
        let params = ThetaParams::new(x.m()).unwrap();
        let (digits, orbit) = expand_orbit(&x, &params, 12).unwrap();
        let mut c = Convergents::new(&params);
        for (a, t) in digits.iter().zip(&orbit) {
            c.push(*a);
            let rec = (c.p() + &(t * c.p_prev())).try_div(&(c.q() + &(t * c.q_prev()))).unwrap();
            prop_assert_eq!(&rec, &x);
        }
    }

    #[test]
    fn sandwich_on_truncated_expansions(x in generic_point()) {
        let params = ThetaParams::new(x.m()).unwrap();
        let (digits, _) = expand_orbit(&x, &params, 10).unwrap();
        let mut c = Convergents::new(&params);
        for w in digits.windows(2) {
            c.push(w[0]);
            let q = c.q().clone();
            let q_next = &(&params.theta().scale_int(w[1]) * &q) + c.q_prev();
            let err = (&x - &c.p().try_div(&q).unwrap()).abs();
            let upper = (&q * &q_next).inv().unwrap();
            let lower = (&q * &(&q_next + &q.mul_theta())).inv().unwrap();
            prop_assert!(lower.try_cmp(&err).unwrap() != Ordering::Greater);
            prop_assert!(err.try_cmp(&upper).unwrap() != Ordering::Greater);
        }
    }

    #[test]
    fn terminating_inputs_round_trip(x in theta_multiple()) {
        let params = ThetaParams::new(x.m()).unwrap();
        let seq = expand(&x, &params, 10_000).unwrap();
        prop_assert!(seq.is_terminated());
        prop_assert!(seq.digits.iter().all(|&d| d >= x.m()));
        prop_assert!(*seq.digits.last().unwrap() > x.m());
        prop_assert_eq!(evaluate(&seq.digits, &params).unwrap(), x);
    }

    #[test]
    fn points_lie_in_their_cylinders(x in prop_oneof![generic_point(), theta_multiple()]) {
        let params = ThetaParams::new(x.m()).unwrap();
        let seq = expand(&x, &params, 15).unwrap();
        for n in 0..=seq.digits.len() {
            let c = cylinder(&seq.digits[..n], &params).unwrap();
            prop_assert!(c.contains(&x).unwrap(), "n = {}, {:?}", n, c);
        }
    }

    #[test]
    fn cylinders_nest((m, word) in field_and_word(), dk in 0u64..=10) {
        let params = ThetaParams::new(m).unwrap();
        let word = &word[..word.len().min(12)];
        let parent = cylinder(word, &params).unwrap();
        let mut child_word = word.to_vec();
        child_word.push(m + dk);
        let child = cylinder(&child_word, &params).unwrap();
        prop_assert!(parent.encloses(&child).unwrap());
        prop_assert!(child.lo.try_cmp(&child.hi).unwrap() == Ordering::Less);
    }

    #[test]
    fn exact_and_generic_digits_agree(x in theta_multiple()) {
        // The scaled integer path must match the plain field iteration.
        let params = ThetaParams::new(x.m()).unwrap();
        let fast = expand(&x, &params, 40).unwrap();
        let (slow, _) = expand_orbit(&x, &params, 40).unwrap();
        prop_assert_eq!(fast.digits, slow);
    }
}

#[test]
fn rank_one_cylinders_tile_the_interval() {
    for m in FIELDS {
        let params = ThetaParams::new(m).unwrap();
        let mut prev_lo = params.theta().clone();
        for k in m..m + 50 {
            let c = cylinder(&[k], &params).unwrap();
            assert_eq!(c.hi, prev_lo, "m={m} k={k}");
            prev_lo = c.lo.clone();
        }
    }
}
