use thetaexp::evt::{
    exact_max_law, exact_max_law_direct, frechet_cdf, mixing_probe, rate_probe, scaled_max_law, scaled_threshold,
    DigitEvent,
};
use thetaexp::hiprec;
use thetaexp::measure::tail_p;
use thetaexp::simulate::{run, Engine, SimConfig};
use thetaexp::{Error, ThetaParams};

#[test]
fn exact_law_agrees_with_monte_carlo() {
    let params = ThetaParams::new(1).unwrap();
    let m_traj = 100_000u64;
    let cfg = SimConfig::new(1, 3, m_traj, 404).with_engine(Engine::Exact);
    let maxima = run(&cfg, |_, t| [t.max_upto(1), t.max_upto(2), t.max_upto(3)]).unwrap();
    for n in 1..=3usize {
        for w in 2..=6u64 {
            let p = exact_max_law(n, w, &params).unwrap().to_f64();
            let hits = maxima.iter().filter(|l| l[n - 1] < w).count() as f64;
            let f = hits / m_traj as f64;
            let sd = (p * (1.0 - p) / m_traj as f64).sqrt();
            assert!((f - p).abs() <= 3.0 * sd, "N={n} w={w}: {f} vs {p} (σ {sd})");
        }
    }
}

#[test]
fn exact_law_is_monotone_in_w_and_n() {
    for m in [1u64, 2, 3] {
        let params = ThetaParams::new(m).unwrap();
        for n in 1..=4usize {
            let mut prev = hiprec::from_u64(0);
            for w in m..=m + 8 {
                let v = exact_max_law(n, w, &params).unwrap().value;
                assert!(hiprec::cmp(&prev, &v) != Some(std::cmp::Ordering::Greater), "m={m} N={n} w={w}");
                if n > 1 {
                    let shorter = exact_max_law(n - 1, w, &params).unwrap().value;
                    assert!(hiprec::cmp(&v, &shorter) != Some(std::cmp::Ordering::Greater), "m={m} N={n} w={w}");
                }
                prev = v;
            }
        }
    }
}

#[test]
fn single_digit_law_is_the_tail_complement() {
    for m in [1u64, 2, 4, 9] {
        let params = ThetaParams::new(m).unwrap();
        for w in m..=m + 1000 {
            let a = exact_max_law(1, w, &params).unwrap().to_f64();
            let t = tail_p(w, &params).unwrap().to_f64();
            assert!((a + t - 1.0).abs() <= 1e-12, "m={m} w={w}");
        }
    }
}

#[test]
fn telescoped_and_direct_enumerations_agree() {
    let params = ThetaParams::new(1).unwrap();
    for (n, w) in [(4usize, 7u64), (5, 5), (6, 4)] {
        let a = exact_max_law(n, w, &params).unwrap();
        let b = exact_max_law_direct(n, w, &params).unwrap();
        let diff = hiprec::to_f64(&hiprec::sub(&a.value, &b.value)).abs();
        assert!(diff <= a.error_bound + b.error_bound + 1e-15, "N={n} w={w}: {diff}");
    }
}

#[test]
fn exact_oracle_already_resembles_frechet_at_three_digits() {
    let params = ThetaParams::new(1).unwrap();
    for y in [0.75, 1.0, 1.5, 2.0, 3.0] {
        let w = scaled_threshold(3, y, &params);
        let v = exact_max_law(3, w, &params).unwrap().to_f64();
        assert!((v - frechet_cdf(y)).abs() <= 0.15, "y={y} w={w}: {v}");
    }
}

#[test]
fn enumeration_budget_is_enforced() {
    let params = ThetaParams::new(1).unwrap();
    assert!(matches!(exact_max_law(7, 12, &params), Err(Error::BudgetExceeded { .. })));
    // One level is summed in closed form, so the boundary case is cheap.
    assert!(exact_max_law(1, 1 + 10_000_000, &params).is_ok());
    assert!(exact_max_law(1, 2 + 10_000_000, &params).is_err());
    assert_eq!(exact_max_law(5, 1, &params).unwrap().to_f64(), 0.0);
}

#[test]
fn scaled_maximum_is_near_frechet_for_moderate_n() {
    let params = ThetaParams::new(1).unwrap();
    let cfg = SimConfig::new(1, 2000, 4000, 77);
    let maxima = run(&cfg, |_, t| t.max()).unwrap();
    let ecdf = scaled_max_law(&maxima, cfg.n_digits, &params).unwrap();
    for y in [0.5, 1.0, 2.0, 4.0] {
        assert!((ecdf.eval(y) - frechet_cdf(y)).abs() <= 0.05, "y={y}");
    }
    let mut shuffled = maxima.clone();
    shuffled.reverse();
    assert_eq!(scaled_max_law(&shuffled, cfg.n_digits, &params).unwrap(), ecdf);
}

#[test]
fn rate_probe_is_reproducible() {
    let cfg = SimConfig::new(1, 1, 1000, 5);
    let a = rate_probe(&cfg, 1.0, &[100, 1000]).unwrap();
    let b = rate_probe(&cfg, 1.0, &[100, 1000]).unwrap();
    assert_eq!(a, b);
    assert!(a.rows.iter().all(|r| r.deviation <= 1.0 && r.stderr > 0.0));
    assert!(rate_probe(&SimConfig::new(1, 1, 999, 5), 1.0, &[100]).is_err());
    assert!(rate_probe(&cfg, 1.0, &[1000, 100]).is_err());
}

#[test]
fn sure_events_are_independent() {
    let cfg = SimConfig::new(2, 1, 20_000, 1);
    let probe = mixing_probe(&cfg, &[1, 2, 3], DigitEvent::AtLeast(2), DigitEvent::AtLeast(2)).unwrap();
    assert!(probe.estimates.iter().all(|e| e.psi_hat == 0.0 && e.std_err > 0.0));
    assert_eq!(probe.slope, None);
}

#[test]
fn impossible_events_are_rejected() {
    let cfg = SimConfig::new(2, 1, 1000, 1);
    let r = mixing_probe(&cfg, &[1], DigitEvent::AtMost(1), DigitEvent::Equals(2));
    assert!(matches!(r, Err(Error::DegenerateEvent(_))));
}

#[test]
fn mixing_decays_for_adjacent_digits() {
    let cfg = SimConfig::new(1, 1, 300_000, 12);
    let gaps: Vec<usize> = (1..=6).collect();
    let probe = mixing_probe(&cfg, &gaps, DigitEvent::Equals(1), DigitEvent::Equals(1)).unwrap();
    let first = &probe.estimates[0];
    // ψ(1) for m = 1 is far from zero: a₁ = 1 makes a₂ = 1 less likely.
    assert!(first.psi_hat > 10.0 * first.std_err);
    assert!(probe.estimates.last().unwrap().psi_hat <= 0.05);
    assert!(probe.slope.unwrap() < 0.0);
    assert!(probe.envelope.holds);
}
