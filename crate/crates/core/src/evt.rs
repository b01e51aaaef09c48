//! Extreme-value statistics of the digits: the scaled maximum against the
//! Fréchet law exp(−1/y), exact small-N laws of L_N by cylinder enumeration,
//! and a finite-sample probe of ψ-mixing.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expansion::{Convergents, ThetaParams};
use crate::hiprec;
use crate::measure::{self, gamma_interval, MeasureValue};
use crate::parallel::try_map_indexed;
use crate::simulate::{self, SimConfig};

/// exp(−1/y) for y > 0, else 0.
pub fn frechet_cdf(y: f64) -> f64 {
    if y > 0.0 {
        (-1.0 / y).exp()
    } else {
        0.0
    }
}

/// Right-continuous empirical distribution function.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalCDF {
    sorted: Vec<f64>,
}

impl EmpiricalCDF {
    /// NaN samples are rejected.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidConfig("empirical CDF of an empty sample".into()));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::domain("sample value", "NaN"));
        }
        values.sort_by(f64::total_cmp);
        Ok(EmpiricalCDF { sorted: values })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of samples ≤ y.
    pub fn eval(&self, y: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= y) as f64 / self.len() as f64
    }

    /// Fraction of samples < y.
    pub fn eval_left(&self, y: f64) -> f64 {
        self.sorted.partition_point(|&v| v < y) as f64 / self.len() as f64
    }

    /// Binomial standard error of `eval(y)`.
    pub fn stderr(&self, y: f64) -> f64 {
        let f = self.eval(y);
        (f * (1.0 - f) / self.len() as f64).sqrt()
    }
}

/// Kolmogorov–Smirnov distance sup |F_n − F| against a continuous `cdf`.
pub fn ks_distance(ecdf: &EmpiricalCDF, cdf: impl Fn(f64) -> f64) -> f64 {
    let s = ecdf.sorted();
    let n = s.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < s.len() {
        let x = s[i];
        let mut j = i;
        while j < s.len() && s[j] == x {
            j += 1;
        }
        let f = cdf(x);
        d = d.max((j as f64 / n - f).abs()).max((f - i as f64 / n).abs());
        i = j;
    }
    d
}

/// Empirical law of L_N·log(1 + 1/m)/N over an ensemble of maxima.
pub fn scaled_max_law(maxima: &[u64], n: usize, params: &ThetaParams) -> Result<EmpiricalCDF> {
    if maxima.len() < 100 {
        return Err(Error::InvalidConfig(format!("need at least 100 trajectories, got {}", maxima.len())));
    }
    if n == 0 {
        return Err(Error::InvalidConfig("N must be at least 1".into()));
    }
    let scale = params.log_norm_f64() / n as f64;
    EmpiricalCDF::new(maxima.iter().map(|&l| l as f64 * scale).collect())
}

/// Words allowed by [`exact_max_law`].
pub const ENUMERATION_BUDGET: u128 = 10_000_000;

fn check_budget(n: usize, w: u64, m: u64) -> Result<()> {
    let words = ((w - m) as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if words > ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded { words, budget: ENUMERATION_BUDGET });
    }
    Ok(())
}

fn check_max_law_args(n: usize, w: u64, params: &ThetaParams) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidConfig("N must be at least 1".into()));
    }
    if w < params.m() {
        return Err(Error::DigitBelowFloor { digit: w, m: params.m() });
    }
    check_budget(n, w, params.m())
}

/// γ(L_N < w): the γ-measure of all words in {m, …, w−1}ᴺ.
///
/// The last level is summed in closed form. Inside C(prefix) the point with
/// tail t = T^{N−1}x is (p + tp′)/(q + tq′), and a_N < w exactly when
/// t ∈ (1/(wθ), θ], so the union over the last digit is one interval.
pub fn exact_max_law(n: usize, w: u64, params: &ThetaParams) -> Result<MeasureValue> {
    check_max_law_args(n, w, params)?;
    if w == params.m() {
        return Ok(measure::zero());
    }
    let t_hi = params.theta().clone();
    let t_lo = t_hi.scale(&crate::quadfield::Rational::new(params.m().into(), w.into()));
    let mut total = hiprec::from_u64(0);
    let mut err = 0.0;
    let mut stack = vec![(Convergents::new(params), 0usize)];
    while let Some((c, depth)) = stack.pop() {
        if depth + 1 == n {
            let at = |t: &crate::QuadRat| -> Result<crate::QuadRat> {
                let num = c.p() + &(t * c.p_prev());
                let den = c.q() + &(t * c.q_prev());
                num.try_div(&den)
            };
            let g = gamma_interval(&at(&t_lo)?, &at(&t_hi)?, params)?;
            total = hiprec::add(&total, &g.value);
            err += g.error_bound + hiprec::rel_bound(&total);
            continue;
        }
        for d in params.m()..w {
            let mut next = c.clone();
            next.push(d);
            stack.push((next, depth + 1));
        }
    }
    Ok(MeasureValue { value: total, error_bound: err })
}

/// Same quantity summed cylinder by cylinder over every full word; an
/// independent route for checking [`exact_max_law`].
pub fn exact_max_law_direct(n: usize, w: u64, params: &ThetaParams) -> Result<MeasureValue> {
    check_max_law_args(n, w, params)?;
    if w == params.m() {
        return Ok(measure::zero());
    }
    let m = params.m();
    let mut word = vec![m; n];
    let mut total = hiprec::from_u64(0);
    let mut err = 0.0;
    loop {
        let g = measure::gamma_cyl(&crate::expansion::cylinder(&word, params)?, params)?;
        total = hiprec::add(&total, &g.value);
        err += g.error_bound + hiprec::rel_bound(&total);
        // Odometer over {m, …, w−1}ᴺ.
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(MeasureValue { value: total, error_bound: err });
            }
            i -= 1;
            word[i] += 1;
            if word[i] < w {
                break;
            }
            word[i] = m;
        }
    }
}

/// w = ⌊Ny/log(1 + 1/m)⌋, the integer threshold paired with the scaled level y.
pub fn scaled_threshold(n: usize, y: f64, params: &ThetaParams) -> u64 {
    (n as f64 * y / params.log_norm_f64()).floor() as u64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub empirical: f64,
    pub frechet: f64,
    pub deviation: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateProbe {
    pub y: f64,
    pub rows: Vec<RateRow>,
    /// Deviation at the largest N is within 2 pooled σ of the one at the smallest.
    pub decay_ok: bool,
}

/// |ECDF_N(y) − exp(−1/y)| along `n_grid`, all from the same trajectories
/// (each row reads L_N off a prefix of one long run).
pub fn rate_probe(cfg: &SimConfig, y: f64, n_grid: &[usize]) -> Result<RateProbe> {
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[0] >= w[1]) || n_grid[0] == 0 {
        return Err(Error::InvalidConfig("N grid must be positive and strictly increasing".into()));
    }
    if cfg.n_trajectories < 1000 {
        return Err(Error::InvalidConfig(format!("need at least 1000 trajectories, got {}", cfg.n_trajectories)));
    }
    let params = ThetaParams::new(cfg.m)?;
    let mut run_cfg = cfg.clone();
    run_cfg.n_digits = *n_grid.last().unwrap();
    let maxima = simulate::run(&run_cfg, |_, t| n_grid.iter().map(|&n| t.max_upto(n)).collect::<Vec<_>>())?;
    let f = frechet_cdf(y);
    let mut rows = Vec::with_capacity(n_grid.len());
    for (k, &n) in n_grid.iter().enumerate() {
        let col: Vec<u64> = maxima.iter().map(|r| r[k]).collect();
        let ecdf = scaled_max_law(&col, n, &params)?;
        let e = ecdf.eval(y);
        rows.push(RateRow { n, empirical: e, frechet: f, deviation: (e - f).abs(), stderr: ecdf.stderr(y) });
    }
    let (first, last) = (&rows[0], &rows[rows.len() - 1]);
    let pooled = (first.stderr.powi(2) + last.stderr.powi(2)).sqrt();
    let decay_ok = last.deviation <= first.deviation + 2.0 * pooled;
    Ok(RateProbe { y, rows, decay_ok })
}

/// A condition on a single digit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "digit", rename_all = "kebab-case")]
pub enum DigitEvent {
    Equals(u64),
    AtLeast(u64),
    AtMost(u64),
}

impl DigitEvent {
    pub fn holds(self, a: u64) -> bool {
        match self {
            DigitEvent::Equals(k) => a == k,
            DigitEvent::AtLeast(k) => a >= k,
            DigitEvent::AtMost(k) => a <= k,
        }
    }

    pub fn describe(self, position: &str) -> String {
        match self {
            DigitEvent::Equals(k) => format!("a_{position} = {k}"),
            DigitEvent::AtLeast(k) => format!("a_{position} >= {k}"),
            DigitEvent::AtMost(k) => format!("a_{position} <= {k}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixingEstimate {
    pub gap: usize,
    pub p_a: f64,
    pub p_b: f64,
    pub p_ab: f64,
    /// |P(A∩B)/(P(A)P(B)) − 1|.
    pub psi_hat: f64,
    pub std_err: f64,
    pub event_a: String,
    pub event_b: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixingEnvelope {
    pub q_theta: f64,
    /// K fitted so that K·qⁿ passes through the first gap.
    pub k: f64,
    /// psi_hat(n) ≤ K·qⁿ + 3σ(n) at every gap.
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixingProbe {
    pub estimates: Vec<MixingEstimate>,
    /// Least-squares slope of log psi_hat against n over gaps with psi_hat > 0.
    pub slope: Option<f64>,
    pub envelope: MixingEnvelope,
}

const MIXING_CHUNK: u64 = 4096;

/// Estimates ψ(n) for A = {a₁ ∈ event_a}, B = {a₁₊ₙ ∈ event_b}.
///
/// `cfg.n_digits` is ignored; each trajectory runs to 1 + max(gaps).
pub fn mixing_probe(cfg: &SimConfig, gaps: &[usize], event_a: DigitEvent, event_b: DigitEvent) -> Result<MixingProbe> {
    if gaps.is_empty() || gaps.contains(&0) {
        return Err(Error::InvalidConfig("gaps must be a nonempty list of positive integers".into()));
    }
    let mut run_cfg = cfg.clone();
    run_cfg.n_digits = 1 + *gaps.iter().max().unwrap();
    run_cfg.validate()?;
    let params = ThetaParams::new(cfg.m)?;
    let total = run_cfg.n_trajectories;
    let chunks = total.div_ceil(MIXING_CHUNK);
    // Per chunk: (count A, counts B per gap, counts A∩B per gap).
    let parts = try_map_indexed(chunks, run_cfg.execution, |c| -> Result<(u64, Vec<u64>, Vec<u64>)> {
        let mut n_a = 0u64;
        let mut n_b = vec![0u64; gaps.len()];
        let mut n_ab = vec![0u64; gaps.len()];
        let end = ((c + 1) * MIXING_CHUNK).min(total);
        for i in c * MIXING_CHUNK..end {
            let t = simulate::generate(&run_cfg, &params, i)?;
            let a = event_a.holds(t.digits[0]);
            n_a += a as u64;
            for (g, &gap) in gaps.iter().enumerate() {
                let b = event_b.holds(t.digits[gap]);
                n_b[g] += b as u64;
                n_ab[g] += (a && b) as u64;
            }
        }
        Ok((n_a, n_b, n_ab))
    })?;
    let mut n_a = 0u64;
    let mut n_b = vec![0u64; gaps.len()];
    let mut n_ab = vec![0u64; gaps.len()];
    for (a, b, ab) in parts {
        n_a += a;
        for g in 0..gaps.len() {
            n_b[g] += b[g];
            n_ab[g] += ab[g];
        }
    }
    let mf = total as f64;
    let mut estimates = Vec::with_capacity(gaps.len());
    for (g, &gap) in gaps.iter().enumerate() {
        if n_a == 0 || n_b[g] == 0 {
            return Err(Error::DegenerateEvent(format!(
                "zero frequency for {} or {} at gap {gap}",
                event_a.describe("1"),
                event_b.describe(&format!("{}", 1 + gap))
            )));
        }
        let p_a = n_a as f64 / mf;
        let p_b = n_b[g] as f64 / mf;
        let p_ab = n_ab[g] as f64 / mf;
        let r = p_ab / (p_a * p_b);
        estimates.push(MixingEstimate {
            gap,
            p_a,
            p_b,
            p_ab,
            psi_hat: (r - 1.0).abs(),
            std_err: ratio_stderr(p_a, p_b, p_ab, mf),
            event_a: event_a.describe("1"),
            event_b: event_b.describe(&format!("{{1+{gap}}}")),
        });
    }
    let slope = log_slope(&estimates);
    let q = measure::mixing_rate(cfg.m, 1e-9)?.q_theta;
    let first = &estimates[0];
    let k = first.psi_hat / q.powi(first.gap as i32);
    let holds = estimates
        .iter()
        .all(|e| e.psi_hat <= k * q.powi(e.gap as i32) + 3.0 * e.std_err);
    Ok(MixingProbe { estimates, slope, envelope: MixingEnvelope { q_theta: q, k, holds } })
}

/// Delta-method standard error of r = p_ab/(p_a·p_b) over the four
/// multinomial cells, floored at 1/M.
fn ratio_stderr(p_a: f64, p_b: f64, p_ab: f64, m: f64) -> f64 {
    let r = p_ab / (p_a * p_b);
    let p10 = (p_a - p_ab).max(0.0);
    let p01 = (p_b - p_ab).max(0.0);
    // r·∂log r/∂p11, written without dividing by p_ab.
    let g11 = 1.0 / (p_a * p_b) - r / p_a - r / p_b;
    let var = (g11 * g11 * p_ab + r * r * (p10 / (p_a * p_a) + p01 / (p_b * p_b)) - r * r) / m;
    var.max(0.0).sqrt().max(1.0 / m)
}

fn log_slope(estimates: &[MixingEstimate]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = estimates
        .iter()
        .filter(|e| e.psi_hat > 0.0)
        .map(|e| (e.gap as f64, e.psi_hat.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
