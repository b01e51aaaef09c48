//! Seeded Monte Carlo trajectories of the θ-expansion.
//!
//! Two engines produce the digits:
//!
//! * `Exact` draws a dyadic start x₀ = θK/2ᴮ (γ-distributed by rejection, or
//!   uniform) and expands it in exact arithmetic. Cost grows like N² because
//!   x₀ needs Θ(N) bits.
//! * `Chain` samples the same digit process directly. Conditioned on the
//!   digits so far, the next digit satisfies P(a ≥ k) = (m + σ)/(k + σ) where
//!   σ = mθ·qₙ₋₁/qₙ evolves as σ ← m/(a + σ). A uniform start is σ₀ = 0 and a
//!   γ-distributed start draws σ₀ from the density 1/((m + σ)·L) on [0, 1].
//!   Each digit costs O(1).
//!
//! Both engines give the same law for every finite digit block; the tests
//! cross-check them against each other and against exact cylinder measures.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansion::{RationalOrbit, ThetaParams};
use crate::measure::tail_p_f64;
use crate::parallel::{try_map_indexed, Execution};
use crate::quadfield::{QuadRat, Rational};

/// Runs longer than this use the chain under [`Engine::Auto`].
pub const AUTO_EXACT_MAX_DIGITS: usize = 256;

/// Proposals allowed per stationary sample before giving up.
pub const MAX_PROPOSALS: u32 = 10_000;

/// Restarts allowed when an exact start expands to fewer than N digits.
pub const MAX_RESTARTS: u32 = 100;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Exact,
    Chain,
    #[default]
    Auto,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Start {
    /// x₀ ~ γ, the invariant measure.
    #[default]
    Stationary,
    /// x₀ ~ λ, uniform on (0, θ).
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub m: u64,
    pub n_digits: usize,
    pub n_trajectories: u64,
    pub seed: u64,
    pub bits_per_digit: u32,
    pub engine: Engine,
    pub start: Start,
    pub execution: Execution,
}

impl SimConfig {
    pub fn new(m: u64, n_digits: usize, n_trajectories: u64, seed: u64) -> Self {
        SimConfig {
            m,
            n_digits,
            n_trajectories,
            seed,
            bits_per_digit: 32,
            engine: Engine::Auto,
            start: Start::Stationary,
            execution: Execution::Parallel,
        }
    }

    pub fn with_engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self
    }

    pub fn with_start(mut self, start: Start) -> Self {
        self.start = start;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.m == 0 {
            return bad("m must be a positive integer".into());
        }
        if self.n_digits == 0 {
            return bad("the number of digits must be at least 1".into());
        }
        if self.n_trajectories == 0 {
            return bad("the number of trajectories must be at least 1".into());
        }
        if self.bits_per_digit < 8 {
            return bad(format!("bits per digit must be at least 8, got {}", self.bits_per_digit));
        }
        Ok(())
    }

    /// The engine actually used once `Auto` is resolved.
    pub fn resolved_engine(&self) -> Engine {
        match self.engine {
            Engine::Auto if self.n_digits <= AUTO_EXACT_MAX_DIGITS => Engine::Exact,
            Engine::Auto => Engine::Chain,
            e => e,
        }
    }

    /// Bits of the dyadic start used by the exact engine.
    pub fn start_bits(&self) -> u64 {
        (self.n_digits as u64 * self.bits_per_digit as u64).max(64)
    }
}

/// The RNG of trajectory `index`: one ChaCha stream per index under a
/// seed-wide key, so streams never overlap across indices or seeds.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform integer in [0, 2^bits).
fn random_bits<R: RngCore + ?Sized>(rng: &mut R, bits: u64) -> BigUint {
    let words = bits.div_ceil(64) as usize;
    let mut digits: Vec<u64> = (0..words).map(|_| rng.next_u64()).collect();
    let spare = words as u64 * 64 - bits;
    if spare > 0 {
        if let Some(top) = digits.last_mut() {
            *top >>= spare;
        }
    }
    BigUint::from_slice(&digits.iter().flat_map(|w| [*w as u32, (*w >> 32) as u32]).collect::<Vec<_>>())
}

/// Uniform integer in [1, 2^bits − 1].
fn random_interior<R: RngCore + ?Sized>(rng: &mut R, bits: u64) -> BigUint {
    let top = (BigUint::one() << bits) - 1u32;
    loop {
        let k = random_bits(rng, bits);
        if !k.is_zero() && k != top {
            return k;
        }
    }
}

/// A dyadic start point x = θ·K/2ᴮ.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DyadicStart {
    pub numer: BigUint,
    pub bits: u64,
    /// Proposals drawn, including the accepted one.
    pub proposals: u32,
}

impl DyadicStart {
    pub fn to_quad(&self, params: &ThetaParams) -> QuadRat {
        let r = Rational::new(
            BigInt::from_biguint(Sign::Plus, self.numer.clone()),
            BigInt::one() << self.bits,
        );
        params.theta().scale(&r)
    }

    pub fn orbit(&self, m: u64) -> RationalOrbit {
        RationalOrbit::new(m, self.numer.clone(), BigUint::one() << self.bits)
    }

    pub fn to_f64(&self, params: &ThetaParams) -> f64 {
        self.to_quad(params).to_f64()
    }
}

/// γ-distributed dyadic start by rejection from the uniform proposal.
///
/// x = θK/2ᴮ is accepted when J/2ᴮ·(1 + θx) < 1 for an independent uniform
/// J, i.e. J·(m·2ᴮ + K) < m·2²ᴮ. Acceptance probability is m·log(1 + 1/m).
pub fn sample_stationary_counted<R: RngCore + ?Sized>(
    rng: &mut R,
    params: &ThetaParams,
    bits: u64,
) -> Result<DyadicStart> {
    if bits < 64 {
        return Err(Error::InvalidConfig(format!("sampler needs at least 64 bits, got {bits}")));
    }
    let m = BigUint::from(params.m());
    let scale = BigUint::one() << bits;
    let bound = &m << (2 * bits);
    let base = &m * &scale;
    for proposals in 1..=MAX_PROPOSALS {
        let k = random_interior(rng, bits);
        let j = random_bits(rng, bits);
        if j * (&base + &k) < bound {
            return Ok(DyadicStart { numer: k, bits, proposals });
        }
    }
    Err(Error::RejectionExhausted(MAX_PROPOSALS))
}

pub fn sample_stationary<R: RngCore + ?Sized>(rng: &mut R, params: &ThetaParams, bits: u64) -> Result<QuadRat> {
    Ok(sample_stationary_counted(rng, params, bits)?.to_quad(params))
}

/// λ-distributed dyadic start.
pub fn sample_uniform<R: RngCore + ?Sized>(rng: &mut R, bits: u64) -> DyadicStart {
    DyadicStart { numer: random_interior(rng, bits), bits, proposals: 1 }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trajectory {
    pub digits: Vec<u64>,
    /// Lₙ = max(a₁, …, aₙ).
    pub max_series: Vec<u64>,
    /// Random bits consumed to produce the trajectory.
    pub source_bits: u64,
}

impl Trajectory {
    pub fn from_digits(digits: Vec<u64>, source_bits: u64) -> Self {
        let max_series = digits
            .iter()
            .scan(0u64, |mx, &d| {
                *mx = (*mx).max(d);
                Some(*mx)
            })
            .collect();
        Trajectory { digits, max_series, source_bits }
    }

    pub fn len(&self) -> usize {
        self.digits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }

    /// L_N for the whole trajectory.
    pub fn max(&self) -> u64 {
        self.max_series.last().copied().unwrap_or(0)
    }

    /// Lₙ for 1 ≤ n ≤ len.
    pub fn max_upto(&self, n: usize) -> u64 {
        self.max_series[n - 1]
    }
}

/// Expands `x0 ∈ (0, θ)` to exactly `n` digits.
pub fn simulate_trajectory(x0: &QuadRat, params: &ThetaParams, n: usize) -> Result<Trajectory> {
    let seq = crate::expansion::expand(x0, params, n)?;
    if seq.digits.len() < n {
        return Err(Error::EarlyTermination { produced: seq.digits.len(), requested: n });
    }
    let bits = x0.theta_ratio().map(|r| r.denom().bits()).unwrap_or(0);
    Ok(Trajectory::from_digits(seq.digits, bits))
}

fn expand_start(start: &DyadicStart, m: u64, n: usize) -> Result<Vec<u64>> {
    let mut orbit = start.orbit(m);
    let mut digits = Vec::with_capacity(n);
    while digits.len() < n {
        match orbit.next_digit() {
            Some(d) => digits.push(d?),
            None => return Err(Error::EarlyTermination { produced: digits.len(), requested: n }),
        }
    }
    Ok(digits)
}

/// Digit process driven by the dual state σ ∈ [0, 1].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DigitChain {
    m: f64,
    sigma: f64,
}

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

/// Uniform on (0, 1]; never 0, so 1/U stays finite.
fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * TWO_POW_M53
}

impl DigitChain {
    /// Start equivalent to x₀ ~ λ.
    pub fn uniform(m: u64) -> Self {
        DigitChain { m: m as f64, sigma: 0.0 }
    }

    /// Start equivalent to x₀ ~ γ.
    pub fn stationary<R: RngCore + ?Sized>(m: u64, rng: &mut R) -> Self {
        let mf = m as f64;
        let v = (rng.next_u64() >> 11) as f64 * TWO_POW_M53;
        let sigma = (mf * (v * (1.0 / mf).ln_1p()).exp_m1()).clamp(0.0, 1.0);
        DigitChain { m: mf, sigma }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Draws aₙ₊₁ from P(a ≥ k) = (m + σ)/(k + σ) and advances σ.
    pub fn next_digit<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> u64 {
        let u = open_unit(rng);
        let a = ((self.m + self.sigma) / u - self.sigma).floor().max(self.m);
        // a ≤ (m + 1)·2⁵³; the cast saturates only for m beyond 2¹⁰.
        let digit = a as u64;
        self.sigma = self.m / (a + self.sigma);
        digit
    }
}

/// Trajectory number `index` of the configured ensemble.
pub fn generate(cfg: &SimConfig, params: &ThetaParams, index: u64) -> Result<Trajectory> {
    let mut rng = trajectory_rng(cfg.seed, index);
    let n = cfg.n_digits;
    match cfg.resolved_engine() {
        Engine::Chain => {
            let mut chain = match cfg.start {
                Start::Stationary => DigitChain::stationary(cfg.m, &mut rng),
                Start::Uniform => DigitChain::uniform(cfg.m),
            };
            let digits = (0..n).map(|_| chain.next_digit(&mut rng)).collect();
            let start_bits = if cfg.start == Start::Stationary { 53 } else { 0 };
            Ok(Trajectory::from_digits(digits, start_bits + 64 * n as u64))
        }
        _ => {
            let bits = cfg.start_bits();
            let mut used = 0u64;
            for _ in 0..MAX_RESTARTS {
                let start = match cfg.start {
                    Start::Stationary => sample_stationary_counted(&mut rng, params, bits)?,
                    Start::Uniform => sample_uniform(&mut rng, bits),
                };
                let per_proposal = if cfg.start == Start::Stationary { 2 * bits } else { bits };
                used += per_proposal * start.proposals as u64;
                match expand_start(&start, cfg.m, n) {
                    Ok(digits) => return Ok(Trajectory::from_digits(digits, used)),
                    Err(Error::EarlyTermination { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::EarlyTermination { produced: 0, requested: n })
        }
    }
}

/// Generates every trajectory and maps it through `f`, in index order.
/// Trajectories are dropped as soon as `f` returns.
pub fn run<T, F>(cfg: &SimConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, Trajectory) -> T + Sync + Send,
{
    cfg.validate()?;
    let params = ThetaParams::new(cfg.m)?;
    try_map_indexed(cfg.n_trajectories, cfg.execution, |i| {
        generate(cfg, &params, i).map(|t| f(i, t))
    })
}

/// φ in "aₙ > φ(n)".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum ThresholdFn {
    /// n·log n
    NLogN,
    /// n·(log n)^(1+ε)
    NLogNPower(f64),
    /// c·n
    Linear(f64),
    /// c for every n
    Const(f64),
    /// φ(1), φ(2), … read from a table
    Custom(Vec<f64>),
}

impl ThresholdFn {
    /// Parses `nlogn`, `nlogn-power:ε`, `linear:c`, `const:c` or
    /// `custom:v1,v2,…`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unknown threshold preset {s:?}"));
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad());
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a)),
            None => (s.trim(), None),
        };
        match (name, arg) {
            ("nlogn", None) => Ok(ThresholdFn::NLogN),
            ("nlogn-power", Some(a)) => Ok(ThresholdFn::NLogNPower(num(a)?)),
            ("linear", Some(a)) => Ok(ThresholdFn::Linear(num(a)?)),
            ("const", Some(a)) => Ok(ThresholdFn::Const(num(a)?)),
            ("custom", Some(a)) => {
                let vals = a.split(',').map(num).collect::<Result<Vec<_>>>()?;
                if vals.is_empty() {
                    return Err(bad());
                }
                Ok(ThresholdFn::Custom(vals))
            }
            _ => Err(bad()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            ThresholdFn::NLogN => "nlogn".into(),
            ThresholdFn::NLogNPower(e) => format!("nlogn-power:{e}"),
            ThresholdFn::Linear(c) => format!("linear:{c}"),
            ThresholdFn::Const(c) => format!("const:{c}"),
            ThresholdFn::Custom(v) => format!("custom[{}]", v.len()),
        }
    }

    /// φ(n) for n ≥ 1; `None` past the end of a custom table.
    pub fn eval(&self, n: u64) -> Option<f64> {
        let x = n as f64;
        match self {
            ThresholdFn::NLogN => Some(x * x.ln()),
            ThresholdFn::NLogNPower(e) => Some(x * x.ln().powf(1.0 + e)),
            ThresholdFn::Linear(c) => Some(c * x),
            ThresholdFn::Const(c) => Some(*c),
            ThresholdFn::Custom(v) => v.get((n as usize).checked_sub(1)?).copied(),
        }
    }

    /// Whether Σ 1/φ(n) diverges, when known.
    pub fn series_diverges(&self) -> Option<bool> {
        match self {
            ThresholdFn::NLogN | ThresholdFn::Linear(_) | ThresholdFn::Const(_) => Some(true),
            ThresholdFn::NLogNPower(e) => Some(*e <= 0.0),
            ThresholdFn::Custom(_) => None,
        }
    }
}

/// Smallest digit that counts as an exceedance of φ(n), i.e. max(m, ⌊φ⌋ + 1);
/// `None` when no digit can exceed φ(n).
pub fn exceedance_bound(phi: f64, m: u64) -> Option<u64> {
    if phi.is_nan() {
        return None;
    }
    let floor = phi.floor();
    if floor + 1.0 >= u64::MAX as f64 {
        return None;
    }
    if floor + 1.0 <= m as f64 {
        return Some(m);
    }
    Some(floor as u64 + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExceedanceCount {
    pub n: usize,
    /// A_N = #{n ≤ N : aₙ > φ(n)}.
    pub a_n: u64,
    /// Σ_{n≤N} p(max(m, ⌊φ(n)⌋ + 1)).
    pub expected: f64,
}

/// Precomputed bounds and expected counts for one threshold and horizon.
#[derive(Clone, Debug)]
pub struct ExceedanceCounter {
    bounds: Vec<Option<u64>>,
    /// expected_prefix[k] = expected count over the first k digits.
    expected_prefix: Vec<f64>,
}

impl ExceedanceCounter {
    pub fn new(phi: &ThresholdFn, params: &ThetaParams, n: usize) -> Result<Self> {
        let mut bounds = Vec::with_capacity(n);
        let mut expected_prefix = Vec::with_capacity(n + 1);
        expected_prefix.push(0.0);
        let mut acc = 0.0f64;
        for i in 1..=n as u64 {
            let v = phi.eval(i).ok_or_else(|| {
                Error::InvalidConfig(format!("threshold {} is undefined at n = {i}", phi.name()))
            })?;
            let b = exceedance_bound(v, params.m());
            acc += b.map_or(0.0, |w| tail_p_f64(w, params));
            bounds.push(b);
            expected_prefix.push(acc);
        }
        Ok(ExceedanceCounter { bounds, expected_prefix })
    }

    pub fn horizon(&self) -> usize {
        self.bounds.len()
    }

    pub fn expected_upto(&self, n: usize) -> f64 {
        self.expected_prefix[n]
    }

    /// Counts over the first `n` digits.
    pub fn count_prefix(&self, digits: &[u64], n: usize) -> Result<ExceedanceCount> {
        if n > digits.len() || n > self.bounds.len() {
            return Err(Error::InsufficientDigits { requested: n, available: digits.len().min(self.bounds.len()) });
        }
        let a_n = digits[..n]
            .iter()
            .zip(&self.bounds)
            .filter(|(d, b)| b.is_some_and(|b| **d >= b))
            .count() as u64;
        Ok(ExceedanceCount { n, a_n, expected: self.expected_prefix[n] })
    }

    pub fn count(&self, digits: &[u64]) -> Result<ExceedanceCount> {
        self.count_prefix(digits, digits.len())
    }
}

pub fn count_exceedances(t: &Trajectory, phi: &ThresholdFn, params: &ThetaParams) -> Result<ExceedanceCount> {
    ExceedanceCounter::new(phi, params, t.len())?.count(&t.digits)
}

/// L_N·log log N / N for N = 3, …, len, with dyadic block minima.
#[derive(Clone, Debug, PartialEq)]
pub struct LilSeries {
    /// values[i] belongs to N = i + 3.
    pub values: Vec<f64>,
    /// Minimum over each block [2ᵏ, 2ᵏ⁺¹) ∩ [3, len], with the block start.
    pub dyadic_minima: Vec<(u64, f64)>,
}

impl LilSeries {
    pub fn at(&self, n: u64) -> Option<f64> {
        self.values.get((n as usize).checked_sub(3)?).copied()
    }

    /// min over lo ≤ N ≤ hi of the statistic.
    pub fn window_min(&self, lo: u64, hi: u64) -> Option<f64> {
        let lo = lo.max(3) as usize - 3;
        let hi = (hi as usize).checked_sub(3)?.min(self.values.len().checked_sub(1)?);
        if lo > hi {
            return None;
        }
        self.values[lo..=hi].iter().copied().reduce(f64::min)
    }
}

pub fn lil_statistic(t: &Trajectory) -> Result<LilSeries> {
    lil_from_maxima(&t.max_series)
}

pub fn lil_from_maxima(max_series: &[u64]) -> Result<LilSeries> {
    if max_series.len() < 3 {
        return Err(Error::InvalidConfig("the iterated-logarithm statistic needs N ≥ 3".into()));
    }
    let values: Vec<f64> = (3..=max_series.len())
        .map(|n| {
            let nf = n as f64;
            max_series[n - 1] as f64 * nf.ln().ln() / nf
        })
        .collect();
    let mut dyadic_minima = Vec::new();
    let mut start = 2u64;
    while (start as usize) <= max_series.len() {
        let from = start.max(3);
        let to = (2 * start - 1).min(max_series.len() as u64);
        let min = values[(from - 3) as usize..=(to - 3) as usize].iter().copied().fold(f64::INFINITY, f64::min);
        dyadic_minima.push((start, min));
        start *= 2;
    }
    Ok(LilSeries { values, dyadic_minima })
}

/// The almost-sure liminf 1/log(1 + 1/m).
pub fn lil_constant(params: &ThetaParams) -> f64 {
    1.0 / params.log_norm_f64()
}
