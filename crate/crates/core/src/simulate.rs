//! Seeded simulation of the jump-or-stay chain.
//!
//! Between jumps the state is frozen, so a path is a sequence of holding
//! runs. The regenerative sampler draws one run at a time (`W ~ ν` and a
//! geometric length) and costs `O(n/θ)` per path; the stepwise sampler flips
//! the stay coin at every step and serves as the oracle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::MAX_HORIZON;
use crate::chain::{BuiltinChain, ChainSpec};
use crate::error::{Error, Result};
use crate::rng::{Purpose, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Stepwise,
    Regenerative,
}

impl Mode {
    /// Regenerative from `n = 10⁴` on.
    pub fn default_for(n: u64) -> Self {
        if n >= 10_000 {
            Mode::Regenerative
        } else {
            Mode::Stepwise
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Stepwise => "stepwise",
            Mode::Regenerative => "regenerative",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stepwise" => Ok(Mode::Stepwise),
            "regenerative" | "regen" => Ok(Mode::Regenerative),
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }
}

/// One regeneration: the jump target and how long the chain stays there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegenBlock {
    pub delta_tau: u64,
    pub w: f64,
}

impl RegenBlock {
    /// `Y = Δτ · g(w)`.
    pub fn y(&self, spec: &ChainSpec) -> f64 {
        self.delta_tau as f64 * spec.g(self.w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub s_n: f64,
    pub w0: f64,
    pub tau0: u64,
    pub n: u64,
    pub mode: Mode,
    /// Number of jumps at times `≤ n`.
    pub blocks: u64,
    /// `T_{m_n}`: the unclipped block sums of those jumps.
    pub t_blocks: f64,
}

/// Rejection sampler for `ν` with proposal `π` and acceptance telemetry.
#[derive(Debug, Clone, Default)]
pub struct NuSampler {
    pub proposals: u64,
    pub accepted: u64,
}

/// Aborts if acceptance falls below this after [`NU_WARMUP`] proposals.
pub const NU_MIN_ACCEPTANCE: f64 = 1e-3;
const NU_WARMUP: u64 = 10_000;

impl NuSampler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            return f64::NAN;
        }
        self.accepted as f64 / self.proposals as f64
    }

    pub fn draw(&mut self, spec: &ChainSpec, rng: &mut RngStream) -> Result<f64> {
        if spec.is_discrete() {
            return Ok(rng.sign());
        }
        let envelope = spec.sup_one_minus_p();
        loop {
            let w = sample_pi(spec, rng);
            self.proposals += 1;
            if rng.uniform_open() * envelope < spec.one_minus_p(w) {
                self.accepted += 1;
                return Ok(w);
            }
            if self.proposals >= NU_WARMUP && self.acceptance_rate() < NU_MIN_ACCEPTANCE {
                return Err(Error::Sampler(format!(
                    "ν rejection acceptance {:.2e} after {} proposals",
                    self.acceptance_rate(),
                    self.proposals
                )));
            }
        }
    }
}

/// `W ~ π` by inversion of the Pareto-type marginal.
pub fn sample_pi(spec: &ChainSpec, rng: &mut RngStream) -> f64 {
    let sign = rng.sign();
    match spec.variant() {
        BuiltinChain::Example1 => sign / rng.uniform_open(),
        BuiltinChain::StableExample { alpha } => sign * rng.uniform_open().powf(-1.0 / (alpha - 1.0)),
        BuiltinChain::ConstantP { .. } => sign,
    }
}

pub fn sample_nu(spec: &ChainSpec, rng: &mut RngStream) -> Result<f64> {
    NuSampler::new().draw(spec, rng)
}

/// Number of failures before the first jump, `P[K ≥ k] = p^k`, capped at `cap`.
#[inline]
fn geometric_failures(log_p: f64, rng: &mut RngStream, cap: u64) -> u64 {
    if log_p == 0.0 {
        return cap;
    }
    let k = (rng.uniform_open().ln() / log_p).floor();
    if k >= cap as f64 {
        cap
    } else {
        k as u64
    }
}

const BLOCK_CAP: u64 = 1 << 62;

/// `τ_0` given `W_0 = w0`: `P[τ_0 ≥ k] = p(w0)^k`.
pub fn sample_tau0(spec: &ChainSpec, w0: f64, rng: &mut RngStream) -> u64 {
    geometric_failures(spec.log_p(w0), rng, BLOCK_CAP)
}

/// A fresh regeneration: `w ~ ν`, `Δτ = 1 + Geometric`.
pub fn sample_block(spec: &ChainSpec, nu: &mut NuSampler, rng: &mut RngStream) -> Result<RegenBlock> {
    let w = nu.draw(spec, rng)?;
    let delta_tau = 1 + geometric_failures(spec.log_p(w), rng, BLOCK_CAP - 1);
    Ok(RegenBlock { delta_tau, w })
}

/// `T_m = Y_1 + … + Y_m`.
pub fn simulate_tm(spec: &ChainSpec, m: u64, rng: &mut RngStream) -> Result<f64> {
    if m == 0 {
        return Err(Error::Parameter("m must be at least 1".into()));
    }
    let mut nu = NuSampler::new();
    let mut t = 0.0;
    for _ in 0..m {
        t += sample_block(spec, &mut nu, rng)?.y(spec);
    }
    Ok(t)
}

fn check_horizon(n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::Parameter("n must be at least 1".into()));
    }
    if n > MAX_HORIZON {
        return Err(Error::Horizon(n));
    }
    Ok(())
}

pub fn simulate_sn(spec: &ChainSpec, n: u64, mode: Mode, rng: &mut RngStream) -> Result<PathResult> {
    check_horizon(n)?;
    match mode {
        Mode::Regenerative => regenerative(spec, n, rng),
        Mode::Stepwise => stepwise(spec, n, rng),
    }
}

fn regenerative(spec: &ChainSpec, n: u64, rng: &mut RngStream) -> Result<PathResult> {
    let w0 = sample_pi(spec, rng);
    let tau0 = sample_tau0(spec, w0, rng);
    let mut s = tau0.min(n) as f64 * spec.g(w0);
    let mut t = tau0;
    let mut nu = NuSampler::new();
    let mut blocks = 0;
    let mut t_blocks = 0.0;
    while t < n {
        let b = sample_block(spec, &mut nu, rng)?;
        let gw = spec.g(b.w);
        s += (n - t).min(b.delta_tau) as f64 * gw;
        t_blocks += b.delta_tau as f64 * gw;
        t = t.saturating_add(b.delta_tau);
        blocks += 1;
    }
    Ok(PathResult { s_n: s, w0, tau0, n, mode: Mode::Regenerative, blocks, t_blocks })
}

fn stepwise(spec: &ChainSpec, n: u64, rng: &mut RngStream) -> Result<PathResult> {
    let w0 = sample_pi(spec, rng);
    let mut w = w0;
    let mut p = spec.p(w);
    let mut nu = NuSampler::new();
    let mut s = 0.0;
    let mut tau0 = None;
    let mut blocks = 0;
    let mut t_blocks = 0.0;
    let mut run = 0u64;
    for k in 1..=n {
        if rng.uniform_open() >= p {
            if tau0.is_none() {
                tau0 = Some(k - 1);
            } else {
                t_blocks += run as f64 * spec.g(w);
            }
            w = nu.draw(spec, rng)?;
            p = spec.p(w);
            blocks += 1;
            run = 0;
        }
        run += 1;
        s += spec.g(w);
    }
    // complete the last block past n so that `t_blocks` matches the regenerative definition
    let tau0 = match tau0 {
        Some(t) => {
            let rest = geometric_failures(spec.log_p(w), rng, BLOCK_CAP - run);
            t_blocks += (run + rest) as f64 * spec.g(w);
            t
        }
        None => n + sample_tau0(spec, w0, rng),
    };
    Ok(PathResult { s_n: s, w0, tau0, n, mode: Mode::Stepwise, blocks, t_blocks })
}

/// A path `W_0, …, W_n` as holding runs `(state, length)`; lengths sum to `n + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPath {
    pub runs: Vec<(f64, u64)>,
}

impl RunPath {
    pub fn n(&self) -> u64 {
        self.runs.iter().map(|r| r.1).sum::<u64>() - 1
    }

    pub fn from_states(states: &[f64]) -> Self {
        let mut runs: Vec<(f64, u64)> = Vec::new();
        for &w in states {
            match runs.last_mut() {
                Some((v, len)) if *v == w => *len += 1,
                _ => runs.push((w, 1)),
            }
        }
        Self { runs }
    }

    pub fn to_states(&self) -> Vec<f64> {
        self.runs.iter().flat_map(|&(w, len)| std::iter::repeat_n(w, len as usize)).collect()
    }

    /// `S_n = Σ_{k=1}^n g(W_k)`.
    pub fn s_n(&self, spec: &ChainSpec) -> f64 {
        let mut s = -spec.g(self.runs[0].0);
        for &(w, len) in &self.runs {
            s += len as f64 * spec.g(w);
        }
        s
    }
}

/// Regenerative path as runs. Consecutive blocks on the same state (possible
/// for a discrete `ν`) are kept as separate runs.
pub fn simulate_runs(spec: &ChainSpec, n: u64, rng: &mut RngStream) -> Result<RunPath> {
    check_horizon(n)?;
    let w0 = sample_pi(spec, rng);
    let tau0 = sample_tau0(spec, w0, rng).min(n);
    let mut runs = vec![(w0, tau0 + 1)];
    let mut t = tau0;
    let mut nu = NuSampler::new();
    while t < n {
        let b = sample_block(spec, &mut nu, rng)?;
        let len = b.delta_tau.min(n - t);
        runs.push((b.w, len));
        t += len;
    }
    Ok(RunPath { runs })
}

/// Stepwise path `W_0, …, W_n` as a dense vector.
pub fn simulate_states(spec: &ChainSpec, n: u64, rng: &mut RngStream) -> Result<Vec<f64>> {
    check_horizon(n)?;
    let mut nu = NuSampler::new();
    let mut w = sample_pi(spec, rng);
    let mut out = Vec::with_capacity(n as usize + 1);
    out.push(w);
    for _ in 0..n {
        if rng.uniform_open() >= spec.p(w) {
            w = nu.draw(spec, rng)?;
        }
        out.push(w);
    }
    Ok(out)
}

/// Threads to use: `REVCLT_THREADS` if set, else rayon's default.
pub fn thread_count() -> usize {
    std::env::var("REVCLT_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

/// Run `f` for replicates `0..reps` in parallel, each on its own stream
/// `(seed, purpose, tag · 2³² + replicate)`; results come back in replicate order.
pub fn run_replicates<T, F>(reps: u64, seed: u64, purpose: Purpose, tag: u32, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, &mut RngStream) -> Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    if reps >= 1 << 32 {
        return Err(Error::Parameter(format!("{reps} replicates exceed the stream index range")));
    }
    pool.install(|| {
        (0..reps)
            .into_par_iter()
            .map(|i| {
                let mut rng = RngStream::for_purpose(seed, purpose, ((tag as u64) << 32) | i);
                f(i, &mut rng)
            })
            .collect()
    })
}
