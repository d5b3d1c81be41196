//! Martingale approximation of `S_n` along simulated paths.
//!
//! With `h = V̄_n g`, the increments `D_{n,k} = h(W_k) - Qh(W_{k-1})` are
//! stationary martingale differences, `M_{n,k}` their partial sums and
//! `R_{n,k} = S_k - M_{n,k}` the remainder. Summing by parts,
//!
//! ```text
//! R_{n,k} = g(W_k) - g(W_0) - h(W_k) + h(W_0) + Σ_{i<k} u(W_i),   u = g - h + Qh,
//! ```
//!
//! which is constant plus linear in `k` along a holding run, so path
//! functionals only need the run endpoints.

use crate::algebra::{Analyzer, PChainFunction, MAX_HORIZON};
use crate::chain::{ChainSpec, Measure};
use crate::error::{Error, Result};
use crate::quadrature::Tolerance;
use crate::rng::RngStream;
use crate::simulate::{sample_pi, NuSampler, RunPath};
use crate::sums::{geometric_sum, ramp_geometric_sum};

#[derive(Debug, Clone)]
enum Representation {
    /// Odd `g`, symmetric `p` and `ν`: `h = g · S_n(p)` and `Qh = p h`.
    Odd,
    /// Explicit coefficients of `h` and `Qh`.
    Coefficients { h: PChainFunction, qh: PChainFunction },
}

#[derive(Debug, Clone)]
pub struct MartingaleKernel {
    spec: ChainSpec,
    n: u64,
    repr: Representation,
    sigma_sq: f64,
    d_norm_sq: f64,
    /// `∫ h² dν`
    nu_h2: f64,
    /// `∫ h dν`
    nu_h: f64,
}

pub fn build_kernel(spec: &ChainSpec, n: u64) -> Result<MartingaleKernel> {
    if n == 0 {
        return Err(Error::Parameter("n must be at least 1".into()));
    }
    if n > MAX_HORIZON {
        return Err(Error::Horizon(n));
    }
    let mut an = Analyzer::new(spec);
    let sigma_sq = an.sigma_sq(n)?;
    let repr = if spec.flags().odd_setting() {
        Representation::Odd
    } else {
        let h = an.v_bar_g(n)?;
        let qh = h.apply_q(an.cache())?;
        Representation::Coefficients { h, qh }
    };
    let mut kernel = MartingaleKernel { spec: spec.clone(), n, repr, sigma_sq, d_norm_sq: 0.0, nu_h2: 0.0, nu_h: 0.0 };
    let tol = Tolerance::new(1e-300, 1e-11);
    let focus = Some(1.0 / n as f64);
    kernel.nu_h2 = spec.expect_with(Measure::Nu, |w| kernel.h(w).powi(2), focus, tol)?;
    kernel.nu_h = match kernel.repr {
        Representation::Odd => 0.0,
        _ => spec.expect_with(Measure::Nu, |w| kernel.h(w), focus, tol)?,
    };
    kernel.d_norm_sq = match kernel.repr {
        Representation::Odd => an.d_norm_sq(n)?,
        Representation::Coefficients { ref h, ref qh } => {
            let hh = h.inner(h, an.cache())?;
            let qq = qh.inner(qh, an.cache())?;
            hh - qq
        }
    };
    Ok(kernel)
}

impl MartingaleKernel {
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn spec(&self) -> &ChainSpec {
        &self.spec
    }

    pub fn sigma_sq(&self) -> f64 {
        self.sigma_sq
    }

    /// `‖D_{n,1}‖² = ‖h‖² - ‖Qh‖²`, exact.
    pub fn d_norm_sq(&self) -> f64 {
        self.d_norm_sq
    }

    /// `h(w) = V̄_n g(w)`.
    pub fn h(&self, w: f64) -> f64 {
        match &self.repr {
            Representation::Odd => self.spec.g(w) * ramp_geometric_sum(self.n, self.spec.p(w)),
            Representation::Coefficients { h, .. } => h.eval(&self.spec, w),
        }
    }

    /// `Qh(w)`.
    pub fn qh(&self, w: f64) -> f64 {
        match &self.repr {
            Representation::Odd => self.spec.p(w) * self.h(w),
            Representation::Coefficients { qh, .. } => qh.eval(&self.spec, w),
        }
    }

    /// `u = g - h + Qh`, the per-step drift of the remainder.
    pub fn u(&self, w: f64) -> f64 {
        match &self.repr {
            Representation::Odd => {
                let x = self.spec.p(w);
                self.spec.g(w) * x * geometric_sum(self.n, x) / self.n as f64
            }
            Representation::Coefficients { .. } => self.spec.g(w) - self.h(w) + self.qh(w),
        }
    }

    /// `h(w)` by Horner's rule on the coefficients `1 - k/n`; `O(n)`.
    pub fn h_horner(&self, w: f64) -> f64 {
        let x = self.spec.p(w);
        let nf = self.n as f64;
        let mut acc = 0.0;
        for k in (0..self.n).rev() {
            acc = acc * x + (1.0 - k as f64 / nf);
        }
        acc * self.spec.g(w)
    }

    /// `E(D_{n,k}² | W_{k-1} = w) = Q(h²)(w) - (Qh(w))²`; needs `|g| = 1`.
    pub fn cond_var(&self, w: f64) -> Result<f64> {
        if !self.spec.g_is_unit() {
            return Err(Error::Unsupported("closed-form conditional variance needs |g| = 1".into()));
        }
        let p = self.spec.p(w);
        let q = self.spec.one_minus_p(w);
        let h = self.h(w);
        let qh = self.qh(w);
        Ok(p * h * h + q * self.nu_h2 - qh * qh)
    }

    /// `D_{n,k}` for a transition `prev → next`.
    pub fn increment(&self, prev: f64, next: f64) -> f64 {
        self.h(next) - self.qh(prev)
    }
}

/// `S_k`, `M_{n,k}` and `R_{n,k}` for `k = 0..=n`, with the remainder also
/// computed from the summation-by-parts form.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub s: Vec<f64>,
    pub m: Vec<f64>,
    pub r: Vec<f64>,
    pub r_telescoped: Vec<f64>,
}

impl Decomposition {
    pub fn max_identity_gap(&self) -> f64 {
        self.r.iter().zip(&self.r_telescoped).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

fn check_length(kernel: &MartingaleKernel, n: u64) -> Result<()> {
    if n != kernel.n {
        return Err(Error::Mismatch(format!("path of length {n} for a kernel built at n = {}", kernel.n)));
    }
    Ok(())
}

/// Full decomposition of a dense path `W_0, …, W_n`.
pub fn decompose_path(kernel: &MartingaleKernel, states: &[f64]) -> Result<Decomposition> {
    if states.is_empty() {
        return Err(Error::Sample("empty path".into()));
    }
    check_length(kernel, states.len() as u64 - 1)?;
    let spec = &kernel.spec;
    if let Some(&w) = states.iter().find(|&&w| !spec.in_state_space(w)) {
        return Err(Error::Mismatch(format!("state {w} outside the chain's state space")));
    }
    let len = states.len();
    let (mut s, mut m, mut r, mut rt) =
        (Vec::with_capacity(len), Vec::with_capacity(len), Vec::with_capacity(len), Vec::with_capacity(len));
    s.push(0.0);
    m.push(0.0);
    r.push(0.0);
    rt.push(0.0);
    let w0 = states[0];
    let base = kernel.h(w0) - spec.g(w0);
    let mut drift = 0.0;
    for k in 1..len {
        let (prev, cur) = (states[k - 1], states[k]);
        s.push(s[k - 1] + spec.g(cur));
        m.push(m[k - 1] + kernel.increment(prev, cur));
        r.push(s[k] - m[k]);
        drift += kernel.u(prev);
        rt.push(spec.g(cur) - kernel.h(cur) + base + drift);
    }
    Ok(Decomposition { s, m, r, r_telescoped: rt })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemainderSummary {
    /// `max_{k≤n} |R_{n,k}|`
    pub max_abs: f64,
    /// `R_{n,n}`
    pub last: f64,
}

/// `max_{k≤n} |R_{n,k}|` along a run-length path in `O(runs)`.
pub fn max_abs_remainder(kernel: &MartingaleKernel, path: &RunPath) -> Result<f64> {
    Ok(remainder_summary(kernel, path)?.max_abs)
}

pub fn remainder_summary(kernel: &MartingaleKernel, path: &RunPath) -> Result<RemainderSummary> {
    check_length(kernel, path.n())?;
    let spec = &kernel.spec;
    let w0 = path.runs[0].0;
    let base = kernel.h(w0) - spec.g(w0);
    let mut drift = 0.0; // Σ_{i<start} u(W_i)
    let mut start = 0u64;
    let mut best: f64 = 0.0;
    let mut r_end = 0.0;
    for &(w, len) in &path.runs {
        let c = spec.g(w) - kernel.h(w) + base;
        let u = kernel.u(w);
        let first = start.max(1);
        let end = start + len - 1;
        if end >= first {
            // R at index k in this run: c + drift + (k - start) u
            let r_first = c + drift + (first - start) as f64 * u;
            let r_last = c + drift + (end - start) as f64 * u;
            best = best.max(r_first.abs()).max(r_last.abs());
            r_end = r_last;
        }
        drift += len as f64 * u;
        start += len;
    }
    Ok(RemainderSummary { max_abs: best, last: r_end })
}

/// `(1/σ_n²) Σ_{k=1}^n E(D_{n,k}² | W_{k-1})` along one path.
pub fn stbl_statistic(kernel: &MartingaleKernel, path: &RunPath) -> Result<f64> {
    check_length(kernel, path.n())?;
    let mut acc = 0.0;
    for &(w, len) in &path.runs {
        acc += len as f64 * kernel.cond_var(w)?;
    }
    let last = path.runs.last().expect("nonempty path").0;
    acc -= kernel.cond_var(last)?;
    Ok(acc / kernel.sigma_sq)
}

/// Sorted `ν`-sample of `h(z)` with prefix sums, for truncated conditional moments.
#[derive(Debug, Clone)]
pub struct LindebergPool {
    values: Vec<f64>,
    sum1: Vec<f64>,
    sum2: Vec<f64>,
}

pub const DEFAULT_POOL_SIZE: usize = 4096;

impl LindebergPool {
    pub fn new(kernel: &MartingaleKernel, size: usize, rng: &mut RngStream) -> Result<Self> {
        if size == 0 {
            return Err(Error::Parameter("pool size must be positive".into()));
        }
        let mut nu = NuSampler::new();
        let mut values =
            (0..size).map(|_| nu.draw(&kernel.spec, rng).map(|z| kernel.h(z))).collect::<Result<Vec<_>>>()?;
        values.sort_by(f64::total_cmp);
        let mut sum1 = vec![0.0; size + 1];
        let mut sum2 = vec![0.0; size + 1];
        for (i, v) in values.iter().enumerate() {
            sum1[i + 1] = sum1[i] + v;
            sum2[i + 1] = sum2[i] + v * v;
        }
        Ok(Self { values, sum1, sum2 })
    }

    /// Estimate of `∫ (h(z) - a)² 1{|h(z) - a| > t} dν(z)`.
    pub fn truncated_second_moment(&self, a: f64, t: f64) -> f64 {
        let n = self.values.len();
        let lo = self.values.partition_point(|&v| v < a - t);
        let hi = self.values.partition_point(|&v| v <= a + t);
        let part = |i: usize, j: usize| {
            let cnt = (j - i) as f64;
            (self.sum2[j] - self.sum2[i]) - 2.0 * a * (self.sum1[j] - self.sum1[i]) + a * a * cnt
        };
        (part(0, lo) + part(hi, n)).max(0.0) / n as f64
    }
}

/// `(1/σ_n²) Σ_{k=1}^n E(D_{n,k}² 1{|D_{n,k}| > ε σ_n} | W_{k-1})` along one path.
///
/// The stay branch is exact; the jump branch integrates against the pooled
/// `ν`-sample.
pub fn lindeberg_statistic(kernel: &MartingaleKernel, pool: &LindebergPool, eps: f64, path: &RunPath) -> Result<f64> {
    check_length(kernel, path.n())?;
    if !(eps > 0.0) {
        return Err(Error::Parameter("ε must be positive".into()));
    }
    let t = eps * kernel.sigma_sq.sqrt();
    let term = |w: f64| {
        let p = kernel.spec.p(w);
        let q = kernel.spec.one_minus_p(w);
        let stay = kernel.h(w) - kernel.qh(w);
        let stay_part = if stay.abs() > t { p * stay * stay } else { 0.0 };
        stay_part + q * pool.truncated_second_moment(kernel.qh(w), t)
    };
    let mut acc = 0.0;
    for &(w, len) in &path.runs {
        acc += len as f64 * term(w);
    }
    acc -= term(path.runs.last().expect("nonempty path").0);
    Ok(acc / kernel.sigma_sq)
}

/// Monte Carlo `E D_{n,1}²` from `transitions` independent stationary steps.
pub fn d_sq_monte_carlo(kernel: &MartingaleKernel, transitions: u64, rng: &mut RngStream) -> Result<f64> {
    let spec = &kernel.spec;
    let mut nu = NuSampler::new();
    let mut acc = 0.0;
    for _ in 0..transitions {
        let w0 = sample_pi(spec, rng);
        let w1 = if rng.uniform_open() < spec.p(w0) { w0 } else { nu.draw(spec, rng)? };
        acc += kernel.increment(w0, w1).powi(2);
    }
    Ok(acc / transitions as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_chain, BuiltinChain};
    use crate::simulate::{simulate_runs, simulate_states};

    #[test]
    fn n1_increment_is_g_minus_qg() {
        let spec = build_chain(BuiltinChain::Example1).unwrap();
        let k = build_kernel(&spec, 1).unwrap();
        let d = k.increment(3.0, -2.0);
        assert!((d - (-1.0 - spec.p(3.0))).abs() < 1e-15);
    }

    #[test]
    fn constant_p_n2_kernel_value() {
        let spec = build_chain(BuiltinChain::ConstantP { c: 0.5 }).unwrap();
        let k = build_kernel(&spec, 2).unwrap();
        assert_eq!(k.h(1.0), 1.25);
        assert_eq!(k.h_horner(1.0), 1.25);
    }

    #[test]
    fn closed_form_matches_horner() {
        let spec = build_chain(BuiltinChain::Example1).unwrap();
        let k = build_kernel(&spec, 1000).unwrap();
        for w in [1.0, -1.5, 10.0, 400.0, -1e5] {
            let a = k.h(w);
            let b = k.h_horner(w);
            assert!((a - b).abs() < 1e-10 * b.abs().max(1.0), "w={w}: {a} vs {b}");
        }
    }

    #[test]
    fn decomposition_identity_on_paths() {
        for v in [BuiltinChain::Example1, BuiltinChain::ConstantP { c: 0.5 }] {
            let spec = build_chain(v).unwrap();
            let k = build_kernel(&spec, 2000).unwrap();
            let states = simulate_states(&spec, 2000, &mut RngStream::new(11, 0)).unwrap();
            let d = decompose_path(&k, &states).unwrap();
            let scale = k.sigma_sq().sqrt();
            assert!(d.max_identity_gap() < 1e-9 * scale, "{v:?} gap {}", d.max_identity_gap());
            let runs = RunPath::from_states(&states);
            let fast = max_abs_remainder(&k, &runs).unwrap();
            let slow = d.r.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            assert!((fast - slow).abs() < 1e-9 * scale);
            let last = remainder_summary(&k, &runs).unwrap().last;
            assert!((last - d.r[2000]).abs() < 1e-9 * scale);
        }
    }

    #[test]
    fn constant_path_decomposes() {
        let spec = build_chain(BuiltinChain::Example1).unwrap();
        let k = build_kernel(&spec, 5).unwrap();
        let d = decompose_path(&k, &[7.0; 6]).unwrap();
        for i in 0..=5 {
            assert!((d.m[i] + d.r[i] - d.s[i]).abs() < 1e-12);
            assert!((d.r[i] - d.r_telescoped[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn length_mismatch_is_reported() {
        let spec = build_chain(BuiltinChain::Example1).unwrap();
        let k = build_kernel(&spec, 5).unwrap();
        assert!(matches!(decompose_path(&k, &[1.0; 4]), Err(Error::Mismatch(_))));
        assert!(matches!(decompose_path(&k, &[0.5; 6]), Err(Error::Mismatch(_))));
    }

    #[test]
    fn stbl_is_deterministic_for_constant_p() {
        let spec = build_chain(BuiltinChain::ConstantP { c: 0.5 }).unwrap();
        let k = build_kernel(&spec, 100).unwrap();
        let a = stbl_statistic(&k, &simulate_runs(&spec, 100, &mut RngStream::new(1, 0)).unwrap()).unwrap();
        let b = stbl_statistic(&k, &simulate_runs(&spec, 100, &mut RngStream::new(1, 1)).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!((k.cond_var(1.0).unwrap() - k.d_norm_sq()).abs() < 1e-12);
    }

    #[test]
    fn cond_var_averages_to_d_norm() {
        let spec = build_chain(BuiltinChain::Example1).unwrap();
        let k = build_kernel(&spec, 50).unwrap();
        let avg = spec.expect(Measure::Pi, |w| k.cond_var(w).unwrap()).unwrap();
        assert!((avg - k.d_norm_sq()).abs() < 1e-8 * k.d_norm_sq());
    }

    #[test]
    fn lindeberg_huge_eps_is_zero() {
        let spec = build_chain(BuiltinChain::Example1).unwrap();
        let k = build_kernel(&spec, 1000).unwrap();
        let mut rng = RngStream::new(2, 0);
        let pool = LindebergPool::new(&k, 512, &mut rng).unwrap();
        let path = simulate_runs(&spec, 1000, &mut rng).unwrap();
        assert_eq!(lindeberg_statistic(&k, &pool, 1e6, &path).unwrap(), 0.0);
    }
}
