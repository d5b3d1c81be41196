//! Reference laws and normalising sequences: the holding-time law of the
//! regeneration blocks, the truncated second moment `H(y)`, the norming
//! `γ_m² = m H(γ_m)`, and the normal and symmetric stable distribution
//! functions that the simulated sums are compared against.

use std::f64::consts::PI;

use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::chain::{ChainSpec, Measure};
use crate::error::{Error, Result};
use crate::quadrature::{self, Tolerance};

/// Exact block-length sums up to here; fitted power-law tail beyond.
pub const K_SWITCH: u64 = 10_000;
/// Allowed disagreement between the tail model and the exact sums on the overlap.
pub const TAIL_OVERLAP_TOLERANCE: f64 = 0.02;

const HOLDING_TOLERANCE: Tolerance = Tolerance::new(1e-300, 1e-12);

/// Model for the mass function `f(k)` beyond `K_SWITCH`, fitted at `K/2` and `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailModel {
    /// `f(k) ≈ A k^{-s}`
    PowerLaw { amplitude: f64, exponent: f64 },
    /// `f(k) ≈ A r^k`
    Geometric { amplitude: f64, ratio: f64 },
}

impl TailModel {
    fn power_law(k1: u64, f1: f64, k2: u64, f2: f64) -> Option<Self> {
        if !(f1 > 0.0 && f2 > 0.0) {
            return None;
        }
        let exponent = (f1 / f2).ln() / (k2 as f64 / k1 as f64).ln();
        let amplitude = f2 * (k2 as f64).powf(exponent);
        Some(TailModel::PowerLaw { amplitude, exponent })
    }

    fn geometric(k1: u64, f1: f64, k2: u64, f2: f64) -> Option<Self> {
        if !(f1 > 0.0 && f2 > 0.0) {
            return None;
        }
        let ln_ratio = (f2 / f1).ln() / (k2 - k1) as f64;
        let amplitude = (f2.ln() - k2 as f64 * ln_ratio).exp();
        Some(TailModel::Geometric { amplitude, ratio: ln_ratio.exp() })
    }

    /// Model value of `Σ_{a<k≤b} k² f(k)`.
    fn second_moment(&self, a: u64, b: u64) -> f64 {
        if b <= a {
            return 0.0;
        }
        match *self {
            TailModel::PowerLaw { amplitude, exponent } => {
                // midpoint continuum approximation
                let (x0, x1) = (a as f64 + 0.5, b as f64 + 0.5);
                let e = 3.0 - exponent;
                if e.abs() < 1e-12 {
                    amplitude * (x1 / x0).ln()
                } else {
                    amplitude * (x1.powf(e) - x0.powf(e)) / e
                }
            }
            TailModel::Geometric { amplitude, ratio } => {
                let mut acc = 0.0;
                for k in a + 1..=b {
                    let term = amplitude * (k as f64).powi(2) * ratio.powf(k as f64);
                    acc += term;
                    if term < 1e-18 * acc.max(f64::MIN_POSITIVE) {
                        break;
                    }
                }
                acc
            }
        }
    }
}

/// Law of the block length `Δτ` with `W ~ ν` and `P[Δτ ≥ k | W = w] = p(w)^{k-1}`.
#[derive(Debug, Clone)]
pub struct HoldingLaw {
    /// `f[k] = P[Δτ = k]`, index 0 unused.
    f: Vec<f64>,
    /// `q[k] = P[Δτ ≥ k]`, index 0 unused.
    q: Vec<f64>,
    /// `Σ_{j≤k} j² f(j)`
    h: Vec<f64>,
    /// `Σ_{j≤k} j f(j)`
    mean: Vec<f64>,
    tail: Option<TailModel>,
}

/// Pick whichever model reproduces the exact sums over `(K/2, K]` from a
/// fit at `K/4` and `K/2`, then refit it at `K/2` and `K`.
fn fit_tail(f: &[f64], h: &[f64], k: usize) -> Result<Option<TailModel>> {
    let (k4, k2) = (k / 4, k / 2);
    let exact = h[k] - h[k2];
    if !(exact > 0.0) {
        return Ok(None);
    }
    type Builder = fn(u64, f64, u64, f64) -> Option<TailModel>;
    let builders: [Builder; 2] = [TailModel::power_law, TailModel::geometric];
    let mut best: Option<(f64, usize)> = None;
    for (i, build) in builders.iter().enumerate() {
        if let Some(model) = build(k4 as u64, f[k4], k2 as u64, f[k2]) {
            let gap = ((model.second_moment(k2 as u64, k as u64) - exact) / exact).abs();
            if best.is_none_or(|(g, _)| gap < g) {
                best = Some((gap, i));
            }
        }
    }
    match best {
        Some((gap, i)) if gap <= TAIL_OVERLAP_TOLERANCE => Ok(builders[i](k2 as u64, f[k2], k as u64, f[k])),
        Some((gap, _)) => Err(Error::Validation(format!(
            "no tail model matches the exact overlap sum (best gap {:.2}%)",
            100.0 * gap
        ))),
        None => Ok(None),
    }
}

impl HoldingLaw {
    pub fn new(spec: &ChainSpec) -> Result<Self> {
        Self::with_switch(spec, K_SWITCH)
    }

    /// Tabulate `f` and `q` for `k ≤ k_switch`, one quadrature each.
    pub fn with_switch(spec: &ChainSpec, k_switch: u64) -> Result<Self> {
        if k_switch < 16 {
            return Err(Error::Parameter("k_switch must be at least 16".into()));
        }
        if !spec.g_is_unit() {
            return Err(Error::Unsupported("H(y) for |g| ≠ 1 needs a two-dimensional quadrature".into()));
        }
        let len = k_switch as usize + 1;
        let (mut f, mut q) = (vec![0.0; len], vec![0.0; len]);
        for k in 1..len {
            let e = (k - 1) as f64;
            let focus = Some(1.0 / (k as f64));
            f[k] = spec.expect_with(
                Measure::Nu,
                |w| (e * spec.log_p(w)).exp() * spec.one_minus_p(w),
                focus,
                HOLDING_TOLERANCE,
            )?;
            q[k] = if k == 1 {
                1.0
            } else {
                spec.expect_with(Measure::Nu, |w| (e * spec.log_p(w)).exp(), focus, HOLDING_TOLERANCE)?
            };
        }
        let (mut h, mut mean) = (vec![0.0; len], vec![0.0; len]);
        for k in 1..len {
            let kf = k as f64;
            h[k] = h[k - 1] + kf * kf * f[k];
            mean[k] = mean[k - 1] + kf * f[k];
        }
        let tail = fit_tail(&f, &h, k_switch as usize)?;
        Ok(Self { f, q, h, mean, tail })
    }

    pub fn k_switch(&self) -> u64 {
        (self.f.len() - 1) as u64
    }

    pub fn tail(&self) -> Option<TailModel> {
        self.tail
    }

    fn index(&self, k: u64) -> Result<usize> {
        if k == 0 || k > self.k_switch() {
            return Err(Error::Parameter(format!("k = {k} outside 1..={}", self.k_switch())));
        }
        Ok(k as usize)
    }

    /// `P[Δτ = k]`.
    pub fn mass(&self, k: u64) -> Result<f64> {
        Ok(self.f[self.index(k)?])
    }

    /// `P[Δτ ≥ k] = ∫ p^{k-1} dν`.
    pub fn survival(&self, k: u64) -> Result<f64> {
        Ok(self.q[self.index(k)?])
    }

    /// `Σ_{j≤k} j f(j)`, tending to `θ`.
    pub fn truncated_mean(&self, k: u64) -> Result<f64> {
        Ok(self.mean[self.index(k)?])
    }

    fn h_at_integer(&self, k: u64) -> f64 {
        let ks = self.k_switch();
        if k <= ks {
            return self.h[k as usize];
        }
        let base = self.h[ks as usize];
        match self.tail {
            Some(t) => base + t.second_moment(ks, k),
            None => base,
        }
    }

    /// `H(y) = E[Y²; |Y| ≤ y] = Σ_{k≤y} k² f(k)` as a step function.
    pub fn h_step(&self, y: f64) -> f64 {
        if y < 1.0 {
            return 0.0;
        }
        self.h_at_integer(y.floor().min(1e18) as u64)
    }

    /// `H` interpolated linearly between integers; continuous for `y ≥ 1`.
    pub fn h_interp(&self, y: f64) -> f64 {
        if y < 1.0 {
            return 0.0;
        }
        let lo = y.floor().min(1e18);
        let frac = y - lo;
        let a = self.h_at_integer(lo as u64);
        if frac == 0.0 {
            return a;
        }
        let b = self.h_at_integer(lo as u64 + 1);
        a + frac * (b - a)
    }

    /// `γ_m` with `γ_m² = m H(γ_m)`.
    pub fn gamma_m(&self, m: u64) -> Result<f64> {
        solve_gamma(m, |y| self.h_interp(y))
    }
}

pub const GAMMA_RESIDUAL: f64 = 1e-6;
const GAMMA_MAX_ITER: usize = 1000;

/// Root `γ ≥ 1` of `γ² = m H(γ)` for nondecreasing, slowly growing `H`,
/// found by bracketing and bisection.
pub fn solve_gamma<H: Fn(f64) -> f64>(m: u64, h: H) -> Result<f64> {
    if m == 0 {
        return Err(Error::Parameter("m must be at least 1".into()));
    }
    let mf = m as f64;
    let excess = |g: f64| g * g - mf * h(g);
    if excess(1.0) > 0.0 {
        return Err(Error::Parameter(format!("no γ ≥ 1 solves γ² = m H(γ) for m = {m}")));
    }
    let (mut lo, mut hi) = (1.0, 2.0);
    while excess(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() || !h(hi).is_finite() {
            return Err(Error::NonConvergence(format!("γ_m bracket for m = {m} escaped to {hi}")));
        }
    }
    for _ in 0..GAMMA_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let g = 0.5 * (lo + hi);
    if excess(g).abs() < GAMMA_RESIDUAL * g * g {
        Ok(g)
    } else {
        Err(Error::NonConvergence(format!("γ_m for m = {m}: residual {} at {g}", excess(g) / (g * g))))
    }
}

/// `Φ((x - mean)/√variance)`; a step at the mean when the variance is zero.
pub fn normal_cdf(mean: f64, variance: f64, x: f64) -> Result<f64> {
    if variance < 0.0 || variance.is_nan() {
        return Err(Error::Parameter(format!("variance {variance} is negative")));
    }
    if variance == 0.0 {
        return Ok(if x < mean { 0.0 } else { 1.0 });
    }
    Ok(0.5 * libm::erfc(-(x - mean) / (2.0 * variance).sqrt()))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(Error::Parameter(format!("α = {alpha} outside (1, 2)")));
    }
    Ok(())
}

/// `∫_0^∞ x^{-α} sin x dx` from the reflection formula `Γ(1-α) cos(πα/2)`.
pub fn sine_integral_closed(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(gamma(1.0 - alpha) * (PI * alpha / 2.0).cos())
}

/// `∫_0^∞ x^{-α} sin x dx` by quadrature over the arches of `sin`.
///
/// The first arch is integrated in `u = x^{2-α}`, which removes the
/// `x^{1-α}` singularity; the alternating arch series is then summed with
/// repeated averaging of its partial sums.
pub fn sine_integral_oscillatory(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let tol = Tolerance::new(1e-15, 1e-12);
    let b = 2.0 - alpha;
    let first = quadrature::integrate(
        |u: f64| {
            let x = u.powf(1.0 / b);
            if x == 0.0 {
                1.0 / b
            } else {
                x.sin() / x / b
            }
        },
        0.0,
        PI.powf(b),
        tol,
    )?
    .value;
    const ARCHES: usize = 60;
    let mut partial = Vec::with_capacity(ARCHES);
    let mut acc = first;
    for k in 1..=ARCHES {
        let a = k as f64 * PI;
        acc += quadrature::integrate(|x: f64| x.powf(-alpha) * x.sin(), a, a + PI, tol)?.value;
        partial.push(acc);
    }
    let mut row = partial[ARCHES - 30..].to_vec();
    while row.len() > 1 {
        row = row.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    Ok(row[0])
}

/// `c_α = (α-1) Γ(α) ∫_0^∞ x^{-α} sin x dx`.
pub fn c_alpha(alpha: f64) -> Result<f64> {
    Ok((alpha - 1.0) * gamma(alpha) * sine_integral_oscillatory(alpha)?)
}

/// Symmetric stable law with characteristic function `exp(-c|t|^α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StableRef {
    pub alpha: f64,
    pub c: f64,
}

/// Beyond this multiple of the scale `c^{1/α}`, the tail series replaces inversion.
pub const STABLE_SERIES_CUTOFF: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CdfValue {
    pub value: f64,
    /// Set when the value came from the large-`|x|` tail series.
    pub asymptotic: bool,
}

impl StableRef {
    pub fn new(alpha: f64, c: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Parameter(format!("scale c = {c} must be positive")));
        }
        Ok(Self { alpha, c })
    }

    /// The limit law of `n^{-1/α} S_n` for the stable example.
    pub fn for_chain(alpha: f64) -> Result<Self> {
        Self::new(alpha, c_alpha(alpha)?)
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        Ok(self.cdf_detailed(x)?.value)
    }

    /// Gil-Pelaez inversion `½ + (1/π) ∫_0^∞ sin(tx) e^{-c t^α} / t dt`.
    pub fn cdf_detailed(&self, x: f64) -> Result<CdfValue> {
        if !x.is_finite() {
            return Err(Error::Parameter(format!("x = {x} is not finite")));
        }
        if x == 0.0 {
            return Ok(CdfValue { value: 0.5, asymptotic: false });
        }
        let scale = self.c.powf(1.0 / self.alpha);
        if x.abs() > STABLE_SERIES_CUTOFF * scale {
            let upper = self.tail_series(x.abs() / scale);
            let value = if x > 0.0 { 1.0 - upper } else { upper };
            return Ok(CdfValue { value, asymptotic: true });
        }
        let (alpha, c) = (self.alpha, self.c);
        let t_max = (50.0 / c).powf(1.0 / alpha);
        let spacing = (PI / x.abs()).max(t_max / 4000.0);
        let mut pts = vec![0.0];
        let mut t = spacing;
        while t < t_max {
            pts.push(t);
            t += spacing;
        }
        pts.push(t_max);
        let integrand = |t: f64| {
            if t == 0.0 {
                x
            } else {
                (t * x).sin() * (-c * t.powf(alpha)).exp() / t
            }
        };
        let est = quadrature::integrate_with_breaks(integrand, &pts, Tolerance::new(1e-11, 1e-11))?;
        Ok(CdfValue { value: (0.5 + est.value / PI).clamp(0.0, 1.0), asymptotic: false })
    }

    /// `P[X > x]` for the unit-scale law, from its asymptotic series.
    fn tail_series(&self, x: f64) -> f64 {
        let a = self.alpha;
        let mut acc = 0.0;
        let mut fact = 1.0;
        for k in 1..=6 {
            let kf = k as f64;
            fact *= kf;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            acc += sign * gamma(kf * a) / fact * (kf * PI * a / 2.0).sin() * x.powf(-kf * a);
        }
        acc / PI
    }
}
