//! Exact computation in the function algebra `span{p^j g, p^j}`, which the
//! jump-or-stay kernel maps into itself:
//!
//! ```text
//! Q(p^j g) = p^{j+1} g + (∫ p^j g dν)(1 - p)
//! Q(p^j)   = p^{j+1}   + (∫ p^j dν)(1 - p)
//! ```
//!
//! Every second-order quantity of `S_n` (autocovariances, `σ_n²`, `‖V_n g‖`,
//! the martingale increments' inner products) is then a finite combination
//! of moments `∫ p^j g^r dπ`, with no sampling error.

use crate::chain::{ChainSpec, Measure};
use crate::error::{Error, Result};
use crate::quadrature::{self, Tolerance};
use crate::sums::{ramp_geometric_sum, Neumaier};

/// Largest horizon accepted by the exact variance routines.
pub const MAX_HORIZON: u64 = 1 << 40;
/// Largest degree for which `V̄_n g` is materialised as coefficients.
pub const MAX_COEFFICIENTS: u64 = 10_000_000;

const MOMENT_TOLERANCE: Tolerance = Tolerance::new(1e-300, 1e-12);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentKind {
    /// `∫ p^j dπ`
    PiP,
    /// `∫ p^j dν`
    NuP,
    /// `∫ p^j g dπ`
    PiPG,
    /// `∫ p^j g dν`
    NuPG,
    /// `∫ p^j g² dπ`
    PiPG2,
}

/// Lazily extended moment sequences of a chain.
#[derive(Debug, Clone)]
pub struct MomentCache {
    spec: ChainSpec,
    seqs: [Vec<f64>; 5],
}

impl MomentCache {
    pub fn new(spec: &ChainSpec) -> Self {
        Self { spec: spec.clone(), seqs: Default::default() }
    }

    pub fn spec(&self) -> &ChainSpec {
        &self.spec
    }

    fn slot(kind: MomentKind) -> usize {
        match kind {
            MomentKind::PiP => 0,
            MomentKind::NuP => 1,
            MomentKind::PiPG => 2,
            MomentKind::NuPG => 3,
            MomentKind::PiPG2 => 4,
        }
    }

    fn compute(&self, kind: MomentKind, j: usize) -> Result<f64> {
        let spec = &self.spec;
        let odd = spec.flags().odd_setting();
        let jf = j as f64;
        let pj = |w: f64| (jf * spec.log_p(w)).exp();
        let focus = Some(1.0 / jf.max(1.0));
        match kind {
            MomentKind::PiPG | MomentKind::NuPG if odd => Ok(0.0),
            MomentKind::PiPG2 if spec.g_is_unit() => self.compute(MomentKind::PiP, j),
            MomentKind::PiP => match spec.pi_p_moment_closed(j as u64) {
                Some(v) => Ok(v),
                None => spec.expect_with(Measure::Pi, pj, focus, MOMENT_TOLERANCE),
            },
            MomentKind::NuP => spec.expect_with(Measure::Nu, pj, focus, MOMENT_TOLERANCE),
            MomentKind::PiPG => spec.expect_with(Measure::Pi, |w| pj(w) * spec.g(w), focus, MOMENT_TOLERANCE),
            MomentKind::NuPG => spec.expect_with(Measure::Nu, |w| pj(w) * spec.g(w), focus, MOMENT_TOLERANCE),
            MomentKind::PiPG2 => {
                spec.expect_with(Measure::Pi, |w| pj(w) * spec.g(w) * spec.g(w), focus, MOMENT_TOLERANCE)
            }
        }
    }

    /// Extend one sequence to cover exponents `0..=degree`.
    pub fn ensure_kind(&mut self, kind: MomentKind, degree: usize) -> Result<()> {
        let slot = Self::slot(kind);
        while self.seqs[slot].len() <= degree {
            let j = self.seqs[slot].len();
            let v = self.compute(kind, j)?;
            self.seqs[slot].push(v);
        }
        Ok(())
    }

    /// Extend every sequence; call before sharing the cache across threads.
    pub fn ensure(&mut self, degree: usize) -> Result<()> {
        for kind in [MomentKind::PiP, MomentKind::NuP, MomentKind::PiPG, MomentKind::NuPG, MomentKind::PiPG2] {
            self.ensure_kind(kind, degree)?;
        }
        Ok(())
    }

    pub fn moment(&mut self, kind: MomentKind, j: usize) -> Result<f64> {
        self.ensure_kind(kind, j)?;
        Ok(self.seqs[Self::slot(kind)][j])
    }

    pub fn sequence(&mut self, kind: MomentKind, degree: usize) -> Result<&[f64]> {
        self.ensure_kind(kind, degree)?;
        Ok(&self.seqs[Self::slot(kind)][..=degree])
    }
}

/// `f = Σ_j a_j p^j g + Σ_j b_j p^j`, stored densely by exponent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PChainFunction {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl PChainFunction {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Self {
        Self { a, b }
    }

    pub fn g() -> Self {
        Self { a: vec![1.0], b: vec![] }
    }

    pub fn constant(v: f64) -> Self {
        Self { a: vec![], b: vec![v] }
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn max_degree(&self) -> usize {
        self.a.len().max(self.b.len()).saturating_sub(1)
    }

    pub fn is_pure_g(&self) -> bool {
        self.b.iter().all(|&x| x == 0.0)
    }

    pub fn scale(mut self, s: f64) -> Self {
        self.a.iter_mut().chain(self.b.iter_mut()).for_each(|x| *x *= s);
        self
    }

    pub fn add_scaled(&mut self, other: &PChainFunction, s: f64) {
        if self.a.len() < other.a.len() {
            self.a.resize(other.a.len(), 0.0);
        }
        if self.b.len() < other.b.len() {
            self.b.resize(other.b.len(), 0.0);
        }
        for (x, y) in self.a.iter_mut().zip(&other.a) {
            *x += s * y;
        }
        for (x, y) in self.b.iter_mut().zip(&other.b) {
            *x += s * y;
        }
    }

    /// `Qf`, of degree one higher.
    pub fn apply_q(&self, cache: &mut MomentCache) -> Result<PChainFunction> {
        let mut jump = Neumaier::new();
        for (j, &aj) in self.a.iter().enumerate() {
            if aj != 0.0 {
                jump.add(aj * cache.moment(MomentKind::NuPG, j)?);
            }
        }
        for (j, &bj) in self.b.iter().enumerate() {
            if bj != 0.0 {
                jump.add(bj * cache.moment(MomentKind::NuP, j)?);
            }
        }
        let jump = jump.value();

        let mut a = Vec::with_capacity(self.a.len() + 1);
        if !self.a.is_empty() {
            a.push(0.0);
            a.extend_from_slice(&self.a);
        }
        let mut b = Vec::new();
        if !self.b.is_empty() || jump != 0.0 {
            b = vec![0.0; self.b.len().max(1) + 1];
            b[1..=self.b.len()].copy_from_slice(&self.b);
            b[0] += jump;
            b[1] -= jump;
        }
        Ok(PChainFunction { a, b })
    }

    /// `⟨f, h⟩` in `L²(π)`.
    pub fn inner(&self, other: &PChainFunction, cache: &mut MomentCache) -> Result<f64> {
        let mut acc = Neumaier::new();
        let mut pair = |x: &[f64], y: &[f64], kind: MomentKind, acc: &mut Neumaier| -> Result<()> {
            if x.iter().all(|&v| v == 0.0) || y.iter().all(|&v| v == 0.0) {
                return Ok(());
            }
            let conv = convolve(x, y);
            let m = cache.sequence(kind, conv.len() - 1)?;
            for (c, mv) in conv.iter().zip(m) {
                acc.add(c * mv);
            }
            Ok(())
        };
        pair(&self.a, &other.a, MomentKind::PiPG2, &mut acc)?;
        pair(&self.a, &other.b, MomentKind::PiPG, &mut acc)?;
        pair(&self.b, &other.a, MomentKind::PiPG, &mut acc)?;
        pair(&self.b, &other.b, MomentKind::PiP, &mut acc)?;
        Ok(acc.value())
    }

    /// Pointwise value by Horner's rule in `p(w)`.
    pub fn eval(&self, spec: &ChainSpec, w: f64) -> f64 {
        let x = spec.p(w);
        let horner = |c: &[f64]| c.iter().rev().fold(0.0, |acc, &v| acc * x + v);
        horner(&self.a) * spec.g(w) + horner(&self.b)
    }
}

fn convolve(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len() + y.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (o, &yj) in out[i..].iter_mut().zip(y) {
            *o += xi * yj;
        }
    }
    out
}

/// Autocovariances `c_k = ⟨g, Q^k g⟩` with prefix sums for `σ_n²`.
#[derive(Debug, Clone)]
pub struct VarianceTable {
    c: Vec<f64>,
    /// `Σ_{k<n} c_k`
    prefix_c: Vec<f64>,
    /// `Σ_{k<n} k c_k`
    prefix_kc: Vec<f64>,
}

impl VarianceTable {
    pub fn from_autocovariances(c: Vec<f64>) -> Self {
        let mut prefix_c = Vec::with_capacity(c.len() + 1);
        let mut prefix_kc = Vec::with_capacity(c.len() + 1);
        let (mut s0, mut s1) = (Neumaier::new(), Neumaier::new());
        prefix_c.push(0.0);
        prefix_kc.push(0.0);
        for (k, &ck) in c.iter().enumerate() {
            s0.add(ck);
            s1.add(k as f64 * ck);
            prefix_c.push(s0.value());
            prefix_kc.push(s1.value());
        }
        Self { c, prefix_c, prefix_kc }
    }

    /// Table of `c_0..c_{len-1}`, closed forms where the chain has them.
    pub fn build(cache: &mut MomentCache, len: usize) -> Result<Self> {
        let spec = cache.spec().clone();
        let c = if spec.flags().odd_setting() && spec.g_is_unit() && spec.pi_p_moment_closed(0).is_some() {
            (0..len as u64).map(|k| spec.pi_p_moment_closed(k).expect("closed form checked above")).collect()
        } else {
            (0..len).map(|k| autocovariance(cache, k)).collect::<Result<Vec<_>>>()?
        };
        Ok(Self::from_autocovariances(c))
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn c(&self, k: usize) -> f64 {
        self.c[k]
    }

    pub fn autocovariances(&self) -> &[f64] {
        &self.c
    }

    /// Largest `n` for which `σ_n²` is available.
    pub fn n_max(&self) -> u64 {
        self.c.len() as u64
    }

    fn check(&self, n: u64) -> Result<()> {
        if n > MAX_HORIZON {
            return Err(Error::Horizon(n));
        }
        if n > self.n_max() {
            return Err(Error::Parameter(format!("n = {n} beyond table of length {}", self.n_max())));
        }
        Ok(())
    }

    /// `⟨g, V̄_n g⟩ = Σ_{k<n} (1 - k/n) c_k`.
    pub fn v_bar_inner(&self, n: u64) -> Result<f64> {
        self.check(n)?;
        if n == 0 {
            return Ok(0.0);
        }
        let i = n as usize;
        Ok(self.prefix_c[i] - self.prefix_kc[i] / n as f64)
    }

    /// `σ_n² = n [2⟨g, V̄_n g⟩ - ‖g‖²]`; `σ_0² = 0`.
    pub fn sigma_sq(&self, n: u64) -> Result<f64> {
        if n == 0 {
            return Ok(0.0);
        }
        let vb = self.v_bar_inner(n)?;
        Ok(n as f64 * (2.0 * vb - self.c[0]))
    }

    /// `σ_n² = n c_0 + 2 Σ_{k=1}^{n-1} (n-k) c_k`, summed directly.
    pub fn sigma_sq_direct(&self, n: u64) -> Result<f64> {
        self.check(n)?;
        if n == 0 {
            return Ok(0.0);
        }
        let mut acc = Neumaier::new();
        for k in 1..n as usize {
            acc.add((n as usize - k) as f64 * self.c[k]);
        }
        Ok(n as f64 * self.c[0] + 2.0 * acc.value())
    }

    /// `ℓ(n) = σ_n² / n`.
    pub fn ell(&self, n: u64) -> Result<f64> {
        if n == 0 {
            return Err(Error::Parameter("ell(0) is undefined".into()));
        }
        Ok(self.sigma_sq(n)? / n as f64)
    }
}

/// `c_k = ⟨g, Q^k g⟩`; a single moment in the odd setting, the algebra otherwise.
pub fn autocovariance(cache: &mut MomentCache, k: usize) -> Result<f64> {
    if cache.spec().flags().odd_setting() {
        return cache.moment(MomentKind::PiPG2, k);
    }
    let g = PChainFunction::g();
    let mut f = g.clone();
    for _ in 0..k {
        f = f.apply_q(cache)?;
    }
    g.inner(&f, cache)
}

/// The spectral measure `μ_g(B) = ⟨g, M(B) g⟩` of `g` for the self-adjoint `Q`.
///
/// In the odd setting `Q^k g = p^k g`, so `μ_g` is the image of `g² dπ`
/// under `w ↦ p(w)`: an atom for the two-point chain, a density on
/// `[e^{-1}, 1)` for the continuous ones.
#[derive(Debug, Clone)]
pub enum SpectralMeasure {
    Atom { location: f64, mass: f64 },
    Density { spec: ChainSpec },
}

impl SpectralMeasure {
    pub fn of(spec: &ChainSpec) -> Result<Self> {
        if !spec.flags().odd_setting() {
            return Err(Error::Unsupported("spectral measure needs odd g with symmetric p and ν".into()));
        }
        if spec.is_discrete() {
            let mass = spec.pi_density(1.0) * spec.g(1.0).powi(2) + spec.pi_density(-1.0) * spec.g(-1.0).powi(2);
            Ok(SpectralMeasure::Atom { location: spec.p(1.0), mass })
        } else {
            Ok(SpectralMeasure::Density { spec: spec.clone() })
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            SpectralMeasure::Atom { location, .. } => (*location, *location),
            SpectralMeasure::Density { .. } => ((-1.0f64).exp(), 1.0),
        }
    }

    /// Density in `λ`; zero for the atomic case.
    pub fn density(&self, lambda: f64) -> f64 {
        match self {
            SpectralMeasure::Atom { .. } => 0.0,
            SpectralMeasure::Density { spec } => {
                let (lo, hi) = self.support();
                if !(lambda > lo && lambda < hi) {
                    return 0.0;
                }
                let ln = lambda.ln();
                let w = -1.0 / ln;
                let dw = 1.0 / (lambda * ln * ln);
                (spec.g(w).powi(2) * spec.pi_density(w) + spec.g(-w).powi(2) * spec.pi_density(-w)) * dw
            }
        }
    }

    /// `∫_{[lo, hi]} f dμ_g`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, lo: f64, hi: f64, tol: Tolerance) -> Result<f64> {
        match self {
            SpectralMeasure::Atom { location, mass } => {
                Ok(if (lo..=hi).contains(location) { f(*location) * mass } else { 0.0 })
            }
            SpectralMeasure::Density { .. } => {
                let (slo, shi) = self.support();
                let a = lo.max(slo);
                let b = hi.min(shi);
                if b <= a {
                    return Ok(0.0);
                }
                let mut pts = vec![a];
                for j in 1..=15 {
                    let x = 1.0 - 10f64.powi(-j);
                    if x > a && x < b {
                        pts.push(x);
                    }
                }
                pts.push(b);
                let est = quadrature::integrate_with_breaks(|l| f(l) * self.density(l), &pts, tol)?;
                Ok(est.value)
            }
        }
    }

    pub fn total_mass(&self) -> Result<f64> {
        self.integrate(|_| 1.0, 0.0, 1.0, Tolerance::new(1e-12, 1e-12))
    }

    /// `∫ λ^k dμ_g`, which equals `c_k`.
    pub fn moment(&self, k: i32) -> Result<f64> {
        self.integrate(|l| l.powi(k), 0.0, 1.0, Tolerance::new(1e-12, 1e-12))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Kappa {
    Finite(f64),
    /// `∫ (1+λ)/(1-λ) dμ_g` kept growing as the cut-off moved toward 1.
    Divergent {
        partial: f64,
        increments: Vec<f64>,
    },
}

impl Kappa {
    pub fn is_divergent(&self) -> bool {
        matches!(self, Kappa::Divergent { .. })
    }
}

/// Increments must contract by at least this factor per decade of cut-off.
pub const KAPPA_CONTRACTION: f64 = 0.9;
pub const KAPPA_CAP: f64 = 1e6;

/// `κ = ∫ (1+λ)/(1-λ) dμ_g`, or a divergence flag.
///
/// The integral is cut at `1 - δ` for `δ = 10^{-2}, …, 10^{-8}`; it is
/// declared convergent only if the increments between successive cut-offs
/// contract geometrically and the value stays under [`KAPPA_CAP`].
pub fn kappa(spec: &ChainSpec) -> Result<Kappa> {
    let mu = SpectralMeasure::of(spec)?;
    let f = |l: f64| (1.0 + l) / (1.0 - l);
    if let SpectralMeasure::Atom { location, mass } = mu {
        return Ok(if location < 1.0 {
            Kappa::Finite(f(location) * mass)
        } else {
            Kappa::Divergent { partial: f64::INFINITY, increments: vec![] }
        });
    }
    let tol = Tolerance::new(1e-10, 1e-10);
    let mut values = Vec::new();
    for j in 2..=8 {
        let delta = 10f64.powi(-j);
        values.push(mu.integrate(f, 0.0, 1.0 - delta, tol)?);
    }
    let increments: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let contracting = increments.windows(2).all(|w| w[1] <= KAPPA_CONTRACTION * w[0]);
    let last = *values.last().expect("seven cut-offs");
    if contracting && last < KAPPA_CAP {
        Ok(Kappa::Finite(last))
    } else {
        Ok(Kappa::Divergent { partial: last, increments })
    }
}

/// `Σ_{j<n} Σ_{k<m} (1 - j/n)(1 - k/m) d_{j+k}` in `O(n + m)`.
///
/// This is the pairing of the coefficient vectors of `V̄_n g` and `V̄_m g`
/// against a lag sequence `d`; for each lag the inner sum over `j` is a
/// quadratic in `j` and is evaluated from its power sums.
pub fn ramp_cross_inner(n: u64, m: u64, d: &[f64]) -> f64 {
    assert!(n >= 1 && m >= 1);
    let (nf, mf) = (n as f64, m as f64);
    let top = (n + m - 2) as usize;
    assert!(d.len() > top, "lag sequence too short");
    let mut acc = Neumaier::new();
    for s in 0..=top as u64 {
        let lo = s.saturating_sub(m - 1);
        let hi = s.min(n - 1);
        let len = (hi - lo + 1) as f64;
        let a = 1.0 - lo as f64 / nf;
        let b = 1.0 - (s - lo) as f64 / mf;
        let sum = len * a * b + (a / mf - b / nf) * len * (len - 1.0) / 2.0
            - (len - 1.0) * len * (2.0 * len - 1.0) / (6.0 * nf * mf);
        acc.add(sum * d[s as usize]);
    }
    acc.value()
}

/// Result of comparing two computations of the same quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoWay {
    pub lhs: f64,
    pub rhs: f64,
    pub deviation: f64,
}

impl TwoWay {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs, deviation: (lhs - rhs).abs() }
    }

    pub fn relative(&self) -> f64 {
        self.deviation / self.lhs.abs().max(self.rhs.abs()).max(f64::MIN_POSITIVE)
    }
}

/// Front end for the exact computations on one chain, growing its moment
/// cache and variance table on demand.
#[derive(Debug, Clone)]
pub struct Analyzer {
    spec: ChainSpec,
    cache: MomentCache,
    table: VarianceTable,
}

impl Analyzer {
    pub fn new(spec: &ChainSpec) -> Self {
        Self { spec: spec.clone(), cache: MomentCache::new(spec), table: VarianceTable::from_autocovariances(vec![]) }
    }

    pub fn spec(&self) -> &ChainSpec {
        &self.spec
    }

    pub fn cache(&mut self) -> &mut MomentCache {
        &mut self.cache
    }

    /// Make `c_0..c_{len-1}` available.
    pub fn ensure_table(&mut self, len: usize) -> Result<&VarianceTable> {
        if self.table.len() < len {
            let target = len.max(2 * self.table.len()).max(16);
            self.table = VarianceTable::build(&mut self.cache, target)?;
        }
        Ok(&self.table)
    }

    pub fn table(&self) -> &VarianceTable {
        &self.table
    }

    fn horizon(n: u64) -> Result<usize> {
        if n > MAX_HORIZON {
            return Err(Error::Horizon(n));
        }
        Ok(n as usize)
    }

    pub fn autocovariance(&mut self, k: u64) -> Result<f64> {
        let k = Self::horizon(k)?;
        Ok(self.ensure_table(k + 1)?.c(k))
    }

    pub fn sigma_sq(&mut self, n: u64) -> Result<f64> {
        let len = Self::horizon(n)?;
        self.ensure_table(len.max(1))?.sigma_sq(n)
    }

    pub fn ell(&mut self, n: u64) -> Result<f64> {
        let len = Self::horizon(n)?;
        self.ensure_table(len.max(1))?.ell(n)
    }

    pub fn kappa(&self) -> Result<Kappa> {
        kappa(&self.spec)
    }

    /// `V̄_n g = Σ_{k<n} (1 - k/n) Q^k g` as explicit coefficients.
    pub fn v_bar_g(&mut self, n: u64) -> Result<PChainFunction> {
        if n == 0 {
            return Err(Error::Parameter("n must be at least 1".into()));
        }
        if n > MAX_COEFFICIENTS {
            return Err(Error::Parameter(format!(
                "n = {n} exceeds the coefficient limit {MAX_COEFFICIENTS}; evaluate pointwise instead"
            )));
        }
        if self.spec.flags().odd_setting() {
            let nf = n as f64;
            let a = (0..n).map(|k| 1.0 - k as f64 / nf).collect();
            return Ok(PChainFunction::new(a, vec![]));
        }
        self.v_bar_g_iterated(n)
    }

    /// `V̄_n g` by repeated application of `Q`; `O(n²)`.
    pub fn v_bar_g_iterated(&mut self, n: u64) -> Result<PChainFunction> {
        let nf = n as f64;
        let mut term = PChainFunction::g();
        let mut acc = PChainFunction::default();
        for k in 0..n {
            acc.add_scaled(&term, 1.0 - k as f64 / nf);
            if k + 1 < n {
                term = term.apply_q(&mut self.cache)?;
            }
        }
        Ok(acc)
    }

    /// `V_n g = Σ_{k<n} Q^k g` by repeated application of `Q`.
    pub fn v_g(&mut self, n: u64) -> Result<PChainFunction> {
        let mut term = PChainFunction::g();
        let mut acc = PChainFunction::default();
        for k in 0..n {
            acc.add_scaled(&term, 1.0);
            if k + 1 < n {
                term = term.apply_q(&mut self.cache)?;
            }
        }
        Ok(acc)
    }

    /// `‖V_n g‖²` from the algebra against `½σ_{2n-1}² - σ_{n-1}² + ½‖g‖²`.
    pub fn vnorm_identity_check(&mut self, n: u64) -> Result<TwoWay> {
        if n == 0 {
            return Err(Error::Parameter("n must be at least 1".into()));
        }
        let v = self.v_g(n)?;
        let lhs = v.inner(&v, &mut self.cache)?;
        let table = self.ensure_table(2 * n as usize)?;
        let rhs = 0.5 * table.sigma_sq(2 * n - 1)? - table.sigma_sq(n - 1)? + 0.5 * table.c(0);
        Ok(TwoWay::new(lhs, rhs))
    }

    /// [`Analyzer::vnorm_identity_check`] for every `n ≤ n_max`, building `V_n g` incrementally.
    pub fn vnorm_identity_sweep(&mut self, n_max: u64) -> Result<Vec<TwoWay>> {
        let table = self.ensure_table(2 * n_max as usize)?.clone();
        let mut term = PChainFunction::g();
        let mut v = PChainFunction::default();
        let mut out = Vec::with_capacity(n_max as usize);
        for n in 1..=n_max {
            v.add_scaled(&term, 1.0);
            let lhs = v.inner(&v, &mut self.cache)?;
            let rhs = 0.5 * table.sigma_sq(2 * n - 1)? - table.sigma_sq(n - 1)? + 0.5 * table.c(0);
            out.push(TwoWay::new(lhs, rhs));
            if n < n_max {
                term = term.apply_q(&mut self.cache)?;
            }
        }
        Ok(out)
    }

    /// Spectral-integral form of `⟨g, V̄_n g⟩` against the autocovariance sum.
    pub fn spectral_integral_check(&mut self, n: u64) -> Result<TwoWay> {
        if n == 0 {
            return Err(Error::Parameter("n must be at least 1".into()));
        }
        let mu = SpectralMeasure::of(&self.spec)?;
        let quad = mu.integrate(|l| ramp_geometric_sum(n, l), 0.0, 1.0, Tolerance::new(1e-12, 1e-12))?;
        let sum = self.ensure_table(n as usize)?.v_bar_inner(n)?;
        Ok(TwoWay::new(quad, sum))
    }

    fn lag_differences(&mut self, top: usize) -> Result<Vec<f64>> {
        let t = self.ensure_table(top + 3)?;
        Ok((0..=top).map(|s| t.c(s) - t.c(s + 2)).collect())
    }

    fn require_odd(&self) -> Result<()> {
        if !self.spec.flags().odd_setting() {
            return Err(Error::Unsupported("requires odd g with symmetric p and ν".into()));
        }
        Ok(())
    }

    /// `⟨D_{m,1}, D_{n,1}⟩ = ⟨(I - Q²) V̄_n g, V̄_m g⟩`.
    pub fn d_inner(&mut self, m: u64, n: u64) -> Result<f64> {
        self.require_odd()?;
        if m == 0 || n == 0 {
            return Err(Error::Parameter("m and n must be at least 1".into()));
        }
        let d = self.lag_differences((n + m - 2) as usize)?;
        Ok(ramp_cross_inner(n, m, &d))
    }

    /// Same inner product as a spectral integral `∫ (1-λ²) V̄_n(λ) V̄_m(λ) dμ_g`.
    pub fn d_inner_spectral(&self, m: u64, n: u64) -> Result<f64> {
        let mu = SpectralMeasure::of(&self.spec)?;
        mu.integrate(
            |l| (1.0 - l * l) * ramp_geometric_sum(n, l) * ramp_geometric_sum(m, l),
            0.0,
            1.0,
            Tolerance::new(1e-12, 1e-12),
        )
    }

    /// `‖D_{n,1}‖²`.
    pub fn d_norm_sq(&mut self, n: u64) -> Result<f64> {
        self.d_inner(n, n)
    }

    /// `‖D_{n,1}/√ℓ(n) - D_{m,1}/√ℓ(m)‖²`.
    pub fn remark3_distance(&mut self, m: u64, n: u64) -> Result<f64> {
        if m == n {
            if m == 0 {
                return Err(Error::Parameter("m and n must be at least 1".into()));
            }
            return Ok(0.0);
        }
        let (ln, lm) = (self.ell(n)?, self.ell(m)?);
        let dn = self.d_norm_sq(n)?;
        let dm = self.d_norm_sq(m)?;
        let dmn = self.d_inner(m, n)?;
        Ok(dn / ln + dm / lm - 2.0 * dmn / (lm * ln).sqrt())
    }

    /// `σ_n(Q^j g)²`, whose autocovariances are `c_{k+2j}`.
    pub fn sigma_shifted(&mut self, j: u64, n: u64) -> Result<f64> {
        self.require_odd()?;
        if n == 0 {
            return Ok(0.0);
        }
        let shift = 2 * j as usize;
        let t = self.ensure_table(n as usize + shift)?;
        let mut acc = Neumaier::new();
        for k in 1..n as usize {
            acc.add((n as usize - k) as f64 * t.c(k + shift));
        }
        Ok(n as f64 * t.c(shift) + 2.0 * acc.value())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_chain, BuiltinChain};

    fn analyzer(v: BuiltinChain) -> Analyzer {
        Analyzer::new(&build_chain(v).unwrap())
    }

    #[test]
    fn apply_q_on_g_is_p_times_g() {
        let mut an = analyzer(BuiltinChain::Example1);
        let qg = PChainFunction::g().apply_q(an.cache()).unwrap();
        assert_eq!(qg.a(), &[0.0, 1.0]);
        assert!(qg.is_pure_g());
        assert_eq!(qg.max_degree(), 1);
    }

    #[test]
    fn apply_q_fixes_constants() {
        let mut an = analyzer(BuiltinChain::Example1);
        let spec = an.spec().clone();
        let one = PChainFunction::constant(1.0);
        let q1 = one.apply_q(an.cache()).unwrap();
        assert_eq!(q1.max_degree(), 1);
        for w in [1.0, -3.0, 40.0] {
            assert!((q1.eval(&spec, w) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn apply_q_constant_p() {
        let mut an = analyzer(BuiltinChain::ConstantP { c: 0.5 });
        let spec = an.spec().clone();
        let qg = PChainFunction::g().apply_q(an.cache()).unwrap();
        assert_eq!(qg.eval(&spec, 1.0), 0.5);
        assert_eq!(qg.eval(&spec, -1.0), -0.5);
    }

    #[test]
    fn apply_q_matches_pointwise_kernel_on_mixed_function() {
        // f = 2g + 3p g - 1 + 0.5 p²
        let mut an = analyzer(BuiltinChain::StableExample { alpha: 1.5 });
        let spec = an.spec().clone();
        let f = PChainFunction::new(vec![2.0, 3.0], vec![-1.0, 0.0, 0.5]);
        let qf = f.apply_q(an.cache()).unwrap();
        let nu_f = spec.expect(Measure::Nu, |w| f.eval(&spec, w)).unwrap();
        for w in [1.0, 1.7, -2.5, 30.0] {
            let direct = spec.apply_q_pointwise(f.eval(&spec, w), nu_f, w);
            assert!((qf.eval(&spec, w) - direct).abs() < 1e-9, "w={w}");
        }
    }

    #[test]
    fn example1_autocovariances() {
        let mut an = analyzer(BuiltinChain::Example1);
        assert_eq!(an.autocovariance(0).unwrap(), 1.0);
        let c1 = an.autocovariance(1).unwrap();
        assert!((c1 - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((c1 - 0.6321206).abs() < 1e-7);
    }

    #[test]
    fn constant_p_autocovariance_against_matrix_powers() {
        // brute force: two-state transition matrix [[c+(1-c)/2, (1-c)/2], ...]
        let c = 0.5;
        let stay = c + (1.0 - c) / 2.0;
        let mv = |v: [f64; 2]| [stay * v[0] + (1.0 - stay) * v[1], (1.0 - stay) * v[0] + stay * v[1]];
        let mut h = [1.0, -1.0];
        for _ in 0..3 {
            h = mv(h);
        }
        let brute = 0.5 * (h[0] - h[1]);
        let mut an = analyzer(BuiltinChain::ConstantP { c });
        assert!((an.autocovariance(3).unwrap() - brute).abs() < 1e-15);
        assert_eq!(brute, 0.125);
    }

    #[test]
    fn algebra_route_matches_moment_route() {
        let spec = build_chain(BuiltinChain::Example1).unwrap();
        let mut cache = MomentCache::new(&spec);
        let g = PChainFunction::g();
        let mut f = g.clone();
        for k in 0..6 {
            let via_algebra = g.inner(&f, &mut cache).unwrap();
            let closed = spec.pi_p_moment_closed(k).unwrap();
            assert!((via_algebra - closed).abs() < 1e-14);
            f = f.apply_q(&mut cache).unwrap();
        }
    }

    #[test]
    fn sigma_sq_small_cases() {
        let mut an = analyzer(BuiltinChain::Example1);
        assert_eq!(an.sigma_sq(1).unwrap(), 1.0);
        let s2 = an.sigma_sq(2).unwrap();
        let by_hand = 2.0 + 2.0 * (1.0 - (-1.0f64).exp());
        assert!((s2 - by_hand).abs() < 1e-14);
        assert!((s2 - 3.2642411).abs() < 1e-7);
    }

    #[test]
    fn sigma_sq_constant_p_tends_to_kappa() {
        let mut an = analyzer(BuiltinChain::ConstantP { c: 0.5 });
        let n = 10_000;
        let r = an.sigma_sq(n).unwrap() / n as f64;
        // geometric closed form: 2 Σ_{k<n} c^k (1 - k/n) - 1
        let c: f64 = 0.5;
        let closed = 2.0 * ramp_geometric_sum(n, c) - 1.0;
        assert!((r - closed).abs() < 1e-12);
        assert!((r - 3.0).abs() < 0.03);
    }

    #[test]
    fn two_path_sigma_sq_agree() {
        for v in
            [BuiltinChain::Example1, BuiltinChain::ConstantP { c: 0.5 }, BuiltinChain::StableExample { alpha: 1.5 }]
        {
            let mut an = analyzer(v);
            let t = an.ensure_table(1001).unwrap().clone();
            for n in 1..=1000 {
                let a = t.sigma_sq(n).unwrap();
                let b = t.sigma_sq_direct(n).unwrap();
                assert!((a - b).abs() <= 1e-10 * b.abs(), "{v:?} n={n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn horizon_guard() {
        let mut an = analyzer(BuiltinChain::Example1);
        assert!(matches!(an.sigma_sq(MAX_HORIZON + 1), Err(Error::Horizon(_))));
    }

    #[test]
    fn kappa_values() {
        let k = kappa(&build_chain(BuiltinChain::ConstantP { c: 0.5 }).unwrap()).unwrap();
        assert_eq!(k, Kappa::Finite(3.0));
        let k = kappa(&build_chain(BuiltinChain::ConstantP { c: 0.9 }).unwrap()).unwrap();
        match k {
            Kappa::Finite(v) => assert!((v - 19.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        assert!(kappa(&build_chain(BuiltinChain::Example1).unwrap()).unwrap().is_divergent());
    }

    #[test]
    fn v_bar_small_n() {
        let mut an = analyzer(BuiltinChain::Example1);
        assert_eq!(an.v_bar_g(1).unwrap(), PChainFunction::g());
        assert_eq!(an.v_bar_g(2).unwrap().a(), &[1.0, 0.5]);
        for n in [1, 2, 7, 40] {
            let fast = an.v_bar_g(n).unwrap();
            let slow = an.v_bar_g_iterated(n).unwrap();
            assert_eq!(fast.a().len(), slow.a().len());
            for (x, y) in fast.a().iter().zip(slow.a()) {
                assert!((x - y).abs() < 1e-15);
            }
            assert!(slow.is_pure_g());
        }
        assert!(an.v_bar_g(MAX_COEFFICIENTS + 1).is_err());
    }

    #[test]
    fn v_bar_inner_two_paths() {
        let mut an = analyzer(BuiltinChain::Example1);
        let n = 1000;
        let vb = an.v_bar_g(n).unwrap();
        let via_algebra = PChainFunction::g().inner(&vb, an.cache()).unwrap();
        let via_table = an.ensure_table(n as usize).unwrap().v_bar_inner(n).unwrap();
        assert!((via_algebra - via_table).abs() < 1e-10);
    }

    #[test]
    fn vnorm_identity_small() {
        let mut an = analyzer(BuiltinChain::Example1);
        let r = an.vnorm_identity_check(1).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-15 && (r.rhs - 1.0).abs() < 1e-15);
        let mut an = analyzer(BuiltinChain::ConstantP { c: 0.5 });
        let r = an.vnorm_identity_check(50).unwrap();
        assert!(r.deviation < 1e-12, "{r:?}");
    }

    #[test]
    fn ramp_cross_inner_matches_double_loop() {
        let d: Vec<f64> = (0..200).map(|s| 1.0 / (1.0 + s as f64) + (s as f64 * 0.3).sin()).collect();
        for (n, m) in [(1u64, 1u64), (1, 5), (5, 1), (7, 13), (40, 40), (99, 3)] {
            let mut acc = 0.0;
            for j in 0..n {
                for k in 0..m {
                    acc += (1.0 - j as f64 / n as f64) * (1.0 - k as f64 / m as f64) * d[(j + k) as usize];
                }
            }
            let fast = ramp_cross_inner(n, m, &d);
            assert!((fast - acc).abs() < 1e-11 * acc.abs().max(1.0), "({n},{m}) {fast} vs {acc}");
        }
    }

    #[test]
    fn d_inner_algebra_vs_spectral() {
        let mut an = analyzer(BuiltinChain::Example1);
        for (m, n) in [(1, 1), (3, 10), (50, 400)] {
            let a = an.d_inner(m, n).unwrap();
            let b = an.d_inner_spectral(m, n).unwrap();
            assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "({m},{n}) {a} vs {b}");
        }
    }

    #[test]
    fn remark3_diagonal_zero() {
        let mut an = analyzer(BuiltinChain::Example1);
        assert_eq!(an.remark3_distance(17, 17).unwrap(), 0.0);
    }

    #[test]
    fn sigma_shifted_identities() {
        let mut an = analyzer(BuiltinChain::Example1);
        let a = an.sigma_shifted(0, 500).unwrap();
        let b = an.sigma_sq(500).unwrap();
        assert!((a - b).abs() < 1e-10 * b);
        let mut an = analyzer(BuiltinChain::ConstantP { c: 0.5 });
        let ratio = an.sigma_shifted(2, 1000).unwrap() / an.sigma_sq(1000).unwrap();
        assert!((ratio - 0.5f64.powi(4)).abs() < 1e-3);
    }

    #[test]
    fn spectral_measure_mass_and_moments() {
        for v in [BuiltinChain::Example1, BuiltinChain::ConstantP { c: 0.5 }] {
            let spec = build_chain(v).unwrap();
            let mu = SpectralMeasure::of(&spec).unwrap();
            assert!((mu.total_mass().unwrap() - 1.0).abs() < 1e-10);
            for k in 0..=8 {
                let m = mu.moment(k).unwrap();
                let c = spec.pi_p_moment_closed(k as u64).unwrap();
                assert!((m - c).abs() < 1e-8, "{v:?} k={k}");
            }
        }
    }

    #[test]
    fn spectral_integral_small_cases() {
        let mut an = analyzer(BuiltinChain::Example1);
        let r = an.spectral_integral_check(1).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-12 && (r.rhs - 1.0).abs() < 1e-15);
        let mut an = analyzer(BuiltinChain::ConstantP { c: 0.5 });
        let r = an.spectral_integral_check(10).unwrap();
        assert!(r.deviation < 1e-12);
        assert!((r.lhs - ramp_geometric_sum(10, 0.5)).abs() < 1e-15);
    }
}
