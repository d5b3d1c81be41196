//! The jump-or-stay chain family: from state `w` the chain stays put with
//! probability `p(w)` and otherwise redraws its state from a fixed law `ν`.
//!
//! Such a kernel is reversible with respect to `π ∝ ν / (1 - p)` whenever
//! `θ = ∫ dν/(1-p)` is finite. The built-in instances live on `|w| ≥ 1`
//! (continuous, symmetric) or on the two points `{-1, +1}`.
//!
//! Continuous integrals are taken in the variable `x = 1/|w| ∈ (0, 1]`,
//! followed by a power map `x = t^{1/(α-1)}` for the Pareto-type chains, so
//! the Gauss–Kronrod rule only ever sees bounded, nearly smooth integrands.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::quadrature::{self, Tolerance};

/// Tolerance used for every chain-level integral.
pub const CHAIN_TOLERANCE: Tolerance = Tolerance::new(1e-10, 1e-10);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum BuiltinChain {
    /// `p(w) = e^{-1/|w|}`, `π(dw) = dw / 2w²` on `|w| ≥ 1`, `θ = e`.
    Example1,
    /// Same `p`, `π(dw) = (α-1) dw / 2|w|^α` on `|w| ≥ 1`, `1 < α < 2`.
    StableExample { alpha: f64 },
    /// `p ≡ c` on `{-1, +1}` with `ν = π` uniform; the finite-variance control.
    ConstantP { c: f64 },
}

impl BuiltinChain {
    pub fn name(&self) -> &'static str {
        match self {
            BuiltinChain::Example1 => "example1",
            BuiltinChain::StableExample { .. } => "stable",
            BuiltinChain::ConstantP { .. } => "constant_p",
        }
    }

    pub fn params_string(&self) -> String {
        match self {
            BuiltinChain::Example1 => String::new(),
            BuiltinChain::StableExample { alpha } => format!("alpha={alpha:.17e}"),
            BuiltinChain::ConstantP { c } => format!("c={c:.17e}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymmetryFlags {
    pub p_symmetric: bool,
    pub nu_symmetric: bool,
    pub g_odd: bool,
}

impl SymmetryFlags {
    /// The setting in which `Q^k g = p^k g` and the spectral measure of `g`
    /// is the image of `g² dπ` under `p`.
    pub fn odd_setting(&self) -> bool {
        self.p_symmetric && self.nu_symmetric && self.g_odd
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    Pi,
    Nu,
}

/// Closed real interval; `lo == hi` is a single point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn full() -> Self {
        Self { lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }

    pub fn point(w: f64) -> Self {
        Self { lo: w, hi: w }
    }

    pub fn contains(&self, w: f64) -> bool {
        self.lo <= w && w <= self.hi
    }

    fn indicator(self) -> impl Fn(f64) -> f64 {
        move |w| if self.contains(w) { 1.0 } else { 0.0 }
    }
}

/// One validated member of the chain family. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    variant: BuiltinChain,
    theta: f64,
    gamma_alpha: Option<f64>,
    flags: SymmetryFlags,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChainDocument {
    #[serde(flatten)]
    pub variant: BuiltinChain,
    pub theta: f64,
    pub checksum: String,
}

/// `γ_α = ∫₀¹ y^{α-2} (1 - e^{-y}) dy`.
pub fn gamma_alpha(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let est =
        quadrature::integrate(|y: f64| y.powf(alpha - 2.0) * -(-y).exp_m1(), 0.0, 1.0, Tolerance::new(1e-14, 1e-13))?;
    Ok(est.value)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(Error::Parameter(format!("alpha must lie in (1, 2), got {alpha}")));
    }
    Ok(())
}

/// Construct and validate a built-in chain.
pub fn build_chain(variant: BuiltinChain) -> Result<ChainSpec> {
    let (gamma, closed_theta) = match variant {
        BuiltinChain::Example1 => (None, std::f64::consts::E),
        BuiltinChain::StableExample { alpha } => {
            let g = gamma_alpha(alpha)?;
            (Some(g), 1.0 / (g * (alpha - 1.0)))
        }
        BuiltinChain::ConstantP { c } => {
            if !(c > 0.0 && c < 1.0) {
                return Err(Error::Parameter(format!("c must lie in (0, 1), got {c}")));
            }
            (None, 1.0 / (1.0 - c))
        }
    };
    let mut spec = ChainSpec {
        variant,
        theta: closed_theta,
        gamma_alpha: gamma,
        flags: SymmetryFlags { p_symmetric: true, nu_symmetric: true, g_odd: true },
    };
    let theta_quad = spec.expect(Measure::Nu, |w| 1.0 / spec.one_minus_p(w))?;
    if (theta_quad - closed_theta).abs() > 1e-8 * closed_theta {
        return Err(Error::Validation(format!("theta by quadrature {theta_quad} disagrees with {closed_theta}")));
    }
    spec.theta = closed_theta;
    spec.validate_invariants()?;
    Ok(spec)
}

impl ChainSpec {
    pub fn variant(&self) -> BuiltinChain {
        self.variant
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn gamma_alpha(&self) -> Option<f64> {
        self.gamma_alpha
    }

    pub fn flags(&self) -> SymmetryFlags {
        self.flags
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.variant, BuiltinChain::ConstantP { .. })
    }

    /// `|g| ≡ 1` on the state space (true for every built-in).
    pub fn g_is_unit(&self) -> bool {
        true
    }

    pub fn g_sup(&self) -> f64 {
        1.0
    }

    pub fn in_state_space(&self, w: f64) -> bool {
        if self.is_discrete() {
            w == 1.0 || w == -1.0
        } else {
            w.abs() >= 1.0 && !w.is_nan()
        }
    }

    #[inline]
    pub fn log_p(&self, w: f64) -> f64 {
        match self.variant {
            BuiltinChain::ConstantP { c } => c.ln(),
            _ => -1.0 / w.abs(),
        }
    }

    #[inline]
    pub fn p(&self, w: f64) -> f64 {
        match self.variant {
            BuiltinChain::ConstantP { c } => c,
            _ => (-1.0 / w.abs()).exp(),
        }
    }

    #[inline]
    pub fn one_minus_p(&self, w: f64) -> f64 {
        match self.variant {
            BuiltinChain::ConstantP { c } => 1.0 - c,
            _ => -(-1.0 / w.abs()).exp_m1(),
        }
    }

    /// `sup_w (1 - p(w))`, attained at `|w| = 1` for the continuous chains.
    pub fn sup_one_minus_p(&self) -> f64 {
        match self.variant {
            BuiltinChain::ConstantP { c } => 1.0 - c,
            _ => -(-1.0f64).exp_m1(),
        }
    }

    #[inline]
    pub fn g(&self, w: f64) -> f64 {
        if w > 0.0 {
            1.0
        } else if w < 0.0 {
            -1.0
        } else {
            0.0
        }
    }

    /// Density of `π` (Lebesgue) or its point mass for the two-point chain.
    pub fn pi_density(&self, w: f64) -> f64 {
        if !self.in_state_space(w) {
            return 0.0;
        }
        let a = w.abs();
        match self.variant {
            BuiltinChain::Example1 => 0.5 / (a * a),
            BuiltinChain::StableExample { alpha } => 0.5 * (alpha - 1.0) * a.powf(-alpha),
            BuiltinChain::ConstantP { .. } => 0.5,
        }
    }

    /// Density of `ν` written from its own closed form, not from `π`.
    pub fn nu_density(&self, w: f64) -> f64 {
        if !self.in_state_space(w) {
            return 0.0;
        }
        let a = w.abs();
        let q = self.one_minus_p(w);
        match self.variant {
            BuiltinChain::Example1 => std::f64::consts::E * q / (2.0 * a * a),
            BuiltinChain::StableExample { alpha } => {
                let g = self.gamma_alpha.expect("stable chain carries gamma_alpha");
                q / (2.0 * g * a.powf(alpha))
            }
            BuiltinChain::ConstantP { .. } => 0.5,
        }
    }

    pub fn density(&self, measure: Measure, w: f64) -> f64 {
        match measure {
            Measure::Pi => self.pi_density(w),
            Measure::Nu => self.nu_density(w),
        }
    }

    /// `x(t)` and `dx/dt` for the integration variable `t ∈ (0, 1]`.
    #[inline]
    fn x_of_t(&self, t: f64) -> (f64, f64) {
        match self.variant {
            BuiltinChain::StableExample { alpha } => {
                let x = t.powf(1.0 / (alpha - 1.0));
                (x, x / ((alpha - 1.0) * t))
            }
            _ => (t, 1.0),
        }
    }

    fn t_of_x(&self, x: f64) -> f64 {
        match self.variant {
            BuiltinChain::StableExample { alpha } => x.powf(alpha - 1.0),
            _ => x,
        }
    }

    /// Integrand in `t` for `∫ f dμ` over `|w| ≥ 1`.
    #[inline]
    fn t_integrand<F: Fn(f64) -> f64>(&self, measure: Measure, f: &F, t: f64) -> f64 {
        let (x, dx) = self.x_of_t(t);
        if !(x.is_normal() && dx.is_finite()) {
            return 0.0;
        }
        let w = 1.0 / x;
        let jac = dx / (x * x);
        let plus = f(w) * self.density(measure, w);
        let minus = f(-w) * self.density(measure, -w);
        (plus + minus) * jac
    }

    /// `∫ f dμ` at the chain tolerance.
    pub fn expect<F: Fn(f64) -> f64>(&self, measure: Measure, f: F) -> Result<f64> {
        self.expect_with(measure, f, None, CHAIN_TOLERANCE)
    }

    /// `∫ f dμ` with subdivision clustered near `x = 1/|w| ≈ focus`.
    pub fn expect_with<F: Fn(f64) -> f64>(
        &self,
        measure: Measure,
        f: F,
        focus: Option<f64>,
        tol: Tolerance,
    ) -> Result<f64> {
        if self.is_discrete() {
            let d = |w: f64| self.density(measure, w);
            return Ok(f(1.0) * d(1.0) + f(-1.0) * d(-1.0));
        }
        let pts = match focus {
            Some(x) => quadrature::geometric_breaks(0.0, 1.0, self.t_of_x(x)),
            None => vec![0.0, 1.0],
        };
        let est = quadrature::integrate_with_breaks(|t| self.t_integrand(measure, &f, t), &pts, tol)?;
        Ok(est.value)
    }

    /// `∫ p^k dπ` when a closed form is available.
    pub fn pi_p_moment_closed(&self, k: u64) -> Option<f64> {
        match self.variant {
            BuiltinChain::Example1 => {
                if k == 0 {
                    Some(1.0)
                } else {
                    let kf = k as f64;
                    Some(-(-kf).exp_m1() / kf)
                }
            }
            BuiltinChain::ConstantP { c } => Some(c.powi(k as i32)),
            BuiltinChain::StableExample { alpha } => {
                if k == 0 {
                    return Some(1.0);
                }
                // (α-1) k^{1-α} γ(α-1, k), lower incomplete gamma
                let a = alpha - 1.0;
                let kf = k as f64;
                let lower = statrs::function::gamma::gamma_lr(a, kf) * statrs::function::gamma::gamma(a);
                Some(a * kf.powf(-a) * lower)
            }
        }
    }

    fn validate_invariants(&self) -> Result<()> {
        let tol = 1e-10;
        let nu_mass = self.expect(Measure::Nu, |_| 1.0)?;
        let pi_mass = self.expect(Measure::Pi, |_| 1.0)?;
        let g_mean = self.expect(Measure::Pi, |w| self.g(w))?;
        if (nu_mass - 1.0).abs() > tol {
            return Err(Error::Validation(format!("nu has mass {nu_mass}")));
        }
        if (pi_mass - 1.0).abs() > tol {
            return Err(Error::Validation(format!("pi has mass {pi_mass}")));
        }
        if g_mean.abs() > tol {
            return Err(Error::Validation(format!("g has pi-mean {g_mean}")));
        }
        if self.flags.odd_setting() {
            for j in 0..=8 {
                let v = self.expect(Measure::Nu, |w| self.p(w).powi(j) * self.g(w))?;
                if v.abs() > tol {
                    return Err(Error::Validation(format!("∫p^{j} g dν = {v}")));
                }
            }
        }
        Ok(())
    }

    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.variant.name().as_bytes());
        h.update(b"|");
        h.update(self.variant.params_string().as_bytes());
        hex::encode(h.finalize())
    }

    pub fn document(&self) -> ChainDocument {
        ChainDocument { variant: self.variant, theta: self.theta, checksum: self.checksum() }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.document())?)
    }

    /// Rebuild a chain from its JSON document, checking the checksum.
    pub fn from_json(s: &str) -> Result<ChainSpec> {
        let doc: ChainDocument = serde_json::from_str(s)?;
        let spec = build_chain(doc.variant)?;
        if spec.checksum() != doc.checksum {
            return Err(Error::Validation("checksum does not match variant and params".into()));
        }
        Ok(spec)
    }

    /// `(Qh)(w) = p(w) h(w) + (1 - p(w)) ∫ h dν`, given `∫ h dν`.
    #[inline]
    pub fn apply_q_pointwise(&self, h_at_w: f64, nu_h: f64, w: f64) -> f64 {
        self.p(w) * h_at_w + self.one_minus_p(w) * nu_h
    }
}

/// A bounded test function for the reversibility check.
pub struct TestFunction {
    pub name: String,
    f: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl TestFunction {
    pub fn new(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), f: Box::new(f) }
    }

    pub fn eval(&self, w: f64) -> f64 {
        (self.f)(w)
    }

    /// `sign`, `1/w`, `1[1,2]`, `w·1{|w| ≤ 10}`.
    pub fn defaults() -> Vec<TestFunction> {
        vec![
            TestFunction::new("sign", |w: f64| w.signum()),
            TestFunction::new("inverse", |w: f64| 1.0 / w),
            TestFunction::new("indicator_1_2", |w: f64| if (1.0..=2.0).contains(&w) { 1.0 } else { 0.0 }),
            TestFunction::new("clipped_identity", |w: f64| if w.abs() <= 10.0 { w } else { 0.0 }),
        ]
    }
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestFunction").field("name", &self.name).finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReversibilityReport {
    pub max_deviation: f64,
    pub worst_pair: (String, String),
    pub tolerance: f64,
    pub pass: bool,
}

pub const REVERSIBILITY_TOLERANCE: f64 = 1e-8;

/// `max_{f,h} |⟨f, Qh⟩_π - ⟨Qf, h⟩_π|` over the supplied test functions.
pub fn validate_reversibility(spec: &ChainSpec, fns: &[TestFunction]) -> Result<ReversibilityReport> {
    validate_reversibility_under(spec, Measure::Pi, fns)
}

/// Same check with the inner products taken under `reference` instead of `π`.
pub fn validate_reversibility_under(
    spec: &ChainSpec,
    reference: Measure,
    fns: &[TestFunction],
) -> Result<ReversibilityReport> {
    if fns.len() < 4 {
        return Err(Error::Parameter("at least four test functions are required".into()));
    }
    let nu_means = fns.iter().map(|t| spec.expect(Measure::Nu, |w| t.eval(w))).collect::<Result<Vec<_>>>()?;
    let mut report = ReversibilityReport {
        max_deviation: 0.0,
        worst_pair: (fns[0].name.clone(), fns[0].name.clone()),
        tolerance: REVERSIBILITY_TOLERANCE,
        pass: true,
    };
    for (i, f) in fns.iter().enumerate() {
        for (j, h) in fns.iter().enumerate().skip(i + 1) {
            let f_qh = spec.expect(reference, |w| f.eval(w) * spec.apply_q_pointwise(h.eval(w), nu_means[j], w))?;
            let qf_h = spec.expect(reference, |w| spec.apply_q_pointwise(f.eval(w), nu_means[i], w) * h.eval(w))?;
            let dev = (f_qh - qf_h).abs();
            if dev > report.max_deviation {
                report.max_deviation = dev;
                report.worst_pair = (f.name.clone(), h.name.clone());
            }
        }
    }
    report.pass = report.max_deviation < REVERSIBILITY_TOLERANCE;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarityRow {
    pub interval: Interval,
    /// `∫ Q(w; B) π(dw)`
    pub pushed: f64,
    /// `π(B)`
    pub direct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarityReport {
    pub rows: Vec<StationarityRow>,
    pub max_deviation: f64,
    pub pass: bool,
}

pub const STATIONARITY_TOLERANCE: f64 = 1e-8;

/// Check `∫ Q(w; B) π(dw) = π(B)` for each interval `B`.
pub fn stationarity_check(spec: &ChainSpec, sets: &[Interval]) -> Result<StationarityReport> {
    let mut rows = Vec::with_capacity(sets.len());
    let mut max_deviation: f64 = 0.0;
    for &b in sets {
        let ind = b.indicator();
        let nu_b = spec.expect(Measure::Nu, &ind)?;
        let pushed = spec.expect(Measure::Pi, |w| spec.p(w) * ind(w) + spec.one_minus_p(w) * nu_b)?;
        let direct = spec.expect(Measure::Pi, &ind)?;
        max_deviation = max_deviation.max((pushed - direct).abs());
        rows.push(StationarityRow { interval: b, pushed, direct });
    }
    Ok(StationarityReport { rows, max_deviation, pass: max_deviation < STATIONARITY_TOLERANCE })
}
