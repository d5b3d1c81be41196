#![allow(clippy::excessive_precision)]

//! Globally adaptive Gauss–Kronrod (10/21) quadrature on finite intervals.
//!
//! Every integral in the crate is pushed onto a finite interval before it
//! gets here (the `x = 1/w` map for the chains, explicit truncation for the
//! Fourier inversions), so no infinite-range rule is needed.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the odd-indexed Kronrod nodes.
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel }
    }

    /// Pure relative control, for integrals whose magnitude is unknown and may be tiny.
    pub const fn relative(rel: f64) -> Self {
        Self { abs: 1e-300, rel }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::new(1e-10, 1e-10)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut resk = fc * WGK[10];
    let mut resg = 0.0;
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let reskh = resk * 0.5;
    let mut resasc = WGK[10] * (fc - reskh).abs();
    let mut resabs = WGK[10] * fc.abs();
    for j in 0..10 {
        resasc += WGK[j] * ((fv1[j] - reskh).abs() + (fv2[j] - reskh).abs());
        resabs += WGK[j] * (fv1[j].abs() + fv2[j].abs());
    }
    let value = resk * half;
    resasc *= half.abs();
    resabs *= half.abs();
    let mut error = ((resk - resg) * half).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * resabs);
    }
    Segment { a, b, value, error }
}

const MAX_SEGMENTS: usize = 20_000;

/// Integrate `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate> {
    integrate_with_breaks(f, &[a, b], tol)
}

/// Integrate over `[points[0], points[last]]`, seeding the subdivision with the
/// given (sorted) breakpoints. Kinks, jumps and scale changes belong here.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(f: F, points: &[f64], tol: Tolerance) -> Result<Estimate> {
    if points.len() < 2 {
        return Ok(Estimate { value: 0.0, error: 0.0, evaluations: 0 });
    }
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    for w in points.windows(2) {
        if w[1] > w[0] {
            heap.push(kronrod21(&f, w[0], w[1]));
            evaluations += 21;
        }
    }
    let totals = |heap: &BinaryHeap<Segment>| heap.iter().fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
    let (mut value, mut error) = totals(&heap);
    loop {
        if !value.is_finite() {
            return Err(Error::Quadrature { context: "non-finite integrand".into(), estimate: value, error });
        }
        if error <= tol.target(value) {
            let (value, error) = totals(&heap);
            if error <= tol.target(value) {
                return Ok(Estimate { value, error, evaluations });
            }
        }
        if heap.len() >= MAX_SEGMENTS {
            return Err(Error::Quadrature {
                context: format!("subdivision limit of {MAX_SEGMENTS} reached"),
                estimate: value,
                error,
            });
        }
        let worst = heap.pop().expect("heap is nonempty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            let (value, error) = totals(&heap);
            return Err(Error::Quadrature {
                context: "interval shrank below machine resolution".into(),
                estimate: value,
                error,
            });
        }
        let left = kronrod21(&f, worst.a, mid);
        let right = kronrod21(&f, mid, worst.b);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        evaluations += 42;
        if heap.len() % 256 == 0 {
            (value, error) = totals(&heap);
        }
    }
}

/// Breakpoints on `[lo, hi]` clustered geometrically around `focus`, for
/// integrands like `e^{-kx}` whose mass lives at `x ≈ 1/k`.
pub fn geometric_breaks(lo: f64, hi: f64, focus: f64) -> Vec<f64> {
    let mut pts = vec![lo, hi];
    if focus > lo && focus < hi {
        let mut x = focus;
        while x < hi {
            pts.push(x);
            x *= 4.0;
        }
        let mut x = focus / 4.0;
        for _ in 0..12 {
            if x <= lo {
                break;
            }
            pts.push(x);
            x /= 4.0;
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}
