use std::f64::consts::{E, PI};

use revclt::limits::{
    c_alpha, normal_cdf, sine_integral_closed, sine_integral_oscillatory, HoldingLaw, StableRef, TailModel,
};
use revclt::rng::RngStream;
use revclt::simulate::{sample_block, NuSampler};
use revclt::{build_chain, Analyzer, BuiltinChain};

/// Symmetric α-stable draw with characteristic function `exp(-|t|^α)`
/// (Chambers–Mallows–Stuck).
fn cms(alpha: f64, rng: &mut RngStream) -> f64 {
    let v = PI * (rng.uniform_open() - 0.5);
    let w = -rng.uniform_open().ln();
    (alpha * v).sin() / v.cos().powf(1.0 / alpha) * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}

#[test]
fn stable_cdf_against_simulated_draws() {
    let alpha = 1.5;
    let reference = StableRef::new(alpha, 1.0).unwrap();
    let mut rng = RngStream::new(31, 0);
    let xs = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let mut below = [0u64; 5];
    let draws = 10_000_000u64;
    for _ in 0..draws {
        let x = cms(alpha, &mut rng);
        for (i, &t) in xs.iter().enumerate() {
            if x <= t {
                below[i] += 1;
            }
        }
    }
    for (i, &x) in xs.iter().enumerate() {
        let f = reference.cdf(x).unwrap();
        let emp = below[i] as f64 / draws as f64;
        let se = (f * (1.0 - f) / draws as f64).sqrt();
        assert!((emp - f).abs() < 3.0 * se, "x = {x}: {emp} vs {f}");
    }
}

#[test]
fn stable_cdf_shape() {
    let s = StableRef::for_chain(1.5).unwrap();
    let mut last = 0.0;
    for i in -40..=40 {
        let v = s.cdf(i as f64 * 0.5).unwrap();
        assert!(v >= last);
        last = v;
        let mirror = s.cdf(-(i as f64) * 0.5).unwrap();
        assert!((v + mirror - 1.0).abs() < 1e-10);
    }
    let far = s.cdf_detailed(1e6).unwrap();
    assert!(far.asymptotic && far.value < 1.0 && far.value > 1.0 - 1e-6);
    assert!(!s.cdf_detailed(3.0).unwrap().asymptotic);
    assert!(s.cdf(f64::NAN).is_err());
    assert!(StableRef::new(2.5, 1.0).is_err());
}

#[test]
fn c_alpha_two_evaluations() {
    let gap = (sine_integral_oscillatory(1.5).unwrap() - sine_integral_closed(1.5).unwrap()).abs();
    assert!(gap < 1e-8, "{gap}");
    let step = (c_alpha(1.5).unwrap() - c_alpha(1.5001).unwrap()).abs();
    assert!(step < 1e-2);
}

#[test]
fn normal_reference_values() {
    assert!((normal_cdf(0.0, 0.5, 1.0).unwrap() - 0.921_350_396_474_857_5).abs() < 1e-12);
    assert!((normal_cdf(1.0, 4.0, 1.0).unwrap() - 0.5).abs() < 1e-16);
    assert!(normal_cdf(0.0, -1.0, 0.0).is_err());
}

#[test]
fn single_step_block_probability_by_simulation() {
    let spec = build_chain(BuiltinChain::Example1).unwrap();
    let law = HoldingLaw::new(&spec).unwrap();
    let f1 = law.mass(1).unwrap();
    let exact = spec.expect(revclt::Measure::Nu, |w| spec.one_minus_p(w)).unwrap();
    assert!((f1 - exact).abs() < 1e-10);

    let mut rng = RngStream::new(32, 0);
    let mut nu = NuSampler::new();
    let blocks = 10_000_000u64;
    let ones = (0..blocks).filter(|_| sample_block(&spec, &mut nu, &mut rng).unwrap().delta_tau == 1).count();
    let emp = ones as f64 / blocks as f64;
    assert!((emp / f1 - 1.0).abs() < 0.01, "{emp} vs {f1}");
}

#[test]
fn example1_holding_law() {
    let spec = build_chain(BuiltinChain::Example1).unwrap();
    let law = HoldingLaw::new(&spec).unwrap();
    assert!((law.truncated_mean(10_000).unwrap() / E - 1.0).abs() < 0.01);

    let d2 = (1e4 * law.survival(100).unwrap() / E - 1.0).abs();
    let d3 = (1e6 * law.survival(1000).unwrap() / E - 1.0).abs();
    assert!(d3 < 0.05 && d3 < d2, "{d2} {d3}");

    let ratio = |y: f64| law.h_interp(y) / (2.0 * E * y.ln());
    assert!(ratio(1e4) > 0.8 && ratio(1e4) < 1.1);
    assert!((ratio(1e6) - 1.0).abs() < (ratio(1e3) - 1.0).abs());
    match law.tail() {
        Some(TailModel::PowerLaw { exponent, .. }) => assert!((exponent - 3.0).abs() < 1e-3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn gamma_normalisation() {
    let spec = build_chain(BuiltinChain::Example1).unwrap();
    let law = HoldingLaw::new(&spec).unwrap();
    let mut an = Analyzer::new(&spec);
    let mut last = f64::INFINITY;
    for m in [10_000u64, 100_000, 1_000_000] {
        let g = law.gamma_m(m).unwrap();
        assert!(((g * g) / (m as f64 * law.h_interp(g)) - 1.0).abs() < 1e-6);
        let r = g * g / (0.5 * E * an.sigma_sq(m).unwrap());
        assert!(r > 1.0 && r < last, "m = {m}: {r}");
        last = r;
    }
}

#[test]
fn geometric_holding_for_constant_p() {
    let c: f64 = 0.3;
    let law = HoldingLaw::new(&build_chain(BuiltinChain::ConstantP { c }).unwrap()).unwrap();
    for k in [1u64, 2, 10] {
        assert!((law.mass(k).unwrap() - c.powi(k as i32 - 1) * (1.0 - c)).abs() < 1e-14);
    }
    assert!((law.truncated_mean(200).unwrap() - 1.0 / (1.0 - c)).abs() < 1e-12);
    // Blocks have |Y| ≥ 1, so m H(1) < 1 leaves no admissible root.
    assert!(law.gamma_m(1).is_err());
    let g = law.gamma_m(100).unwrap();
    assert!((g * g / (100.0 * law.h_interp(g)) - 1.0).abs() < 1e-6);
}

#[test]
fn stable_block_tail() {
    let alpha = 1.5;
    let spec = build_chain(BuiltinChain::StableExample { alpha }).unwrap();
    let law = HoldingLaw::new(&spec).unwrap();
    let gamma_a = spec.gamma_alpha().unwrap();
    let g = statrs::function::gamma::gamma(alpha);
    let y = 1000u64;
    let v = law.survival(y).unwrap() * (y as f64).powf(alpha) * gamma_a / g;
    assert!((v - 1.0).abs() < 0.1, "{v}");
}
