use revclt::algebra::{ramp_cross_inner, Analyzer, Kappa, PChainFunction};
use revclt::diagnostics::slow_variation_report;
use revclt::{build_chain, BuiltinChain};

fn analyzer(chain: BuiltinChain) -> Analyzer {
    Analyzer::new(&build_chain(chain).unwrap())
}

/// `⟨g, P^k g⟩_π` for the two-state chain on `{-1, 1}` by explicit matrix powers.
fn two_state_autocovariance(c: f64, k: u32) -> f64 {
    let (stay, jump) = (c + (1.0 - c) / 2.0, (1.0 - c) / 2.0);
    let mut m = [[1.0, 0.0], [0.0, 1.0]];
    for _ in 0..k {
        m = [
            [m[0][0] * stay + m[0][1] * jump, m[0][0] * jump + m[0][1] * stay],
            [m[1][0] * stay + m[1][1] * jump, m[1][0] * jump + m[1][1] * stay],
        ];
    }
    let g = [-1.0, 1.0];
    let mut acc = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            acc += 0.5 * g[i] * m[i][j] * g[j];
        }
    }
    acc
}

#[test]
fn autocovariance_values() {
    let mut e1 = analyzer(BuiltinChain::Example1);
    assert!((e1.autocovariance(1).unwrap() - 0.632_120_558_828_557_7).abs() < 1e-13);
    for k in [2u64, 5, 40] {
        let closed = (1.0 - (-(k as f64)).exp()) / k as f64;
        assert!((e1.autocovariance(k).unwrap() - closed).abs() < 1e-14);
    }
    let mut cp = analyzer(BuiltinChain::ConstantP { c: 0.5 });
    assert!((cp.autocovariance(3).unwrap() - 0.125).abs() < 1e-15);
    for k in 0..12 {
        let brute = two_state_autocovariance(0.5, k);
        assert!((cp.autocovariance(k as u64).unwrap() - brute).abs() < 1e-14, "k = {k}");
    }
}

#[test]
fn q_acts_as_multiplication_by_p_on_g() {
    let mut an = analyzer(BuiltinChain::Example1);
    let qg = PChainFunction::g().apply_q(an.cache()).unwrap();
    assert!(qg.b().iter().all(|&b| b == 0.0));
    assert_eq!(qg.a(), &[0.0, 1.0]);
    let spec = build_chain(BuiltinChain::Example1).unwrap();
    for w in [1.0, -3.0, 40.0] {
        assert!((qg.eval(&spec, w) - spec.p(w) * spec.g(w)).abs() < 1e-15);
    }
}

#[test]
fn sigma_sq_small_n_and_constant_p_closed_form() {
    let mut e1 = analyzer(BuiltinChain::Example1);
    assert!((e1.sigma_sq(2).unwrap() - (2.0 + 2.0 * (1.0 - (-1.0f64).exp()))).abs() < 1e-13);

    let c: f64 = 0.5;
    let mut cp = analyzer(BuiltinChain::ConstantP { c });
    for n in [1u64, 7, 100, 10_000] {
        let nf = n as f64;
        let closed = nf * (1.0 + c) / (1.0 - c) - 2.0 * c * (1.0 - c.powi(n as i32)) / (1.0 - c).powi(2);
        let exact = cp.sigma_sq(n).unwrap();
        assert!((exact - closed).abs() < 1e-10 * closed, "n = {n}: {exact} vs {closed}");
    }
    assert!((cp.sigma_sq(10_000).unwrap() / 1e4 / 3.0 - 1.0).abs() < 0.01);
}

#[test]
fn prefix_and_double_sum_routes_agree() {
    let mut an = analyzer(BuiltinChain::Example1);
    an.ensure_table(2000).unwrap();
    for n in [1u64, 10, 999, 1000] {
        let a = an.table().sigma_sq(n).unwrap();
        let b = an.table().sigma_sq_direct(n).unwrap();
        assert!((a - b).abs() < 1e-10 * a, "n = {n}");
    }
}

#[test]
fn v_bar_inner_product_reconstructs_sigma() {
    let mut an = analyzer(BuiltinChain::Example1);
    let n = 1000;
    let v = an.v_bar_g(n).unwrap();
    let inner = PChainFunction::g().inner(&v, an.cache()).unwrap();
    let direct: f64 = (0..n).map(|k| (1.0 - k as f64 / n as f64) * an.autocovariance(k).unwrap()).sum();
    assert!((inner - direct).abs() < 1e-10 * direct);
    let sigma = n as f64 * (2.0 * inner - an.autocovariance(0).unwrap());
    assert!((sigma - an.sigma_sq(n).unwrap()).abs() < 1e-10 * sigma);
}

#[test]
fn v_norm_identity() {
    let mut e1 = analyzer(BuiltinChain::Example1);
    assert!(e1.vnorm_identity_check(1000).unwrap().relative() < 1e-9);
    let mut cp = analyzer(BuiltinChain::ConstantP { c: 0.5 });
    assert!(cp.vnorm_identity_check(50).unwrap().relative() < 1e-12);
}

#[test]
fn spectral_route_matches_autocovariances() {
    let mut e1 = analyzer(BuiltinChain::Example1);
    assert!(e1.spectral_integral_check(100).unwrap().relative() < 1e-6);
    for (m, n) in [(3u64, 7u64), (20, 50)] {
        let a = e1.d_inner(m, n).unwrap();
        let b = e1.d_inner_spectral(m, n).unwrap();
        assert!((a - b).abs() < 1e-6 * a.abs().max(1.0), "({m}, {n}): {a} vs {b}");
    }
}

#[test]
fn kappa_dichotomy() {
    match analyzer(BuiltinChain::ConstantP { c: 0.5 }).kappa().unwrap() {
        Kappa::Finite(v) => assert!((v - 3.0).abs() < 1e-6),
        other => panic!("{other:?}"),
    }
    assert!(analyzer(BuiltinChain::Example1).kappa().unwrap().is_divergent());
}

#[test]
fn ramp_cross_inner_against_double_sum() {
    let d: Vec<f64> = (0..60).map(|s| 1.0 / (1.0 + s as f64).powi(2)).collect();
    for (n, m) in [(5u64, 9u64), (30, 30), (17, 3)] {
        let mut brute = 0.0;
        for i in 0..n {
            for j in 0..m {
                brute += (1.0 - i as f64 / n as f64) * (1.0 - j as f64 / m as f64) * d[(i + j) as usize];
            }
        }
        assert!((ramp_cross_inner(n, m, &d) - brute).abs() < 1e-12 * brute);
        assert_eq!(ramp_cross_inner(n, m, &d), ramp_cross_inner(m, n, &d));
    }
}

#[test]
fn increment_norm_over_ell_rises_toward_one() {
    let mut an = analyzer(BuiltinChain::Example1);
    let v: Vec<f64> =
        [1_000u64, 10_000, 100_000, 1_000_000].iter().map(|&n| an.d_norm_sq(n).unwrap() / an.ell(n).unwrap()).collect();
    assert!(v.windows(2).all(|w| w[1] > w[0]), "{v:?}");
    assert!(v.iter().all(|&x| x > 0.8 && x <= 1.0), "{v:?}");
}

#[test]
fn fixed_m_distance_grows_slowly_with_n() {
    let mut an = analyzer(BuiltinChain::Example1);
    let limit = 1.0 + an.d_norm_sq(200).unwrap() / an.ell(200).unwrap();
    let d: Vec<f64> = [10_000u64, 100_000, 1_000_000].iter().map(|&n| an.remark3_distance(200, n).unwrap()).collect();
    assert!(d.windows(2).all(|w| w[1] > w[0]), "{d:?}");
    assert!(d.iter().all(|&x| x < limit));
    assert_eq!(an.remark3_distance(200, 200).unwrap(), 0.0);
}

#[test]
fn constant_ratio_diagonal_shrinks() {
    // With n = 100 m both normalised increments share most of their mass, so
    // the distance decreases in m.
    let mut an = analyzer(BuiltinChain::Example1);
    let d: Vec<f64> = [100u64, 1_000, 10_000].iter().map(|&m| an.remark3_distance(m, 100 * m).unwrap()).collect();
    assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
}

#[test]
fn shifted_variance_ratios() {
    let mut e1 = analyzer(BuiltinChain::Example1);
    let r: Vec<f64> = [1_000u64, 10_000, 100_000, 1_000_000]
        .iter()
        .map(|&n| e1.sigma_shifted(1, n).unwrap() / e1.sigma_sq(n).unwrap())
        .collect();
    assert!(r.windows(2).all(|w| w[1] > w[0]), "{r:?}");
    assert!(r.iter().all(|&x| x < 1.0));

    let c: f64 = 0.5;
    let mut cp = analyzer(BuiltinChain::ConstantP { c });
    let ratio = cp.sigma_shifted(2, 1000).unwrap() / cp.sigma_sq(1000).unwrap();
    assert!((ratio - c.powi(4)).abs() < 1e-3);
    assert!((cp.sigma_shifted(0, 1000).unwrap() - cp.sigma_sq(1000).unwrap()).abs() < 1e-9);
}

#[test]
fn slow_variation_of_ell() {
    let mut e1 = analyzer(BuiltinChain::Example1);
    e1.ensure_table(2_000_000).unwrap();
    let rows = slow_variation_report(e1.table(), &[1_000, 10_000, 100_000, 1_000_000]).unwrap();
    for r in &rows {
        assert!(r.ell_doubling > 1.0 && r.ell_doubling < 1.12, "{r:?}");
    }
    assert!(rows.windows(2).all(|w| w[1].ell_doubling < w[0].ell_doubling));
    let at_1e5 = &rows[2];
    let excess = at_1e5.ell_doubling - 1.0;
    let model = at_1e5.log_model - 1.0;
    assert!((excess / model - 1.0).abs() < 0.2, "{excess} vs {model}");

    let mut cp = analyzer(BuiltinChain::ConstantP { c: 0.5 });
    cp.ensure_table(2000).unwrap();
    let r = slow_variation_report(cp.table(), &[1000]).unwrap();
    assert!((r[0].ell_doubling - 1.0).abs() < 1e-3);
}

#[test]
fn horizon_limits_are_enforced() {
    let mut an = analyzer(BuiltinChain::Example1);
    assert!(an.sigma_sq(1 << 41).is_err());
    assert!(an.v_bar_g(0).is_err());
}
