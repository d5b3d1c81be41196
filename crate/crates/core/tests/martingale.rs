use revclt::martingale::{
    build_kernel, d_sq_monte_carlo, decompose_path, lindeberg_statistic, remainder_summary, stbl_statistic,
    LindebergPool, DEFAULT_POOL_SIZE,
};
use revclt::rng::{Purpose, RngStream};
use revclt::simulate::{run_replicates, simulate_runs, simulate_states, RunPath};
use revclt::sums::ramp_geometric_sum;
use revclt::{build_chain, Analyzer, BuiltinChain};

#[test]
fn kernel_matches_its_definition() {
    let spec = build_chain(BuiltinChain::Example1).unwrap();
    let n = 300;
    let k = build_kernel(&spec, n).unwrap();
    for w in [1.0, -2.5, 17.0, 4000.0] {
        let p = spec.p(w);
        let direct: f64 = (0..n).map(|j| (1.0 - j as f64 / n as f64) * p.powi(j as i32)).sum::<f64>() * spec.g(w);
        assert!((k.h(w) - direct).abs() < 1e-10 * direct.abs().max(1.0));
        assert!((k.h(w) - spec.g(w) * ramp_geometric_sum(n, p)).abs() < 1e-12 * direct.abs().max(1.0));
        assert!((k.qh(w) - p * k.h(w)).abs() < 1e-12 * direct.abs().max(1.0));
    }
    let mut an = Analyzer::new(&spec);
    assert!((k.sigma_sq() - an.sigma_sq(n).unwrap()).abs() < 1e-12 * k.sigma_sq());
    assert!((k.d_norm_sq() - an.d_norm_sq(n).unwrap()).abs() < 1e-12 * k.d_norm_sq());
}

#[test]
fn increment_second_moment_by_monte_carlo() {
    let cp = build_chain(BuiltinChain::ConstantP { c: 0.5 }).unwrap();
    let k = build_kernel(&cp, 1000).unwrap();
    let mc = d_sq_monte_carlo(&k, 100_000, &mut RngStream::new(21, 0)).unwrap();
    assert!((mc / k.d_norm_sq() - 1.0).abs() < 0.02, "{}", mc / k.d_norm_sq());

    // Example 1 increments have a heavy fourth moment; pool many transitions.
    let e1 = build_chain(BuiltinChain::Example1).unwrap();
    let k = build_kernel(&e1, 1000).unwrap();
    let est = run_replicates(20, 22, Purpose::Misc, 0, |_, rng| d_sq_monte_carlo(&k, 100_000, rng)).unwrap();
    let mean = est.iter().sum::<f64>() / est.len() as f64;
    assert!((mean / k.d_norm_sq() - 1.0).abs() < 0.15, "{}", mean / k.d_norm_sq());
}

#[test]
fn run_summary_agrees_with_full_decomposition() {
    let spec = build_chain(BuiltinChain::Example1).unwrap();
    for seed in 0..5 {
        let n = 3000;
        let k = build_kernel(&spec, n).unwrap();
        let states = simulate_states(&spec, n, &mut RngStream::new(seed, 7)).unwrap();
        let d = decompose_path(&k, &states).unwrap();
        let scale = k.sigma_sq().sqrt();
        assert!(d.max_identity_gap() < 1e-9 * scale);
        let brute = d.r.iter().skip(1).fold(0.0f64, |m, r| m.max(r.abs()));
        let summary = remainder_summary(&k, &RunPath::from_states(&states)).unwrap();
        assert!((summary.max_abs - brute).abs() < 1e-9 * scale, "{} vs {brute}", summary.max_abs);
        assert!((summary.last - d.r[n as usize]).abs() < 1e-9 * scale);
    }
}

#[test]
fn martingale_endpoint_carries_the_variance() {
    let spec = build_chain(BuiltinChain::ConstantP { c: 0.5 }).unwrap();
    let n = 1000;
    let k = build_kernel(&spec, n).unwrap();
    let m_end = run_replicates(4000, 23, Purpose::Martingale, 0, |_, rng| {
        let path = simulate_runs(&spec, n, rng)?;
        Ok(path.s_n(&spec) - remainder_summary(&k, &path)?.last)
    })
    .unwrap();
    let ratio = m_end.iter().map(|m| m * m).sum::<f64>() / m_end.len() as f64 / k.sigma_sq();
    let se = (2.0f64 / m_end.len() as f64).sqrt();
    assert!((ratio - 1.0).abs() < 4.0 * se, "{ratio}");
}

#[test]
fn conditional_variance_statistic_is_near_one_for_finite_variance() {
    let spec = build_chain(BuiltinChain::ConstantP { c: 0.5 }).unwrap();
    let n = 1000;
    let k = build_kernel(&spec, n).unwrap();
    let v =
        run_replicates(200, 24, Purpose::Martingale, 0, |_, rng| stbl_statistic(&k, &simulate_runs(&spec, n, rng)?))
            .unwrap();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    assert!((mean - 1.0).abs() < 0.02, "{mean}");
}

#[test]
fn lindeberg_statistic_is_monotone_in_eps() {
    let spec = build_chain(BuiltinChain::Example1).unwrap();
    let n = 10_000;
    let k = build_kernel(&spec, n).unwrap();
    let pool = LindebergPool::new(&k, DEFAULT_POOL_SIZE, &mut RngStream::new(25, 0)).unwrap();
    for seed in 0..10 {
        let path = simulate_runs(&spec, n, &mut RngStream::new(seed, 25)).unwrap();
        let v: Vec<f64> =
            [0.05, 0.1, 0.5, 1.0, 5.0].iter().map(|&e| lindeberg_statistic(&k, &pool, e, &path).unwrap()).collect();
        assert!(v.windows(2).all(|w| w[1] <= w[0]), "{v:?}");
        assert!(v.iter().all(|&x| x >= 0.0));
    }
}
