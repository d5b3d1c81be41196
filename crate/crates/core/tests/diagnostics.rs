use std::f64::consts::PI;

use revclt::diagnostics::{
    conditional_binning, kolmogorov_quantile, kolmogorov_survival, ks_critical_1pct, ks_lambda_1pct, ks_one_sample,
    ks_two_sample, nonuniform_integrability_report, EmpiricalSummary,
};
use revclt::limits::normal_cdf;
use revclt::rng::RngStream;

fn normals(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = RngStream::new(seed, 0);
    (0..n)
        .map(|_| {
            let (u, v) = (rng.uniform_open(), rng.uniform_open());
            (-2.0 * u.ln()).sqrt() * (2.0 * PI * v).cos()
        })
        .collect()
}

fn phi(x: f64) -> f64 {
    normal_cdf(0.0, 1.0, x).unwrap()
}

#[test]
fn kolmogorov_distribution_values() {
    assert!((ks_lambda_1pct() - 1.627_62).abs() < 1e-4);
    assert!((kolmogorov_survival(ks_lambda_1pct()) - 0.01).abs() < 1e-10);
    assert!((kolmogorov_quantile(0.05) - 1.358_10).abs() < 1e-4);
    assert!((ks_critical_1pct(10_000) - 0.016_276).abs() < 1e-4);
}

#[test]
fn one_sample_ks_under_the_null() {
    let x = normals(10_000, 41);
    let d = ks_one_sample(&x, phi).unwrap();
    assert!(d < 1.63 / 100.0, "{d}");
    let shifted = ks_one_sample(&x, |t| phi(t - 0.2)).unwrap();
    assert!(shifted > 0.05);
}

#[test]
fn two_sample_ks_under_the_null() {
    let r = ks_two_sample(&normals(10_000, 42), &normals(10_000, 43)).unwrap();
    assert!(!r.rejected, "{r:?}");
    let scaled: Vec<f64> = normals(10_000, 44).iter().map(|x| 2.0 * x).collect();
    assert!(ks_two_sample(&normals(10_000, 45), &scaled).unwrap().rejected);
}

#[test]
fn scale_summaries_for_a_normal_sample() {
    let x = normals(100_000, 46);
    let r = nonuniform_integrability_report(&x).unwrap();
    assert!((r.second_moment - 1.0).abs() < 0.02);
    assert!((r.mad_variance - 1.0).abs() < 0.03);
    assert!((r.mean_abs - (2.0 / PI).sqrt()).abs() < 0.01);

    let mut s = EmpiricalSummary::new(&x).unwrap();
    let d = s.add_reference("normal", |t| normal_cdf(0.0, 1.0, t)).unwrap();
    assert_eq!(s.ks_to("normal"), Some(d));
    assert_eq!(s.ks_to("other"), None);
}

#[test]
fn binning_baseline_with_independent_values() {
    let values = normals(4000, 47);
    let mut rng = RngStream::new(48, 0);
    let w0: Vec<f64> = (0..4000).map(|_| 1.0 / rng.uniform_open()).collect();
    let r = conditional_binning(&values, &w0, 10, phi).unwrap();
    assert_eq!(r.bins.len(), 10);
    assert!(!r.undersized);
    assert!(r.max_ks < ks_critical_1pct(400), "{}", r.max_ks);
    assert!(r.bins.windows(2).all(|b| b[0].abs_w0_hi <= b[1].abs_w0_lo));
}

#[test]
fn empty_samples_are_errors() {
    assert!(ks_one_sample(&[], phi).is_err());
    assert!(ks_two_sample(&[1.0], &[]).is_err());
    assert!(nonuniform_integrability_report(&[f64::NAN]).is_err());
}
