//! Comparison of simulated samples with reference laws.

use serde::Serialize;

use crate::algebra::VarianceTable;
use crate::error::{Error, Result};

/// Normal consistency constant: the MAD of `N(0,1)` is `Φ⁻¹(3/4)`.
pub const MAD_NORMAL: f64 = 0.674_489_750_196_081_7;

/// `Q(λ) = 2 Σ_{k≥1} (-1)^{k-1} e^{-2k²λ²}`, the Kolmogorov survival function.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        // the alternating series is useless here and Q is 1 to double precision
        return 1.0;
    }
    let mut acc = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        acc += if k % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * acc).clamp(0.0, 1.0)
}

/// `λ` with `Q(λ) = level`, by bisection.
pub fn kolmogorov_quantile(level: f64) -> f64 {
    let (mut lo, mut hi) = (0.2, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_survival(mid) > level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Asymptotic 1% critical value of `√N · D_N`.
pub fn ks_lambda_1pct() -> f64 {
    kolmogorov_quantile(0.01)
}

/// 1% critical value of the one-sample distance at sample size `n`.
pub fn ks_critical_1pct(n: usize) -> f64 {
    ks_lambda_1pct() / (n as f64).sqrt()
}

fn sorted_copy(sample: &[f64]) -> Result<Vec<f64>> {
    if sample.is_empty() {
        return Err(Error::Sample("empty sample".into()));
    }
    if sample.iter().any(|x| x.is_nan()) {
        return Err(Error::Sample("sample contains NaN".into()));
    }
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// `sup_x |F_N(x) - F(x)|`, exact over the jump points of the ECDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<f64> {
    ks_one_sample_try(sample, |x| Ok(cdf(x)))
}

/// As [`ks_one_sample`] for a fallible reference CDF.
pub fn ks_one_sample_try<F: FnMut(f64) -> Result<f64>>(sample: &[f64], mut cdf: F) -> Result<f64> {
    let v = sorted_copy(sample)?;
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j + 1 < v.len() && v[j + 1] == v[i] {
            j += 1;
        }
        let f = cdf(v[i])?;
        d = d.max(f - i as f64 / n).max((j + 1) as f64 / n - f);
        i = j + 1;
    }
    Ok(d.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoSampleKs {
    pub distance: f64,
    pub critical_1pct: f64,
    pub rejected: bool,
}

/// Two-sample sup distance with the asymptotic 1% test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TwoSampleKs> {
    let a = sorted_copy(a)?;
    let b = sorted_copy(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let critical = ks_lambda_1pct() * ((na + nb) / (na * nb)).sqrt();
    Ok(TwoSampleKs { distance: d, critical_1pct: critical, rejected: d > critical })
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Raw second moment, MAD-implied variance and mean absolute value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegrabilityReport {
    pub second_moment: f64,
    pub mad_variance: f64,
    pub mean_abs: f64,
}

pub fn nonuniform_integrability_report(sample: &[f64]) -> Result<IntegrabilityReport> {
    let v = sorted_copy(sample)?;
    let n = v.len() as f64;
    let second_moment = v.iter().map(|x| x * x).sum::<f64>() / n;
    let mean_abs = v.iter().map(|x| x.abs()).sum::<f64>() / n;
    let med = median_sorted(&v);
    let mut dev: Vec<f64> = v.iter().map(|x| (x - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let mad = median_sorted(&dev);
    Ok(IntegrabilityReport { second_moment, mad_variance: (mad / MAD_NORMAL).powi(2), mean_abs })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalSummary {
    pub sorted: Vec<f64>,
    pub second_moment: f64,
    pub mean_abs: f64,
    pub mad_variance: f64,
    pub ks: Vec<(String, f64)>,
}

impl EmpiricalSummary {
    pub fn new(sample: &[f64]) -> Result<Self> {
        let r = nonuniform_integrability_report(sample)?;
        Ok(Self {
            sorted: sorted_copy(sample)?,
            second_moment: r.second_moment,
            mean_abs: r.mean_abs,
            mad_variance: r.mad_variance,
            ks: Vec::new(),
        })
    }

    pub fn add_reference<F: FnMut(f64) -> Result<f64>>(&mut self, name: &str, cdf: F) -> Result<f64> {
        let d = ks_one_sample_try(&self.sorted, cdf)?;
        self.ks.push((name.to_string(), d));
        Ok(d)
    }

    pub fn ks_to(&self, name: &str) -> Option<f64> {
        self.ks.iter().find(|(n, _)| n == name).map(|&(_, d)| d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinRow {
    pub abs_w0_lo: f64,
    pub abs_w0_hi: f64,
    pub count: usize,
    pub ks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinningReport {
    pub bins: Vec<BinRow>,
    pub max_ks: f64,
    /// Some bin holds fewer than [`MIN_BIN_SIZE`] samples.
    pub undersized: bool,
}

pub const MIN_BIN_SIZE: usize = 50;

/// Split the replicates into quantile bins of `|W_0|` and compare each bin
/// with the reference law.
pub fn conditional_binning<F: Fn(f64) -> f64>(
    values: &[f64],
    w0: &[f64],
    bins: usize,
    cdf: F,
) -> Result<BinningReport> {
    if values.len() != w0.len() {
        return Err(Error::Sample(format!("{} values but {} initial states", values.len(), w0.len())));
    }
    if bins == 0 || bins > values.len() {
        return Err(Error::Parameter(format!("cannot split {} samples into {bins} bins", values.len())));
    }
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| w0[i].abs().total_cmp(&w0[j].abs()));
    let mut rows = Vec::with_capacity(bins);
    let n = idx.len();
    for b in 0..bins {
        let (lo, hi) = (b * n / bins, (b + 1) * n / bins);
        let chunk: Vec<f64> = idx[lo..hi].iter().map(|&i| values[i]).collect();
        rows.push(BinRow {
            abs_w0_lo: w0[idx[lo]].abs(),
            abs_w0_hi: w0[idx[hi - 1]].abs(),
            count: chunk.len(),
            ks: ks_one_sample(&chunk, &cdf)?,
        });
    }
    let max_ks = rows.iter().map(|r| r.ks).fold(0.0, f64::max);
    let undersized = rows.iter().any(|r| r.count < MIN_BIN_SIZE);
    Ok(BinningReport { bins: rows, max_ks, undersized })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlowVariationRow {
    pub n: u64,
    pub sigma_sq: f64,
    pub ell: f64,
    /// `ℓ(2n)/ℓ(n)`
    pub ell_doubling: f64,
    /// `σ_n² / (2 n log n)`; undefined at `n = 1`.
    pub ratio_to_2nlogn: f64,
    /// `1 + log 2 / log n`, the doubling ratio of `ℓ = 2 log`.
    pub log_model: f64,
}

/// Needs the table to reach `2 · max(grid)`.
pub fn slow_variation_report(table: &VarianceTable, grid: &[u64]) -> Result<Vec<SlowVariationRow>> {
    grid.iter()
        .map(|&n| {
            let sigma_sq = table.sigma_sq(n)?;
            let ell = table.ell(n)?;
            let nf = n as f64;
            let (ratio, model) =
                if n > 1 { (sigma_sq / (2.0 * nf * nf.ln()), 1.0 + 2f64.ln() / nf.ln()) } else { (f64::NAN, f64::NAN) };
            Ok(SlowVariationRow {
                n,
                sigma_sq,
                ell,
                ell_doubling: table.ell(2 * n)? / ell,
                ratio_to_2nlogn: ratio,
                log_model: model,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limits::normal_cdf;

    fn phi(x: f64) -> f64 {
        normal_cdf(0.0, 1.0, x).unwrap()
    }

    #[test]
    fn kolmogorov_quantile_value() {
        assert!((ks_lambda_1pct() - 1.627_62).abs() < 1e-4);
        assert!((kolmogorov_survival(ks_lambda_1pct()) - 0.01).abs() < 1e-12);
    }

    #[test]
    fn exact_quantiles_are_close() {
        let n = 1000;
        // Φ⁻¹ by bisection
        let inv = |p: f64| {
            let (mut lo, mut hi) = (-10.0, 10.0);
            for _ in 0..200 {
                let m = 0.5 * (lo + hi);
                if phi(m) < p {
                    lo = m
                } else {
                    hi = m
                }
            }
            0.5 * (lo + hi)
        };
        let sample: Vec<f64> = (1..=n).map(|i| inv(i as f64 / (n + 1) as f64)).collect();
        assert!(ks_one_sample(&sample, phi).unwrap() <= 1.0 / (n + 1) as f64 + 1e-12);
    }

    #[test]
    fn constant_sample_distance() {
        assert_eq!(ks_one_sample(&[0.0; 10], phi).unwrap(), 0.5);
        assert!(ks_one_sample(&[], phi).is_err());
    }

    #[test]
    fn two_sample_edges() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a).unwrap().distance, 0.0);
        assert_eq!(ks_two_sample(&[0.0; 5], &[1.0; 7]).unwrap().distance, 1.0);
        assert!(ks_two_sample(&[], &a).is_err());
    }

    #[test]
    fn point_mass_report() {
        let r = nonuniform_integrability_report(&[0.0; 9]).unwrap();
        assert_eq!((r.second_moment, r.mad_variance, r.mean_abs), (0.0, 0.0, 0.0));
    }

    #[test]
    fn binning_rejects_mismatch_and_flags_small_bins() {
        assert!(conditional_binning(&[1.0, 2.0], &[1.0], 1, phi).is_err());
        let v: Vec<f64> = (0..60).map(|i| i as f64 / 60.0 - 0.5).collect();
        let r = conditional_binning(&v, &v, 2, phi).unwrap();
        assert!(r.undersized);
        let one = conditional_binning(&v, &v, 1, phi).unwrap();
        assert_eq!(one.max_ks, ks_one_sample(&v, phi).unwrap());
    }
}
