//! Compensated accumulation and closed forms for the geometric sums that
//! appear in `V_n` and `V̄_n` evaluated at a scalar `x = p(w)`.

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for Neumaier {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Neumaier::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<Neumaier>().value()
}

/// `Σ_{k=0}^{n-1} x^k` for `x ∈ [0, 1]`, accurate as `x → 1`.
pub fn geometric_sum(n: u64, x: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&x));
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let y = 1.0 - x;
    if y == 0.0 {
        return nf;
    }
    if nf * y < 1e-3 {
        // binomial expansion, terms C(n, r+1) (-y)^r
        let mut term = nf;
        let mut acc = Neumaier::new();
        for r in 0..40u64 {
            acc.add(term);
            if r + 1 >= n {
                break;
            }
            term *= -y * (nf - (r + 1) as f64) / (r + 2) as f64;
            if term.abs() < 1e-18 * nf {
                break;
            }
        }
        return acc.value();
    }
    let log_x = (-y).ln_1p();
    -(nf * log_x).exp_m1() / y
}

/// `Σ_{k=0}^{n-1} (1 - k/n) x^k`, the scalar symbol of `V̄_n` at `x ∈ [0, 1]`.
///
/// Equals `[1 - (x/n)(1 - x^n)/(1 - x)] / (1 - x)`; the closed form loses
/// everything to cancellation once `n(1 - x)` is small, so a binomial series
/// takes over there.
pub fn ramp_geometric_sum(n: u64, x: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&x));
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let y = 1.0 - x;
    if nf * y < 1.0 {
        // Σ_r (-y)^r C(n, r+1) (n+1) / (n (r+2))
        let mut binom = nf; // C(n, r+1) at r = 0
        let mut pow = 1.0;
        let mut acc = Neumaier::new();
        for r in 0..80u64 {
            let term = pow * binom * (nf + 1.0) / (nf * (r + 2) as f64);
            acc.add(term);
            if r + 1 >= n || term.abs() < 1e-18 * nf {
                break;
            }
            binom *= (nf - (r + 1) as f64) / (r + 2) as f64;
            pow *= -y;
        }
        return acc.value();
    }
    let q = -(nf * (-y).ln_1p()).exp_m1();
    (nf * y - x * q) / (nf * y * y)
}
