//! Summary statistics and goodness-of-fit tests used by the estimators.
//!
//! All reductions run over slices collected in replication order, so the
//! result never depends on how the replications were scheduled.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Compensated (Kahan-Babuska) running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.comp += (self.sum - t) + value;
        } else {
            self.comp += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

pub fn sum(values: &[f64]) -> f64 {
    values.iter().copied().collect::<KahanSum>().total()
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub count: usize,
}

impl MeanEstimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: 0.0,
                std_err: 0.0,
                count: 0,
            };
        }
        let mean = sum(values) / n as f64;
        let var = if n > 1 {
            values
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .collect::<KahanSum>()
                .total()
                / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            std_err: (var / n as f64).sqrt(),
            count: n,
        }
    }

    pub fn ci_half_width(&self) -> f64 {
        Z95 * self.std_err
    }

    pub fn variance(&self) -> f64 {
        self.std_err * self.std_err * self.count as f64
    }
}

/// Bernoulli frequency with a Wald standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinomialEstimate {
    pub successes: u64,
    pub trials: u64,
}

impl BinomialEstimate {
    pub fn new(successes: u64, trials: u64) -> Self {
        Self { successes, trials }
    }

    pub fn p(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }

    pub fn std_err(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        let p = self.p();
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    /// Standard error under a hypothesised success probability.
    pub fn std_err_at(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    pub fn ci_half_width(&self) -> f64 {
        Z95 * self.std_err()
    }

    /// 95% Wilson score interval.
    pub fn wilson_interval(&self) -> (f64, f64) {
        if self.trials == 0 {
            return (0.0, 1.0);
        }
        let n = self.trials as f64;
        let p = self.p();
        let z2 = Z95 * Z95;
        let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
        let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
        ((centre - half).max(0.0), (centre + half).min(1.0))
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Result of a one-sample Kolmogorov-Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Survival function of the Kolmogorov distribution, `P(K > t)`.
pub fn kolmogorov_survival(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t < 1.18 {
        // small-t form converges faster here
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * t * t)).exp();
        let mut s = 0.0;
        let mut k = 1;
        loop {
            let term = y.powi((2 * k - 1) * (2 * k - 1));
            s += term;
            if term < 1e-17 || k > 100 {
                break;
            }
            k += 1;
        }
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / t * s;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        for k in 1..=100_i32 {
            let term = (-2.0 * (k as f64).powi(2) * t * t).exp();
            s += if k % 2 == 1 { term } else { -term };
            if term < 1e-17 {
                break;
            }
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// One-sample KS test of `samples` against a continuous CDF.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let nf = n as f64;
    let mut d = 0.0_f64;
    for (i, &v) in sorted.iter().enumerate() {
        let f = cdf(v);
        d = d.max((i as f64 + 1.0) / nf - f).max(f - i as f64 / nf);
    }
    let sq = nf.sqrt();
    let p_value = kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d);
    KsResult {
        statistic: d,
        p_value,
        n,
    }
}

/// KS test against an exponential law with the given rate.
pub fn ks_exponential(samples: &[f64], rate: f64) -> KsResult {
    ks_test(samples, |t| if t <= 0.0 { 0.0 } else { -(-rate * t).exp_m1() })
}

/// Pearson chi-square test of independence on a contingency table.
/// Returns `(statistic, degrees of freedom, p-value)`.
pub fn chi_square_independence(table: &[Vec<f64>]) -> (f64, usize, f64) {
    let rows = table.len();
    let cols = table.first().map_or(0, Vec::len);
    let row_tot: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_tot: Vec<f64> = (0..cols).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let total: f64 = row_tot.iter().sum();
    let mut stat = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let expected = row_tot[i] * col_tot[j] / total;
            if expected > 0.0 {
                stat += (table[i][j] - expected).powi(2) / expected;
            }
        }
    }
    let dof = (rows.saturating_sub(1)) * (cols.saturating_sub(1));
    let p = if dof == 0 {
        1.0
    } else {
        1.0 - ChiSquared::new(dof as f64).map_or(0.0, |d| d.cdf(stat))
    };
    (stat, dof, p)
}

/// Total variation distance between two probability vectors.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Least-squares line `y = intercept + slope * x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_beats_naive_on_cancellation() {
        let vals = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(sum(&vals), 2.0);
    }

    #[test]
    fn kolmogorov_tail_known_values() {
        // P(K > 1.3581) ~ 0.05, P(K > 1.6276) ~ 0.01
        assert!((kolmogorov_survival(1.358_1) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_survival(1.627_6) - 0.01).abs() < 5e-4);
        // both branches agree at the switch point
        let a = kolmogorov_survival(1.179_999);
        let b = kolmogorov_survival(1.180_001);
        assert!((a - b).abs() < 1e-5);
    }

    #[test]
    fn ks_accepts_uniform_grid() {
        let samples: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let r = ks_test(&samples, |x| x.clamp(0.0, 1.0));
        assert!(r.p_value > 0.99);
        let r = ks_test(&samples, |x| (x * x).clamp(0.0, 1.0));
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn chi_square_detects_dependence() {
        let indep = vec![vec![50.0, 50.0], vec![50.0, 50.0]];
        assert!(chi_square_independence(&indep).2 > 0.99);
        let dep = vec![vec![90.0, 10.0], vec![10.0, 90.0]];
        assert!(chi_square_independence(&dep).2 < 1e-6);
    }

    #[test]
    fn mean_estimate_basic() {
        let m = MeanEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.variance() - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn normal_cdf_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(Z95) - 0.975).abs() < 1e-9, "{}", normal_cdf(Z95) - 0.975);
    }
}
