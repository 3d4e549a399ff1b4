//! Small statistics helpers for the Monte Carlo harnesses.

use serde::Serialize;

/// Outcome of a Monte Carlo tail experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialReport {
    pub trials: usize,
    /// Fraction of trials in which the tail event occurred.
    pub empirical_tail: f64,
    pub bound_value: f64,
    /// Raw per-trial statistic (usually a deviation norm).
    pub per_trial_stat: Vec<f64>,
    /// `bound_value >= 1`.
    pub vacuous_flag: bool,
}

impl TrialReport {
    pub fn from_stats(per_trial_stat: Vec<f64>, threshold: f64, bound_value: f64) -> Self {
        let trials = per_trial_stat.len();
        let hits = per_trial_stat.iter().filter(|&&s| s >= threshold).count();
        Self {
            trials,
            empirical_tail: if trials == 0 { 0.0 } else { hits as f64 / trials as f64 },
            bound_value,
            per_trial_stat,
            vacuous_flag: bound_value >= 1.0,
        }
    }

    pub fn mean_stat(&self) -> f64 {
        mean(&self.per_trial_stat)
    }

    /// Standard error of the empirical tail frequency.
    pub fn tail_sigma(&self) -> f64 {
        binomial_sigma(self.empirical_tail, self.trials)
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `sqrt(p (1 - p) / n)`.
pub fn binomial_sigma(p: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (p * (1.0 - p) / n as f64).max(0.0).sqrt()
}

/// Empirical quantile by the inverse of the empirical CDF.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let n = sorted.len();
    let k = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

pub fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value
/// (Stephens' small-sample correction).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let a = sorted(a);
    let b = sorted(b);
    let (n1, n2) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n1 && j < n2 {
        let x = a[i].min(b[j]);
        while i < n1 && a[i] <= x {
            i += 1;
        }
        while j < n2 && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n1 as f64 - j as f64 / n2 as f64).abs());
    }
    let en = ((n1 * n2) as f64 / (n1 + n2) as f64).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    KsResult { statistic: d, p_value: kolmogorov_q(lambda) }
}

/// `Q_KS(x) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 x^2)`.
fn kolmogorov_q(x: f64) -> f64 {
    if x < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = sign * (-2.0 * jf * jf * x * x).exp();
        sum += term;
        if term.abs() < 1e-16 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
