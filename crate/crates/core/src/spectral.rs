//! Finite-n diagnostics for the information-spectrum rates.

use rand::Rng;
use serde::Serialize;

use crate::divergence::{cq_hypothesis_testing_divergence, smooth_max_divergence};
use crate::ensemble::CqState;
use crate::error::{Error, Result};
use crate::par;
use crate::rng::{sample_index, stream_rng};
use crate::stats::{quantile, sorted};

/// Largest total dimension `(|V| dim_B)^n` handled by exact tensor powers.
pub const MAX_TENSOR_DIM: usize = 4096;
pub const DEFAULT_BLOCKS: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralSeries {
    pub eps: f64,
    pub n_values: Vec<usize>,
    /// `(1/n) I_0^eps` of the n-fold power.
    pub rate_lower: Vec<f64>,
    /// `(1/n) I_inf^eps` of the n-fold power.
    pub rate_upper: Vec<f64>,
}

impl SpectralSeries {
    /// `n,rate_lower,rate_upper` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,rate_lower,rate_upper\n");
        for k in 0..self.n_values.len() {
            out.push_str(&format!("{},{:.16e},{:.16e}\n", self.n_values[k], self.rate_lower[k], self.rate_upper[k]));
        }
        out
    }
}

pub fn tensor_power_rates(cq: &CqState, n_max: usize, eps: f64, grid_step_bits: f64) -> Result<SpectralSeries> {
    if n_max == 0 {
        return Err(Error::domain("n_max must be at least 1"));
    }
    let base = cq.n_labels() * cq.dim_b();
    let total = (base as f64).powi(n_max as i32);
    if total > MAX_TENSOR_DIM as f64 {
        return Err(Error::TooLarge(format!("({base})^{n_max} exceeds {MAX_TENSOR_DIM}")));
    }
    let rows: Vec<(f64, f64)> = par::try_map_indexed(n_max, |k| {
        let n = k + 1;
        let power = if n == 1 { cq.clone() } else { cq.tensor_power(n)? };
        let lower = cq_hypothesis_testing_divergence(&power, eps)?.value_bits;
        let upper = smooth_max_divergence(power.ensemble(), eps, grid_step_bits)?.value_bits;
        Ok::<_, Error>((lower / n as f64, upper / n as f64))
    })?;
    Ok(SpectralSeries {
        eps,
        n_values: (1..=n_max).collect(),
        rate_lower: rows.iter().map(|r| r.0).collect(),
        rate_upper: rows.iter().map(|r| r.1).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralEstimate {
    /// Block length.
    pub n: usize,
    pub blocks: usize,
    pub eps: f64,
    /// `eps`-quantile of the normalized information density.
    pub inf_rate: f64,
    /// `(1 - eps)`-quantile.
    pub sup_rate: f64,
    pub mean_rate: f64,
}

fn check_joint(p_joint: &[Vec<f64>]) -> Result<(usize, usize)> {
    let rows = p_joint.len();
    let cols = p_joint.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 || p_joint.iter().any(|r| r.len() != cols) {
        return Err(Error::shape("joint distribution must be a nonempty rectangular table"));
    }
    if p_joint.iter().flatten().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::domain("joint probabilities must be finite and non-negative"));
    }
    let total: f64 = p_joint.iter().flatten().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::domain(format!("joint probabilities sum to {total}")));
    }
    Ok((rows, cols))
}

/// `I(V;Y)` in bits.
pub fn mutual_information(p_joint: &[Vec<f64>]) -> Result<f64> {
    let (rows, cols) = check_joint(p_joint)?;
    let pv: Vec<f64> = p_joint.iter().map(|r| r.iter().sum()).collect();
    let py: Vec<f64> = (0..cols).map(|y| (0..rows).map(|v| p_joint[v][y]).sum()).collect();
    let mut mi = 0.0;
    for v in 0..rows {
        for y in 0..cols {
            let p = p_joint[v][y];
            if p > 0.0 {
                mi += p * (p / (pv[v] * py[y])).log2();
            }
        }
    }
    Ok(mi)
}

/// Quantiles of `(1/n) sum_k log2 p(v_k, y_k) / (p(v_k) p(y_k))` over `blocks`
/// i.i.d. sequences of length `n_samples`. Block `b` uses stream `b` of `seed`.
pub fn classical_spectral_estimate(
    p_joint: &[Vec<f64>],
    n_samples: usize,
    eps: f64,
    seed: u64,
    blocks: usize,
) -> Result<SpectralEstimate> {
    let (rows, cols) = check_joint(p_joint)?;
    if n_samples < 1000 {
        return Err(Error::domain(format!("n_samples = {n_samples} below 1000")));
    }
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::domain(format!("eps = {eps} outside (0, 1/2)")));
    }
    if blocks == 0 {
        return Err(Error::domain("blocks must be at least 1"));
    }
    let pv: Vec<f64> = p_joint.iter().map(|r| r.iter().sum()).collect();
    let py: Vec<f64> = (0..cols).map(|y| (0..rows).map(|v| p_joint[v][y]).sum()).collect();
    let flat: Vec<f64> = p_joint.iter().flatten().copied().collect();
    let density: Vec<f64> = (0..flat.len())
        .map(|k| {
            let (v, y) = (k / cols, k % cols);
            if flat[k] > 0.0 { (flat[k] / (pv[v] * py[y])).log2() } else { 0.0 }
        })
        .collect();
    let rates: Vec<f64> = par::map_indexed(blocks, |b| {
        let mut rng = stream_rng(seed, b as u64);
        let mut acc = 0.0;
        for _ in 0..n_samples {
            acc += density[sample_index(&flat, rng.random())];
        }
        acc / n_samples as f64
    });
    let s = sorted(&rates);
    Ok(SpectralEstimate {
        n: n_samples,
        blocks,
        eps,
        inf_rate: quantile(&s, eps),
        sup_rate: quantile(&s, 1.0 - eps),
        mean_rate: crate::stats::mean(&rates),
    })
}
