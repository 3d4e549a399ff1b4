//! Matrix concentration toolbox: bound evaluators and Monte Carlo harnesses.
//!
//! Every bound is a pure function of its parameters. Every harness draws trial
//! `t` from random stream `t` of its seed and reports the raw per-trial
//! statistic, so tails can be recomputed offline for other thresholds.

use std::f64::consts::LN_2;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{c, operator_norm, singular_values, trace_norm, CMat, GeneralMatrix, HermitianOperator};
use crate::par;
use crate::rng::{sample_index, stream_rng};
use crate::stats::{ks_two_sample, KsResult, TrialReport};

/// `ell` of the non-square argument.
pub const NONSQUARE_ELL: f64 = 10.0;

/// Named bound with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundSpec {
    AwChernoff { dim: usize, m_samples: usize, eta: f64, a: f64 },
    ShiftedChernoff { dim: usize, m_samples: usize, eps: f64, delta: f64, lambda: f64 },
    Nonpositive { d: usize, m_samples: usize, eps: f64, mu: f64, beta: f64 },
    Nonsquare { d1: usize, m_samples: usize, eps: f64, beta: f64 },
    GaussOpnorm { d: usize, ell: f64 },
    Chi2Lower { d: usize, beta: f64 },
    ReverseMarkov { expect: f64, c: f64, alpha: f64 },
    TraceLower {},
}

pub fn evaluate(spec: &BoundSpec) -> Result<f64> {
    match *spec {
        BoundSpec::AwChernoff { dim, m_samples, eta, a } => aw_chernoff_bound(dim, m_samples, eta, a),
        BoundSpec::ShiftedChernoff { dim, m_samples, eps, delta, lambda } => {
            shifted_chernoff_bound(dim, m_samples, eps, delta, lambda)
        }
        BoundSpec::Nonpositive { d, m_samples, eps, mu, beta } => nonpositive_bound(d, m_samples, eps, mu, beta),
        BoundSpec::Nonsquare { d1, m_samples, eps, beta } => nonsquare_bound(d1, m_samples, eps, beta),
        BoundSpec::GaussOpnorm { d, ell } => gauss_opnorm_bound(d, ell),
        BoundSpec::Chi2Lower { d, beta } => chi2_lower_tail(d, beta),
        BoundSpec::ReverseMarkov { expect, c, alpha } => reverse_markov(expect, c, alpha),
        BoundSpec::TraceLower {} => Ok(TRACE_LOWER_PROB),
    }
}

fn need(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Domain(msg()))
    }
}

/// Failure probability `2 dim exp(-M eta^2 a / (2 ln 2))`.
pub fn aw_chernoff_bound(dim: usize, m_samples: usize, eta: f64, a: f64) -> Result<f64> {
    need(dim >= 1, || "dim must be at least 1".into())?;
    need(eta > 0.0 && eta < 0.5, || format!("eta = {eta} outside (0, 1/2)"))?;
    need(a > 0.0 && (1.0 + eta) * a <= 1.0, || format!("a = {a} violates 0 < (1 + eta) a <= 1"))?;
    Ok(2.0 * dim as f64 * (-(m_samples as f64) * eta * eta * a / (2.0 * LN_2)).exp())
}

/// Failure probability `2 dim exp(-eps^2 M / (2 ln 2) * delta / (lambda + delta))`.
pub fn shifted_chernoff_bound(dim: usize, m_samples: usize, eps: f64, delta: f64, lambda: f64) -> Result<f64> {
    need(dim >= 1, || "dim must be at least 1".into())?;
    need(delta > 0.0 && lambda > 0.0, || "delta and lambda must be positive".into())?;
    need(eps > 0.0 && eps < 0.5f64.min(lambda / delta), || format!("eps = {eps} not below min(1/2, lambda/delta)"))?;
    let rate = eps * eps * m_samples as f64 / (2.0 * LN_2) * delta / (lambda + delta);
    Ok(2.0 * dim as f64 * (-rate).exp())
}

/// Failure probability `4 d exp(-eps^2 / (32 ln 2 mu) * M / (2 beta + mu))`.
pub fn nonpositive_bound(d: usize, m_samples: usize, eps: f64, mu: f64, beta: f64) -> Result<f64> {
    need(d >= 1, || "d must be at least 1".into())?;
    need(eps > 0.0 && eps < 0.5, || format!("eps = {eps} outside (0, 1/2)"))?;
    need(mu > 0.0 && beta >= 1.0, || "need mu > 0 and beta >= 1".into())?;
    let rate = eps * eps / (32.0 * LN_2 * mu) * m_samples as f64 / (2.0 * beta + mu);
    Ok(4.0 * d as f64 * (-rate).exp())
}

/// `25 d1 exp(-1e-11 eps^3 M / beta)`.
pub fn nonsquare_bound(d1: usize, m_samples: usize, eps: f64, beta: f64) -> Result<f64> {
    nonsquare_components(d1, m_samples, eps, beta)?;
    Ok(25.0 * d1 as f64 * (-1e-11 * eps.powi(3) * m_samples as f64 / beta).exp())
}

/// `(20 d1 exp(-1e-11 eps^3 M / beta), 5 exp(-1e-8 eps^2 M))`.
pub fn nonsquare_components(d1: usize, m_samples: usize, eps: f64, beta: f64) -> Result<(f64, f64)> {
    need(d1 >= 1, || "d1 must be at least 1".into())?;
    need(eps > 0.0 && eps < 1.0, || format!("eps = {eps} outside (0, 1)"))?;
    need(beta >= 1.0, || format!("beta = {beta} below 1"))?;
    let m = m_samples as f64;
    Ok((
        20.0 * d1 as f64 * (-1e-11 * eps.powi(3) * m / beta).exp(),
        5.0 * (-1e-8 * eps * eps * m).exp(),
    ))
}

/// `Pr{||G||_inf >= ell} <= exp(-d ell^2 / 16)` for `ell >= 6`.
pub fn gauss_opnorm_bound(d: usize, ell: f64) -> Result<f64> {
    need(d >= 1, || "d must be at least 1".into())?;
    need(ell >= 6.0, || format!("ell = {ell} below 6"))?;
    Ok((-(d as f64) * ell * ell / 16.0).exp())
}

/// `Pr{X < 2 beta d} <= (beta e^{1 - beta})^d` for `X ~ chi^2_{2d}`.
pub fn chi2_lower_tail(d: usize, beta: f64) -> Result<f64> {
    need(d >= 1, || "d must be at least 1".into())?;
    need(beta > 0.0 && beta < 1.0, || format!("beta = {beta} outside (0, 1)"))?;
    Ok((beta * (1.0 - beta).exp()).powi(d as i32))
}

/// `Pr{X > c} >= (E[X] - c) / (alpha - c)` for `X <= alpha`.
pub fn reverse_markov(expect: f64, c: f64, alpha: f64) -> Result<f64> {
    need(c <= expect && expect <= alpha, || format!("need c <= E[X] <= alpha, got {c}, {expect}, {alpha}"))?;
    need(c < alpha, || "c must be below alpha".into())?;
    Ok((expect - c) / (alpha - c))
}

/// Success probability claimed for `||A^g|| >= ||A|| / 120`.
pub const TRACE_LOWER_PROB: f64 = 0.22;

/// `d x d` matrix with entries `(a + ib) / sqrt(2d)`.
pub fn gaussian_matrix_from<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMat {
    let s = 1.0 / (2.0 * d as f64).sqrt();
    CMat::from_fn(d, d, |_, _| {
        let a: f64 = StandardNormal.sample(rng);
        let b: f64 = StandardNormal.sample(rng);
        Complex64::new(a * s, b * s)
    })
}

pub fn gaussian_matrix(d: usize, seed: u64) -> GeneralMatrix {
    GeneralMatrix::new(gaussian_matrix_from(&mut stream_rng(seed, 0), d.max(1))).expect("finite Gaussian entries")
}

/// `[[ (A A^dag)^{1/2}, A ], [A^dag, (A^dag A)^{1/2}]]`, i.e.
/// `sum_k lambda_k |v~_k + w~_k><v~_k + w~_k|` with `v~ = |0> v`, `w~ = |1> w`.
pub fn hermitian_embed(a: &GeneralMatrix) -> Result<HermitianOperator> {
    if a.rows() != a.cols() {
        return Err(Error::shape(format!("hermitian_embed needs a square matrix, got {}x{}", a.rows(), a.cols())));
    }
    let d = a.rows();
    let svd = a.matrix().clone().svd(true, true);
    let u = svd.u.expect("left singular vectors");
    let vt = svd.v_t.expect("right singular vectors");
    let s = CMat::from_diagonal(&svd.singular_values.map(c));
    let top = &u * &s * u.adjoint();
    let bottom = vt.adjoint() * &s * &vt;
    let mut b = CMat::zeros(2 * d, 2 * d);
    b.view_mut((0, 0), (d, d)).copy_from(&top);
    b.view_mut((0, d), (d, d)).copy_from(a.matrix());
    b.view_mut((d, 0), (d, d)).copy_from(&a.matrix().adjoint());
    b.view_mut((d, d), (d, d)).copy_from(&bottom);
    HermitianOperator::new(b)
}

/// Deviations of the embedding from its defining identities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EmbedCheck {
    pub min_eigenvalue: f64,
    /// Max entry of `B_{01} - A`.
    pub block_error: f64,
    /// `| ||B|| - 2 ||A|| |`.
    pub trace_norm_error: f64,
    /// `| ||B||_inf - 2 ||A||_inf |`.
    pub op_norm_error: f64,
}

pub fn embed_check(a: &GeneralMatrix) -> Result<EmbedCheck> {
    let b = hermitian_embed(a)?;
    let d = a.rows();
    let block = b.matrix().view((0, d), (d, d)) - a.matrix();
    Ok(EmbedCheck {
        min_eigenvalue: b.min_eigenvalue(),
        block_error: crate::operator::max_abs_entry(&block),
        trace_norm_error: (b.trace_norm() - 2.0 * a.trace_norm()).abs(),
        op_norm_error: (b.operator_norm() - 2.0 * a.operator_norm()).abs(),
    })
}

/// Appends zero columns up to `target` columns.
pub fn pad_columns(a: &GeneralMatrix, target: usize) -> Result<GeneralMatrix> {
    if a.cols() > target {
        return Err(Error::shape(format!("{} columns exceed target {target}", a.cols())));
    }
    let mut m = CMat::zeros(a.rows(), target);
    m.view_mut((0, 0), (a.rows(), a.cols())).copy_from(a.matrix());
    GeneralMatrix::new(m)
}

/// `q = floor(d1 / d2)`; rejects `d2 > d1`.
pub fn stack_count(d1: usize, d2: usize) -> Result<usize> {
    if d2 == 0 || d2 > d1 {
        return Err(Error::shape(format!("need 1 <= d2 <= d1, got d1 = {d1}, d2 = {d2}")));
    }
    Ok(d1 / d2)
}

/// `(1/q) [G_1 A | G_2 A | ... | G_q A]` with `q = g.len()`.
pub fn gaussian_block_embed(a: &GeneralMatrix, g: &[CMat]) -> Result<GeneralMatrix> {
    let (d1, d2) = (a.rows(), a.cols());
    if g.is_empty() {
        return Err(Error::shape("at least one Gaussian block is required"));
    }
    let q = g.len();
    let mut out = CMat::zeros(d1, q * d2);
    for (j, gj) in g.iter().enumerate() {
        if gj.nrows() != d1 || gj.ncols() != d1 {
            return Err(Error::shape(format!("block {j} is {}x{}, expected {d1}x{d1}", gj.nrows(), gj.ncols())));
        }
        out.view_mut((0, j * d2), (d1, d2)).copy_from(&(gj * a.matrix()));
    }
    GeneralMatrix::new(out / c(q as f64))
}

fn draw_blocks<R: Rng + ?Sized>(rng: &mut R, d1: usize, q: usize) -> Vec<CMat> {
    (0..q).map(|_| gaussian_matrix_from(rng, d1)).collect()
}

/// `Lambda-bar`: `d1 x d1` diagonal holding `q` copies of the singular values of `a`, then zeros.
pub fn lambda_bar(a: &GeneralMatrix) -> Result<Vec<f64>> {
    let (d1, d2) = (a.rows(), a.cols());
    let q = stack_count(d1, d2)?;
    let sv = a.singular_values();
    let mut diag = vec![0.0; d1];
    for j in 0..q {
        diag[j * d2..(j + 1) * d2].copy_from_slice(&sv[..d2]);
    }
    Ok(diag)
}

/// `H-bar Lambda-bar` for a Gaussian `H-bar`.
fn h_lambda(h: &CMat, diag: &[f64]) -> CMat {
    let mut m = h.clone();
    for (k, &l) in diag.iter().enumerate() {
        m.column_mut(k).scale_mut(l);
    }
    m
}

/// Top singular values of `A^g` and of `(1/q) H-bar Lambda-bar`, `draws` each,
/// compared by a two-sample KS test.
pub fn abar_equivalence(a: &GeneralMatrix, draws: usize, seed: u64) -> Result<(KsResult, Vec<f64>, Vec<f64>)> {
    let (d1, d2) = (a.rows(), a.cols());
    let q = stack_count(d1, d2)?;
    let diag = lambda_bar(a)?;
    let direct: Vec<f64> = par::try_map_indexed(draws, |t| {
        let g = draw_blocks(&mut stream_rng(seed, 2 * t as u64), d1, q);
        Ok::<_, Error>(gaussian_block_embed(a, &g)?.operator_norm())
    })?;
    let reformulated: Vec<f64> = par::map_indexed(draws, |t| {
        let h = gaussian_matrix_from(&mut stream_rng(seed, 2 * t as u64 + 1), d1);
        operator_norm(&h_lambda(&h, &diag)) / q as f64
    });
    Ok((ks_two_sample(&direct, &reformulated), direct, reformulated))
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceLowerReport {
    /// Per-trial `||A^g||`; the tail entry is the frequency of `||A^g|| >= ||A|| / 120`,
    /// to be compared with the lower bound `bound_value = 0.22`.
    pub report: TrialReport,
    /// Frequency of `||H Lambda|| >= Tr[H^dag H Lambda] / 6`.
    pub freq_c11: f64,
    /// Frequency of `Tr[H^dag H Lambda] >= (d1 / d2) ||A|| / 20`.
    pub freq_c22: f64,
}

pub fn trace_lower_trial(a: &GeneralMatrix, trials: usize, seed: u64) -> Result<TraceLowerReport> {
    let (d1, d2) = (a.rows(), a.cols());
    let q = stack_count(d1, d2)?;
    let norm = a.trace_norm();
    if norm == 0.0 {
        return Err(Error::domain("trace_lower_trial needs a nonzero matrix"));
    }
    let diag = lambda_bar(a)?;
    let rows: Vec<(f64, bool, bool)> = par::try_map_indexed(trials, |t| {
        let mut rng = stream_rng(seed, t as u64);
        let g = draw_blocks(&mut rng, d1, q);
        let ag = gaussian_block_embed(a, &g)?.trace_norm();
        let h = gaussian_matrix_from(&mut rng, d1);
        let hl_norm = trace_norm(&h_lambda(&h, &diag));
        let hh = h.adjoint() * &h;
        let tr: f64 = diag.iter().enumerate().map(|(k, l)| hh[(k, k)].re * l).sum();
        Ok::<_, Error>((ag, hl_norm >= tr / 6.0, tr >= d1 as f64 / d2 as f64 * norm / 20.0))
    })?;
    let nt = trials.max(1) as f64;
    let stats: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let mut report = TrialReport::from_stats(stats, norm / 120.0, TRACE_LOWER_PROB);
    report.vacuous_flag = false;
    Ok(TraceLowerReport {
        report,
        freq_c11: rows.iter().filter(|r| r.1).count() as f64 / nt,
        freq_c22: rows.iter().filter(|r| r.2).count() as f64 / nt,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GaussReport {
    /// Per-draw `||G||_inf` against threshold `ell`.
    pub report: TrialReport,
    pub mean_frobenius_sq: f64,
    /// Standard error of `mean_frobenius_sq`.
    pub sigma_frobenius_sq: f64,
}

pub fn gaussian_opnorm_trial(d: usize, ell: f64, draws: usize, seed: u64) -> Result<GaussReport> {
    let bound = gauss_opnorm_bound(d, ell)?;
    let rows: Vec<(f64, f64)> = par::map_indexed(draws, |t| {
        let g = gaussian_matrix_from(&mut stream_rng(seed, t as u64), d);
        (operator_norm(&g), g.norm_squared())
    });
    let fro: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let mean = crate::stats::mean(&fro);
    let var = fro.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (draws.max(2) - 1) as f64;
    Ok(GaussReport {
        report: TrialReport::from_stats(rows.iter().map(|r| r.0).collect(), ell, bound),
        mean_frobenius_sq: mean,
        sigma_frobenius_sq: (var / draws.max(1) as f64).sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Chi2Report {
    pub d: usize,
    pub beta: f64,
    pub samples: usize,
    /// Frequency of `X < 2 beta d`.
    pub freq_below: f64,
    pub bound_below: f64,
    /// Frequency of `X >= d`.
    pub freq_at_least_d: f64,
}

pub fn chi2_trial(d: usize, beta: f64, samples: usize, seed: u64) -> Result<Chi2Report> {
    let bound_below = chi2_lower_tail(d, beta)?;
    let dist = ChiSquared::new(2.0 * d as f64).map_err(|e| Error::domain(e.to_string()))?;
    let mut rng = stream_rng(seed, 0);
    let (mut below, mut above) = (0usize, 0usize);
    for _ in 0..samples {
        let x: f64 = dist.sample(&mut rng);
        below += (x < 2.0 * beta * d as f64) as usize;
        above += (x >= d as f64) as usize;
    }
    let n = samples.max(1) as f64;
    Ok(Chi2Report { d, beta, samples, freq_below: below as f64 / n, bound_below, freq_at_least_d: above as f64 / n })
}

#[derive(Clone, Debug, Serialize)]
pub struct ShiftedReport {
    /// Per-trial `||sigma~ - sigma||`; tail counts deviations strictly above
    /// `eps (||sigma|| + delta dim)`.
    pub report: TrialReport,
    pub threshold: f64,
    pub lambda: f64,
    /// Trials whose `zeta~` left `[delta / (lambda + delta), 1]`, plus labels with `zeta_x` outside `[0, I]`.
    pub zeta_violations: usize,
}

pub fn shifted_chernoff_trial(
    family: &[HermitianOperator],
    probs: &[f64],
    eps: f64,
    delta: f64,
    m_samples: usize,
    trials: usize,
    seed: u64,
) -> Result<ShiftedReport> {
    if family.is_empty() || family.len() != probs.len() {
        return Err(Error::shape("family and probabilities must be nonempty and aligned"));
    }
    let dim = family[0].dim();
    let mut lambda: f64 = 0.0;
    for (x, s) in family.iter().enumerate() {
        if s.dim() != dim {
            return Err(Error::shape(format!("member {x} has dimension {}", s.dim())));
        }
        if s.min_eigenvalue() < -1e-10 {
            return Err(Error::domain(format!("member {x} is not positive semidefinite")));
        }
        lambda = lambda.max(s.max_eigenvalue());
    }
    let bound = shifted_chernoff_bound(dim, m_samples, eps, delta, lambda)?;
    let mut sigma = HermitianOperator::zeros(dim);
    for (s, p) in family.iter().zip(probs) {
        sigma = sigma.add_scaled(s, *p);
    }
    let threshold = eps * (sigma.trace_norm() + delta * dim as f64);
    let id = HermitianOperator::identity(dim);
    let zeta = |s: &HermitianOperator| s.add_scaled(&id, delta).scale(1.0 / (lambda + delta));
    let floor = delta / (lambda + delta);
    let tol = 1e-12;
    let mut zeta_violations = family
        .iter()
        .filter(|s| {
            let z = zeta(s).eigenvalues();
            z[0] > 1.0 + tol || z[z.len() - 1] < -tol
        })
        .count();
    let rows: Vec<(f64, bool)> = par::map_indexed(trials, |t| {
        let mut rng = stream_rng(seed, t as u64);
        let mut counts = vec![0usize; family.len()];
        for _ in 0..m_samples {
            counts[sample_index(probs, rng.random())] += 1;
        }
        let mut tilde = HermitianOperator::zeros(dim);
        for (s, &k) in family.iter().zip(&counts) {
            if k > 0 {
                tilde = tilde.add_scaled(s, k as f64 / m_samples as f64);
            }
        }
        let z = zeta(&tilde).eigenvalues();
        let bad = z[0] > 1.0 + tol || z[z.len() - 1] < floor - tol;
        (tilde.sub(&sigma).trace_norm(), bad)
    });
    zeta_violations += rows.iter().filter(|r| r.1).count();
    let stats: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let tail = stats.iter().filter(|&&s| s > threshold).count() as f64 / trials.max(1) as f64;
    Ok(ShiftedReport {
        report: TrialReport { trials, empirical_tail: tail, bound_value: bound, per_trial_stat: stats, vacuous_flag: bound >= 1.0 },
        threshold,
        lambda,
        zeta_violations,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct NonsquareReport {
    /// Per-trial `||A~ - A||` against threshold `eps`.
    pub report: TrialReport,
    /// `20 d1 exp(-1e-11 eps^3 M / beta)`.
    pub component_main: f64,
    /// `5 exp(-1e-8 eps^2 M)`.
    pub component_scalar: f64,
    pub ell: f64,
    /// `4 ln(480 ell^3 / eps)`.
    pub t: f64,
    /// Per-trial mass of labels with `||A^g_x||_inf > (t/q) ||A_x||_inf`.
    pub indicator_mass: Vec<f64>,
    /// `eps / (480 ell)`.
    pub indicator_cap: f64,
}

pub fn nonsquare_chernoff_experiment(
    family: &[GeneralMatrix],
    probs: &[f64],
    eps: f64,
    beta: f64,
    m_samples: usize,
    trials: usize,
    seed: u64,
) -> Result<NonsquareReport> {
    if family.is_empty() || family.len() != probs.len() {
        return Err(Error::shape("family and probabilities must be nonempty and aligned"));
    }
    let (d1, d2) = (family[0].rows(), family[0].cols());
    let q = stack_count(d1, d2)?;
    let (component_main, component_scalar) = nonsquare_components(d1, m_samples, eps, beta)?;
    let mut op_norms = Vec::with_capacity(family.len());
    for (x, a) in family.iter().enumerate() {
        if a.rows() != d1 || a.cols() != d2 {
            return Err(Error::shape(format!("label {x} is {}x{}, expected {d1}x{d2}", a.rows(), a.cols())));
        }
        let sv = a.singular_values();
        let tn: f64 = sv.iter().sum();
        if tn > 1.0 + 1e-10 {
            return Err(Error::Precondition(format!("label {x}: trace norm {tn:e} exceeds 1")));
        }
        if sv[0] > beta / d2 as f64 + 1e-10 {
            return Err(Error::Precondition(format!("label {x}: operator norm {:e} exceeds beta/d2", sv[0])));
        }
        op_norms.push(sv[0]);
    }
    let mut mean = CMat::zeros(d1, d2);
    for (a, p) in family.iter().zip(probs) {
        mean += a.matrix() * c(*p);
    }
    let ell = NONSQUARE_ELL;
    let t = 4.0 * (480.0 * ell.powi(3) / eps).ln();
    let rows: Vec<(f64, f64)> = par::try_map_indexed(trials, |tr| {
        let mut rng = stream_rng(seed, tr as u64);
        let mut acc = -mean.clone();
        let mut counts = vec![0usize; family.len()];
        for _ in 0..m_samples {
            counts[sample_index(probs, rng.random())] += 1;
        }
        for (a, &k) in family.iter().zip(&counts) {
            if k > 0 {
                acc += a.matrix() * c(k as f64 / m_samples as f64);
            }
        }
        let g = draw_blocks(&mut rng, d1, q);
        let mut mass = 0.0;
        for (x, a) in family.iter().enumerate() {
            if gaussian_block_embed(a, &g)?.operator_norm() > t / q as f64 * op_norms[x] {
                mass += probs[x];
            }
        }
        Ok::<_, Error>((singular_values(&acc).iter().sum(), mass))
    })?;
    let bound = nonsquare_bound(d1, m_samples, eps, beta)?;
    Ok(NonsquareReport {
        report: TrialReport::from_stats(rows.iter().map(|r| r.0).collect(), eps, bound),
        component_main,
        component_scalar,
        ell,
        t,
        indicator_mass: rows.iter().map(|r| r.1).collect(),
        indicator_cap: eps / (480.0 * ell),
    })
}
