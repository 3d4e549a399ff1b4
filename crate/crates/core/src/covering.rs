//! Empirical checks of the one-shot quantum covering lemma.
//!
//! The average state `rho` is split into dyadic eigenvalue bands, each band
//! further into the parts `Pi^-` / `Pi^+` on which the pinched states are
//! dominated (or not) by `4 rho`. Every deterministic inequality of the
//! argument is exposed as a number that tests can compare against zero, and
//! the sampling statements are exposed as Monte Carlo experiments.

use rand::Rng;
use serde::Serialize;

use crate::ensemble::{average_state, Ensemble};
use crate::error::{Error, Result};
use crate::operator::{
    positive_part_projector, trace_norm, CMat, DensityOperator, HermitianOperator, Mode, Projector,
};
use crate::par;
use crate::random::random_pure_vector;
use crate::rates::covering_constant;
use crate::rng::{sample_index, stream_rng};
use crate::stats::TrialReport;

/// Below this the aggregated epsilon counts as zero.
pub const EPS_ZERO: f64 = 1e-12;
pub const DEFAULT_EPS_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct CoveringInstance {
    pub ensemble: Ensemble,
    pub i_param: f64,
    pub rho: DensityOperator,
    /// `{2^I rho >= rho_x}`.
    pub pi_x: Vec<Projector>,
    /// `1 - Tr[Pi_x rho_x]`.
    pub eps_x: Vec<f64>,
    /// Epsilon used downstream; equals `eps_raw` unless a floor was applied.
    pub eps: f64,
    pub eps_raw: f64,
    pub floored: bool,
}

impl CoveringInstance {
    pub fn dim(&self) -> usize {
        self.rho.dim()
    }

    /// `Pi_x rho_x Pi_x`.
    pub fn rho_prime(&self, x: usize) -> HermitianOperator {
        self.pi_x[x].compress(self.ensemble.state(x))
    }

    /// `E[Pi_X rho_X Pi_X]`.
    pub fn rho_prime_avg(&self) -> HermitianOperator {
        let mut acc = HermitianOperator::zeros(self.dim());
        for (x, p) in self.ensemble.probs().iter().enumerate() {
            acc = acc.add_scaled(&self.rho_prime(x), *p);
        }
        acc
    }
}

fn instance_parts(e: &Ensemble, i_param: f64) -> Result<(DensityOperator, Vec<Projector>, Vec<f64>, f64)> {
    if !(i_param >= 0.0 && i_param.is_finite()) {
        return Err(Error::domain(format!("I = {i_param} must be finite and non-negative")));
    }
    if e.dim() < 2 {
        return Err(Error::domain("covering constants need dimension at least 2"));
    }
    let rho = average_state(e);
    let scaled = rho.scale(i_param.exp2());
    let pi_x: Vec<Projector> = par::map_indexed(e.len(), |x| {
        positive_part_projector(&scaled.sub(e.state(x)), Mode::Weak)
    });
    let eps_x: Vec<f64> = (0..e.len()).map(|x| 1.0 - pi_x[x].trace_product(e.state(x))).collect();
    let eps = e.probs().iter().zip(&eps_x).map(|(p, v)| p * v).sum();
    Ok((rho, pi_x, eps_x, eps))
}

/// Fails with `DegenerateEpsilon` when the aggregated epsilon vanishes.
pub fn build_covering_instance(e: &Ensemble, i_param: f64) -> Result<CoveringInstance> {
    let (rho, pi_x, eps_x, eps) = instance_parts(e, i_param)?;
    if eps <= EPS_ZERO {
        return Err(Error::DegenerateEpsilon { eps });
    }
    Ok(CoveringInstance { ensemble: e.clone(), i_param, rho, pi_x, eps_x, eps, eps_raw: eps, floored: false })
}

/// Like [`build_covering_instance`], but a vanishing epsilon is replaced by
/// `floor` and the instance is marked as floored.
pub fn build_covering_instance_with_floor(e: &Ensemble, i_param: f64, floor: f64) -> Result<CoveringInstance> {
    if !(floor > EPS_ZERO && floor < 1.0) {
        return Err(Error::domain(format!("epsilon floor {floor} outside (1e-12, 1)")));
    }
    let (rho, pi_x, eps_x, eps_raw) = instance_parts(e, i_param)?;
    let floored = eps_raw <= EPS_ZERO;
    let eps = if floored { floor } else { eps_raw };
    Ok(CoveringInstance { ensemble: e.clone(), i_param, rho, pi_x, eps_x, eps, eps_raw, floored })
}

/// `K = ceil(log2(4 dim / eps))`.
pub fn band_count(dim: usize, eps: f64) -> usize {
    (4.0 * dim as f64 / eps).log2().ceil().max(1.0) as usize
}

/// Band `i >= 1` with `2^-i < lambda <= 2^-(i-1)`.
pub fn band_of(lambda: f64) -> usize {
    assert!(lambda > 0.0, "band_of needs a positive eigenvalue");
    let mut i = ((-lambda.log2()).floor().max(0.0) as i32) + 1;
    while lambda <= 2f64.powi(-i) {
        i += 1;
    }
    while i > 1 && lambda > 2f64.powi(-(i - 1)) {
        i -= 1;
    }
    i as usize
}

#[derive(Clone, Debug)]
pub struct BandDecomposition {
    pub k_bands: usize,
    /// `pi_i[i - 1]` is band `i`, for `i = 1..=K`.
    pub pi_i: Vec<Projector>,
    /// Orthonormal eigenvectors spanning each band, as columns.
    pub band_basis: Vec<CMat>,
    /// `(lambda_min, lambda_max)` of `rho` on each nonempty band.
    pub band_range: Vec<Option<(f64, f64)>>,
    pub pi_star: Projector,
    /// `Tr[(I - Pi_star) rho]`.
    pub tail_mass: f64,
    /// Eigenvalues of `rho` excluded from bands `1..=K` (beyond `K` or at most the zero threshold).
    pub excluded: Vec<f64>,
}

impl BandDecomposition {
    pub fn band(&self, i: usize) -> &Projector {
        &self.pi_i[i - 1]
    }

    pub fn is_empty_band(&self, i: usize) -> bool {
        self.pi_i[i - 1].rank() == 0
    }

    /// Largest `lambda_max / lambda_min` over nonempty bands.
    pub fn max_ratio(&self) -> f64 {
        self.band_range
            .iter()
            .flatten()
            .map(|(lo, hi)| hi / lo)
            .fold(1.0, f64::max)
    }

    /// `max_{i != j} ||Pi_i Pi_j||_inf`.
    pub fn orthogonality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..self.pi_i.len() {
            for b in a + 1..self.pi_i.len() {
                let prod = self.pi_i[a].matrix() * self.pi_i[b].matrix();
                worst = worst.max(crate::operator::max_abs_entry(&prod));
            }
        }
        worst
    }
}

pub fn band_decomposition(rho: &DensityOperator, eps: f64) -> Result<BandDecomposition> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("eps = {eps} outside (0, 1)")));
    }
    let d = rho.dim();
    let k = band_count(d, eps);
    let spec = rho.eig();
    let tau = spec.threshold();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut excluded = Vec::new();
    for (j, &lam) in spec.values.iter().enumerate() {
        if lam > tau && band_of(lam) <= k {
            members[band_of(lam) - 1].push(j);
        } else {
            excluded.push(lam);
        }
    }
    let pi_i: Vec<Projector> = members.iter().map(|cols| Projector::from_columns(&spec.vectors, cols)).collect();
    let band_basis = members
        .iter()
        .map(|cols| CMat::from_fn(d, cols.len(), |r, c| spec.vectors[(r, cols[c])]))
        .collect();
    let band_range = members
        .iter()
        .map(|cols| {
            let vals: Vec<f64> = cols.iter().map(|&j| spec.values[j]).collect();
            (!vals.is_empty()).then(|| (vals.iter().copied().fold(f64::INFINITY, f64::min), vals[0]))
        })
        .collect();
    let all: Vec<usize> = members.concat();
    let pi_star = Projector::from_columns(&spec.vectors, &all);
    let tail_mass = 1.0 - pi_star.trace_product(rho);
    Ok(BandDecomposition { k_bands: k, pi_i, band_basis, band_range, pi_star, tail_mass, excluded })
}

#[derive(Clone, Debug)]
pub struct BandSplit {
    pub pi_plus_i: Vec<Projector>,
    pub pi_minus_i: Vec<Projector>,
    pub pi_plus_star: Projector,
    pub pi_minus_star: Projector,
    /// `Pi_x rho_x Pi_x`.
    pub rho_prime_x: HermitianOperator,
    /// `Pi_star rho'_x Pi_star`.
    pub rho_star_x: HermitianOperator,
    pub rho_minus_star_x: HermitianOperator,
    pub rho_plus_star_x: HermitianOperator,
    /// `||rho_star_x - rho_minus - rho_plus||`, the weight of the cross terms.
    pub residual: f64,
}

/// Splits band `i` into `{Pi_i Pi_x rho Pi_x Pi_i > 4 Pi_i rho Pi_i}` and its
/// complement, solving the eigenproblem on the band subspace.
pub fn band_split(ci: &CoveringInstance, bands: &BandDecomposition, x: usize) -> BandSplit {
    let d = ci.dim();
    let pxrpx = ci.pi_x[x].compress(&ci.rho);
    let diff = pxrpx.sub(&ci.rho.scale(4.0));
    let mut pi_plus_i = Vec::with_capacity(bands.k_bands);
    let mut pi_minus_i = Vec::with_capacity(bands.k_bands);
    for basis in &bands.band_basis {
        if basis.ncols() == 0 {
            pi_plus_i.push(Projector::zeros(d));
            pi_minus_i.push(Projector::zeros(d));
            continue;
        }
        let local = HermitianOperator::new(basis.adjoint() * diff.matrix() * basis).expect("finite band block");
        let spec = local.eig();
        let tau = spec.threshold();
        let embedded = basis * &spec.vectors;
        let plus: Vec<usize> = (0..spec.values.len()).filter(|&k| spec.values[k] > tau).collect();
        let minus: Vec<usize> = (0..spec.values.len()).filter(|&k| spec.values[k] <= tau).collect();
        pi_plus_i.push(Projector::from_columns(&embedded, &plus));
        pi_minus_i.push(Projector::from_columns(&embedded, &minus));
    }
    let pi_plus_star = Projector::orthogonal_sum(&pi_plus_i.iter().collect::<Vec<_>>(), d);
    let pi_minus_star = Projector::orthogonal_sum(&pi_minus_i.iter().collect::<Vec<_>>(), d);
    let rho_prime_x = ci.rho_prime(x);
    let rho_star_x = bands.pi_star.compress(&rho_prime_x);
    let rho_minus_star_x = pi_minus_star.compress(&rho_star_x);
    let rho_plus_star_x = pi_plus_star.compress(&rho_star_x);
    let residual = rho_star_x.sub(&rho_minus_star_x).sub(&rho_plus_star_x).trace_norm();
    BandSplit {
        pi_plus_i,
        pi_minus_i,
        pi_plus_star,
        pi_minus_star,
        rho_prime_x,
        rho_star_x,
        rho_minus_star_x,
        rho_plus_star_x,
        residual,
    }
}

/// Deterministic inequalities of the decomposition for one label, each as
/// `(lhs, rhs)` or as a gap that should be non-negative.
#[derive(Clone, Debug, Serialize)]
pub struct SplitChecks {
    /// `min_i lambda_min(2^{I+2} lambda_max(Pi_i rho Pi_i) Pi_i - Pi^-_i rho'_x Pi^-_i)`.
    pub piminus_gap: f64,
    /// `Tr[Pi^+_star rho_star_x Pi^+_star]`.
    pub exptr_lhs: f64,
    /// `4 Tr[Pi_x^c rho_x Pi_x^c]`.
    pub exptr_rhs: f64,
    pub residual: f64,
}

pub fn split_checks(ci: &CoveringInstance, bands: &BandDecomposition, x: usize, split: &BandSplit) -> SplitChecks {
    let mut gap = f64::INFINITY;
    for (i, range) in bands.band_range.iter().enumerate() {
        let Some((_, lmax)) = range else { continue };
        let lhs = split.pi_minus_i[i].compress(&split.rho_prime_x);
        let rhs = bands.pi_i[i].scale((ci.i_param + 2.0).exp2() * lmax);
        gap = gap.min(rhs.sub(&lhs).min_eigenvalue());
    }
    let comp = ci.pi_x[x].complement();
    SplitChecks {
        piminus_gap: gap,
        exptr_lhs: split.rho_plus_star_x.trace(),
        exptr_rhs: 4.0 * comp.trace_product(ci.ensemble.state(x)),
        residual: split.residual,
    }
}

/// Label-averaged view of the decomposition.
#[derive(Clone, Debug, Serialize)]
pub struct DecompositionSummary {
    pub eps: f64,
    pub k_bands: usize,
    pub tail_mass: f64,
    pub max_band_ratio: f64,
    /// `E_X[Tr rho^+_{star,X}]`, to be compared with `4 eps`.
    pub expected_plus_trace: f64,
    /// `sum_x p_x ||rho_x - Pi_star rho_x Pi_star||`.
    pub gentle_lhs: f64,
    /// `||rho' - rho||`.
    pub claim2_lhs: f64,
    pub per_label: Vec<SplitChecks>,
    pub max_residual: f64,
}

pub fn decomposition_summary(ci: &CoveringInstance) -> Result<DecompositionSummary> {
    let bands = band_decomposition(&ci.rho, ci.eps)?;
    let per_label: Vec<SplitChecks> = par::map_indexed(ci.ensemble.len(), |x| {
        let split = band_split(ci, &bands, x);
        split_checks(ci, &bands, x, &split)
    });
    let probs = ci.ensemble.probs();
    let expected_plus_trace = probs.iter().zip(&per_label).map(|(p, c)| p * c.exptr_lhs).sum();
    let gentle_lhs = probs
        .iter()
        .enumerate()
        .map(|(x, p)| {
            let s = ci.ensemble.state(x);
            p * s.sub(&bands.pi_star.compress(s)).trace_norm()
        })
        .sum();
    let claim2_lhs = ci.rho_prime_avg().sub(&ci.rho).trace_norm();
    let max_residual = per_label.iter().map(|c| c.residual).fold(0.0, f64::max);
    Ok(DecompositionSummary {
        eps: ci.eps,
        k_bands: bands.k_bands,
        tail_mass: bands.tail_mass,
        max_band_ratio: bands.max_ratio(),
        expected_plus_trace,
        gentle_lhs,
        claim2_lhs,
        per_label,
        max_residual,
    })
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct KeyLemmaReport {
    pub probes: usize,
    /// Probes satisfying `<v|Pi_x rho Pi_x|v> > 4 <v|rho|v>`.
    pub premise_hits: usize,
    pub violations_a: usize,
    /// Largest `alpha - 4 beta` over premise hits (negative when part (a) holds).
    pub worst_margin_a: f64,
    pub part_b_lhs: f64,
    pub part_b_rhs: f64,
    pub violation_b: bool,
}

/// Part (a) on random probe vectors, part (b) for `Pi^+ = {Pi Pi_x rho Pi_x Pi > 4 Pi rho Pi}`.
///
/// Half of the probes are drawn from the span of `{Pi_x rho Pi_x > 4 rho}`
/// when that span is nonempty, so the premise is exercised.
pub fn key_lemma_check(
    rho: &HermitianOperator,
    pi_x: &Projector,
    pi: &Projector,
    probes: usize,
    seed: u64,
) -> Result<KeyLemmaReport> {
    let d = rho.dim();
    if pi_x.dim() != d || pi.dim() != d {
        return Err(Error::shape("key lemma operands differ in dimension"));
    }
    let a_op = pi_x.compress(rho);
    let b_op = pi_x.complement().compress(rho);
    let premise = a_op.sub(&rho.scale(4.0)).eig();
    let tau = premise.threshold();
    let hot: Vec<usize> = (0..d).filter(|&k| premise.values[k] > tau).collect();

    let quad = |h: &HermitianOperator, v: &CMat| (v.adjoint() * h.matrix() * v)[(0, 0)].re;
    let mut rep = KeyLemmaReport { probes, worst_margin_a: f64::NEG_INFINITY, ..Default::default() };
    let mut rng = stream_rng(seed, 0);
    for n in 0..probes {
        let mut v = CMat::from_column_slice(d, 1, &random_pure_vector(&mut rng, d));
        if n % 2 == 1 && !hot.is_empty() {
            let coeffs = random_pure_vector(&mut rng, hot.len());
            v = CMat::zeros(d, 1);
            for (c, &k) in coeffs.iter().zip(&hot) {
                v += premise.vectors.column(k) * *c;
            }
        }
        let alpha = quad(&a_op, &v);
        if alpha > 4.0 * quad(rho, &v) {
            rep.premise_hits += 1;
            let beta = quad(&b_op, &v);
            rep.worst_margin_a = rep.worst_margin_a.max(alpha - 4.0 * beta);
            if !(alpha < 4.0 * beta + 1e-10) {
                rep.violations_a += 1;
            }
        }
    }

    let plus = positive_part_projector(&pi.compress(&a_op).sub(&pi.compress(rho).scale(4.0)), Mode::Strict);
    rep.part_b_lhs = plus.trace_product(&a_op);
    rep.part_b_rhs = 4.0 * plus.trace_product(&b_op);
    rep.violation_b = rep.part_b_lhs > rep.part_b_rhs + 1e-10;
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GentleCheck {
    /// `1 - Tr[Lambda rho]`.
    pub eps: f64,
    /// `sum_x p_x ||rho_x - sqrt(Lambda) rho_x sqrt(Lambda)||`.
    pub lhs: f64,
    /// `2 sqrt(eps)`.
    pub bound: f64,
}

impl GentleCheck {
    pub fn holds(&self, tol: f64) -> bool {
        self.lhs <= self.bound + tol
    }
}

/// Gentle measurement for an ensemble and an effect `0 <= Lambda <= I`.
pub fn gentle_measurement_check(e: &Ensemble, lambda: &HermitianOperator) -> Result<GentleCheck> {
    if lambda.dim() != e.dim() {
        return Err(Error::shape("effect and ensemble dimensions differ"));
    }
    let ev = lambda.eigenvalues();
    if ev[0] > 1.0 + 1e-10 || ev[ev.len() - 1] < -1e-10 {
        return Err(Error::Validation("effect is not between 0 and I".into()));
    }
    let sqrt = lambda.apply_fn(|v| v.clamp(0.0, 1.0).sqrt());
    let rho = average_state(e);
    let eps = (1.0 - lambda.trace_product(&rho)).max(0.0);
    let lhs = e
        .probs()
        .iter()
        .zip(e.states())
        .map(|(p, s)| p * s.sub(&s.sandwich(sqrt.matrix())).trace_norm())
        .sum();
    Ok(GentleCheck { eps, lhs, bound: 2.0 * eps.sqrt() })
}

/// `30 C exp(-1e-16 eps^9 / (log2 dim)^6 * M / 2^I)`.
pub fn thm5_rhs(dim: usize, eps: f64, i_param: f64, m_samples: usize) -> f64 {
    let c = covering_constant(dim, eps);
    let l = (dim as f64).log2();
    let rate = 1e-16 * eps.powi(9) / l.powi(6) * m_samples as f64 / i_param.exp2();
    30.0 * c * (-rate).exp()
}

/// `25 dim exp(-1e-12 eps^3 M / 2^I)`.
pub fn thm6_rhs(dim: usize, eps: f64, i_param: f64, m_samples: usize) -> f64 {
    25.0 * dim as f64 * (-1e-12 * eps.powi(3) * m_samples as f64 / i_param.exp2()).exp()
}

#[derive(Clone, Debug, Serialize)]
pub struct CoveringReport {
    pub m_samples: usize,
    pub trials: usize,
    pub eps: f64,
    pub eps_floored: bool,
    pub i_param: f64,
    /// `||rho~ - rho||` per trial.
    pub deviations: Vec<f64>,
    /// `22 sqrt(eps)`.
    pub threshold: f64,
    pub empirical_fail: f64,
    pub bound_rhs: f64,
    pub mean_deviation: f64,
    /// `exp(-2 M eps^2)`, the scalar Chernoff bound of the first two claims.
    pub scalar_bound: f64,
    /// Frequency of `mean_m ||rho_X - Pi_star rho_X Pi_star|| >= sqrt(eps) + 2 eps`.
    pub claim1_fail: f64,
    /// Frequency of `mean_m ||rho'_X - rho_X|| >= 2 sqrt(eps) + 2 eps`.
    pub claim2_fail: f64,
}

/// Label counts of `m` i.i.d. draws.
fn draw_counts<R: Rng>(rng: &mut R, probs: &[f64], m: usize) -> Vec<usize> {
    let mut counts = vec![0usize; probs.len()];
    for _ in 0..m {
        counts[sample_index(probs, rng.random())] += 1;
    }
    counts
}

fn weighted_sum(states: &[DensityOperator], counts: &[usize], m: usize) -> HermitianOperator {
    let mut acc = HermitianOperator::zeros(states[0].dim());
    for (s, &c) in states.iter().zip(counts) {
        if c > 0 {
            acc = acc.add_scaled(s, c as f64 / m as f64);
        }
    }
    acc
}

/// Trial `t` draws its samples from stream `t` of `master_seed`.
pub fn covering_experiment(ci: &CoveringInstance, m_samples: usize, trials: usize, master_seed: u64) -> Result<CoveringReport> {
    if m_samples == 0 {
        return Err(Error::domain("m_samples must be at least 1"));
    }
    let bands = band_decomposition(&ci.rho, ci.eps)?;
    let probs = ci.ensemble.probs();
    let states = ci.ensemble.states();
    let g1: Vec<f64> = states.iter().map(|s| s.sub(&bands.pi_star.compress(s)).trace_norm()).collect();
    let g2: Vec<f64> = (0..states.len()).map(|x| ci.rho_prime(x).sub(&states[x]).trace_norm()).collect();
    let eps = ci.eps;
    let rows: Vec<(f64, f64, f64)> = par::map_indexed(trials, |t| {
        let counts = draw_counts(&mut stream_rng(master_seed, t as u64), probs, m_samples);
        let dev = weighted_sum(states, &counts, m_samples).sub(&ci.rho).trace_norm();
        let avg = |g: &[f64]| g.iter().zip(&counts).map(|(v, &c)| v * c as f64).sum::<f64>() / m_samples as f64;
        (dev, avg(&g1), avg(&g2))
    });
    let nt = trials.max(1) as f64;
    let threshold = 22.0 * eps.sqrt();
    let deviations: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let frac = |pred: &dyn Fn(&(f64, f64, f64)) -> bool| rows.iter().filter(|r| pred(r)).count() as f64 / nt;
    Ok(CoveringReport {
        m_samples,
        trials,
        eps,
        eps_floored: ci.floored,
        i_param: ci.i_param,
        empirical_fail: frac(&|r| r.0 >= threshold),
        mean_deviation: crate::stats::mean(&deviations),
        deviations,
        threshold,
        bound_rhs: thm5_rhs(ci.dim(), eps, ci.i_param, m_samples),
        scalar_bound: (-2.0 * m_samples as f64 * eps * eps).exp(),
        claim1_fail: frac(&|r| r.1 >= eps.sqrt() + 2.0 * eps),
        claim2_fail: frac(&|r| r.2 >= 2.0 * eps.sqrt() + 2.0 * eps),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct OffDiagReport {
    pub band_i: usize,
    pub band_l: usize,
    /// Deviation threshold `eps / K^2`.
    pub eps_block: f64,
    /// `max_x ||sigma^-_{i,l,x}||`.
    pub max_trace_norm: f64,
    /// `2^{I+3} sqrt(lambda_min(i) lambda_min(l))`.
    pub op_norm_cap: f64,
    pub max_op_norm: f64,
    pub report: TrialReport,
}

/// Sampling experiment on the off-diagonal block `Pi^-_{i,x} rho'_x Pi^-_{l,x}`.
pub fn offdiag_block_experiment(
    ci: &CoveringInstance,
    bands: &BandDecomposition,
    i: usize,
    l: usize,
    m_samples: usize,
    trials: usize,
    master_seed: u64,
) -> Result<OffDiagReport> {
    if i == l {
        return Err(Error::domain("off-diagonal blocks need i != l"));
    }
    if m_samples == 0 {
        return Err(Error::domain("m_samples must be at least 1"));
    }
    for b in [i, l] {
        if b == 0 || b > bands.k_bands || bands.is_empty_band(b) {
            return Err(Error::EmptyBand(b));
        }
    }
    let (lmin_i, _) = bands.band_range[i - 1].unwrap();
    let (lmin_l, _) = bands.band_range[l - 1].unwrap();
    let op_norm_cap = (ci.i_param + 3.0).exp2() * (lmin_i * lmin_l).sqrt();

    let n = ci.ensemble.len();
    let sigmas: Vec<CMat> = par::map_indexed(n, |x| {
        let split = band_split(ci, bands, x);
        split.pi_minus_i[i - 1].matrix() * split.rho_prime_x.matrix() * split.pi_minus_i[l - 1].matrix()
    });
    let mut max_trace_norm: f64 = 0.0;
    let mut max_op_norm: f64 = 0.0;
    for (x, s) in sigmas.iter().enumerate() {
        let sv = crate::operator::singular_values(s);
        let tn: f64 = sv.iter().sum();
        let on = sv.first().copied().unwrap_or(0.0);
        if tn > 1.0 + 1e-8 || on > op_norm_cap + 1e-8 {
            return Err(Error::Precondition(format!(
                "label {:?}: ||sigma|| = {tn:e}, ||sigma||_inf = {on:e} (cap {op_norm_cap:e})",
                ci.ensemble.labels()[x]
            )));
        }
        max_trace_norm = max_trace_norm.max(tn);
        max_op_norm = max_op_norm.max(on);
    }
    let probs = ci.ensemble.probs();
    let d = ci.dim();
    let mut mean = CMat::zeros(d, d);
    for (p, s) in probs.iter().zip(&sigmas) {
        mean += s * num_complex::Complex64::new(*p, 0.0);
    }
    let stats: Vec<f64> = par::map_indexed(trials, |t| {
        let counts = draw_counts(&mut stream_rng(master_seed, t as u64), probs, m_samples);
        let mut acc = -mean.clone();
        for (s, &c) in sigmas.iter().zip(&counts) {
            if c > 0 {
                acc += s * num_complex::Complex64::new(c as f64 / m_samples as f64, 0.0);
            }
        }
        trace_norm(&acc)
    });
    let k = bands.k_bands as f64;
    let eps_block = ci.eps / (k * k);
    let bound = thm6_rhs(d, eps_block, ci.i_param, m_samples);
    Ok(OffDiagReport {
        band_i: i,
        band_l: l,
        eps_block,
        max_trace_norm,
        op_norm_cap,
        max_op_norm,
        report: TrialReport::from_stats(stats, eps_block, bound),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_density, random_probs};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag(d: &[f64]) -> DensityOperator {
        DensityOperator::from_diagonal(d).unwrap()
    }

    fn random_ensemble(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Ensemble {
        let states = (0..n).map(|_| random_density(rng, d, 1 + n % d)).collect();
        Ensemble::from_states(random_probs(rng, n), states).unwrap()
    }

    #[test]
    fn degenerate_instances() {
        let r = diag(&[0.7, 0.3]);
        let e = Ensemble::uniform(vec![r.clone(), r]).unwrap();
        assert!(matches!(build_covering_instance(&e, 0.0), Err(Error::DegenerateEpsilon { .. })));
        let ci = build_covering_instance_with_floor(&e, 0.0, DEFAULT_EPS_FLOOR).unwrap();
        assert!(ci.floored && ci.eps == DEFAULT_EPS_FLOOR);
        assert!(ci.pi_x.iter().all(|p| p.rank() == 2));
        let e = Ensemble::uniform(vec![diag(&[1.0, 0.0]), diag(&[0.0, 1.0])]).unwrap();
        assert!(matches!(build_covering_instance(&e, 1.0), Err(Error::DegenerateEpsilon { .. })));
    }

    #[test]
    fn half_bit_instance() {
        // 2^{0.5} I/2 - |0><0| has eigenvalues 0.707 - 1 < 0 and 0.707 > 0.
        let e = Ensemble::uniform(vec![diag(&[1.0, 0.0]), diag(&[0.0, 1.0])]).unwrap();
        let ci = build_covering_instance(&e, 0.5).unwrap();
        assert!((ci.eps_x[0] - 1.0).abs() < 1e-12);
        assert!((ci.eps_x[1] - 1.0).abs() < 1e-12);
        assert!((ci.eps - 1.0).abs() < 1e-12);
    }

    #[test]
    fn band_membership() {
        assert_eq!(band_of(1.0), 1);
        assert_eq!(band_of(0.9), 1);
        assert_eq!(band_of(0.5), 2);
        assert_eq!(band_of(0.1), 4);
        assert_eq!(band_of(0.125), 4);
        assert_eq!(band_of(0.1250001), 3);
        let b = band_decomposition(&diag(&[0.9, 0.1]), 0.1).unwrap();
        assert_eq!(b.k_bands, 7);
        assert_eq!(b.band(1).rank(), 1);
        assert_eq!(b.band(4).rank(), 1);
        assert_eq!(b.pi_i.iter().map(|p| p.rank()).sum::<usize>(), 2);
        let b = band_decomposition(&DensityOperator::maximally_mixed(2), 0.1).unwrap();
        assert_eq!(b.band(2).rank(), 2);
        assert!(b.tail_mass.abs() < 1e-14);
    }

    #[test]
    fn random_band_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let rho = random_density(&mut rng, 5, 5);
            let b = band_decomposition(&rho, 0.05).unwrap();
            let inside: f64 = b.pi_i.iter().map(|p| p.trace_product(&rho)).sum();
            assert!((inside + b.tail_mass - 1.0).abs() < 1e-10);
            assert!(b.tail_mass <= 0.05 / 4.0 + 1e-10);
            assert!(b.max_ratio() <= 2.0);
            assert!(b.orthogonality_error() < 1e-12);
            for (i, r) in b.band_range.iter().enumerate() {
                if let Some((lo, hi)) = r {
                    assert!(*lo > 2f64.powi(-(i as i32 + 1)) && *hi <= 2f64.powi(-(i as i32)));
                }
            }
        }
    }

    #[test]
    fn identical_states_have_no_plus_part() {
        let r = diag(&[0.6, 0.3, 0.1]);
        let e = Ensemble::uniform(vec![r.clone(), r]).unwrap();
        let ci = build_covering_instance_with_floor(&e, 3.0, 0.01).unwrap();
        let bands = band_decomposition(&ci.rho, ci.eps).unwrap();
        let s = band_split(&ci, &bands, 0);
        assert_eq!(s.pi_plus_star.rank(), 0);
        assert!(s.rho_minus_star_x.max_abs_diff(&s.rho_star_x) < 1e-14);
    }

    #[test]
    fn decomposition_inequalities() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for t in 0..10 {
            let e = random_ensemble(&mut rng, 4, 2 + t % 3);
            let ci = build_covering_instance_with_floor(&e, 0.5 + 0.3 * t as f64, 1e-3).unwrap();
            let s = decomposition_summary(&ci).unwrap();
            assert!(s.tail_mass <= ci.eps / 4.0 + 1e-10);
            assert!(s.max_band_ratio <= 2.0);
            assert!(s.expected_plus_trace <= 4.0 * ci.eps + 1e-8);
            assert!(s.gentle_lhs <= 2.0 * (ci.eps / 4.0).sqrt() + 1e-9);
            assert!(s.claim2_lhs <= 2.0 * ci.eps.sqrt() + 1e-9);
            for c in &s.per_label {
                assert!(c.piminus_gap >= -1e-8);
                assert!(c.exptr_lhs <= c.exptr_rhs + 1e-8);
            }
        }
    }

    #[test]
    fn key_lemma_trivial_and_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rho = random_density(&mut rng, 3, 3).into_hermitian();
        let id = Projector::identity(3);
        let r = key_lemma_check(&rho, &id, &id, 200, 1).unwrap();
        assert_eq!(r.premise_hits, 0);
        let r = key_lemma_check(&rho, &Projector::zeros(3), &id, 200, 1).unwrap();
        assert_eq!(r.premise_hits, 0);
        assert!(!r.violation_b);
        for s in 0..20 {
            let e = random_ensemble(&mut rng, 3, 3);
            let ci = build_covering_instance_with_floor(&e, 0.3, 1e-3).unwrap();
            for x in 0..3 {
                let pi = positive_part_projector(&random_density(&mut rng, 3, 2).into_hermitian(), Mode::Strict);
                let r = key_lemma_check(&ci.rho, &ci.pi_x[x], &pi, 100, s).unwrap();
                assert_eq!(r.violations_a, 0);
                assert!(!r.violation_b);
            }
        }
    }

    #[test]
    fn gentle_measurement_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let e = random_ensemble(&mut rng, 3, 3);
            let lam = random_density(&mut rng, 3, 3).into_hermitian();
            let lam = lam.scale(1.0 / lam.max_eigenvalue());
            let g = gentle_measurement_check(&e, &lam).unwrap();
            assert!(g.holds(1e-9));
        }
    }

    #[test]
    fn deterministic_ensemble_has_no_deviation() {
        let e = Ensemble::uniform(vec![diag(&[0.8, 0.2])]).unwrap();
        let ci = build_covering_instance_with_floor(&e, 0.0, DEFAULT_EPS_FLOOR).unwrap();
        let r = covering_experiment(&ci, 50, 10, 3).unwrap();
        assert!(r.deviations.iter().all(|&d| d == 0.0));
        assert!(r.empirical_fail <= r.bound_rhs.min(1.0));
    }

    #[test]
    fn experiment_is_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let e = random_ensemble(&mut rng, 3, 2);
        let ci = build_covering_instance_with_floor(&e, 0.5, 1e-3).unwrap();
        let a = covering_experiment(&ci, 64, 8, 11).unwrap();
        let b = covering_experiment(&ci, 64, 8, 11).unwrap();
        assert_eq!(a.deviations, b.deviations);
        assert!(a.bound_rhs > 1.0);
    }

    #[test]
    fn offdiag_blocks() {
        let r = diag(&[0.6, 0.3, 0.1]);
        let e = Ensemble::uniform(vec![r.clone(), r]).unwrap();
        let ci = build_covering_instance_with_floor(&e, 0.0, 0.01).unwrap();
        let bands = band_decomposition(&ci.rho, ci.eps).unwrap();
        let rep = offdiag_block_experiment(&ci, &bands, 1, 2, 20, 5, 0).unwrap();
        assert!(rep.report.per_trial_stat.iter().all(|&s| s == 0.0));
        assert!(matches!(offdiag_block_experiment(&ci, &bands, 1, 3, 20, 5, 0), Err(Error::EmptyBand(3))));
        assert!(matches!(offdiag_block_experiment(&ci, &bands, 2, 2, 20, 5, 0), Err(Error::Domain(_))));

        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let e = random_ensemble(&mut rng, 4, 4);
        let ci = build_covering_instance_with_floor(&e, 1.0, 1e-3).unwrap();
        let bands = band_decomposition(&ci.rho, ci.eps).unwrap();
        let nonempty: Vec<usize> = (1..=bands.k_bands).filter(|&b| !bands.is_empty_band(b)).collect();
        if nonempty.len() >= 2 {
            let rep = offdiag_block_experiment(&ci, &bands, nonempty[0], nonempty[1], 32, 10, 1).unwrap();
            assert!(rep.max_trace_norm <= 1.0 + 1e-8);
            assert!(rep.report.empirical_tail <= rep.report.bound_value.min(1.0));
        }
    }
}
