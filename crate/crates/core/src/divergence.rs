//! One-shot divergences: the hypothesis-testing divergence `I_0^eps`, the
//! smooth max divergence `I_inf^eps`, and the Pinsker-type floor.
//!
//! All values are in bits.

use std::f64::consts::LN_2;

use crate::ensemble::{average_state, CqState, Ensemble};
use crate::error::{Error, Result};
use crate::operator::{positive_part_projector, CMat, DensityOperator, HermitianOperator, Mode, Projector};
use crate::par;

/// `Tr[Gamma sigma]` at or below this is treated as an exact zero.
pub const BETA_ZERO: f64 = 1e-14;
pub const BISECTION_STEPS: usize = 60;
pub const DEFAULT_GRID_STEP: f64 = 1e-3;

/// A test `0 <= Gamma <= I`, stored block-diagonally.
///
/// For a plain state pair there is a single block. For a cq pair the blocks
/// are the `Lambda_v` with `Gamma^{VB} = sum_v |v><v| (x) Lambda_v`.
#[derive(Clone, Debug)]
pub struct HypothesisTest {
    pub blocks: Vec<HermitianOperator>,
    /// `Tr[Gamma rho]`.
    pub achieved_alpha: f64,
    /// `Tr[Gamma sigma]`.
    pub achieved_beta: f64,
    /// Neyman-Pearson threshold `t` of the bracketing tests, when one was used.
    pub threshold: Option<f64>,
    /// Weight on the lower-threshold projector in the convex mixture.
    pub mixing: f64,
}

impl HypothesisTest {
    /// Dense block-diagonal operator.
    pub fn gamma_op(&self) -> HermitianOperator {
        if self.blocks.len() == 1 {
            return self.blocks[0].clone();
        }
        let d = self.blocks[0].dim();
        let n = self.blocks.len();
        let mut m = CMat::zeros(n * d, n * d);
        for (v, b) in self.blocks.iter().enumerate() {
            m.view_mut((v * d, v * d), (d, d)).copy_from(b.matrix());
        }
        HermitianOperator::new(m).expect("finite blocks")
    }
}

#[derive(Clone, Debug)]
pub enum Witness {
    Test(HypothesisTest),
    Threshold {
        gamma_bits: f64,
        tail: f64,
        grid_step_bits: f64,
        at_grid_floor: bool,
    },
}

#[derive(Clone, Debug)]
pub struct DivergenceResult {
    /// `f64::INFINITY` when `infinite` is set.
    pub value_bits: f64,
    pub infinite: bool,
    pub epsilon: f64,
    pub witness: Witness,
}

impl DivergenceResult {
    pub fn test(&self) -> Option<&HypothesisTest> {
        match &self.witness {
            Witness::Test(t) => Some(t),
            Witness::Threshold { .. } => None,
        }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::domain(format!("eps = {eps} outside [0, 1)")));
    }
    Ok(())
}

fn check_state(h: &HermitianOperator, name: &str) -> Result<()> {
    let tr = h.trace();
    if (tr - 1.0).abs() > 1e-8 {
        return Err(Error::Validation(format!("{name} has trace {tr}")));
    }
    let min = h.min_eigenvalue();
    if min < -1e-8 {
        return Err(Error::NotPositive { min_eigenvalue: min });
    }
    Ok(())
}

/// Weighted block pencil `sum_b w_b (rho_b - t sigma_b)`.
struct Pencil<'a> {
    weights: Vec<f64>,
    rho: Vec<&'a HermitianOperator>,
    sigma: Vec<&'a HermitianOperator>,
}

struct Evaluated {
    projectors: Vec<Projector>,
    alpha: f64,
    beta: f64,
}

impl Pencil<'_> {
    fn measure(&self, ps: Vec<Projector>) -> Evaluated {
        let mut alpha = 0.0;
        let mut beta = 0.0;
        for (b, p) in ps.iter().enumerate() {
            let w = self.weights[b];
            if w > 0.0 {
                alpha += w * p.trace_product(self.rho[b]);
                beta += w * p.trace_product(self.sigma[b]);
            }
        }
        Evaluated { projectors: ps, alpha, beta }
    }

    fn threshold_test(&self, t: f64) -> Evaluated {
        let ps = par::map_indexed(self.weights.len(), |b| {
            positive_part_projector(&self.rho[b].add_scaled(self.sigma[b], -t), Mode::Strict)
        });
        self.measure(ps)
    }

    fn support_test(&self) -> Evaluated {
        let ps = par::map_indexed(self.weights.len(), |b| {
            positive_part_projector(self.rho[b], Mode::Strict)
        });
        self.measure(ps)
    }

    fn sigma_kernel_test(&self) -> Evaluated {
        let ps = par::map_indexed(self.weights.len(), |b| {
            let spec = self.sigma[b].eig();
            let tau = spec.threshold();
            spec.projector_where(|v| v <= tau)
        });
        self.measure(ps)
    }

    fn solve(&self, eps: f64) -> DivergenceResult {
        let target = 1.0 - eps;
        if eps == 0.0 {
            let e = self.support_test();
            let beta = e.beta.max(0.0);
            let infinite = beta <= BETA_ZERO;
            return DivergenceResult {
                value_bits: if infinite { f64::INFINITY } else { -beta.log2() },
                infinite,
                epsilon: eps,
                witness: Witness::Test(HypothesisTest {
                    blocks: e.projectors.into_iter().map(|p| p.as_hermitian().clone()).collect(),
                    achieved_alpha: e.alpha,
                    achieved_beta: e.beta,
                    threshold: Some(0.0),
                    mixing: 1.0,
                }),
            };
        }

        // A test living on ker(sigma) reaching the target gives beta = 0.
        let ker = self.sigma_kernel_test();
        if ker.alpha >= target - 1e-12 && ker.beta <= BETA_ZERO {
            let lam = (target / ker.alpha).min(1.0);
            return DivergenceResult {
                value_bits: f64::INFINITY,
                infinite: true,
                epsilon: eps,
                witness: Witness::Test(HypothesisTest {
                    blocks: ker.projectors.iter().map(|p| p.scale(lam)).collect(),
                    achieved_alpha: lam * ker.alpha,
                    achieved_beta: lam * ker.beta,
                    threshold: None,
                    mixing: lam,
                }),
            };
        }

        // alpha(t) is non-increasing; bracket the crossing of `target`.
        let mut lo = 1.0;
        let mut hi = 1.0;
        let mut at_lo;
        let mut at_hi;
        let first = self.threshold_test(1.0);
        if first.alpha >= target {
            at_lo = first;
            loop {
                hi *= 2.0;
                at_hi = self.threshold_test(hi);
                if at_hi.alpha < target || hi > 1e300 {
                    break;
                }
                lo = hi;
                at_lo = at_hi;
            }
        } else {
            at_hi = first;
            loop {
                lo *= 0.5;
                if lo < 1e-300 {
                    lo = 0.0;
                    at_lo = self.support_test();
                    break;
                }
                at_lo = self.threshold_test(lo);
                if at_lo.alpha >= target {
                    break;
                }
                hi = lo;
                at_hi = at_lo;
            }
        }
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let e = self.threshold_test(mid);
            if e.alpha >= target {
                lo = mid;
                at_lo = e;
            } else {
                hi = mid;
                at_hi = e;
            }
        }

        let lam = if at_lo.alpha > at_hi.alpha {
            ((target - at_hi.alpha) / (at_lo.alpha - at_hi.alpha)).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let blocks: Vec<HermitianOperator> = at_lo
            .projectors
            .iter()
            .zip(&at_hi.projectors)
            .map(|(a, b)| a.scale(lam).add_scaled(b, 1.0 - lam))
            .collect();
        let alpha = lam * at_lo.alpha + (1.0 - lam) * at_hi.alpha;
        let beta = (lam * at_lo.beta + (1.0 - lam) * at_hi.beta).max(0.0);
        let infinite = beta <= 0.0;
        DivergenceResult {
            value_bits: if infinite { f64::INFINITY } else { -beta.log2() },
            infinite,
            epsilon: eps,
            witness: Witness::Test(HypothesisTest {
                blocks,
                achieved_alpha: alpha,
                achieved_beta: beta,
                threshold: Some(0.5 * (lo + hi)),
                mixing: lam,
            }),
        }
    }
}

/// `I_0^eps(rho || sigma) = -log2 min { Tr[Gamma sigma] : Tr[Gamma rho] >= 1 - eps }`.
pub fn hypothesis_testing_divergence(
    rho: &HermitianOperator,
    sigma: &HermitianOperator,
    eps: f64,
) -> Result<DivergenceResult> {
    check_eps(eps)?;
    if rho.dim() != sigma.dim() {
        return Err(Error::shape(format!(
            "rho has dimension {}, sigma {}",
            rho.dim(),
            sigma.dim()
        )));
    }
    check_state(rho, "rho")?;
    check_state(sigma, "sigma")?;
    let pencil = Pencil {
        weights: vec![1.0],
        rho: vec![rho],
        sigma: vec![sigma],
    };
    Ok(pencil.solve(eps))
}

/// `I_0^eps[V;B]` between `rho^{VB}` and `rho^V (x) rho^B`, solved block by block.
///
/// The witness blocks are the decoder operators `Lambda_v`, one per label.
pub fn cq_hypothesis_testing_divergence(cq: &CqState, eps: f64) -> Result<DivergenceResult> {
    check_eps(eps)?;
    let rho_b = cq.marginal_b();
    let n = cq.n_labels();
    let pencil = Pencil {
        weights: cq.probs().to_vec(),
        rho: (0..n).map(|v| cq.conditional(v).as_hermitian()).collect(),
        sigma: vec![rho_b.as_hermitian(); n],
    };
    Ok(pencil.solve(eps))
}

/// Range of `gamma` on which the smooth max tail is scanned.
pub fn smooth_max_grid_range(e: &Ensemble) -> (f64, f64) {
    let rho = average_state(e);
    let rs = rho.eig();
    let rho_max = rs.max();
    let rho_min_pos = rs.min_positive().unwrap_or(rho_max);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (p, s) in e.probs().iter().zip(e.states()) {
        if *p <= 0.0 {
            continue;
        }
        let sp = s.eig();
        let min_pos = sp.min_positive().unwrap_or(sp.max());
        lo = lo.min((min_pos / rho_max).log2() - 1.0);
        hi = hi.max((sp.max() / rho_min_pos).log2() + 1.0);
    }
    (lo, hi)
}

/// `sum_v p_v Tr[{rho_v - 2^gamma rho > 0} rho_v]` with `rho` the ensemble average.
pub fn smooth_max_tail(e: &Ensemble, rho: &DensityOperator, gamma_bits: f64) -> f64 {
    let c = gamma_bits.exp2();
    e.probs()
        .iter()
        .zip(e.states())
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, s)| {
            let proj = positive_part_projector(&s.add_scaled(rho, -c), Mode::Strict);
            p * proj.trace_product(s)
        })
        .sum()
}

/// `I_inf^eps = inf { gamma : tail(gamma) <= eps }`, approximated from above by
/// the smallest point of a uniform grid of step `grid_step_bits` at which the
/// tail is at most `eps`. Every grid point is evaluated.
pub fn smooth_max_divergence(e: &Ensemble, eps: f64, grid_step_bits: f64) -> Result<DivergenceResult> {
    check_eps(eps)?;
    if !(grid_step_bits > 0.0 && grid_step_bits.is_finite()) {
        return Err(Error::domain(format!("grid step {grid_step_bits} must be positive")));
    }
    let (lo, hi) = smooth_max_grid_range(e);
    let n = ((hi - lo) / grid_step_bits).ceil().max(0.0) as usize;
    let rho = average_state(e);
    let curve: Vec<(f64, f64)> = par::map_indexed(n + 1, |k| {
        let g = lo + k as f64 * grid_step_bits;
        (g, smooth_max_tail(e, &rho, g))
    });
    match curve.iter().position(|&(_, t)| t <= eps) {
        Some(k) => Ok(DivergenceResult {
            value_bits: curve[k].0,
            infinite: false,
            epsilon: eps,
            witness: Witness::Threshold {
                gamma_bits: curve[k].0,
                tail: curve[k].1,
                grid_step_bits,
                at_grid_floor: k == 0,
            },
        }),
        None => Err(Error::NoFiniteValue {
            eps,
            tail_at_ceiling: curve.last().map(|c| c.1).unwrap_or(f64::NAN),
            curve,
        }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PinskerCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub prefactor: f64,
    pub holds: bool,
}

/// `2 beta ln2 / (beta ln2 + 1)`.
pub fn pinsker_prefactor(beta: f64) -> f64 {
    let x = beta * LN_2;
    2.0 * x / (x + 1.0)
}

/// `||rho - sigma|| >= prefactor(beta) * Tr[{rho > 2^beta sigma} rho]`.
pub fn pinsker_floor(rho: &DensityOperator, sigma: &DensityOperator, beta: f64) -> Result<PinskerCheck> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::domain(format!("beta = {beta} must be positive")));
    }
    if rho.dim() != sigma.dim() {
        return Err(Error::shape("rho and sigma dimensions differ"));
    }
    let lhs = rho.sub(sigma).trace_norm();
    let proj = positive_part_projector(&rho.add_scaled(sigma, -beta.exp2()), Mode::Strict);
    let prefactor = pinsker_prefactor(beta);
    let rhs = prefactor * proj.trace_product(rho);
    Ok(PinskerCheck {
        lhs,
        rhs,
        prefactor,
        holds: lhs >= rhs - 1e-10,
    })
}
