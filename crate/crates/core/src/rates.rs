//! Achievability and converse rate formulas for the wiretap channel.

use serde::Serialize;
use crate::divergence::{smooth_max_divergence, DEFAULT_GRID_STEP};
use crate::ensemble::CqState;
use crate::error::{Error, Result};

/// Slack of the converse in bits.
pub const CONVERSE_SLACK_BITS: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AchievabilityInputs {
    pub i0_bits: f64,
    pub iinf_bits: f64,
    pub eps_prime: f64,
    pub delta_hat: f64,
    pub dim_e: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatePair {
    /// Message rate `R` (may be negative).
    pub r_bits: f64,
    /// Band rate `R~`.
    pub r_tilde_bits: f64,
    /// `C = dim_E (log2(4 dim_E / delta_hat) + 1)^2`.
    pub c_const: f64,
    /// `log2(1e16 (log2 dim_E)^6 / delta_hat^9 * (-ln(delta_hat / (30 C))))`.
    pub penalty_bits: f64,
    /// `6 eps'`.
    pub error_budget: f64,
    /// `48 sqrt(delta_hat)`.
    pub leakage_budget: f64,
}

/// `dim (log2(4 dim / eps) + 1)^2`, the covering constant.
pub fn covering_constant(dim: usize, eps: f64) -> f64 {
    let d = dim as f64;
    let l = (4.0 * d / eps).log2() + 1.0;
    d * l * l
}

/// Penalty term in bits, evaluated in log space so tiny `delta_hat` does not underflow.
pub fn rate_penalty_bits(dim_e: usize, delta_hat: f64, c_const: f64) -> f64 {
    let log_dim = (dim_e as f64).log2();
    let inner = -(delta_hat / (30.0 * c_const)).ln();
    16.0 * 10f64.log2() + 6.0 * log_dim.log2() - 9.0 * delta_hat.log2() + inner.log2()
}

pub fn achievable_rate(inp: &AchievabilityInputs) -> Result<RatePair> {
    let AchievabilityInputs { i0_bits, iinf_bits, eps_prime, delta_hat, dim_e } = *inp;
    if !i0_bits.is_finite() || !iinf_bits.is_finite() {
        return Err(Error::domain("i0_bits and iinf_bits must be finite"));
    }
    if !(eps_prime > 0.0 && eps_prime < 1.0) {
        return Err(Error::domain(format!("eps_prime = {eps_prime} outside (0, 1)")));
    }
    if !(delta_hat > 0.0 && delta_hat < 1.0) {
        return Err(Error::domain(format!("delta_hat = {delta_hat} outside (0, 1)")));
    }
    if dim_e < 2 {
        return Err(Error::domain(format!("dim_e = {dim_e} must be at least 2")));
    }
    let c_const = covering_constant(dim_e, delta_hat);
    if delta_hat >= 30.0 * c_const {
        return Err(Error::domain("delta_hat must be below 30 C"));
    }
    let penalty_bits = rate_penalty_bits(dim_e, delta_hat, c_const);
    let leak = iinf_bits.max(0.0);
    Ok(RatePair {
        r_bits: i0_bits - leak + eps_prime.log2() - penalty_bits,
        r_tilde_bits: leak + penalty_bits,
        c_const,
        penalty_bits,
        error_budget: 6.0 * eps_prime,
        leakage_budget: 48.0 * delta_hat.sqrt(),
    })
}

/// Largest `(eps', delta_hat)` with `18 eps' <= eps` and `144 sqrt(delta_hat) <= delta`.
pub fn theorem3_code_params(eps_target: f64, delta_target: f64) -> (f64, f64) {
    let q = delta_target / 144.0;
    (eps_target / 18.0, q * q)
}

/// `i0 - iinf + 1.5`.
pub fn converse_bound(i0_eps: f64, iinf_delta: f64) -> f64 {
    i0_eps - iinf_delta + CONVERSE_SLACK_BITS
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SecrecyCheck {
    /// `I_inf^delta[V;E]`; `-inf` when `delta >= 1`.
    pub iinf_bits: f64,
    /// `||rho^{VE} - rho^V (x) rho^E||`.
    pub leakage: f64,
    /// `1.5 + grid_step`.
    pub bound: f64,
    pub holds: bool,
}

/// Trace distance of a cq state from the product of its marginals.
pub fn cq_leakage(cq: &CqState) -> f64 {
    let rho_e = cq.marginal_b();
    cq.probs()
        .iter()
        .enumerate()
        .map(|(v, p)| p * cq.conditional(v).sub(&rho_e).trace_norm())
        .sum()
}

/// Checks `I_inf^delta[V;E] <= 1.5 + grid_step` for a code state whose leakage is at most `delta`.
pub fn converse_secrecy_check(cq_ve: &CqState, delta: f64, grid_step_bits: Option<f64>) -> Result<SecrecyCheck> {
    let step = grid_step_bits.unwrap_or(DEFAULT_GRID_STEP);
    if !(delta >= 0.0) {
        return Err(Error::domain(format!("delta = {delta} must be non-negative")));
    }
    let leakage = cq_leakage(cq_ve);
    if leakage > delta + 1e-12 {
        return Err(Error::Precondition(format!(
            "measured leakage {leakage:e} exceeds delta {delta:e}"
        )));
    }
    let bound = CONVERSE_SLACK_BITS + step;
    if delta >= 1.0 {
        // The tail never exceeds 1, so every gamma qualifies.
        return Ok(SecrecyCheck { iinf_bits: f64::NEG_INFINITY, leakage, bound, holds: true });
    }
    let d = smooth_max_divergence(cq_ve.ensemble(), delta, step)?;
    Ok(SecrecyCheck {
        iinf_bits: d.value_bits,
        leakage,
        bound,
        holds: d.value_bits <= bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::Ensemble;
    use crate::operator::DensityOperator;
    use proptest::prelude::*;

    fn inputs(i0: f64, iinf: f64) -> AchievabilityInputs {
        AchievabilityInputs { i0_bits: i0, iinf_bits: iinf, eps_prime: 0.05, delta_hat: 0.01, dim_e: 2 }
    }

    #[test]
    fn zero_leak_branch_identity() {
        let r = achievable_rate(&inputs(3.0, -0.5)).unwrap();
        assert!((r.r_bits - 3.0 - 0.05f64.log2() + r.r_tilde_bits).abs() < 1e-12);
        assert!(r.r_tilde_bits >= 0.0);
        assert_eq!(r.error_budget, 6.0 * 0.05);
    }

    #[test]
    fn constant_c() {
        let c = covering_constant(2, 0.01);
        let l = 800f64.log2() + 1.0;
        assert!((c - 2.0 * l * l).abs() < 1e-12 * c);
    }

    #[test]
    fn domain_errors() {
        let mut i = inputs(1.0, 0.0);
        i.dim_e = 1;
        assert!(matches!(achievable_rate(&i), Err(Error::Domain(_))));
        let mut i = inputs(1.0, 0.0);
        i.eps_prime = 0.0;
        assert!(matches!(achievable_rate(&i), Err(Error::Domain(_))));
        let i = inputs(f64::INFINITY, 0.0);
        assert!(achievable_rate(&i).is_err());
    }

    #[test]
    fn code_params() {
        let (e, d) = theorem3_code_params(0.18, 1.44);
        assert!((e - 0.01).abs() < 1e-17);
        assert!((d - 1e-4).abs() < 1e-19);
        assert_eq!(18.0 * e, 0.18);
    }

    #[test]
    fn converse_examples() {
        assert_eq!(converse_bound(1.0, 0.0), 2.5);
        assert!((converse_bound(3.2, 1.5) - 3.2).abs() < 1e-15);
    }

    #[test]
    fn product_state_secrecy() {
        let s = DensityOperator::from_diagonal(&[0.6, 0.4]).unwrap();
        let cq = CqState::new(Ensemble::uniform(vec![s.clone(), s]).unwrap());
        let c = converse_secrecy_check(&cq, 0.0, None).unwrap();
        assert!(c.leakage < 1e-15);
        assert!(c.iinf_bits.abs() <= 1e-3);
        assert!(c.holds);
    }

    #[test]
    fn correlated_secrecy_and_precondition() {
        let a = DensityOperator::from_diagonal(&[1.0, 0.0]).unwrap();
        let b = DensityOperator::from_diagonal(&[0.0, 1.0]).unwrap();
        let cq = CqState::new(Ensemble::uniform(vec![a, b]).unwrap());
        assert!((cq_leakage(&cq) - 1.0).abs() < 1e-12);
        assert!(matches!(converse_secrecy_check(&cq, 0.5, None), Err(Error::Precondition(_))));
        let c = converse_secrecy_check(&cq, 1.0, None).unwrap();
        assert!(c.holds);
    }

    proptest! {
        #[test]
        fn sum_identity_and_monotonicity(
            i0 in -5.0f64..60.0, iinf in -5.0f64..20.0,
            eps in 1e-6f64..0.99, dh in 1e-12f64..0.99, dim in 2usize..4096
        ) {
            let a = AchievabilityInputs { i0_bits: i0, iinf_bits: iinf, eps_prime: eps, delta_hat: dh, dim_e: dim };
            let r = achievable_rate(&a).unwrap();
            prop_assert!((r.r_bits + r.r_tilde_bits - i0 - eps.log2()).abs() <= 1e-9);
            prop_assert!(r.r_tilde_bits >= 0.0);
            let up = achievable_rate(&AchievabilityInputs { i0_bits: i0 + 0.5, ..a }).unwrap();
            prop_assert!(up.r_bits >= r.r_bits);
            if iinf >= 0.0 {
                let worse = achievable_rate(&AchievabilityInputs { iinf_bits: iinf + 0.5, ..a }).unwrap();
                prop_assert!(worse.r_bits <= r.r_bits);
            }
        }
    }
}
