//! Random-codebook wiretap coding with square-root-measurement decoding.
//!
//! A codebook is an `n_messages x band_size` table of input labels drawn
//! i.i.d. from the input distribution. To send message `m` the encoder picks a
//! band index uniformly; that choice is averaged out analytically, so error
//! and leakage below are exact functions of the codebook.

use serde::Serialize;
use rand::Rng;

use crate::divergence::HypothesisTest;
use crate::ensemble::{CqState, Ensemble, WiretapChannelModel};
use crate::error::{Error, Result};
use crate::operator::{inv_sqrt_on_support, positive_part_projector, DensityOperator, HermitianOperator, Mode};
use crate::par;
use crate::rng::{derive_seed, sample_index, stream_rng};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Codebook {
    pub n_messages: usize,
    pub band_size: usize,
    /// Row-major `(m, i)` table of labels.
    pub table: Vec<String>,
    pub seed: u64,
}

impl Codebook {
    pub fn label(&self, m: usize, i: usize) -> &str {
        &self.table[m * self.band_size + i]
    }

    pub fn band(&self, m: usize) -> &[String] {
        &self.table[m * self.band_size..(m + 1) * self.band_size]
    }

    /// `log2 n_messages`.
    pub fn rate_bits(&self) -> f64 {
        (self.n_messages as f64).log2()
    }

    /// Codebook with the message rows reordered: row `m` of the result is row `perm[m]`.
    pub fn permute_messages(&self, perm: &[usize]) -> Codebook {
        let table = perm.iter().flat_map(|&m| self.band(m).iter().cloned()).collect();
        Codebook { table, ..self.clone() }
    }
}

/// Draw every cell i.i.d. from `e`'s distribution. Cell `(m, i)` uses random
/// stream `m * band_size + i` of `seed`, so the table does not depend on the
/// evaluation order.
pub fn generate_codebook(e: &Ensemble, n_messages: usize, band_size: usize, seed: u64) -> Result<Codebook> {
    if n_messages == 0 || band_size == 0 {
        return Err(Error::domain("n_messages and band_size must be positive"));
    }
    let probs = e.probs();
    let table = par::map_indexed(n_messages * band_size, |cell| {
        let u: f64 = stream_rng(seed, cell as u64).random();
        e.labels()[sample_index(probs, u)].clone()
    });
    Ok(Codebook { n_messages, band_size, table, seed })
}

/// Per-label decoder blocks `Lambda_v`.
#[derive(Clone, Debug)]
pub struct DecoderBlocks {
    pub labels: Vec<String>,
    pub lambdas: Vec<HermitianOperator>,
}

impl DecoderBlocks {
    /// Pairs the blocks of a cq hypothesis test with the labels of its ensemble.
    pub fn from_test(test: &HypothesisTest, labels: &[String]) -> Result<Self> {
        if test.blocks.len() != labels.len() {
            return Err(Error::shape(format!(
                "{} witness blocks for {} labels",
                test.blocks.len(),
                labels.len()
            )));
        }
        Ok(Self { labels: labels.to_vec(), lambdas: test.blocks.clone() })
    }

    fn get(&self, label: &str) -> Result<&HermitianOperator> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|k| &self.lambdas[k])
            .ok_or_else(|| Error::Key(label.to_string()))
    }
}

#[derive(Clone, Debug)]
pub struct SrmDecoder {
    pub n_messages: usize,
    pub band_size: usize,
    /// `E(m, i)` in row-major order.
    pub elements: Vec<HermitianOperator>,
    /// `I - sum E(m, i)`; its outcome counts as an error.
    pub completion: HermitianOperator,
}

impl SrmDecoder {
    pub fn element(&self, m: usize, i: usize) -> &HermitianOperator {
        &self.elements[m * self.band_size + i]
    }

    /// `T_m = sum_i E(m, i)`.
    pub fn message_operator(&self, m: usize) -> HermitianOperator {
        let mut t = HermitianOperator::zeros(self.completion.dim());
        for i in 0..self.band_size {
            t = t.add(self.element(m, i));
        }
        t
    }

    /// Largest violation of positivity or completeness.
    pub fn validity_error(&self) -> f64 {
        let d = self.completion.dim();
        let mut worst: f64 = 0.0;
        let mut sum = self.completion.clone();
        for e in &self.elements {
            worst = worst.max(-e.min_eigenvalue());
            sum = sum.add(e);
        }
        worst = worst.max(-self.completion.min_eigenvalue());
        worst.max(sum.sub(&HermitianOperator::identity(d)).operator_norm())
    }
}

pub const LAMBDA_TOL: f64 = 1e-8;

/// `E(m,i) = S^{-1/2} Lambda_{v(m,i)} S^{-1/2}` with `S = sum_{m,i} Lambda_{v(m,i)}`.
pub fn build_srm_decoder(cb: &Codebook, blocks: &DecoderBlocks) -> Result<SrmDecoder> {
    let lambdas: Vec<&HermitianOperator> = cb.table.iter().map(|l| blocks.get(l)).collect::<Result<_>>()?;
    let d = lambdas[0].dim();
    for (l, lam) in blocks.labels.iter().zip(&blocks.lambdas) {
        let ev = lam.eigenvalues();
        if ev[0] > 1.0 + LAMBDA_TOL || ev[ev.len() - 1] < -LAMBDA_TOL {
            return Err(Error::Validation(format!("Lambda for label {l:?} is not between 0 and I")));
        }
    }
    let mut s = HermitianOperator::zeros(d);
    for lam in &lambdas {
        s = s.add(lam);
    }
    let r = inv_sqrt_on_support(&s)?;
    let elements: Vec<HermitianOperator> = par::map_indexed(lambdas.len(), |k| lambdas[k].sandwich(r.matrix()));
    let mut completion = HermitianOperator::identity(d);
    for e in &elements {
        completion = completion.sub(e);
    }
    Ok(SrmDecoder { n_messages: cb.n_messages, band_size: cb.band_size, elements, completion })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CodePerformance {
    pub avg_error: f64,
    /// `||rho^{ME} - rho^M (x) rho~^E||`.
    pub leakage: f64,
    pub per_message_error: Vec<f64>,
    /// `2 mean_m ||rho^E_m - rho^E||` with `rho^E` the input-averaged Eve state.
    pub leakage_chain_bound: f64,
}

fn band_average(states: &[DensityOperator], idx: &[usize]) -> HermitianOperator {
    let mut acc = HermitianOperator::zeros(states[0].dim());
    for &k in idx {
        acc = acc.add(&states[k]);
    }
    acc.scale(1.0 / idx.len() as f64)
}

fn channel_indices(cb: &Codebook, ch: &WiretapChannelModel) -> Result<Vec<usize>> {
    cb.table
        .iter()
        .map(|l| ch.index_of(l).ok_or_else(|| Error::Key(l.clone())))
        .collect()
}

/// Band-averaged Eve states `rho^E_m`.
pub fn eve_message_states(cb: &Codebook, ch: &WiretapChannelModel) -> Result<Vec<HermitianOperator>> {
    let idx = channel_indices(cb, ch)?;
    let eve: Vec<DensityOperator> = (0..ch.len()).map(|k| ch.eve_state(k)).collect();
    Ok((0..cb.n_messages)
        .map(|m| band_average(&eve, &idx[m * cb.band_size..(m + 1) * cb.band_size]))
        .collect())
}

/// `rho^{ME}` as a cq state with uniform messages.
pub fn code_cq_ve(cb: &Codebook, ch: &WiretapChannelModel) -> Result<CqState> {
    let states = eve_message_states(cb, ch)?
        .into_iter()
        .map(|h| {
            let tr = h.trace();
            DensityOperator::new(h.scale(1.0 / tr))
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = (0..cb.n_messages).map(|m| m.to_string()).collect();
    Ok(CqState::new(Ensemble::new(labels, vec![1.0 / cb.n_messages as f64; cb.n_messages], states)?))
}

pub fn evaluate_code(cb: &Codebook, dec: &SrmDecoder, ch: &WiretapChannelModel) -> Result<CodePerformance> {
    if dec.completion.dim() != ch.dim_b() {
        return Err(Error::shape(format!(
            "decoder acts on dimension {}, Bob's system has {}",
            dec.completion.dim(),
            ch.dim_b()
        )));
    }
    if dec.n_messages != cb.n_messages || dec.band_size != cb.band_size {
        return Err(Error::shape("decoder and codebook shapes differ"));
    }
    let idx = channel_indices(cb, ch)?;
    let bob: Vec<DensityOperator> = (0..ch.len()).map(|k| ch.bob_state(k)).collect();
    let k = cb.band_size;
    let per_message_error: Vec<f64> = par::map_indexed(cb.n_messages, |m| {
        let rho_m = band_average(&bob, &idx[m * k..(m + 1) * k]);
        1.0 - dec.message_operator(m).trace_product(&rho_m)
    });
    let avg_error = per_message_error.iter().sum::<f64>() / cb.n_messages as f64;

    let eve_m = eve_message_states(cb, ch)?;
    let n = cb.n_messages as f64;
    let mut tilde = HermitianOperator::zeros(ch.dim_e());
    for s in &eve_m {
        tilde = tilde.add_scaled(s, 1.0 / n);
    }
    let leakage = eve_m.iter().map(|s| s.sub(&tilde).trace_norm()).sum::<f64>() / n;

    let probs = ch.input_probs();
    let mut rho_e = HermitianOperator::zeros(ch.dim_e());
    for (kk, p) in probs.iter().enumerate() {
        rho_e = rho_e.add_scaled(&ch.eve_state(kk), *p);
    }
    let leakage_chain_bound = 2.0 * eve_m.iter().map(|s| s.sub(&rho_e).trace_norm()).sum::<f64>() / n;

    Ok(CodePerformance { avg_error, leakage, per_message_error, leakage_chain_bound })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub seed: u64,
    pub avg_error: f64,
    pub leakage: f64,
    pub qualified: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpurgationReport {
    pub trials: Vec<TrialOutcome>,
    pub mean_error: f64,
    pub mean_leakage: f64,
    /// Fraction of codebooks meeting both thresholds.
    pub qualifying_fraction: f64,
    /// Index of the returned codebook.
    pub chosen: usize,
}

/// Sample `trials` codebooks, then keep the first whose error and leakage are
/// both at most three times their across-codebook means.
///
/// Trial `t` uses codebook seed `derive_seed(master_seed, t)`.
pub fn expurgate(
    e: &Ensemble,
    ch: &WiretapChannelModel,
    blocks: &DecoderBlocks,
    n_messages: usize,
    band_size: usize,
    trials: usize,
    master_seed: u64,
) -> Result<(Codebook, CodePerformance, ExpurgationReport)> {
    if trials == 0 {
        return Err(Error::domain("trials must be at least 1"));
    }
    let runs: Vec<(Codebook, CodePerformance)> = par::try_map_indexed(trials, |t| {
        let cb = generate_codebook(e, n_messages, band_size, derive_seed(master_seed, t as u64))?;
        let dec = build_srm_decoder(&cb, blocks)?;
        let perf = evaluate_code(&cb, &dec, ch)?;
        Ok::<_, Error>((cb, perf))
    })?;
    let nt = trials as f64;
    let mean_error = runs.iter().map(|r| r.1.avg_error).sum::<f64>() / nt;
    let mean_leakage = runs.iter().map(|r| r.1.leakage).sum::<f64>() / nt;
    let outcomes: Vec<TrialOutcome> = runs
        .iter()
        .map(|(cb, p)| TrialOutcome {
            seed: cb.seed,
            avg_error: p.avg_error,
            leakage: p.leakage,
            qualified: p.avg_error <= 3.0 * mean_error && p.leakage <= 3.0 * mean_leakage,
        })
        .collect();
    let n_q = outcomes.iter().filter(|o| o.qualified).count();
    let Some(chosen) = outcomes.iter().position(|o| o.qualified) else {
        return Err(Error::ExpurgationFailed { trials, mean_error, mean_leakage });
    };
    let report = ExpurgationReport {
        trials: outcomes,
        mean_error,
        mean_leakage,
        qualifying_fraction: n_q as f64 / nt,
        chosen,
    };
    let (cb, perf) = runs.into_iter().nth(chosen).unwrap();
    Ok((cb, perf, report))
}

/// `lambda_min(2(P - S) + 4T - (P - (S+T)^{-1/2} S (S+T)^{-1/2}))` with `P` the
/// support projector of `S + T` and inverses taken on that support.
pub fn hayashi_nagaoka_gap(s: &HermitianOperator, t: &HermitianOperator) -> Result<f64> {
    let st = s.add(t);
    let r = inv_sqrt_on_support(&st)?;
    let p = positive_part_projector(&st, Mode::Strict);
    let lhs = p.as_hermitian().sub(&s.sandwich(r.matrix()));
    let rhs = p.as_hermitian().sub(s).scale(2.0).add_scaled(t, 4.0);
    Ok(rhs.sub(&lhs).min_eigenvalue())
}
