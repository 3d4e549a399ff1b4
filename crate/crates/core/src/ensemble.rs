//! State ensembles, classical-quantum states and wiretap channel models.
//!
//! File format (JSON):
//!
//! ```text
//! { "dim_b": 2, "dim_e": 2,
//!   "inputs": [ { "label": "0", "prob": 0.5, "state": [[[re, im], ...], ...] }, ... ] }
//! ```
//!
//! Ensemble files use the same `inputs` list with `prob` required; `dim_b` and
//! `dim_e` are omitted. Channel files may omit `prob`, in which case the
//! experiment supplies the input distribution (uniform by default).

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{
    partial_trace, CMat, DensityOperator, HermitianOperator, Subsystem,
};

pub const PROB_TOL: f64 = 1e-10;

/// Row-major nested `[re, im]` pairs.
pub type MatrixLiteral = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_literal(m: &CMat) -> MatrixLiteral {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn matrix_from_literal(lit: &MatrixLiteral, context: &str) -> Result<CMat> {
    let rows = lit.len();
    if rows == 0 {
        return Err(Error::Validation(format!("{context}: empty matrix")));
    }
    let cols = lit[0].len();
    if let Some((i, r)) = lit.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(Error::Validation(format!(
            "{context}: row {i} has {} entries, expected {cols}",
            r.len()
        )));
    }
    Ok(CMat::from_fn(rows, cols, |i, j| {
        Complex64::new(lit[i][j][0], lit[i][j][1])
    }))
}

fn check_probs(probs: &[f64]) -> Result<()> {
    if let Some((i, p)) = probs
        .iter()
        .enumerate()
        .find(|(_, p)| !p.is_finite() || **p < 0.0)
    {
        return Err(Error::Validation(format!("probability {i} is {p}, must be >= 0")));
    }
    let s: f64 = probs.iter().sum();
    if (s - 1.0).abs() > PROB_TOL {
        return Err(Error::Validation(format!("probabilities sum to {s}, expected 1")));
    }
    Ok(())
}

/// Labelled probability distribution over density operators of a common dimension.
#[derive(Clone, Debug)]
pub struct Ensemble {
    labels: Vec<String>,
    probs: Vec<f64>,
    states: Vec<DensityOperator>,
}

impl Ensemble {
    pub fn new(labels: Vec<String>, probs: Vec<f64>, states: Vec<DensityOperator>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Validation("ensemble has no states".into()));
        }
        if labels.len() != states.len() || probs.len() != states.len() {
            return Err(Error::Validation(format!(
                "{} labels, {} probabilities, {} states",
                labels.len(),
                probs.len(),
                states.len()
            )));
        }
        check_probs(&probs)?;
        let d = states[0].dim();
        if let Some((i, s)) = states.iter().enumerate().find(|(_, s)| s.dim() != d) {
            return Err(Error::Validation(format!(
                "state {i} has dimension {}, expected {d}",
                s.dim()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::Validation(format!("duplicate label {l:?}")));
            }
        }
        Ok(Self { labels, probs, states })
    }

    /// Labels `"0", "1", ...`.
    pub fn from_states(probs: Vec<f64>, states: Vec<DensityOperator>) -> Result<Self> {
        let labels = (0..states.len()).map(|i| i.to_string()).collect();
        Self::new(labels, probs, states)
    }

    pub fn uniform(states: Vec<DensityOperator>) -> Result<Self> {
        let n = states.len().max(1);
        Self::from_states(vec![1.0 / n as f64; states.len()], states)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn states(&self) -> &[DensityOperator] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &DensityOperator {
        &self.states[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn with_probs(&self, probs: Vec<f64>) -> Result<Self> {
        Self::new(self.labels.clone(), probs, self.states.clone())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: FileDoc = parse_json(text)?;
        let mut labels = Vec::new();
        let mut probs = Vec::new();
        let mut states = Vec::new();
        for (i, inp) in file.inputs.iter().enumerate() {
            let p = inp.prob.ok_or_else(|| Error::Format {
                line: 0,
                column: 0,
                message: format!("inputs[{i}]: missing field `prob`"),
            })?;
            labels.push(inp.label.clone());
            probs.push(p);
            states.push(density_from_literal(&inp.state, &format!("inputs[{i}].state"))?);
        }
        Self::new(labels, probs, states)
    }

    pub fn to_json(&self) -> String {
        let doc = FileDoc {
            dim_b: None,
            dim_e: None,
            inputs: self
                .labels
                .iter()
                .zip(&self.probs)
                .zip(&self.states)
                .map(|((l, p), s)| InputDoc {
                    label: l.clone(),
                    prob: Some(*p),
                    state: matrix_to_literal(s.matrix()),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("serializable")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// `sum_x p_x rho_x`.
pub fn average_state(e: &Ensemble) -> DensityOperator {
    let d = e.dim();
    let mut acc = HermitianOperator::zeros(d);
    for (p, s) in e.probs.iter().zip(&e.states) {
        acc = acc.add_scaled(s, *p);
    }
    // Renormalize against accumulated rounding before revalidating.
    let tr = acc.trace();
    DensityOperator::new(acc.scale(1.0 / tr)).expect("mixture of states is a state")
}

/// `rho^{VB} = sum_v p(v) |v><v| (x) rho_v`.
#[derive(Clone, Debug)]
pub struct CqState {
    ensemble: Ensemble,
}

impl CqState {
    pub fn new(ensemble: Ensemble) -> Self {
        Self { ensemble }
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    pub fn n_labels(&self) -> usize {
        self.ensemble.len()
    }

    pub fn dim_b(&self) -> usize {
        self.ensemble.dim()
    }

    pub fn probs(&self) -> &[f64] {
        self.ensemble.probs()
    }

    pub fn conditional(&self, v: usize) -> &DensityOperator {
        self.ensemble.state(v)
    }

    /// `rho^B`.
    pub fn marginal_b(&self) -> DensityOperator {
        average_state(&self.ensemble)
    }

    /// Dense `rho^{VB}` on `C^{|V|} (x) C^{d_B}`.
    pub fn joint_state(&self) -> HermitianOperator {
        let nv = self.n_labels();
        let db = self.dim_b();
        let mut m = CMat::zeros(nv * db, nv * db);
        for v in 0..nv {
            let blk = self.conditional(v).matrix() * Complex64::new(self.probs()[v], 0.0);
            m.view_mut((v * db, v * db), (db, db)).copy_from(&blk);
        }
        HermitianOperator::new(m).expect("block-diagonal state")
    }

    /// Dense `rho^V (x) rho^B`.
    pub fn product_state(&self) -> HermitianOperator {
        let rho_v = HermitianOperator::from_real_diagonal(self.probs());
        rho_v.tensor(&self.marginal_b())
    }

    /// n-fold tensor power; labels are the concatenated index tuples.
    pub fn tensor_power(&self, n: usize) -> Result<CqState> {
        if n == 0 {
            return Err(Error::domain("tensor power n must be >= 1"));
        }
        let mut labels = self.ensemble.labels.clone();
        let mut probs = self.ensemble.probs.clone();
        let mut states = self.ensemble.states.clone();
        for _ in 1..n {
            let mut l2 = Vec::new();
            let mut p2 = Vec::new();
            let mut s2 = Vec::new();
            for i in 0..labels.len() {
                for j in 0..self.n_labels() {
                    l2.push(format!("{},{}", labels[i], self.ensemble.labels[j]));
                    p2.push(probs[i] * self.probs()[j]);
                    s2.push(states[i].tensor(self.conditional(j)));
                }
            }
            labels = l2;
            probs = p2;
            states = s2;
        }
        let s: f64 = probs.iter().sum();
        let probs = probs.iter().map(|p| p / s).collect();
        Ok(CqState::new(Ensemble::new(labels, probs, states)?))
    }
}

/// Extensional wiretap channel: each input label maps to a joint Bob-Eve state.
#[derive(Clone, Debug)]
pub struct WiretapChannelModel {
    dim_b: usize,
    dim_e: usize,
    labels: Vec<String>,
    probs: Option<Vec<f64>>,
    joint: Vec<DensityOperator>,
}

impl WiretapChannelModel {
    pub fn new(
        dim_b: usize,
        dim_e: usize,
        labels: Vec<String>,
        probs: Option<Vec<f64>>,
        joint: Vec<DensityOperator>,
    ) -> Result<Self> {
        if dim_b == 0 || dim_e == 0 {
            return Err(Error::Validation("dim_b and dim_e must be positive".into()));
        }
        if joint.is_empty() {
            return Err(Error::Validation("channel has no inputs".into()));
        }
        if labels.len() != joint.len() {
            return Err(Error::Validation("label count differs from state count".into()));
        }
        for (i, s) in joint.iter().enumerate() {
            if s.dim() != dim_b * dim_e {
                return Err(Error::Validation(format!(
                    "input {i}: joint dimension {} does not factor as dim_b*dim_e = {}",
                    s.dim(),
                    dim_b * dim_e
                )));
            }
        }
        if let Some(p) = &probs {
            if p.len() != joint.len() {
                return Err(Error::Validation("probability count differs from input count".into()));
            }
            check_probs(p)?;
        }
        Ok(Self { dim_b, dim_e, labels, probs, joint })
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn dim_e(&self) -> usize {
        self.dim_e
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.joint.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joint.is_empty()
    }

    pub fn joint_states(&self) -> &[DensityOperator] {
        &self.joint
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Declared input distribution, or uniform when the file gave none.
    pub fn input_probs(&self) -> Vec<f64> {
        match &self.probs {
            Some(p) => p.clone(),
            None => vec![1.0 / self.len() as f64; self.len()],
        }
    }

    pub fn has_declared_probs(&self) -> bool {
        self.probs.is_some()
    }

    pub fn with_probs(&self, probs: Vec<f64>) -> Result<Self> {
        Self::new(self.dim_b, self.dim_e, self.labels.clone(), Some(probs), self.joint.clone())
    }

    fn marginals(&self, traced: Subsystem) -> Ensemble {
        let states = self
            .joint
            .iter()
            .map(|s| {
                let r = partial_trace(s, (self.dim_b, self.dim_e), traced).expect("dims checked");
                DensityOperator::new(r).expect("marginal of a state")
            })
            .collect();
        Ensemble::new(self.labels.clone(), self.input_probs(), states).expect("validated channel")
    }

    pub fn bob_state(&self, i: usize) -> DensityOperator {
        let r = partial_trace(&self.joint[i], (self.dim_b, self.dim_e), Subsystem::Second)
            .expect("dims checked");
        DensityOperator::new(r).expect("marginal of a state")
    }

    pub fn eve_state(&self, i: usize) -> DensityOperator {
        let r = partial_trace(&self.joint[i], (self.dim_b, self.dim_e), Subsystem::First)
            .expect("dims checked");
        DensityOperator::new(r).expect("marginal of a state")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: FileDoc = parse_json(text)?;
        let missing = |f: &str| Error::Format {
            line: 0,
            column: 0,
            message: format!("missing field `{f}`"),
        };
        let dim_b = file.dim_b.ok_or_else(|| missing("dim_b"))?;
        let dim_e = file.dim_e.ok_or_else(|| missing("dim_e"))?;
        let n_with = file.inputs.iter().filter(|i| i.prob.is_some()).count();
        if n_with != 0 && n_with != file.inputs.len() {
            return Err(Error::Validation(
                "either every input or no input must carry `prob`".into(),
            ));
        }
        let probs = (n_with > 0).then(|| file.inputs.iter().map(|i| i.prob.unwrap()).collect());
        let labels = file.inputs.iter().map(|i| i.label.clone()).collect();
        let joint = file
            .inputs
            .iter()
            .enumerate()
            .map(|(i, inp)| density_from_literal(&inp.state, &format!("inputs[{i}].state")))
            .collect::<Result<Vec<_>>>()?;
        Self::new(dim_b, dim_e, labels, probs, joint)
    }

    pub fn to_json(&self) -> String {
        let doc = FileDoc {
            dim_b: Some(self.dim_b),
            dim_e: Some(self.dim_e),
            inputs: (0..self.len())
                .map(|i| InputDoc {
                    label: self.labels[i].clone(),
                    prob: self.probs.as_ref().map(|p| p[i]),
                    state: matrix_to_literal(self.joint[i].matrix()),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("serializable")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// Per-label Bob marginals `Tr_E[rho^{BE}_v]` under the channel's input distribution.
pub fn bob_marginals(ch: &WiretapChannelModel) -> Ensemble {
    ch.marginals(Subsystem::Second)
}

/// Per-label Eve marginals `Tr_B[rho^{BE}_v]` under the channel's input distribution.
pub fn eve_marginals(ch: &WiretapChannelModel) -> Ensemble {
    ch.marginals(Subsystem::First)
}

pub fn load_channel(path: impl AsRef<Path>) -> Result<WiretapChannelModel> {
    WiretapChannelModel::load(path)
}

pub fn load_ensemble(path: impl AsRef<Path>) -> Result<Ensemble> {
    Ensemble::load(path)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim_b: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim_e: Option<usize>,
    inputs: Vec<InputDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InputDoc {
    label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prob: Option<f64>,
    state: MatrixLiteral,
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Format {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn density_from_literal(lit: &MatrixLiteral, context: &str) -> Result<DensityOperator> {
    let m = matrix_from_literal(lit, context)?;
    let h = HermitianOperator::new(m).map_err(|e| Error::Validation(format!("{context}: {e}")))?;
    DensityOperator::new(h).map_err(|e| Error::Validation(format!("{context}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_density, random_probs};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn basis(d: usize, k: usize) -> DensityOperator {
        let mut diag = vec![0.0; d];
        diag[k] = 1.0;
        DensityOperator::from_diagonal(&diag).unwrap()
    }

    #[test]
    fn average_examples() {
        let r = random_density(&mut ChaCha8Rng::seed_from_u64(0), 3, 3);
        let e = Ensemble::uniform(vec![r.clone()]).unwrap();
        assert!(average_state(&e).max_abs_diff(&r) < 1e-15);
        let e = Ensemble::uniform(vec![basis(2, 0), basis(2, 1)]).unwrap();
        let avg = average_state(&e);
        assert!(avg.max_abs_diff(&DensityOperator::maximally_mixed(2)) < 1e-15);
    }

    #[test]
    fn average_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let n = 4;
            let states: Vec<_> = (0..n).map(|_| random_density(&mut rng, 3, 2)).collect();
            let p = random_probs(&mut rng, n);
            let e = Ensemble::from_states(p.clone(), states.clone()).unwrap();
            let avg = average_state(&e);
            for i in 0..3 {
                for j in 0..3 {
                    let mut z = Complex64::new(0.0, 0.0);
                    for k in 0..n {
                        z += states[k].matrix()[(i, j)] * p[k];
                    }
                    assert!((avg.matrix()[(i, j)] - z).norm() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn cq_marginal_agrees_with_partial_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let states: Vec<_> = (0..3).map(|_| random_density(&mut rng, 2, 2)).collect();
        let cq = CqState::new(Ensemble::from_states(random_probs(&mut rng, 3), states).unwrap());
        let joint = cq.joint_state();
        assert!((joint.trace() - 1.0).abs() < 1e-12);
        let b = partial_trace(&joint, (3, 2), Subsystem::First).unwrap();
        assert!(b.max_abs_diff(&cq.marginal_b()) <= 1e-12);
    }

    #[test]
    fn marginals_of_product_and_pure() {
        let beta = [basis(2, 0), DensityOperator::maximally_mixed(2)];
        let gamma = DensityOperator::from_diagonal(&[0.3, 0.7]).unwrap();
        let joint: Vec<_> = beta.iter().map(|b| b.tensor(&gamma)).collect();
        let ch = WiretapChannelModel::new(2, 2, vec!["a".into(), "b".into()], None, joint).unwrap();
        let bob = bob_marginals(&ch);
        for k in 0..2 {
            assert!(bob.state(k).max_abs_diff(&beta[k]) < 1e-15);
        }
        let eve = eve_marginals(&ch);
        assert!(eve.state(1).max_abs_diff(&gamma) < 1e-15);

        let pure00 = basis(4, 0);
        let ch = WiretapChannelModel::new(2, 2, vec!["x".into()], None, vec![pure00]).unwrap();
        assert!(bob_marginals(&ch).state(0).max_abs_diff(&basis(2, 0)) < 1e-15);
    }

    #[test]
    fn marginalization_commutes_with_mixing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let joint: Vec<_> = (0..3).map(|_| random_density(&mut rng, 6, 3)).collect();
        let p = random_probs(&mut rng, 3);
        let ch = WiretapChannelModel::new(2, 3, vec!["a".into(), "b".into(), "c".into()], Some(p.clone()), joint.clone())
            .unwrap();
        let bob = bob_marginals(&ch);
        for s in bob.states() {
            assert!((s.trace() - 1.0).abs() < 1e-12);
        }
        let mix = average_state(&Ensemble::from_states(p, joint).unwrap());
        let lhs = partial_trace(&mix, (2, 3), Subsystem::Second).unwrap();
        assert!(lhs.max_abs_diff(&average_state(&bob)) <= 1e-12);
    }

    #[test]
    fn load_minimal_and_reject_bad_probs() {
        let ok = r#"{"dim_b":1,"dim_e":1,"inputs":[{"label":"0","state":[[[1,0]]]}]}"#;
        let ch = WiretapChannelModel::from_json(ok).unwrap();
        assert_eq!(ch.len(), 1);
        assert_eq!(ch.input_probs(), vec![1.0]);

        let bad = r#"{"inputs":[{"label":"0","prob":0.45,"state":[[[1,0]]]},
                                {"label":"1","prob":0.45,"state":[[[1,0]]]}]}"#;
        assert!(matches!(Ensemble::from_json(bad), Err(Error::Validation(_))));

        let broken = "{\"dim_b\": 1,\n \"inputs\": [ oops ] }";
        match WiretapChannelModel::from_json(broken) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let joint: Vec<_> = (0..2).map(|_| random_density(&mut rng, 4, 2)).collect();
        let ch = WiretapChannelModel::new(2, 2, vec!["u".into(), "v".into()], Some(vec![0.25, 0.75]), joint)
            .unwrap();
        let back = WiretapChannelModel::from_json(&ch.to_json()).unwrap();
        for (a, b) in ch.joint_states().iter().zip(back.joint_states()) {
            assert_eq!(a.matrix(), b.matrix());
        }
        let e = bob_marginals(&ch);
        let e2 = Ensemble::from_json(&e.to_json()).unwrap();
        for (a, b) in e.states().iter().zip(e2.states()) {
            assert_eq!(a.matrix(), b.matrix());
        }
        assert_eq!(e.probs(), e2.probs());
    }

    #[test]
    fn tensor_power_dimensions() {
        let cq = CqState::new(Ensemble::uniform(vec![basis(2, 0), basis(2, 1)]).unwrap());
        let c2 = cq.tensor_power(2).unwrap();
        assert_eq!(c2.n_labels(), 4);
        assert_eq!(c2.dim_b(), 4);
        assert_eq!(c2.ensemble().labels()[3], "1,1");
    }
}
