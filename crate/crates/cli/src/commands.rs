//! Per-command parameter schemas and dispatch.

use serde::Deserialize;
use serde_json::{json, Value};

use privcap_core::concentration::{
    abar_equivalence, chi2_trial, evaluate, gaussian_opnorm_trial, shifted_chernoff_trial, trace_lower_trial,
    BoundSpec,
};
use privcap_core::covering::{
    build_covering_instance, build_covering_instance_with_floor, covering_experiment, decomposition_summary, DEFAULT_EPS_FLOOR,
};
use privcap_core::divergence::{
    cq_hypothesis_testing_divergence, smooth_max_divergence, DivergenceResult, Witness, DEFAULT_GRID_STEP,
};
use privcap_core::ensemble::{bob_marginals, eve_marginals, CqState, Ensemble, WiretapChannelModel};
use privcap_core::random::random_general;
use privcap_core::rates::{achievable_rate, converse_bound, converse_secrecy_check, theorem3_code_params, AchievabilityInputs};
use privcap_core::rng::{derive_seed, stream_rng};
use privcap_core::spectral::{classical_spectral_estimate, mutual_information, tensor_power_rates, DEFAULT_BLOCKS};
use privcap_core::wiretap::{code_cq_ve, expurgate, DecoderBlocks};

use crate::config::{Command, ExperimentConfig};
use crate::fail::{Code, Failure};
use crate::output::{fmt_f64, Outputs};

/// Result files of one command, before the config hash is stamped in.
pub enum Artifact {
    Json(&'static str, Value),
    Csv(&'static str, String),
}

pub fn accepts_trials(cmd: Command) -> bool {
    matches!(cmd, Command::Simulate | Command::Covering | Command::Chernoff)
}

/// Applies `--trials`: a top-level `trials` param, or `experiment.trials` for chernoff.
pub fn override_trials(cfg: &mut ExperimentConfig, trials: u64) -> Result<(), Failure> {
    if !accepts_trials(cfg.command) {
        return Err(Failure::config(format!("--trials does not apply to {}", cfg.command.name())));
    }
    if cfg.command == Command::Chernoff {
        let exp = cfg
            .params
            .get_mut("experiment")
            .and_then(Value::as_object_mut)
            .ok_or_else(|| Failure::config("--trials needs params.experiment"))?;
        exp.insert("trials".into(), json!(trials));
    } else {
        cfg.params.insert("trials".into(), json!(trials));
    }
    Ok(())
}

/// Validates params and runs the command.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, Failure> {
    match cfg.command {
        Command::Divergence => divergence(cfg),
        Command::Rate => rate(cfg),
        Command::Simulate => simulate(cfg),
        Command::Covering => covering(cfg),
        Command::Chernoff => chernoff(cfg),
        Command::Spectral => spectral(cfg),
    }
}

/// Writes every artifact with the config hash embedded.
pub fn render(artifacts: Vec<Artifact>, cfg: &ExperimentConfig, config_sha256: &str, out: &mut Outputs) {
    for a in artifacts {
        match a {
            Artifact::Json(name, result) => {
                let doc = json!({
                    "command": cfg.command,
                    "config_sha256": config_sha256,
                    "seed": cfg.seed,
                    "result": result,
                });
                out.add(name, crate::output::to_json(&doc));
            }
            Artifact::Csv(name, body) => out.add(name, format!("# config_sha256={config_sha256}\n{body}")),
        }
    }
}

fn load_ensemble(cfg: &ExperimentConfig) -> Result<Ensemble, Failure> {
    Ensemble::load(cfg.input("ensemble")?).map_err(|e| Failure::from_load("ensemble", e))
}

fn load_channel(cfg: &ExperimentConfig) -> Result<WiretapChannelModel, Failure> {
    WiretapChannelModel::load(cfg.input("channel")?).map_err(|e| Failure::from_load("channel", e))
}

fn check_range(name: &str, x: f64, lo: f64, hi: f64) -> Result<(), Failure> {
    if !(x >= lo && x < hi) {
        return Err(Failure::config(format!("params.{name} = {x} outside [{lo}, {hi})")));
    }
    Ok(())
}

fn check_positive(name: &str, n: usize) -> Result<(), Failure> {
    if n == 0 {
        return Err(Failure::config(format!("params.{name} must be at least 1")));
    }
    Ok(())
}

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("serializable")
}

fn divergence_json(d: &DivergenceResult) -> Value {
    let mut v = json!({
        "value_bits": d.value_bits,
        "infinite": d.infinite,
        "epsilon": d.epsilon,
    });
    match &d.witness {
        Witness::Test(t) => {
            v["achieved_alpha"] = json!(t.achieved_alpha);
            v["achieved_beta"] = json!(t.achieved_beta);
            v["threshold"] = json!(t.threshold);
            v["mixing"] = json!(t.mixing);
        }
        Witness::Threshold { gamma_bits, tail, grid_step_bits, at_grid_floor } => {
            v["gamma_bits"] = json!(gamma_bits);
            v["tail"] = json!(tail);
            v["grid_step_bits"] = json!(grid_step_bits);
            v["at_grid_floor"] = json!(at_grid_floor);
        }
    }
    v
}

#[derive(Deserialize, Clone, Copy, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
enum DivergenceKind {
    HypothesisTesting,
    SmoothMax,
    #[default]
    Both,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DivergenceParams {
    eps: f64,
    #[serde(default)]
    kind: DivergenceKind,
    #[serde(default = "default_step")]
    grid_step: f64,
}

fn default_step() -> f64 {
    DEFAULT_GRID_STEP
}

fn divergence(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, Failure> {
    let p: DivergenceParams = cfg.params()?;
    check_range("eps", p.eps, 0.0, 1.0)?;
    let e = load_ensemble(cfg)?;
    let mut result = json!({"eps": p.eps});
    if p.kind != DivergenceKind::SmoothMax {
        let d = cq_hypothesis_testing_divergence(&CqState::new(e.clone()), p.eps)?;
        result["hypothesis_testing"] = divergence_json(&d);
    }
    if p.kind != DivergenceKind::HypothesisTesting {
        let d = smooth_max_divergence(&e, p.eps, p.grid_step)?;
        result["smooth_max"] = divergence_json(&d);
    }
    Ok(vec![Artifact::Json("divergence.json", result)])
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RateParams {
    eps: f64,
    delta: f64,
    #[serde(default = "default_step")]
    grid_step: f64,
}

fn rate(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, Failure> {
    let p: RateParams = cfg.params()?;
    check_range("eps", p.eps, f64::MIN_POSITIVE, 1.0)?;
    check_range("delta", p.delta, f64::MIN_POSITIVE, 1.0)?;
    let ch = load_channel(cfg)?;
    let bob = CqState::new(bob_marginals(&ch));
    let eve = eve_marginals(&ch);
    let (eps_prime, delta_hat) = theorem3_code_params(p.eps, p.delta);
    let i0_prime = cq_hypothesis_testing_divergence(&bob, eps_prime)?;
    let iinf_hat = smooth_max_divergence(&eve, delta_hat, p.grid_step)?;
    if i0_prime.infinite {
        return Err(Failure::new(Code::Numeric, "I_0 of the Bob marginals is infinite"));
    }
    let pair = achievable_rate(&AchievabilityInputs {
        i0_bits: i0_prime.value_bits,
        iinf_bits: iinf_hat.value_bits,
        eps_prime,
        delta_hat,
        dim_e: ch.dim_e(),
    })?;
    let i0 = cq_hypothesis_testing_divergence(&bob, p.eps)?;
    let iinf = smooth_max_divergence(&eve, p.delta, p.grid_step)?;
    let result = json!({
        "eps": p.eps,
        "delta": p.delta,
        "eps_prime": eps_prime,
        "delta_hat": delta_hat,
        "i0_eps_prime_bits": i0_prime.value_bits,
        "iinf_delta_hat_bits": iinf_hat.value_bits,
        "achievable": to_value(&pair),
        "i0_eps_bits": i0.value_bits,
        "iinf_delta_bits": iinf.value_bits,
        "converse_bits": converse_bound(i0.value_bits, iinf.value_bits),
    });
    Ok(vec![Artifact::Json("rate.json", result)])
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateParams {
    eps: f64,
    n_messages: usize,
    band_size: usize,
    #[serde(default = "default_codebooks")]
    trials: usize,
    #[serde(default)]
    delta: Option<f64>,
    #[serde(default = "default_step")]
    grid_step: f64,
}

fn default_codebooks() -> usize {
    60
}

fn simulate(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, Failure> {
    let p: SimulateParams = cfg.params()?;
    check_range("eps", p.eps, 0.0, 1.0)?;
    check_positive("n_messages", p.n_messages)?;
    check_positive("band_size", p.band_size)?;
    check_positive("trials", p.trials)?;
    let ch = load_channel(cfg)?;
    let bob = bob_marginals(&ch);
    let test = cq_hypothesis_testing_divergence(&CqState::new(bob.clone()), p.eps)?;
    let blocks = DecoderBlocks::from_test(test.test().expect("cq test witness"), bob.labels())?;
    let (cb, perf, report) = expurgate(&bob, &ch, &blocks, p.n_messages, p.band_size, p.trials, cfg.seed)?;
    let secrecy = match p.delta {
        Some(delta) if perf.leakage <= delta => to_value(&converse_secrecy_check(&code_cq_ve(&cb, &ch)?, delta, Some(p.grid_step))?),
        _ => Value::Null,
    };
    let mut csv = String::from("trial,seed,avg_error,leakage,qualified\n");
    for (t, o) in report.trials.iter().enumerate() {
        csv.push_str(&format!("{t},{},{},{},{}\n", o.seed, fmt_f64(o.avg_error), fmt_f64(o.leakage), o.qualified));
    }
    let result = json!({
        "eps": p.eps,
        "i0_bits": test.value_bits,
        "codebook": to_value(&cb),
        "performance": to_value(&perf),
        "mean_error": report.mean_error,
        "mean_leakage": report.mean_leakage,
        "qualifying_fraction": report.qualifying_fraction,
        "chosen": report.chosen,
        "secrecy_check": secrecy,
    });
    Ok(vec![Artifact::Json("simulate.json", result), Artifact::Csv("trials.csv", csv)])
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CoveringParams {
    i_param: f64,
    m_samples: usize,
    trials: usize,
    /// `null` disables flooring.
    #[serde(default = "default_floor")]
    eps_floor: Option<f64>,
}

fn default_floor() -> Option<f64> {
    Some(DEFAULT_EPS_FLOOR)
}

fn covering(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, Failure> {
    let p: CoveringParams = cfg.params()?;
    check_positive("m_samples", p.m_samples)?;
    check_positive("trials", p.trials)?;
    let e = load_ensemble(cfg)?;
    let ci = match p.eps_floor {
        Some(floor) => build_covering_instance_with_floor(&e, p.i_param, floor)?,
        None => build_covering_instance(&e, p.i_param)?,
    };
    let summary = decomposition_summary(&ci)?;
    let report = covering_experiment(&ci, p.m_samples, p.trials, cfg.seed)?;
    let mut csv = String::from("trial,deviation\n");
    for (t, d) in report.deviations.iter().enumerate() {
        csv.push_str(&format!("{t},{}\n", fmt_f64(*d)));
    }
    let result = json!({"decomposition": to_value(&summary), "sampling": to_value(&report)});
    Ok(vec![Artifact::Json("covering.json", result), Artifact::Csv("deviations.csv", csv)])
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum ChernoffExperiment {
    Chi2 { d: usize, beta: f64, trials: usize },
    GaussianOpnorm { d: usize, ell: f64, trials: usize },
    TraceLower { d1: usize, d2: usize, trials: usize },
    Abar { d1: usize, d2: usize, trials: usize },
    Shifted { eps: f64, delta: f64, m_samples: usize, trials: usize },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChernoffParams {
    #[serde(default)]
    bounds: Vec<BoundSpec>,
    #[serde(default)]
    experiment: Option<ChernoffExperiment>,
}

fn chernoff(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, Failure> {
    let p: ChernoffParams = cfg.params()?;
    if p.bounds.is_empty() && p.experiment.is_none() {
        return Err(Failure::config("chernoff needs params.bounds or params.experiment"));
    }
    let bounds = p
        .bounds
        .iter()
        .map(|b| Ok(json!({"spec": to_value(b), "value": evaluate(b)?})))
        .collect::<Result<Vec<_>, Failure>>()?;
    let seed = cfg.seed;
    let experiment = match p.experiment {
        None => Value::Null,
        Some(ChernoffExperiment::Chi2 { d, beta, trials }) => to_value(&chi2_trial(d, beta, trials, seed)?),
        Some(ChernoffExperiment::GaussianOpnorm { d, ell, trials }) => {
            to_value(&gaussian_opnorm_trial(d, ell, trials, seed)?)
        }
        Some(ChernoffExperiment::TraceLower { d1, d2, trials }) => {
            let a = random_general(&mut stream_rng(seed, 0), d1, d2);
            to_value(&trace_lower_trial(&a, trials, derive_seed(seed, 1))?)
        }
        Some(ChernoffExperiment::Abar { d1, d2, trials }) => {
            let a = random_general(&mut stream_rng(seed, 0), d1, d2);
            let (ks, _, _) = abar_equivalence(&a, trials, derive_seed(seed, 1))?;
            json!({"ks_statistic": ks.statistic, "ks_p_value": ks.p_value, "draws": trials})
        }
        Some(ChernoffExperiment::Shifted { eps, delta, m_samples, trials }) => {
            let e = load_ensemble(cfg)?;
            let family: Vec<_> = e.states().iter().map(|s| (**s).clone()).collect();
            to_value(&shifted_chernoff_trial(&family, e.probs(), eps, delta, m_samples, trials, seed)?)
        }
    };
    Ok(vec![Artifact::Json("chernoff.json", json!({"bounds": bounds, "experiment": experiment}))])
}

#[derive(Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
enum SpectralParams {
    TensorPower {
        n_max: usize,
        eps: f64,
        #[serde(default = "default_step")]
        grid_step: f64,
    },
    Classical {
        p_joint: Vec<Vec<f64>>,
        n_samples: usize,
        eps: f64,
        #[serde(default = "default_blocks")]
        blocks: usize,
    },
}

fn default_blocks() -> usize {
    DEFAULT_BLOCKS
}

fn spectral(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, Failure> {
    match cfg.params::<SpectralParams>()? {
        SpectralParams::TensorPower { n_max, eps, grid_step } => {
            check_range("eps", eps, 0.0, 1.0)?;
            let cq = CqState::new(load_ensemble(cfg)?);
            let s = tensor_power_rates(&cq, n_max, eps, grid_step)?;
            Ok(vec![
                Artifact::Json("spectral.json", to_value(&s)),
                Artifact::Csv("series.csv", s.to_csv()),
            ])
        }
        SpectralParams::Classical { p_joint, n_samples, eps, blocks } => {
            let est = classical_spectral_estimate(&p_joint, n_samples, eps, cfg.seed, blocks)?;
            let mi = mutual_information(&p_joint)?;
            let mut v = to_value(&est);
            v["mutual_information_bits"] = json!(mi);
            Ok(vec![Artifact::Json("spectral.json", v)])
        }
    }
}
