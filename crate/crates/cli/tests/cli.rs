use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_privcap"))
}

fn diag_literal(d: &[f64]) -> Value {
    let n = d.len();
    json!((0..n).map(|i| (0..n).map(|j| [if i == j { d[i] } else { 0.0 }, 0.0]).collect::<Vec<_>>()).collect::<Vec<_>>())
}

fn write_json(path: &Path, v: &Value) {
    fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
}

fn orthogonal_cq(dir: &Path) -> PathBuf {
    let p = dir.join("orthogonal.json");
    write_json(
        &p,
        &json!({"inputs": [
            {"label": "0", "prob": 0.5, "state": diag_literal(&[1.0, 0.0])},
            {"label": "1", "prob": 0.5, "state": diag_literal(&[0.0, 1.0])},
        ]}),
    );
    p
}

fn noisy_wiretap(dir: &Path) -> PathBuf {
    let p = dir.join("wiretap.json");
    let inputs: Vec<Value> = (0..2)
        .map(|v| {
            let b = if v == 0 { [0.9, 0.1] } else { [0.1, 0.9] };
            let e = if v == 0 { [0.6, 0.4] } else { [0.4, 0.6] };
            let joint: Vec<f64> = b.iter().flat_map(|x| e.iter().map(move |y| x * y)).collect();
            json!({"label": v.to_string(), "prob": 0.5, "state": diag_literal(&joint)})
        })
        .collect();
    write_json(&p, &json!({"dim_b": 2, "dim_e": 2, "inputs": inputs}));
    p
}

fn run(config: &Path, extra: &[&str]) -> Output {
    bin().arg("--config").arg(config).args(extra).output().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn divergence_of_orthogonal_cq_is_one_bit() {
    let dir = tempfile::tempdir().unwrap();
    let data = orthogonal_cq(dir.path());
    let cfg = dir.path().join("cfg.json");
    write_json(
        &cfg,
        &json!({"command": "divergence", "inputs": {"ensemble": data}, "params": {"eps": 0.0}, "seed": 1, "output": "out"}),
    );
    let o = run(&cfg, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let res = read_json(&dir.path().join("out/divergence.json"));
    assert_eq!(res["result"]["hypothesis_testing"]["value_bits"].as_f64(), Some(1.0));
    assert_eq!(res["result"]["smooth_max"]["value_bits"].as_f64(), Some(1.0));
    let manifest = read_json(&dir.path().join("out/manifest.json"));
    assert_eq!(manifest["config_sha256"], res["config_sha256"]);
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["inputs_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);
}

fn result_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "manifest.json")
        .map(|e| (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let ch = noisy_wiretap(dir.path());
    let cfg = dir.path().join("cfg.json");
    write_json(
        &cfg,
        &json!({"command": "simulate", "inputs": {"channel": ch},
                "params": {"eps": 0.1, "n_messages": 2, "band_size": 2, "trials": 12}, "seed": 99}),
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    assert!(run(&cfg, &["--out", a.to_str().unwrap()]).status.success());
    assert!(run(&cfg, &["--out", b.to_str().unwrap()]).status.success());
    assert!(run(&cfg, &["--out", c.to_str().unwrap(), "--threads", "3"]).status.success());
    let fa = result_files(&a);
    assert_eq!(fa.len(), 2);
    assert_eq!(fa, result_files(&b));
    assert_eq!(fa, result_files(&c));
    let csv = String::from_utf8(fa[1].1.clone()).unwrap();
    let hash = read_json(&a.join("simulate.json"))["config_sha256"].as_str().unwrap().to_string();
    assert!(csv.starts_with(&format!("# config_sha256={hash}\n")));
}

#[test]
fn seed_and_trials_overrides_change_the_hash() {
    let dir = tempfile::tempdir().unwrap();
    let ch = noisy_wiretap(dir.path());
    let cfg = dir.path().join("cfg.json");
    write_json(
        &cfg,
        &json!({"command": "simulate", "inputs": {"channel": ch},
                "params": {"eps": 0.1, "n_messages": 2, "band_size": 2, "trials": 4}, "seed": 5}),
    );
    let hash = |out: &Path| read_json(&out.join("simulate.json"))["config_sha256"].clone();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    assert!(run(&cfg, &["--out", a.to_str().unwrap()]).status.success());
    assert!(run(&cfg, &["--out", b.to_str().unwrap(), "--seed", "6"]).status.success());
    assert!(run(&cfg, &["--out", c.to_str().unwrap(), "--trials", "5"]).status.success());
    assert_ne!(hash(&a), hash(&b));
    assert_ne!(hash(&a), hash(&c));
    let trials = fs::read_to_string(c.join("trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 2 + 5);
}

fn assert_failure(o: &Output, code: &str, status: i32) {
    assert_eq!(o.status.code(), Some(status));
    let err = String::from_utf8(o.stderr.clone()).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with(&format!("{code}: ")), "{err}");
}

#[test]
fn missing_input_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write_json(
        &cfg,
        &json!({"command": "divergence", "inputs": {"ensemble": "nope.json"}, "params": {"eps": 0.1}, "seed": 1, "output": "out"}),
    );
    assert_failure(&run(&cfg, &[]), "E_INPUT", 2);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn missing_config_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    assert_failure(&run(&dir.path().join("absent.json"), &[]), "E_INPUT", 2);
    let cfg = dir.path().join("cfg.json");
    write_json(&cfg, &json!({"command": "divergence", "params": {"eps": 0.1}, "output": "out"}));
    assert_failure(&run(&cfg, &[]), "E_CONFIG", 2);
}

#[test]
fn bad_params_and_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = orthogonal_cq(dir.path());
    let cfg = dir.path().join("cfg.json");
    write_json(
        &cfg,
        &json!({"command": "divergence", "inputs": {"ensemble": data}, "params": {"eps": 1.5}, "seed": 1, "output": "out"}),
    );
    assert_failure(&run(&cfg, &[]), "E_CONFIG", 2);
    write_json(
        &cfg,
        &json!({"command": "divergence", "inputs": {"ensemble": data}, "params": {"eps": 0.1, "extra": 1}, "seed": 1, "output": "out"}),
    );
    assert_failure(&run(&cfg, &[]), "E_CONFIG", 2);
    fs::write(&data, "{\"inputs\": [").unwrap();
    write_json(
        &cfg,
        &json!({"command": "divergence", "inputs": {"ensemble": data}, "params": {"eps": 0.1}, "seed": 1, "output": "out"}),
    );
    assert_failure(&run(&cfg, &[]), "E_FORMAT", 2);
    assert_failure(&run(&cfg, &["--trials", "3"]), "E_CONFIG", 2);
}

#[test]
fn spectral_guard_and_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let data = orthogonal_cq(dir.path());
    let cfg = dir.path().join("cfg.json");
    write_json(
        &cfg,
        &json!({"command": "spectral", "inputs": {"ensemble": data},
                "params": {"mode": "tensor_power", "n_max": 9, "eps": 0.1}, "seed": 1, "output": "out"}),
    );
    assert_failure(&run(&cfg, &[]), "E_CONFIG", 2);
    write_json(
        &cfg,
        &json!({"command": "covering", "inputs": {"ensemble": data},
                "params": {"i_param": 1.0, "m_samples": 8, "trials": 2, "eps_floor": null}, "seed": 1, "output": "out"}),
    );
    assert_failure(&run(&cfg, &[]), "E_NUMERIC", 3);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unwritable_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = orthogonal_cq(dir.path());
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let cfg = dir.path().join("cfg.json");
    write_json(
        &cfg,
        &json!({"command": "divergence", "inputs": {"ensemble": data}, "params": {"eps": 0.0}, "seed": 1}),
    );
    let o = run(&cfg, &["--out", blocker.join("sub").to_str().unwrap()]);
    assert_failure(&o, "E_OUTPUT", 4);
}

#[test]
fn chernoff_and_rate_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write_json(
        &cfg,
        &json!({"command": "chernoff", "seed": 3, "output": "out",
                "params": {"bounds": [{"name": "chi2_lower", "d": 8, "beta": 0.5}],
                           "experiment": {"kind": "chi2", "d": 8, "beta": 0.5, "trials": 2000}}}),
    );
    assert!(run(&cfg, &[]).status.success());
    let r = read_json(&dir.path().join("out/chernoff.json"));
    let b = r["result"]["bounds"][0]["value"].as_f64().unwrap();
    assert!((b - (0.5f64 * (0.5f64).exp()).powi(8)).abs() < 1e-15);

    let ch = noisy_wiretap(dir.path());
    write_json(
        &cfg,
        &json!({"command": "rate", "inputs": {"channel": ch}, "params": {"eps": 0.5, "delta": 0.5}, "seed": 3, "output": "rate"}),
    );
    assert!(run(&cfg, &[]).status.success());
    let r = read_json(&dir.path().join("rate/rate.json"))["result"].clone();
    let a = &r["achievable"];
    let lhs = a["r_bits"].as_f64().unwrap() + a["r_tilde_bits"].as_f64().unwrap();
    let rhs = r["i0_eps_prime_bits"].as_f64().unwrap() + (0.5f64 / 18.0).log2();
    assert!((lhs - rhs).abs() < 1e-9);
}
