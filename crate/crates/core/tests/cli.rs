use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ne-gossip"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn cli_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ne-gossip"))
        .args(args)
        .env(key, value)
        .output()
        .expect("binary runs")
}

fn config(name: &str) -> String {
    repo_file(&format!("configs/{name}"))
        .to_string_lossy()
        .into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_schema(value: &Value, schema: &str) {
    let schema = read_json(&repo_file(&format!("schemas/{schema}")));
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator
        .iter_errors(value)
        .map(|e| e.to_string())
        .collect();
    assert!(errors.is_empty(), "{errors:?}");
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn out_arg(dir: &TempDir, sub: &str) -> String {
    dir.path().join(sub).to_string_lossy().into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn run_is_byte_identical_for_same_config_and_seed() {
    let tmp = TempDir::new().unwrap();
    let cfg = config("quadratic.toml");
    let (a, b) = (out_arg(&tmp, "a"), out_arg(&tmp, "b"));
    for out in [&a, &b] {
        let o = cli(&[
            "run", "--config", &cfg, "--seed", "7", "--seed", "8", "--iters", "20000", "--out", out,
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in ["traj_seed7.csv", "traj_seed8.csv", "summary.json"] {
        let x = fs::read(Path::new(&a).join(file)).unwrap();
        let y = fs::read(Path::new(&b).join(file)).unwrap();
        assert_eq!(x, y, "{file} differs");
    }
    // a different seed gives a different trajectory
    assert_ne!(
        fs::read(Path::new(&a).join("traj_seed7.csv")).unwrap(),
        fs::read(Path::new(&a).join("traj_seed8.csv")).unwrap()
    );
    let capped = out_arg(&tmp, "capped");
    let o = cli_env(
        &[
            "run", "--config", &cfg, "--seed", "7", "--seed", "8", "--iters", "20000", "--out",
            &capped,
        ],
        "NE_GOSSIP_THREADS",
        "1",
    );
    assert_eq!(code(&o), 0);
    for file in ["traj_seed7.csv", "traj_seed8.csv", "summary.json"] {
        assert_eq!(
            fs::read(Path::new(&a).join(file)).unwrap(),
            fs::read(Path::new(&capped).join(file)).unwrap()
        );
    }
}

#[test]
fn run_overrides_and_outputs() {
    let tmp = TempDir::new().unwrap();
    let out = out_arg(&tmp, "q");
    let o = cli(&[
        "run",
        "--config",
        &config("quadratic.toml"),
        "--seed",
        "3",
        "--iters",
        "200000",
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 0);
    let summary = read_json(&Path::new(&out).join("summary.json"));
    assert_schema(&summary, "run-summary.schema.json");
    assert_eq!(summary["iterations"], 200000);
    assert_eq!(summary["reference_source"], "oracle");
    let runs = summary["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 1);
    assert_eq!(runs[0]["seed"], 3);
    assert!(runs[0]["final_ne_dist"].as_f64().unwrap() < 1e-2);
    let csv = fs::read_to_string(Path::new(&out).join("traj_seed3.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "k,x_1,x_2,x_3,x_4,consensus_err,ne_dist,alpha_max"
    );
    assert_eq!(lines.count() as u64, runs[0]["records"].as_u64().unwrap());
}

#[test]
fn bundled_social_config_reaches_reference_equilibrium() {
    let tmp = TempDir::new().unwrap();
    let out = out_arg(&tmp, "social");
    let o = cli(&["run", "--config", &config("social.toml"), "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = read_json(&Path::new(&out).join("summary.json"));
    assert_schema(&summary, "run-summary.schema.json");
    assert_eq!(summary["algorithm"], "partial");
    assert_eq!(summary["forced"], false);
    let runs = summary["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 5);
    for r in runs {
        assert!(r["within_tolerance"].as_bool().unwrap(), "{r}");
        assert!(r["final_ne_dist"].as_f64().unwrap() < 0.02);
    }

    // long format: 5 files, 8 series each, plus 5 reference rows
    let files: Vec<String> = (1..=5)
        .map(|s| out_arg(&tmp, &format!("social/traj_seed{s}.csv")))
        .collect();
    let plot = out_arg(&tmp, "plot");
    let social = config("social.toml");
    let mut args = vec!["plot-data", "--config", &social, "--out", &plot];
    args.extend(files.iter().map(String::as_str));
    let o = cli(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(Path::new(&plot).join("plot_data.csv")).unwrap();
    let records: u64 = runs.iter().map(|r| r["records"].as_u64().unwrap()).sum();
    assert_eq!(text.lines().count() as u64, 1 + records * 8 + 5);
    assert!(text.lines().any(|l| l == "reference,,ref_x_4,2.24"));
    assert!(text.lines().any(|l| l.starts_with("5,")));
}

#[test]
fn gate_refuses_disconnected_communication_unless_forced() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "split.toml",
        r#"
name = "split"
[game]
kind = "quadratic"
a = [1.0, 2.0, 3.0, 4.0]
[graphs]
communication = [[1, 2], [2, 1], [3, 4], [4, 3]]
[run]
iterations = 2000
seeds = [1]
"#,
    );
    let out = out_arg(&tmp, "o");
    let o = cli(&["run", "--config", &cfg, "--out", &out]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--force"));
    assert!(!Path::new(&out).join("summary.json").exists());

    let o = cli(&["run", "--config", &cfg, "--out", &out, "--force"]);
    assert_eq!(code(&o), 0);
    let summary = read_json(&Path::new(&out).join("summary.json"));
    assert_schema(&summary, "run-summary.schema.json");
    assert_eq!(summary["forced"], true);
    assert!(!summary["gate_failures"].as_array().unwrap().is_empty());
}

#[test]
fn verify_reports() {
    let tmp = TempDir::new().unwrap();
    let out = out_arg(&tmp, "social");
    let o = cli(&["verify", "--config", &config("social.toml"), "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&Path::new(&out).join("verify.json"));
    assert_schema(&v, "verify-report.schema.json");
    assert_eq!(v["setting"], "partial");
    assert_eq!(v["lemma4_residual"], 0.0);
    assert!(v["gamma"].as_f64().unwrap() < 1.0);
    assert!(v["gradient_check_max_rel_err"].as_f64().unwrap() < 1e-6);

    let o = cli(&["verify", "--config", &config("ring5.toml")]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_schema(&v, "verify-report.schema.json");
    assert_eq!(v["setting"], "complete");
    let gamma = v["gamma"].as_f64().unwrap();
    assert!(gamma > 0.0 && gamma < 1.0);
    assert!(v["skipped"]
        .as_array()
        .unwrap()
        .iter()
        .any(|s| s["field"] == "lemma3"));

    let o = cli(&["verify", "--config", &config("social.toml"), "--corrupt-h"]);
    assert_eq!(code(&o), 1);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_schema(&v, "verify-report.schema.json");
    assert!(v["lemma4_residual"].as_f64().unwrap() > 0.0);
    assert_eq!(v["pass"], false);
}

#[test]
fn solve_and_spectral_report() {
    let tmp = TempDir::new().unwrap();
    let out = out_arg(&tmp, "s");
    let o = cli(&["solve", "--config", &config("social.toml"), "--out", &out]);
    assert_eq!(code(&o), 0);
    let s = read_json(&Path::new(&out).join("solve.json"));
    assert_schema(&s, "ne-solution.schema.json");
    let expected = [0.0, 0.0, 0.42, 2.24, 0.14];
    for (x, e) in s["x_star"].as_array().unwrap().iter().zip(expected) {
        assert!((x.as_f64().unwrap() - e).abs() < 0.005);
    }
    assert_eq!(s["config_hash"].as_str().unwrap().len(), 64);
    assert!(s["version"]
        .as_str()
        .unwrap()
        .starts_with("ne-gossip 0.1.0 ("));

    let o = cli(&[
        "spectral-report",
        "--config",
        &config("quadratic.toml"),
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 0);
    let r = read_json(&Path::new(&out).join("spectral.json"));
    assert_schema(&r, "spectral-report.schema.json");
    assert_eq!(r["setting"], "complete");
    assert!(r["gamma"].as_f64().unwrap() < 1.0);
}

#[test]
fn spectral_guardrail_needs_allow_large() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "big.toml",
        r#"
name = "big"
[game]
kind = "quadratic"
a = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]
[graphs]
communication_preset = "ring"
[run]
iterations = 100
seeds = [1]
"#,
    );
    let o = cli(&["spectral-report", "--config", &cfg]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    let o = cli(&["spectral-report", "--config", &cfg, "--allow-large"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_schema(&r, "spectral-report.schema.json");
    assert_eq!(r["method"], "power_iteration");
}

#[test]
fn plot_data_rejects_bad_input() {
    let tmp = TempDir::new().unwrap();
    let o = cli(&["plot-data"]);
    assert_ne!(code(&o), 0);

    let out = out_arg(&tmp, "r");
    let o = cli(&[
        "run",
        "--config",
        &config("ring5.toml"),
        "--iters",
        "5000",
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 0);
    let traj = out_arg(&tmp, "r/traj_seed1.csv");
    let o = cli(&["plot-data", &traj]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let records = fs::read_to_string(&traj).unwrap().lines().count() - 1;
    // x_1..x_5, consensus_err, ne_dist, alpha_max
    assert_eq!(text.lines().count(), 1 + records * 8);
    assert_eq!(text.lines().next().unwrap(), "seed,k,series,value");

    let q = out_arg(&tmp, "q");
    cli(&[
        "run",
        "--config",
        &config("quadratic.toml"),
        "--seed",
        "1",
        "--iters",
        "5000",
        "--out",
        &q,
    ]);
    let other = out_arg(&tmp, "q/traj_seed1.csv");
    let o = cli(&["plot-data", &traj, &other]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("columns differ"));

    let junk = write_config(tmp.path(), "junk.csv", "a,b\n1,2\n");
    assert_eq!(code(&cli(&["plot-data", &junk])), 1);
}

#[test]
fn bad_arguments_exit_with_usage_error() {
    assert_eq!(code(&cli(&["run"])), 2);
    assert_eq!(code(&cli(&["frobnicate"])), 2);
    let o = cli(&["--version"]);
    assert_eq!(code(&o), 0);
}
