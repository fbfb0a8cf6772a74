use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

const LN_2PI: f64 = 1.8378770664093453;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_graphmogp"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    /// Noise-free sinc data and a model trained on it.
    fn trained() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        ok(&["gen", "--suite", "subgraph", "--seed", "3", "--noise-variance", "0", "--out", p(&root)]);
        fs::write(root.join("opt.json"), r#"{"max_iters": 150, "restarts": 1}"#).unwrap();
        fs::write(
            root.join("kernel.json"),
            r#"{"variant": "separable", "data": {"family": "se"}, "graph": {"family": "global_filtering"}}"#,
        )
        .unwrap();
        ok(&[
            "train",
            "--graph",
            p(&root.join("graph.json")),
            "--data",
            p(&root.join("train.csv")),
            "--kernel",
            p(&root.join("kernel.json")),
            "--opt",
            p(&root.join("opt.json")),
            "--out",
            p(&root.join("model.json")),
            "--trace",
            p(&root.join("trace.csv")),
        ]);
        Fixture { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn predict(&self, query: &str, out: &str, extra: &[&str]) -> Output {
        let mut cmd = bin();
        cmd.arg("predict");
        for (flag, file) in
            [("--model", "model.json"), ("--graph", "graph.json"), ("--data", "train.csv"), ("--query", query), ("--out", out)]
        {
            cmd.arg(flag).arg(self.root.join(file));
        }
        cmd.args(extra).output().unwrap()
    }
}

#[test]
fn gen_train_predict_eval_round_trip() {
    let f = Fixture::trained();
    let model = json_file(&f.path("model.json"));
    assert_eq!(model["format"], "graphmogp-model");
    assert_eq!(model["kernel"]["variant"], "separable");
    assert!(model["kernel"]["graph"]["alpha"].as_f64().unwrap() > 0.0);
    assert_eq!(model["graph_sha256"].as_str().unwrap().len(), 64);
    assert!(fs::read_to_string(f.path("trace.csv")).unwrap().starts_with("iter,log_likelihood,step_scale\n0,"));

    // predicting the noise-free training points reproduces them
    let out = f.predict("train.csv", "fit.json", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: Value =
        serde_json::from_str(&ok(&["eval", "--pred", p(&f.path("fit.json")), "--truth", p(&f.path("train.csv"))])).unwrap();
    assert!(metrics["mse"].as_f64().unwrap() < 1e-5, "{metrics}");
    assert_eq!(metrics["covariance"], "diagonal");

    // held-out points on vertex 5, full covariance
    let out = f.predict("test.csv", "pred.json", &["--cov"]);
    assert!(out.status.success());
    let pred = json_file(&f.path("pred.json"));
    assert_eq!(pred["ordering"], "vertex-major");
    assert!(pred["vertices"].as_array().unwrap().iter().all(|v| v == 5));
    let metrics_path = f.path("metrics.json");
    let text = ok(&["eval", "--pred", p(&f.path("pred.json")), "--truth", p(&f.path("test.csv")), "--out", p(&metrics_path)]);
    let metrics: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(metrics, json_file(&metrics_path));
    assert_eq!(metrics["covariance"], "full");
    assert_eq!(metrics["num_points"], 10);
    assert!(metrics["mse"].as_f64().unwrap() < 1e-3);
}

#[test]
fn wrong_dimension_query_is_an_input_error() {
    let f = Fixture::trained();
    fs::write(f.path("q2.csv"), "vertex,x0,x1\n5,11.0,0.5\n").unwrap();
    let out = f.predict("q2.csv", "bad.json", &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dimension"), "{err}");
    assert!(!f.path("bad.json").exists());
}

#[test]
fn mismatched_data_is_refused() {
    let f = Fixture::trained();
    let text = fs::read_to_string(f.path("train.csv")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.pop();
    fs::write(f.path("train.csv"), lines.join("\n") + "\n").unwrap();
    let out = f.predict("test.csv", "bad.json", &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("does not match the data the model was trained on"), "{err}");
}

#[test]
fn eval_of_exact_mean_is_gaussian_density_at_mean() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("truth.csv");
    fs::write(&truth, "vertex,x0,y\n1,0.5,2.0\n0,0.1,-1.0\n0,0.2,3.0\n").unwrap();
    let vars: [f64; 3] = [0.5, 2.0, 0.25];
    let pred = json!({
        "ordering": "vertex-major",
        "vertices": [0, 0, 1],
        "inputs": [[0.1], [0.2], [0.5]],
        "mean": [-1.0, 3.0, 2.0],
        "var_latent": [0.4, 1.9, 0.2],
        "var_observed": vars,
    });
    let pred_path = dir.path().join("pred.json");
    fs::write(&pred_path, pred.to_string()).unwrap();
    let metrics: Value = serde_json::from_str(&ok(&["eval", "--pred", p(&pred_path), "--truth", p(&truth)])).unwrap();
    let expected: f64 = vars.iter().map(|v| -0.5 * (LN_2PI + v.ln())).sum();
    assert_eq!(metrics["mse"].as_f64(), Some(0.0));
    assert!((metrics["log_likelihood"].as_f64().unwrap() - expected).abs() < 1e-12);

    // full covariance: −½(T·ln 2π + ln det Σ)
    let mut with_cov = pred.clone();
    with_cov["cov_observed"] = json!([[0.5, 0.1, 0.0], [0.1, 2.0, 0.0], [0.0, 0.0, 0.25]]);
    fs::write(&pred_path, with_cov.to_string()).unwrap();
    let metrics: Value = serde_json::from_str(&ok(&["eval", "--pred", p(&pred_path), "--truth", p(&truth)])).unwrap();
    let det = (0.5 * 2.0 - 0.01) * 0.25;
    let expected = -0.5 * (3.0 * LN_2PI + f64::ln(det));
    assert!((metrics["log_likelihood"].as_f64().unwrap() - expected).abs() < 1e-12);

    // truth at other inputs is rejected
    fs::write(&truth, "vertex,x0,y\n1,0.5,2.0\n0,0.1,-1.0\n0,0.3,3.0\n").unwrap();
    assert_eq!(run(&["eval", "--pred", p(&pred_path), "--truth", p(&truth)]).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(&["gen", "--suite", "subgraph", "--seed", "1", "--out", p(root)]);
    // the Laplacian pseudoinverse has negative entries, which a bandwidth graph kernel cannot have
    fs::write(
        root.join("kernel.json"),
        r#"{"variant": "graph_pc", "graph1": {"family": "diffusion"}, "graph2": {"family": "laplacian"}}"#,
    )
    .unwrap();
    let out = run(&[
        "train",
        "--graph",
        p(&root.join("graph.json")),
        "--data",
        p(&root.join("train.csv")),
        "--kernel",
        p(&root.join("kernel.json")),
        "--out",
        p(&root.join("model.json")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn malformed_inputs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(&["gen", "--suite", "subgraph", "--out", p(root)]);
    fs::write(root.join("kernel.json"), r#"{"variant": "separable", "data": {"family": "se"}, "graph": {"family": "nope"}}"#).unwrap();
    let out = run(&[
        "train",
        "--graph",
        p(&root.join("graph.json")),
        "--data",
        p(&root.join("train.csv")),
        "--kernel",
        p(&root.join("kernel.json")),
        "--out",
        p(&root.join("model.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
    let out = run(&["train", "--graph", "/nonexistent.json", "--data", p(&root.join("train.csv")), "--out", "/tmp/x.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(run(&["experiment", "--suite", "subgraph", "--methods", "bogus", "--out", "/tmp/x.json"]).status.code(), Some(2));
}

#[test]
fn experiment_report_is_recomputable_from_raw_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let opt = dir.path().join("opt.json");
    fs::write(&opt, r#"{"max_iters": 60, "restarts": 1}"#).unwrap();
    ok(&[
        "experiment",
        "--suite",
        "subgraph",
        "--methods",
        "sogp,diffusion",
        "--trials",
        "4",
        "--opt",
        p(&opt),
        "--emit-raw",
        "--out",
        p(&out),
    ]);
    let report = json_file(&out);
    assert_eq!(report["trials"], 4);
    assert!(report["metadata"]["graph"]["topology"].as_str().unwrap().contains("chain"));
    assert!(report["metadata"]["std_convention"].as_str().unwrap().contains("sqrt(trials)"));
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(json_file(&dir.path().join("report.json.timing.json"))["wall_seconds"]["sogp"].as_f64().is_some());

    let raw = fs::read_to_string(dir.path().join("report.json.raw.jsonl")).unwrap();
    let records: Vec<Value> = raw.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 8);
    for row in report["methods"].as_array().unwrap() {
        let name = row["name"].as_str().unwrap();
        let mut mses = Vec::new();
        let mut lls = Vec::new();
        for r in records.iter().filter(|r| r["method"] == name) {
            let f = |k: &str| -> Vec<f64> { r[k].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect() };
            let (y, mu) = (f("y_true"), f("mean"));
            let cov: Vec<Vec<f64>> = serde_json::from_value(r["cov_observed"].clone()).unwrap();
            let n = y.len();
            let mse = y.iter().zip(&mu).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64;
            // independent log-density: Cholesky written out here
            let mut l = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..=i {
                    let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
                    l[i][j] = if i == j { (cov[i][i] - s).sqrt() } else { (cov[i][j] - s) / l[j][j] };
                }
            }
            let mut z = vec![0.0; n];
            for i in 0..n {
                z[i] = (y[i] - mu[i] - (0..i).map(|k| l[i][k] * z[k]).sum::<f64>()) / l[i][i];
            }
            let ll = -0.5 * (n as f64 * LN_2PI + z.iter().map(|v| v * v).sum::<f64>()) - (0..n).map(|i| l[i][i].ln()).sum::<f64>();
            assert!((mse - r["mse"].as_f64().unwrap()).abs() <= 1e-12 * mse.abs().max(1.0));
            assert!((ll - r["log_likelihood"].as_f64().unwrap()).abs() <= 1e-12 * ll.abs().max(1.0));
            mses.push(mse);
            lls.push(ll);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean(&mses) - row["mse_mean"].as_f64().unwrap()).abs() <= 1e-12);
        assert!((mean(&lls) - row["loglik_mean"].as_f64().unwrap()).abs() <= 1e-12 * mean(&lls).abs().max(1.0));
    }
}
