//! Experiment suites: repeated fit/predict/score over a list of methods.

use std::path::{Path, PathBuf};
use std::time::Instant;

use graphmogp::graph::Graph;
use graphmogp::kernels::GraphContext;
use graphmogp::model::{mse, predictive_log_likelihood};
use graphmogp::training::{child_seed, fit};
use graphmogp::{count_hyperparameters, FittedModel, MultiDataset, OptimizerConfig, Prediction, TestQuery, VertexBlock};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliError;
use crate::generators::{RegularConfig, RegularProblem, SincConfig, SincProblem, TestSet};
use crate::io::{data_hash, fmt_f64, graph_hash, noise_json, to_json_line, write_json, write_text, Row};
use crate::methods::Method;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Regular,
    Subgraph,
    Real,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Regular => "regular",
            Suite::Subgraph => "subgraph",
            Suite::Real => "real",
        }
    }
}

/// A user-supplied dataset for the `real` suite. Row `i` of every vertex
/// (in file order) is sample `i`; splits pick the same samples at every
/// vertex.
#[derive(Clone, Debug)]
pub struct RealInputs {
    pub graph: Graph,
    pub rows: Vec<Row>,
    pub dim: usize,
    pub n_train: Option<usize>,
    pub n_test: Option<usize>,
}

/// Known dataset shapes: `(vertices, input dim, samples per vertex)` and
/// the train/test split.
const REAL_PRESETS: &[(&str, (usize, usize, usize), (usize, usize))] =
    &[("fmri", (40, 10, 46), (21, 25)), ("weather", (45, 1, 16), (10, 6))];

#[derive(Clone, Debug)]
pub struct ExperimentOptions {
    pub suite: Suite,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub regular: RegularConfig,
    pub sinc: SincConfig,
    pub real: Option<RealInputs>,
    pub emit_raw: bool,
}

impl ExperimentOptions {
    pub fn new(suite: Suite, methods: Vec<Method>, trials: usize, seed: u64) -> Self {
        ExperimentOptions {
            suite,
            methods,
            trials,
            seed,
            optimizer: OptimizerConfig::default(),
            regular: RegularConfig::default(),
            sinc: SincConfig::default(),
            real: None,
            emit_raw: false,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MethodRow {
    pub name: String,
    pub kernel: Value,
    pub num_hyperparameters: usize,
    /// Trained kernel and noise when the training set is fixed for the suite.
    pub fitted: Option<Value>,
    pub mse_mean: Option<f64>,
    pub mse_std: Option<f64>,
    pub loglik_mean: Option<f64>,
    pub loglik_std: Option<f64>,
    /// Trials that produced a score.
    pub trials: usize,
    pub failures: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub suite: Suite,
    pub seed: u64,
    pub trials: usize,
    pub metadata: Value,
    pub methods: Vec<MethodRow>,
}

impl ExperimentReport {
    pub fn row(&self, name: &str) -> Option<&MethodRow> {
        self.methods.iter().find(|r| r.name == name)
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let mut out = String::from("method,mse_mean,mse_std,loglik_mean,loglik_std,trials,failures,num_hyperparameters\n");
        for r in &self.methods {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.name,
                opt(r.mse_mean),
                opt(r.mse_std),
                opt(r.loglik_mean),
                opt(r.loglik_std),
                r.trials,
                r.failures,
                r.num_hyperparameters
            ));
        }
        out
    }
}

/// Per-trial prediction, written with `--emit-raw`.
#[derive(Clone, Debug, Serialize)]
pub struct RawRecord {
    pub method: String,
    pub trial: usize,
    pub vertices: Vec<usize>,
    pub y_true: Vec<f64>,
    pub mean: Vec<f64>,
    pub cov_observed: Vec<Vec<f64>>,
    pub mse: f64,
    pub log_likelihood: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub raw: Vec<RawRecord>,
    /// Wall time per method in seconds.
    pub timing: Vec<(String, f64)>,
}

#[derive(Default)]
struct Scores {
    mse: Vec<f64>,
    loglik: Vec<f64>,
    failures: usize,
}

/// Mean and standard error (sample standard deviation over `√n`).
pub fn mean_and_stderr(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (Some(mean), None);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some((var / n).sqrt()))
}

fn row(method: &Method, m: usize, fitted: Option<Value>, scores: Scores, error: Option<String>) -> MethodRow {
    let (mse_mean, mse_std) = mean_and_stderr(&scores.mse);
    let (loglik_mean, loglik_std) = mean_and_stderr(&scores.loglik);
    MethodRow {
        name: method.name.clone(),
        kernel: method.kernel_json.clone(),
        num_hyperparameters: count_hyperparameters(&method.kernel, m),
        fitted,
        mse_mean,
        mse_std,
        loglik_mean,
        loglik_std,
        trials: scores.mse.len(),
        failures: scores.failures,
        error,
    }
}

pub fn fitted_json(model: &FittedModel) -> Value {
    let m = model.context().num_vertices();
    json!({
        "kernel": model.spec().with_values(model.hyperparameters(), m).to_json(),
        "noise": noise_json(model.noise()),
        "log_marginal_likelihood": model.log_likelihood(),
    })
}

/// Fits on outputs centred at their mean; returns the model and the mean.
pub fn fit_centered(
    method: &Method,
    ctx: &GraphContext,
    data: &MultiDataset,
    cfg: &OptimizerConfig,
) -> graphmogp::Result<(FittedModel, f64)> {
    let offset = data.output_mean();
    let fitted = fit(&method.kernel, ctx, &data.shifted(offset), cfg)?;
    Ok((fitted.model, offset))
}

/// Predicts `test` and scores it; the mean is shifted back by `offset`.
pub fn score(model: &FittedModel, offset: f64, test: &TestSet) -> graphmogp::Result<(f64, f64, Prediction)> {
    let mut pred = model.predict(&test.query)?;
    for v in pred.mean.iter_mut() {
        *v += offset;
    }
    let e = mse(&test.truth, &pred.mean)?;
    let ll = predictive_log_likelihood(&test.truth, &pred, true)?;
    Ok((e, ll, pred))
}

fn raw_record(method: &str, trial: usize, test: &TestSet, pred: &Prediction, e: f64, ll: f64) -> RawRecord {
    let c = &pred.cov_observed;
    RawRecord {
        method: method.to_string(),
        trial,
        vertices: pred.vertices.clone(),
        y_true: test.truth.clone(),
        mean: pred.mean.clone(),
        cov_observed: (0..c.rows()).map(|i| c.row(i).to_vec()).collect(),
        mse: e,
        log_likelihood: ll,
    }
}

fn common_metadata(opts: &ExperimentOptions, optimizer: &OptimizerConfig) -> serde_json::Map<String, Value> {
    let mut meta = serde_json::Map::new();
    meta.insert(
        "std_convention".into(),
        json!("standard error: sample standard deviation of the per-trial metric divided by sqrt(trials)"),
    );
    meta.insert(
        "log_likelihood".into(),
        json!("joint Gaussian log-density of all test targets of a trial under the predictive mean and observed covariance"),
    );
    meta.insert("centering".into(), json!("training outputs centred at their mean; the mean is added back to predictions"));
    meta.insert("optimizer".into(), serde_json::to_value(optimizer).expect("plain struct"));
    meta.insert("methods".into(), json!(opts.methods.iter().map(|m| m.name.as_str()).collect::<Vec<_>>()));
    meta
}

/// Runs the suite. Per-method fit failures are recorded, not returned.
pub fn run_experiment(opts: &ExperimentOptions) -> Result<ExperimentOutput, CliError> {
    if opts.trials == 0 {
        return Err(CliError::Input("--trials must be at least 1".into()));
    }
    if opts.methods.is_empty() {
        return Err(CliError::Input("no methods to run".into()));
    }
    let mut optimizer = opts.optimizer.clone();
    optimizer.seed = child_seed(opts.seed, 2);
    optimizer.validate()?;
    match opts.suite {
        Suite::Regular => {
            let problem = RegularProblem::generate(opts.regular.clone(), child_seed(opts.seed, 0))?;
            let tests = (0..opts.trials)
                .map(|t| problem.sample_test(child_seed(child_seed(opts.seed, 1), t as u64)))
                .collect::<graphmogp::Result<Vec<_>>>()?;
            let mut meta = common_metadata(opts, &optimizer);
            meta.insert("generator".into(), serde_json::to_value(&problem.config).expect("plain struct"));
            meta.insert(
                "graph".into(),
                json!({
                    "kind": "random regular",
                    "num_vertices": problem.graph.num_vertices(),
                    "degree": problem.config.k,
                    "num_edges": problem.graph.num_edges(),
                    "sha256": graph_hash(&problem.graph),
                }),
            );
            meta.insert("protocol".into(), json!("one training set per graph; every trial draws fresh test inputs"));
            fixed_training(opts, &optimizer, &problem.graph, &problem.train, &tests, meta)
        }
        Suite::Subgraph => {
            let problem = SincProblem::generate(opts.sinc.clone(), child_seed(opts.seed, 0))?;
            let tests = (0..opts.trials)
                .map(|t| problem.sample_test(child_seed(child_seed(opts.seed, 1), t as u64)))
                .collect::<graphmogp::Result<Vec<_>>>()?;
            let mut meta = common_metadata(opts, &optimizer);
            meta.insert("generator".into(), serde_json::to_value(&problem.config).expect("plain struct"));
            meta.insert(
                "graph".into(),
                json!({
                    "kind": "sinc subgraph",
                    "topology": "chain 0-1-2-3-4-5 plus symmetry edges (0,5), (1,4), (2,3); a stand-in for the \
                                 reference topology, which is only published as a figure",
                    "num_vertices": problem.graph.num_vertices(),
                    "num_edges": problem.graph.num_edges(),
                    "sha256": graph_hash(&problem.graph),
                }),
            );
            meta.insert("target_vertex".into(), json!(problem.target_vertex()));
            meta.insert(
                "protocol".into(),
                json!("one training set; every trial draws fresh test inputs on the target vertex"),
            );
            fixed_training(opts, &optimizer, &problem.graph, &problem.train, &tests, meta)
        }
        Suite::Real => {
            let real = opts
                .real
                .as_ref()
                .ok_or_else(|| CliError::Input("the real suite needs --graph and --data".into()))?;
            run_real(opts, &optimizer, real)
        }
    }
}

fn fixed_training(
    opts: &ExperimentOptions,
    optimizer: &OptimizerConfig,
    graph: &Graph,
    train: &MultiDataset,
    tests: &[TestSet],
    mut meta: serde_json::Map<String, Value>,
) -> Result<ExperimentOutput, CliError> {
    let ctx = GraphContext::new(graph)?;
    let m = graph.num_vertices();
    meta.insert("data_sha256".into(), json!(data_hash(train)));
    meta.insert("block_sizes".into(), json!(train.block_sizes()));
    let mut rows = Vec::with_capacity(opts.methods.len());
    let mut raw = Vec::new();
    let mut timing = Vec::new();
    for method in &opts.methods {
        let start = Instant::now();
        match fit_centered(method, &ctx, train, optimizer) {
            Ok((model, offset)) => {
                let mut scores = Scores::default();
                for (t, test) in tests.iter().enumerate() {
                    match score(&model, offset, test) {
                        Ok((e, ll, pred)) => {
                            scores.mse.push(e);
                            scores.loglik.push(ll);
                            if opts.emit_raw {
                                raw.push(raw_record(&method.name, t, test, &pred, e, ll));
                            }
                        }
                        Err(_) => scores.failures += 1,
                    }
                }
                let fitted = json!({"output_mean": offset, "model": fitted_json(&model)});
                rows.push(row(method, m, Some(fitted), scores, None));
            }
            Err(e) => {
                let scores = Scores { failures: tests.len(), ..Default::default() };
                rows.push(row(method, m, None, scores, Some(e.to_string())));
            }
        }
        timing.push((method.name.clone(), start.elapsed().as_secs_f64()));
    }
    let report =
        ExperimentReport { suite: opts.suite, seed: opts.seed, trials: opts.trials, metadata: Value::Object(meta), methods: rows };
    Ok(ExperimentOutput { report, raw, timing })
}

/// Per-vertex sample lists of a real dataset after shape checks.
struct RealLayout {
    samples: Vec<Vec<(Vec<f64>, f64)>>,
    per_vertex: usize,
    n_train: usize,
    n_test: usize,
    preset: Option<&'static str>,
    isotopic: bool,
}

fn real_layout(real: &RealInputs) -> Result<RealLayout, CliError> {
    let m = real.graph.num_vertices();
    let mut samples: Vec<Vec<(Vec<f64>, f64)>> = vec![Vec::new(); m];
    for r in &real.rows {
        if r.vertex >= m {
            return Err(CliError::Input(format!("data row for vertex {} but the graph has {m} vertices", r.vertex)));
        }
        let y = r.y.ok_or_else(|| CliError::Input("real data rows need a y column".into()))?;
        samples[r.vertex].push((r.x.clone(), y));
    }
    let per_vertex = samples[0].len();
    if samples.iter().any(|s| s.len() != per_vertex) {
        let sizes: Vec<usize> = samples.iter().map(Vec::len).collect();
        return Err(CliError::Input(format!(
            "the real suite needs the same number of samples at every vertex, got {sizes:?}"
        )));
    }
    let isotopic = samples.iter().all(|s| s.iter().zip(&samples[0]).all(|(a, b)| a.0 == b.0));
    let preset = REAL_PRESETS.iter().find(|(_, shape, _)| *shape == (m, real.dim, per_vertex));
    let (n_train, n_test) = match (real.n_train, real.n_test, preset) {
        (Some(a), Some(b), _) => (a, b),
        (a, b, Some((_, _, (pa, pb)))) => (a.unwrap_or(*pa), b.unwrap_or(*pb)),
        _ => {
            return Err(CliError::Input(format!(
                "dataset shape ({m} vertices, dimension {}, {per_vertex} samples per vertex) matches no known \
                 preset; pass --n-train and --n-test",
                real.dim
            )))
        }
    };
    if n_train == 0 || n_test == 0 || n_train + n_test > per_vertex {
        return Err(CliError::Input(format!(
            "cannot split {per_vertex} samples per vertex into {n_train} training and {n_test} test samples"
        )));
    }
    Ok(RealLayout { samples, per_vertex, n_train, n_test, preset: preset.map(|p| p.0), isotopic })
}

fn run_real(opts: &ExperimentOptions, optimizer: &OptimizerConfig, real: &RealInputs) -> Result<ExperimentOutput, CliError> {
    let layout = real_layout(real)?;
    let ctx = GraphContext::new(&real.graph)?;
    let m = real.graph.num_vertices();

    let mut splits = Vec::with_capacity(opts.trials);
    for t in 0..opts.trials {
        let mut idx: Vec<usize> = (0..layout.per_vertex).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(child_seed(child_seed(opts.seed, 1), t as u64)));
        let (train_idx, rest) = idx.split_at(layout.n_train);
        let test_idx = &rest[..layout.n_test];
        let blocks = layout
            .samples
            .iter()
            .map(|s| {
                VertexBlock::new(train_idx.iter().map(|&i| s[i].0.clone()).collect(), train_idx.iter().map(|&i| s[i].1).collect())
            })
            .collect();
        let train = MultiDataset::new(real.dim, blocks)?;
        let query_blocks = layout.samples.iter().map(|s| test_idx.iter().map(|&i| s[i].0.clone()).collect()).collect();
        let truth = layout.samples.iter().flat_map(|s| test_idx.iter().map(move |&i| s[i].1)).collect();
        splits.push((train, TestSet { query: TestQuery::full(query_blocks)?, truth }));
    }

    let mut rows = Vec::with_capacity(opts.methods.len());
    let mut raw = Vec::new();
    let mut timing = Vec::new();
    for method in &opts.methods {
        let start = Instant::now();
        let mut scores = Scores::default();
        let mut first_error = None;
        for (t, (train, test)) in splits.iter().enumerate() {
            let outcome = fit_centered(method, &ctx, train, optimizer).and_then(|(model, offset)| score(&model, offset, test));
            match outcome {
                Ok((e, ll, pred)) => {
                    scores.mse.push(e);
                    scores.loglik.push(ll);
                    if opts.emit_raw {
                        raw.push(raw_record(&method.name, t, test, &pred, e, ll));
                    }
                }
                Err(e) => {
                    scores.failures += 1;
                    first_error.get_or_insert_with(|| format!("trial {t}: {e}"));
                }
            }
        }
        let error = if scores.mse.is_empty() { first_error } else { None };
        rows.push(row(method, m, None, scores, error));
        timing.push((method.name.clone(), start.elapsed().as_secs_f64()));
    }

    let mut meta = common_metadata(opts, optimizer);
    meta.insert(
        "dataset".into(),
        json!({
            "preset": layout.preset,
            "num_vertices": m,
            "dim": real.dim,
            "samples_per_vertex": layout.per_vertex,
            "n_train": layout.n_train,
            "n_test": layout.n_test,
            "isotopic": layout.isotopic,
            "graph_sha256": graph_hash(&real.graph),
        }),
    );
    meta.insert("protocol".into(), json!("every trial re-splits the samples, refits each method and scores the held-out samples"));
    let report =
        ExperimentReport { suite: opts.suite, seed: opts.seed, trials: opts.trials, metadata: Value::Object(meta), methods: rows };
    Ok(ExperimentOutput { report, raw, timing })
}

/// Sibling path with `suffix` appended to the file name.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

/// Writes the report to `out`, the CSV table next to it, wall times to
/// `<out>.timing.json` and raw predictions to `<out>.raw.jsonl`.
pub fn write_outputs(out: &Path, output: &ExperimentOutput) -> Result<(), CliError> {
    write_json(out, &output.report)?;
    write_text(&out.with_extension("csv"), &output.report.to_csv())?;
    let timing: serde_json::Map<String, Value> = output.timing.iter().map(|(n, s)| (n.clone(), json!(s))).collect();
    write_json(&sibling(out, ".timing.json"), &json!({"wall_seconds": timing}))?;
    if !output.raw.is_empty() {
        let mut text = String::new();
        for r in &output.raw {
            text.push_str(&to_json_line(r));
            text.push('\n');
        }
        write_text(&sibling(out, ".raw.jsonl"), &text)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::methods::from_names;

    #[test]
    fn stderr_convention() {
        let (m, s) = mean_and_stderr(&[1.0, 3.0]);
        assert_eq!(m, Some(2.0));
        // sample sd √2, over √2
        assert!((s.unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(mean_and_stderr(&[4.0]), (Some(4.0), None));
        assert_eq!(mean_and_stderr(&[]), (None, None));
    }

    #[test]
    fn two_trials_single_method() {
        let mut opts = ExperimentOptions::new(Suite::Subgraph, from_names(&["sogp"]).unwrap(), 2, 1);
        opts.optimizer.max_iters = 20;
        opts.optimizer.restarts = 1;
        let out = run_experiment(&opts).unwrap();
        assert_eq!(out.report.methods.len(), 1);
        let r = &out.report.methods[0];
        assert_eq!((r.trials, r.failures), (2, 0));
        assert!(r.mse_std.is_some() && r.loglik_std.is_some());
        assert_eq!(out.report.to_csv().lines().count(), 2);
    }

    #[test]
    fn real_suite_shapes() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let rows: Vec<Row> = (0..3)
            .flat_map(|v| (0..8).map(move |i| Row { vertex: v, x: vec![i as f64], y: Some((i as f64).sin() + v as f64) }))
            .collect();
        let mut real = RealInputs { graph: g, rows, dim: 1, n_train: None, n_test: None };
        assert!(real_layout(&real).is_err());
        real.n_train = Some(5);
        real.n_test = Some(3);
        let layout = real_layout(&real).unwrap();
        assert!(layout.isotopic);
        let mut opts = ExperimentOptions::new(Suite::Real, from_names(&["sogp", "diffusion"]).unwrap(), 2, 4);
        opts.optimizer.max_iters = 10;
        opts.optimizer.restarts = 1;
        opts.real = Some(real.clone());
        let out = run_experiment(&opts).unwrap();
        assert!(out.report.methods.iter().all(|r| r.trials == 2));
        real.n_test = Some(4);
        assert!(real_layout(&real).is_err());
        real.rows.pop();
        real.n_test = Some(2);
        assert!(real_layout(&real).is_err());
    }
}
