//! `gen`, `train`, `predict`, `eval` and `experiment`.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use graphmogp::graph::VertexSubset;
use graphmogp::kernels::GraphContext;
use graphmogp::model::{mse, predictive_log_likelihood};
use graphmogp::numerics::Matrix;
use graphmogp::training::{child_seed, fit_with_noise};
use graphmogp::{FittedModel, KernelSpec, OptimizerConfig, Prediction, TestQuery};
use serde_json::{json, Value};

use crate::error::CliError;
use crate::experiment::{run_experiment, write_outputs, ExperimentOptions, RealInputs, Suite};
use crate::generators::{RegularConfig, RegularProblem, SincConfig, SincProblem, TestSet};
use crate::io::{
    data_hash, dataset_csv, graph_hash, noise_from_json, noise_json, read_graph, read_json, read_rows, read_text,
    rows_csv, rows_to_dataset, to_json_string, vertex_major, write_json, write_text, Row,
};
use crate::methods::{default_names, from_names, parse_methods_arg};

pub const MODEL_FORMAT: &str = "graphmogp-model";
pub const MODEL_VERSION: u64 = 1;

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected lo,hi, got `{s}`"))?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("`{a}` is not a number"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("`{b}` is not a number"))?;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(format!("invalid range `{s}`"));
    }
    Ok((lo, hi))
}

fn load_optimizer(path: Option<&Path>) -> Result<OptimizerConfig, CliError> {
    match path {
        Some(p) => OptimizerConfig::from_json(&read_text(p)?).map_err(|e| CliError::Input(format!("{}: {e}", p.display()))),
        None => Ok(OptimizerConfig::default()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GenSuite {
    Regular,
    Subgraph,
}

/// Flags shared by the synthetic generators.
#[derive(Args, Clone, Debug)]
pub struct GeneratorArgs {
    /// Degree of the random regular graph.
    #[arg(long, default_value_t = 6)]
    pub k: usize,
    /// Number of vertices of the random regular graph.
    #[arg(long, default_value_t = 32)]
    pub m: usize,
    /// Training inputs per vertex (regular suite).
    #[arg(long = "n-train-regular", default_value_t = 10)]
    pub n_train_regular: usize,
    /// Test inputs per trial (per vertex for the regular suite).
    #[arg(long = "n-test-points", default_value_t = 10)]
    pub n_test_points: usize,
    /// Range of the cosine frequencies, `lo,hi`.
    #[arg(long = "qj-range", value_parser = parse_range)]
    pub qj_range: Option<(f64, f64)>,
    /// Observation-noise variance of the generator.
    #[arg(long = "noise-variance")]
    pub noise_variance: Option<f64>,
}

impl GeneratorArgs {
    pub fn regular(&self) -> Result<RegularConfig, CliError> {
        let mut cfg = RegularConfig {
            m: self.m,
            k: self.k,
            n_train: self.n_train_regular,
            n_test: self.n_test_points,
            ..Default::default()
        };
        if let Some(q) = self.qj_range {
            cfg.q_range = q;
        }
        if let Some(v) = self.noise_variance {
            cfg.noise_variance = check_variance(v)?;
        }
        Ok(cfg)
    }

    pub fn sinc(&self) -> Result<SincConfig, CliError> {
        let mut cfg = SincConfig { n_test: self.n_test_points, ..Default::default() };
        if let Some(v) = self.noise_variance {
            cfg.noise_variance = check_variance(v)?;
        }
        Ok(cfg)
    }
}

fn check_variance(v: f64) -> Result<f64, CliError> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Input(format!("--noise-variance must be nonnegative, got {v}")))
    }
}

#[derive(Args, Clone, Debug)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub suite: GenSuite,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for graph.json, train.csv and test.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub generator: GeneratorArgs,
}

fn test_rows(test: &TestSet) -> Vec<Row> {
    let mut truth = test.truth.iter();
    let mut rows = Vec::with_capacity(test.truth.len());
    for (&v, block) in test.query.subset().vertices().iter().zip(test.query.blocks()) {
        for x in block {
            rows.push(Row { vertex: v, x: x.clone(), y: truth.next().copied() });
        }
    }
    rows
}

pub fn gen(args: &GenArgs) -> Result<(), CliError> {
    let (graph, train, test) = match args.suite {
        GenSuite::Regular => {
            let p = RegularProblem::generate(args.generator.regular()?, args.seed)?;
            let t = p.sample_test(child_seed(args.seed, 3))?;
            (p.graph, p.train, t)
        }
        GenSuite::Subgraph => {
            let p = SincProblem::generate(args.generator.sinc()?, args.seed)?;
            let t = p.sample_test(child_seed(args.seed, 1))?;
            (p.graph, p.train, t)
        }
    };
    write_text(&args.out.join("graph.json"), &graph.to_json())?;
    write_text(&args.out.join("train.csv"), &dataset_csv(&train))?;
    write_text(&args.out.join("test.csv"), &rows_csv(&test_rows(&test), train.dim()))?;
    Ok(())
}

#[derive(Args, Clone, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Kernel JSON; defaults to a separable SE × diffusion kernel.
    #[arg(long)]
    pub kernel: Option<PathBuf>,
    /// Optimizer JSON (`lr`, `max_iters`, `tol`, `restarts`, `seed`).
    #[arg(long)]
    pub opt: Option<PathBuf>,
    /// Overrides the optimizer seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// One noise variance per vertex instead of a shared one.
    #[arg(long = "per-vertex-noise")]
    pub per_vertex_noise: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional CSV of the optimizer trace of the best restart.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

pub fn default_kernel_json() -> Value {
    json!({"variant": "separable", "data": {"family": "se"}, "graph": {"family": "diffusion"}})
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let graph = read_graph(&args.graph)?;
    let (rows, dim) = read_rows(&args.data, true)?;
    let data = rows_to_dataset(&rows, graph.num_vertices(), dim)?;
    let kernel_json = match &args.kernel {
        Some(p) => read_json(p)?,
        None => default_kernel_json(),
    };
    let spec = KernelSpec::from_json(&kernel_json).map_err(|e| CliError::Input(format!("kernel: {e}")))?;
    let mut cfg = load_optimizer(args.opt.as_deref())?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let ctx = GraphContext::new(&graph)?;
    let offset = data.output_mean();
    let centred = data.shifted(offset);
    let noise = if args.per_vertex_noise {
        let v = graphmogp::training::initial_noise(&centred)?.variance(0);
        Some(graphmogp::NoiseModel::per_vertex(vec![v; graph.num_vertices()])?)
    } else {
        None
    };
    let result = fit_with_noise(&spec, &ctx, &centred, noise, &cfg)?;
    let model = &result.model;
    let doc = json!({
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kernel": model.spec().to_json(),
        "noise": noise_json(model.noise()),
        "output_mean": offset,
        "log_marginal_likelihood": model.log_likelihood(),
        "num_vertices": graph.num_vertices(),
        "dim": dim,
        "graph_sha256": graph_hash(&graph),
        "data_sha256": data_hash(&data),
        "optimizer": cfg,
        "best_restart": result.best_restart,
    });
    write_json(&args.out, &doc)?;
    if let Some(path) = &args.trace {
        let mut text = String::from("iter,log_likelihood,step_scale\n");
        for t in result.trace() {
            text.push_str(&format!("{},{},{}\n", t.iter, crate::io::fmt_f64(t.log_likelihood), crate::io::fmt_f64(t.step_scale)));
        }
        write_text(path, &text)?;
    }
    Ok(())
}

#[derive(Args, Clone, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Graph the model was trained on.
    #[arg(long)]
    pub graph: PathBuf,
    /// Training data the model was trained on.
    #[arg(long)]
    pub data: PathBuf,
    /// CSV of query points (`vertex,x0,...`; a `y` column is ignored).
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the full observed predictive covariance.
    #[arg(long)]
    pub cov: bool,
}

/// A trained model file re-attached to its graph and training data.
pub fn load_model(model_path: &Path, graph_path: &Path, data_path: &Path) -> Result<(FittedModel, f64), CliError> {
    let doc = read_json(model_path)?;
    let field = |k: &str| doc.get(k).ok_or_else(|| CliError::Input(format!("{}: missing `{k}`", model_path.display())));
    if field("format")?.as_str() != Some(MODEL_FORMAT) || field("version")?.as_u64() != Some(MODEL_VERSION) {
        return Err(CliError::Input(format!("{}: not a version {MODEL_VERSION} model file", model_path.display())));
    }
    let graph = read_graph(graph_path)?;
    let gh = graph_hash(&graph);
    if field("graph_sha256")?.as_str() != Some(gh.as_str()) {
        return Err(CliError::Input(format!(
            "{} does not match the graph the model was trained on (sha256 {gh}, model expects {})",
            graph_path.display(),
            field("graph_sha256")?
        )));
    }
    let (rows, dim) = read_rows(data_path, true)?;
    let data = rows_to_dataset(&rows, graph.num_vertices(), dim)?;
    let dh = data_hash(&data);
    if field("data_sha256")?.as_str() != Some(dh.as_str()) {
        return Err(CliError::Input(format!(
            "{} does not match the data the model was trained on (sha256 {dh}, model expects {})",
            data_path.display(),
            field("data_sha256")?
        )));
    }
    let spec = KernelSpec::from_json(field("kernel")?).map_err(|e| CliError::Input(format!("{}: {e}", model_path.display())))?;
    let noise = noise_from_json(field("noise")?, graph.num_vertices())?;
    let offset = field("output_mean")?
        .as_f64()
        .ok_or_else(|| CliError::Input(format!("{}: `output_mean` must be a number", model_path.display())))?;
    let ctx = GraphContext::new(&graph)?;
    let model = FittedModel::new(spec, ctx, data.shifted(offset), noise)?;
    Ok((model, offset))
}

/// Groups query rows vertex-major into a [`TestQuery`].
pub fn rows_to_query(rows: &[Row], num_vertices: usize) -> Result<(TestQuery, Vec<Row>), CliError> {
    let sorted = vertex_major(rows);
    let mut vertices: Vec<usize> = Vec::new();
    let mut blocks: Vec<Vec<Vec<f64>>> = Vec::new();
    for r in &sorted {
        if vertices.last() != Some(&r.vertex) {
            vertices.push(r.vertex);
            blocks.push(Vec::new());
        }
        blocks.last_mut().expect("pushed above").push(r.x.clone());
    }
    let subset = VertexSubset::new(vertices, num_vertices)?;
    Ok((TestQuery::new(subset, blocks)?, sorted))
}

pub fn predict(args: &PredictArgs) -> Result<(), CliError> {
    let (model, offset) = load_model(&args.model, &args.graph, &args.data)?;
    let (rows, _) = read_rows(&args.query, false)?;
    let (query, sorted) = rows_to_query(&rows, model.context().num_vertices())?;
    let mut pred = model.predict(&query)?;
    for v in pred.mean.iter_mut() {
        *v += offset;
    }
    let mut doc = json!({
        "ordering": "vertex-major",
        "vertices": pred.vertices,
        "inputs": sorted.iter().map(|r| r.x.clone()).collect::<Vec<_>>(),
        "mean": pred.mean,
        "var_latent": pred.var_latent(),
        "var_observed": pred.var_observed(),
    });
    if args.cov {
        let c = &pred.cov_observed;
        doc["cov_observed"] = json!((0..c.rows()).map(|i| c.row(i).to_vec()).collect::<Vec<_>>());
    }
    write_json(&args.out, &doc)
}

#[derive(Args, Clone, Debug)]
pub struct EvalArgs {
    /// Prediction JSON written by `predict`.
    #[arg(long)]
    pub pred: PathBuf,
    /// CSV of true targets at the predicted points.
    #[arg(long)]
    pub truth: PathBuf,
    /// Also write the metrics here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn f64_array(doc: &Value, key: &str) -> Result<Vec<f64>, CliError> {
    doc.get(key)
        .and_then(Value::as_array)
        .ok_or_else(|| CliError::Input(format!("prediction is missing `{key}`")))?
        .iter()
        .map(|v| v.as_f64().ok_or_else(|| CliError::Input(format!("`{key}` must hold numbers"))))
        .collect()
}

/// MSE and predictive log-likelihood of a prediction document against
/// vertex-major truth rows.
pub fn evaluate(doc: &Value, truth_rows: &[Row]) -> Result<Value, CliError> {
    let mean = f64_array(doc, "mean")?;
    let vertices: Vec<usize> = f64_array(doc, "vertices")?.into_iter().map(|v| v as usize).collect();
    let truth = vertex_major(truth_rows);
    if truth.len() != mean.len() {
        return Err(CliError::Input(format!("{} truth rows for {} predictions", truth.len(), mean.len())));
    }
    if truth.iter().map(|r| r.vertex).ne(vertices.iter().copied()) {
        return Err(CliError::Input("truth rows are at different vertices than the prediction".into()));
    }
    if let Some(inputs) = doc.get("inputs").and_then(Value::as_array) {
        for (r, x) in truth.iter().zip(inputs) {
            let x: Vec<f64> = x.as_array().map(|a| a.iter().filter_map(Value::as_f64).collect()).unwrap_or_default();
            if x != r.x {
                return Err(CliError::Input(format!("truth row at vertex {} has inputs {:?}, prediction has {x:?}", r.vertex, r.x)));
            }
        }
    }
    let y: Vec<f64> = truth.iter().map(|r| r.y.expect("truth rows carry y")).collect();
    let n = mean.len();
    let (cov, kind) = match doc.get("cov_observed") {
        Some(rows) => {
            let rows: Vec<Vec<f64>> = serde_json::from_value(rows.clone())
                .map_err(|e| CliError::Input(format!("`cov_observed`: {e}")))?;
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(CliError::Input(format!("`cov_observed` must be {n} × {n}")));
            }
            (Matrix::from_rows(&rows), "full")
        }
        None => (Matrix::from_diag(&f64_array(doc, "var_observed")?), "diagonal"),
    };
    let pred = Prediction { mean: mean.clone(), cov_latent: cov.clone(), cov_observed: cov, vertices };
    Ok(json!({
        "mse": mse(&y, &mean)?,
        "log_likelihood": predictive_log_likelihood(&y, &pred, true)?,
        "num_points": n,
        "covariance": kind,
    }))
}

pub fn eval(args: &EvalArgs) -> Result<String, CliError> {
    let doc = read_json(&args.pred)?;
    let (rows, _) = read_rows(&args.truth, true)?;
    let metrics = evaluate(&doc, &rows)?;
    if let Some(out) = &args.out {
        write_json(out, &metrics)?;
    }
    Ok(to_json_string(&metrics))
}

#[derive(Args, Clone, Debug)]
pub struct ExperimentArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
    /// Comma-separated built-in method names or a JSON file of methods.
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub opt: Option<PathBuf>,
    /// Report JSON; the CSV table, timings and raw predictions go next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Write per-trial predictions to `<out>.raw.jsonl`.
    #[arg(long = "emit-raw")]
    pub emit_raw: bool,
    #[command(flatten)]
    pub generator: GeneratorArgs,
    /// Graph JSON for the real suite.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Dataset CSV for the real suite.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Training samples per vertex for the real suite.
    #[arg(long = "n-train")]
    pub n_train: Option<usize>,
    /// Test samples per vertex for the real suite.
    #[arg(long = "n-test")]
    pub n_test: Option<usize>,
}

pub fn experiment_options(args: &ExperimentArgs) -> Result<ExperimentOptions, CliError> {
    let methods = match &args.methods {
        Some(m) => parse_methods_arg(m)?,
        None => from_names(default_names(args.suite.name()))?,
    };
    let mut opts = ExperimentOptions::new(args.suite, methods, args.trials, args.seed);
    opts.optimizer = load_optimizer(args.opt.as_deref())?;
    opts.emit_raw = args.emit_raw;
    opts.regular = args.generator.regular()?;
    opts.sinc = args.generator.sinc()?;
    if args.suite == Suite::Real {
        let (Some(g), Some(d)) = (&args.graph, &args.data) else {
            return Err(CliError::Input("the real suite needs --graph and --data".into()));
        };
        let graph = read_graph(g)?;
        let (rows, dim) = read_rows(d, true)?;
        opts.real = Some(RealInputs { graph, rows, dim, n_train: args.n_train, n_test: args.n_test });
    }
    Ok(opts)
}

pub fn experiment(args: &ExperimentArgs) -> Result<(), CliError> {
    let opts = experiment_options(args)?;
    let output = run_experiment(&opts)?;
    write_outputs(&args.out, &output)
}
