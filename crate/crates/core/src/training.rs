//! Hyperparameter training by gradient ascent on the log marginal
//! likelihood.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Component, GraphContext, KernelSpec, MogpKernel, PcBandwidth, PreparedKernel};
use crate::model::{gaussian_log_density, training_covariance, FittedModel, MultiDataset, NoiseModel, PointSet};
use crate::numerics::{chol_inverse, cholesky};
use crate::params::Transform;

/// Free optimizer coordinates: kernel hyperparameters in layout order,
/// then the noise variances (one if shared, else one per vertex).
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    pub u: Vec<f64>,
    pub transforms: Vec<Transform>,
    num_kernel: usize,
    shared_noise: bool,
}

impl ParamVector {
    pub fn pack(spec: &KernelSpec, ctx: &GraphContext, theta: &[f64], noise: &NoiseModel) -> Result<Self> {
        let mut transforms = spec.kernel.transforms(ctx);
        if theta.len() != transforms.len() {
            return Err(Error::InvalidSpec(format!(
                "expected {} kernel hyperparameters, got {}",
                transforms.len(),
                theta.len()
            )));
        }
        let num_kernel = theta.len();
        let mut u: Vec<f64> = theta.iter().zip(&transforms).map(|(&t, tr)| tr.to_free(t)).collect();
        let noise_values: Vec<f64> = if noise.is_shared() {
            vec![noise.variances().first().copied().unwrap_or(1.0)]
        } else {
            noise.variances().to_vec()
        };
        for v in noise_values {
            transforms.push(Transform::LogPositive);
            u.push(Transform::LogPositive.to_free(v));
        }
        Ok(ParamVector { u, transforms, num_kernel, shared_noise: noise.is_shared() })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn num_kernel_params(&self) -> usize {
        self.num_kernel
    }

    pub fn with_u(&self, u: Vec<f64>) -> Self {
        debug_assert_eq!(u.len(), self.u.len());
        ParamVector { u, ..self.clone() }
    }

    /// Kernel values and noise model.
    pub fn unpack(&self, num_vertices: usize) -> Result<(Vec<f64>, NoiseModel)> {
        let values: Vec<f64> = self.u.iter().zip(&self.transforms).map(|(&u, t)| t.to_constrained(u)).collect();
        let theta = values[..self.num_kernel].to_vec();
        let noise = if self.shared_noise {
            NoiseModel::shared(num_vertices, values[self.num_kernel])?
        } else {
            NoiseModel::per_vertex(values[self.num_kernel..].to_vec())?
        };
        Ok((theta, noise))
    }
}

/// Log marginal likelihood and its gradient in the free coordinates.
pub fn likelihood_and_gradient(
    spec: &KernelSpec,
    ctx: &GraphContext,
    data: &MultiDataset,
    params: &ParamVector,
) -> Result<(f64, Vec<f64>)> {
    Objective::new(&spec.kernel, ctx, data)?.value_and_gradient(params)
}

/// Log marginal likelihood at free coordinates.
pub fn likelihood_at(spec: &KernelSpec, ctx: &GraphContext, data: &MultiDataset, params: &ParamVector) -> Result<f64> {
    Objective::new(&spec.kernel, ctx, data)?.value(params)
}

struct Objective<'a> {
    kernel: &'a MogpKernel,
    ctx: &'a GraphContext,
    points: PointSet,
    outputs: Vec<f64>,
}

impl<'a> Objective<'a> {
    fn new(kernel: &'a MogpKernel, ctx: &'a GraphContext, data: &MultiDataset) -> Result<Self> {
        if data.num_vertices() != ctx.num_vertices() {
            return Err(Error::DimensionMismatch(format!(
                "dataset has {} vertex blocks, graph has {} vertices",
                data.num_vertices(),
                ctx.num_vertices()
            )));
        }
        if data.is_empty() {
            return Err(Error::InvalidData("training data is empty".into()));
        }
        Ok(Objective { kernel, ctx, points: data.points(), outputs: data.outputs() })
    }

    fn value(&self, params: &ParamVector) -> Result<f64> {
        let (theta, noise) = params.unpack(self.ctx.num_vertices())?;
        let prep = PreparedKernel::new(self.kernel, self.ctx, &theta)?;
        let factor = cholesky(&training_covariance(&prep, &self.points, &noise))?;
        let value = gaussian_log_density(&factor, &self.outputs)?.0;
        finite(value)
    }

    fn value_and_gradient(&self, params: &ParamVector) -> Result<(f64, Vec<f64>)> {
        let (theta, noise) = params.unpack(self.ctx.num_vertices())?;
        let prep = PreparedKernel::new(self.kernel, self.ctx, &theta)?;
        let factor = cholesky(&training_covariance(&prep, &self.points, &noise))?;
        let (value, alpha) = gaussian_log_density(&factor, &self.outputs)?;
        let value = finite(value)?;

        // W = ααᵀ − K⁻¹; ∂L/∂u = ½ Σ_ij W_ij ∂K_ij/∂u
        let mut w = chol_inverse(&factor).scaled(-1.0);
        let n = alpha.len();
        for i in 0..n {
            for j in 0..n {
                w[(i, j)] += alpha[i] * alpha[j];
            }
        }
        let mut grad: Vec<f64> = prep.contract_gradient(&w, &self.points)?.into_iter().map(|g| 0.5 * g).collect();

        let k = params.num_kernel;
        let noise_params = params.len() - k;
        let mut noise_grad = vec![0.0; noise_params];
        for i in 0..n {
            let slot = if params.shared_noise { 0 } else { self.points.vertex(i) };
            noise_grad[slot] += 0.5 * w[(i, i)];
        }
        for (p, g) in noise_grad.into_iter().enumerate() {
            let t = params.transforms[k + p];
            grad.push(g * t.derivative(params.u[k + p]));
        }
        Ok((value, grad))
    }
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::SingularMatrix(format!("log likelihood evaluated to {v}")))
    }
}

/// Gradient-ascent settings. JSON keys: `lr`, `max_iters`, `tol`,
/// `restarts`, `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub max_iters: usize,
    /// Relative likelihood improvement over the last 10 iterations below
    /// which the run stops.
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { lr: 0.05, max_iters: 500, tol: 1e-6, restarts: 3, seed: 0 }
    }
}

pub const MAX_HALVINGS: usize = 20;
const WINDOW: usize = 10;
const RESTART_SPREAD: f64 = 0.5;

impl OptimizerConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: OptimizerConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidSpec(format!("optimizer config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidSpec(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidSpec(format!("tol must be positive, got {}", self.tol)));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidSpec("restarts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub log_likelihood: f64,
    pub step_scale: f64,
}

/// Outcome of one optimizer run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub restart: usize,
    pub final_log_likelihood: Option<f64>,
    pub error: Option<String>,
    pub trace: Vec<TraceEntry>,
    pub params: Option<ParamVector>,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub model: FittedModel,
    pub best_restart: usize,
    pub runs: Vec<RunSummary>,
}

impl FitResult {
    pub fn trace(&self) -> &[TraceEntry] {
        &self.runs[self.best_restart].trace
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Median pairwise Euclidean distance over the pooled inputs (1 when
/// undefined or zero).
pub fn median_pairwise_distance(data: &MultiDataset) -> f64 {
    let p = data.points();
    let mut d = Vec::with_capacity(p.len() * p.len().saturating_sub(1) / 2);
    for i in 0..p.len() {
        for j in 0..i {
            d.push(crate::kernels::sq_dist(p.x(i), p.x(j)).sqrt());
        }
    }
    match median(d) {
        Some(m) if m > 0.0 => m,
        _ => 1.0,
    }
}

fn positive_or_one(v: f64) -> f64 {
    if v > 0.0 && v.is_finite() {
        v
    } else {
        1.0
    }
}

/// Kernel values for the starting point: given values where the spec has
/// them, scale-aware defaults elsewhere.
pub fn initial_hyperparameters(
    spec: &KernelSpec,
    ctx: &GraphContext,
    data: &MultiDataset,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>> {
    let m = ctx.num_vertices();
    let comps = spec.kernel.components();
    let var_y = positive_or_one(data.output_variance());
    let med = median_pairwise_distance(data);

    // graph components first: the data amplitudes are scaled by them
    let mut values: Vec<Option<Vec<f64>>> = vec![None; comps.len()];
    for (idx, c) in comps.iter().enumerate() {
        if let Component::Graph(g) = c {
            let v = match &spec.values[idx] {
                Some(v) => v.clone(),
                None => g.initial_params(ctx, rng),
            };
            if v.len() != g.num_params(m) {
                return Err(Error::InvalidSpec(format!(
                    "{} kernel needs {} values, got {}",
                    g.family(),
                    g.num_params(m),
                    v.len()
                )));
            }
            values[idx] = Some(v);
        }
    }
    let mut diag_means = vec![1.0; comps.len()];
    for (idx, c) in comps.iter().enumerate() {
        if let Component::Graph(g) = c {
            let theta = values[idx].as_ref().expect("graph values");
            g.validate(ctx, theta)?;
            diag_means[idx] = positive_or_one(g.matrix(ctx, theta)?.trace() / m as f64);
        }
    }
    let mean_diag = |idx: usize| -> Result<f64> { Ok(diag_means[idx]) };

    match &spec.kernel {
        MogpKernel::SogpDiag { .. } => {
            values[0] = Some(vec![var_y, med]);
        }
        MogpKernel::Separable { .. } => {
            values[0] = Some(vec![var_y / mean_diag(1)?, med]);
        }
        MogpKernel::Sos { terms } => {
            let q = terms.len() as f64;
            for t in 0..terms.len() {
                values[2 * t] = Some(vec![var_y / (q * mean_diag(2 * t + 1)?), med]);
            }
        }
        MogpKernel::GraphPc { bandwidth, .. } => {
            let ell = med;
            let d = data.dim() as f64;
            let p_mean = match bandwidth {
                PcBandwidth::Degree => {
                    let deg = ctx.degrees();
                    deg.iter().map(|&x| 2.0 / positive_or_one(x)).sum::<f64>() / m as f64 + 1.0 / ell
                }
                PcBandwidth::Graph(g2) => {
                    let theta = values[2].as_ref().expect("graph2 values");
                    g2.validate(ctx, theta)?;
                    let k2 = g2.matrix(ctx, theta)?;
                    k2.diag().iter().map(|&x| 1.0 / positive_or_one(x)).sum::<f64>() / m as f64 + 1.0 / ell
                }
            };
            let v2 = var_y * (2.0 * std::f64::consts::PI * p_mean).powf(d / 2.0) / mean_diag(1)?;
            values[0] = Some(vec![v2.sqrt(), ell]);
        }
    }

    let mut out = Vec::new();
    for (idx, v) in values.into_iter().enumerate() {
        match &spec.values[idx] {
            Some(given) => out.extend_from_slice(given),
            None => out.extend(v.expect("initialized component")),
        }
    }
    Ok(out)
}

/// `0.1·var(Y)` shared across vertices.
pub fn initial_noise(data: &MultiDataset) -> Result<NoiseModel> {
    NoiseModel::shared(data.num_vertices(), 0.1 * positive_or_one(data.output_variance()))
}

/// Independent child seed for `(seed, index)`.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fits with default initialization and a shared noise variance.
pub fn fit(spec: &KernelSpec, ctx: &GraphContext, data: &MultiDataset, cfg: &OptimizerConfig) -> Result<FitResult> {
    fit_with_noise(spec, ctx, data, None, cfg)
}

/// Fits starting from `noise` when given (its shared flag decides the
/// noise parametrization).
pub fn fit_with_noise(
    spec: &KernelSpec,
    ctx: &GraphContext,
    data: &MultiDataset,
    noise: Option<NoiseModel>,
    cfg: &OptimizerConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    let objective = Objective::new(&spec.kernel, ctx, data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let theta0 = initial_hyperparameters(spec, ctx, data, &mut rng)?;
    let noise0 = match noise {
        Some(n) => n,
        None => initial_noise(data)?,
    };
    let start = ParamVector::pack(spec, ctx, &theta0, &noise0)?;

    let mut runs = Vec::with_capacity(cfg.restarts);
    for r in 0..cfg.restarts {
        let mut init = start.clone();
        if r > 0 {
            let mut rrng = ChaCha8Rng::seed_from_u64(child_seed(cfg.seed, r as u64));
            for u in init.u.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rrng);
                *u += RESTART_SPREAD * z;
            }
        }
        runs.push(run_ascent(&objective, init, cfg, r));
    }

    let best = runs
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.final_log_likelihood.map(|v| (i, v)))
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i);
    let best = match best {
        Some(i) => i,
        None => {
            let msgs: Vec<String> = runs.iter().filter_map(|r| r.error.clone()).collect();
            return Err(Error::AllRestartsFailed(msgs.join("; ")));
        }
    };
    let params = runs[best].params.clone().expect("successful run has params");
    let (theta, noise) = params.unpack(ctx.num_vertices())?;
    let model = FittedModel::new(spec.with_values(&theta, ctx.num_vertices()), ctx.clone(), data.clone(), noise)?;
    Ok(FitResult { model, best_restart: best, runs })
}

fn run_ascent(obj: &Objective, init: ParamVector, cfg: &OptimizerConfig, restart: usize) -> RunSummary {
    let fail = |e: Error, trace: Vec<TraceEntry>| RunSummary {
        restart,
        final_log_likelihood: None,
        error: Some(e.to_string()),
        trace,
        params: None,
    };
    let mut params = init;
    let (mut value, mut grad) = match obj.value_and_gradient(&params) {
        Ok(vg) => vg,
        Err(e) => return fail(e, Vec::new()),
    };
    let mut trace = vec![TraceEntry { iter: 0, log_likelihood: value, step_scale: 0.0 }];
    let mut scale = 1.0f64;
    for iter in 1..=cfg.max_iters {
        let mut accepted = None;
        let mut s = (2.0 * scale).min(1.0);
        for _ in 0..=MAX_HALVINGS {
            let u: Vec<f64> = params.u.iter().zip(&grad).map(|(u, g)| u + cfg.lr * s * g).collect();
            let candidate = params.with_u(u);
            if let Ok(v) = obj.value(&candidate) {
                if v >= value {
                    accepted = Some((candidate, v));
                    break;
                }
            }
            s *= 0.5;
        }
        let Some((candidate, v)) = accepted else { break };
        let (new_value, new_grad) = match obj.value_and_gradient(&candidate) {
            Ok(vg) => vg,
            Err(_) => break,
        };
        debug_assert!((new_value - v).abs() <= 1e-9 * (1.0 + v.abs()));
        params = candidate;
        value = new_value.max(v);
        grad = new_grad;
        scale = s;
        trace.push(TraceEntry { iter, log_likelihood: value, step_scale: s });
        if trace.len() > WINDOW {
            let old = trace[trace.len() - 1 - WINDOW].log_likelihood;
            if (value - old) / value.abs().max(1.0) < cfg.tol {
                break;
            }
        }
    }
    RunSummary { restart, final_log_likelihood: Some(value), error: None, trace, params: Some(params) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::model::{log_marginal_likelihood, VertexBlock};
    use serde_json::json;

    fn single_point(y: f64) -> (GraphContext, MultiDataset) {
        let ctx = GraphContext::new(&Graph::empty(1)).unwrap();
        let data = MultiDataset::new(1, vec![VertexBlock::new(vec![vec![0.0]], vec![y])]).unwrap();
        (ctx, data)
    }

    fn sogp(v2: f64, ell: f64) -> KernelSpec {
        KernelSpec::from_json(&json!({"variant": "sogp", "data": {"family": "se", "v2": v2, "ell": ell}})).unwrap()
    }

    #[test]
    fn param_counts() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let ctx = GraphContext::new(&g).unwrap();
        let noise = NoiseModel::shared(4, 0.1).unwrap();
        let spec = KernelSpec::from_json(&json!({"variant": "separable", "data": {"family": "se"},
            "graph": {"family": "diffusion"}}))
        .unwrap();
        let theta = vec![1.0, 1.0, 1.0];
        assert_eq!(ParamVector::pack(&spec, &ctx, &theta, &noise).unwrap().len(), 4);
        let spec = KernelSpec::from_json(&json!({"variant": "separable", "data": {"family": "se"},
            "graph": {"family": "icm"}}))
        .unwrap();
        let theta = vec![1.0; 10];
        assert_eq!(ParamVector::pack(&spec, &ctx, &theta, &noise).unwrap().len(), 11);
    }

    #[test]
    fn noise_gradient_scalar() {
        let (ctx, data) = single_point(0.0);
        let spec = sogp(1.0, 1.0);
        let p = ParamVector::pack(&spec, &ctx, &[1.0, 1.0], &NoiseModel::shared(1, 1.0).unwrap()).unwrap();
        let (_, g) = likelihood_and_gradient(&spec, &ctx, &data, &p).unwrap();
        assert!((g[2] + 0.25).abs() < 1e-12);
    }

    #[test]
    fn zero_iterations_returns_initialization() {
        let (ctx, data) = single_point(0.7);
        let spec = sogp(1.2, 0.5);
        let cfg = OptimizerConfig { max_iters: 0, restarts: 1, ..Default::default() };
        let noise = NoiseModel::shared(1, 0.3).unwrap();
        let fit = fit_with_noise(&spec, &ctx, &data, Some(noise.clone()), &cfg).unwrap();
        assert_eq!(fit.model.hyperparameters(), &[1.2, 0.5]);
        let direct = log_marginal_likelihood(&spec, &ctx, &data, &noise).unwrap();
        assert!((fit.model.log_likelihood() - direct).abs() < 1e-12);
    }

    #[test]
    fn accepted_steps_never_decrease() {
        let (ctx, data) = single_point(0.0);
        let spec = KernelSpec::from_json(&json!({"variant": "sogp", "data": {"family": "se"}})).unwrap();
        let fit = fit(&spec, &ctx, &data, &OptimizerConfig { max_iters: 50, ..Default::default() }).unwrap();
        for run in &fit.runs {
            for w in run.trace.windows(2) {
                assert!(w[1].log_likelihood >= w[0].log_likelihood);
            }
        }
    }

    #[test]
    fn config_json() {
        let cfg = OptimizerConfig::from_json(r#"{"lr":0.05,"max_iters":500,"tol":1e-6,"restarts":3,"seed":0}"#).unwrap();
        assert_eq!(cfg, OptimizerConfig::default());
        assert_eq!(OptimizerConfig::from_json(r#"{"lr":0.1}"#).unwrap().lr, 0.1);
        assert!(OptimizerConfig::from_json(r#"{"lr":-1}"#).is_err());
        assert!(OptimizerConfig::from_json(r#"{"momentum":0.9}"#).is_err());
    }

    #[test]
    fn child_seeds_differ() {
        let seeds: std::collections::BTreeSet<u64> = (0..100).map(|i| child_seed(7, i)).collect();
        assert_eq!(seeds.len(), 100);
    }
}
