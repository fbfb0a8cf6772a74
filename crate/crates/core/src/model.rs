//! Datasets on graph vertices, block covariance assembly, posterior
//! prediction and evaluation metrics.
//!
//! Every stacked vector or matrix uses vertex-major order: all observations
//! of vertex 0 first, in block order, then vertex 1, and so on.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::graph::VertexSubset;
use crate::kernels::{GraphContext, KernelSpec, PreparedKernel};
use crate::numerics::{cholesky, dot, logdet, solve_chol_vec, solve_lower, CholFactor, Matrix};

/// Flat list of `(vertex, input)` pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    dim: usize,
    vertices: Vec<usize>,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize) -> Self {
        PointSet { dim, vertices: Vec::new(), coords: Vec::new() }
    }

    pub fn push(&mut self, vertex: usize, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch(format!("input of length {} in a {}-dimensional set", x.len(), self.dim)));
        }
        self.vertices.push(vertex);
        self.coords.extend_from_slice(x);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn vertex(&self, i: usize) -> usize {
        self.vertices[i]
    }

    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }
}

/// Inputs and outputs observed at one vertex.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct VertexBlock {
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
}

impl VertexBlock {
    pub fn new(inputs: Vec<Vec<f64>>, outputs: Vec<f64>) -> Self {
        VertexBlock { inputs, outputs }
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }
}

/// Per-vertex training blocks. Blocks may be empty.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiDataset {
    dim: usize,
    blocks: Vec<VertexBlock>,
}

impl MultiDataset {
    pub fn new(dim: usize, blocks: Vec<VertexBlock>) -> Result<Self> {
        for (m, b) in blocks.iter().enumerate() {
            if b.inputs.len() != b.outputs.len() {
                return Err(Error::InvalidData(format!(
                    "vertex {m} has {} inputs but {} outputs",
                    b.inputs.len(),
                    b.outputs.len()
                )));
            }
            if let Some(x) = b.inputs.iter().find(|x| x.len() != dim) {
                return Err(Error::DimensionMismatch(format!("vertex {m} has an input of length {}, expected {dim}", x.len())));
            }
            if b.inputs.iter().flatten().chain(&b.outputs).any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!("vertex {m} has non-finite values")));
            }
        }
        Ok(MultiDataset { dim, blocks })
    }

    /// Groups `(vertex, x, y)` observations into blocks, keeping row order
    /// within each vertex.
    pub fn from_observations(num_vertices: usize, dim: usize, rows: &[(usize, Vec<f64>, f64)]) -> Result<Self> {
        let mut blocks = vec![VertexBlock::default(); num_vertices];
        for (idx, (v, x, y)) in rows.iter().enumerate() {
            let block = blocks
                .get_mut(*v)
                .ok_or_else(|| Error::InvalidData(format!("row {idx}: vertex {v} outside 0..{num_vertices}")))?;
            block.inputs.push(x.clone());
            block.outputs.push(*y);
        }
        Self::new(dim, blocks)
    }

    /// Same inputs `x` at every vertex.
    pub fn isotopic(inputs: &[Vec<f64>], outputs: Vec<Vec<f64>>) -> Result<Self> {
        let dim = inputs.first().map_or(0, |x| x.len());
        let blocks = outputs.into_iter().map(|y| VertexBlock::new(inputs.to_vec(), y)).collect();
        Self::new(dim, blocks)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_vertices(&self) -> usize {
        self.blocks.len()
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(VertexBlock::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn blocks(&self) -> &[VertexBlock] {
        &self.blocks
    }

    pub fn block(&self, m: usize) -> &VertexBlock {
        &self.blocks[m]
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(VertexBlock::len).collect()
    }

    /// All blocks carry bitwise-identical inputs.
    pub fn is_isotopic(&self) -> bool {
        match self.blocks.first() {
            None => true,
            Some(first) => self.blocks.iter().all(|b| b.inputs == first.inputs),
        }
    }

    /// All blocks have the same number of observations.
    pub fn is_symmetric(&self) -> bool {
        let sizes = self.block_sizes();
        sizes.windows(2).all(|w| w[0] == w[1])
    }

    pub fn points(&self) -> PointSet {
        let mut p = PointSet::new(self.dim);
        for (m, b) in self.blocks.iter().enumerate() {
            for x in &b.inputs {
                p.vertices.push(m);
                p.coords.extend_from_slice(x);
            }
        }
        p
    }

    pub fn outputs(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.outputs.iter().copied()).collect()
    }

    pub fn output_mean(&self) -> f64 {
        let y = self.outputs();
        if y.is_empty() {
            0.0
        } else {
            y.iter().sum::<f64>() / y.len() as f64
        }
    }

    /// Population variance of all outputs.
    pub fn output_variance(&self) -> f64 {
        let y = self.outputs();
        if y.is_empty() {
            return 0.0;
        }
        let mean = self.output_mean();
        y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / y.len() as f64
    }

    /// Copy with `offset` subtracted from every output.
    pub fn shifted(&self, offset: f64) -> MultiDataset {
        let blocks = self
            .blocks
            .iter()
            .map(|b| VertexBlock::new(b.inputs.clone(), b.outputs.iter().map(|y| y - offset).collect()))
            .collect();
        MultiDataset { dim: self.dim, blocks }
    }

    /// Keeps only the blocks of `keep`; the others become empty.
    pub fn restricted_to(&self, keep: &[usize]) -> MultiDataset {
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(m, b)| if keep.contains(&m) { b.clone() } else { VertexBlock::default() })
            .collect();
        MultiDataset { dim: self.dim, blocks }
    }
}

/// Observation-noise variances per vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel {
    variances: Vec<f64>,
    shared: bool,
}

impl NoiseModel {
    pub fn shared(num_vertices: usize, variance: f64) -> Result<Self> {
        Self::check(variance)?;
        Ok(NoiseModel { variances: vec![variance; num_vertices], shared: true })
    }

    pub fn per_vertex(variances: Vec<f64>) -> Result<Self> {
        for &v in &variances {
            Self::check(v)?;
        }
        Ok(NoiseModel { variances, shared: false })
    }

    fn check(v: f64) -> Result<()> {
        // zero is allowed for noise-free interpolation
        if v >= 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("noise variance must be nonnegative, got {v}")))
        }
    }

    pub fn is_shared(&self) -> bool {
        self.shared
    }

    pub fn variance(&self, vertex: usize) -> f64 {
        self.variances[vertex]
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn num_vertices(&self) -> usize {
        self.variances.len()
    }

    /// Number of trainable noise parameters.
    pub fn num_params(&self) -> usize {
        if self.shared {
            1
        } else {
            self.variances.len()
        }
    }
}

/// Test inputs for a subset of vertices, one block per subset vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct TestQuery {
    subset: VertexSubset,
    blocks: Vec<Vec<Vec<f64>>>,
}

impl TestQuery {
    pub fn new(subset: VertexSubset, blocks: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if blocks.len() != subset.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} test blocks for a subset of {} vertices",
                blocks.len(),
                subset.len()
            )));
        }
        if blocks.iter().all(Vec::is_empty) {
            return Err(Error::InvalidData("test query has no points".into()));
        }
        Ok(TestQuery { subset, blocks })
    }

    /// One block per graph vertex.
    pub fn full(blocks: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n = blocks.len();
        Self::new(VertexSubset::all(n), blocks)
    }

    pub fn subset(&self) -> &VertexSubset {
        &self.subset
    }

    pub fn blocks(&self) -> &[Vec<Vec<f64>>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Points labelled with their graph vertex ids.
    pub fn points(&self, dim: usize) -> Result<PointSet> {
        let mut p = PointSet::new(dim);
        for (&v, block) in self.subset.vertices().iter().zip(&self.blocks) {
            for x in block {
                p.push(v, x)?;
            }
        }
        Ok(p)
    }
}

/// Posterior at test points.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub cov_latent: Matrix,
    pub cov_observed: Matrix,
    /// Graph vertex of each row.
    pub vertices: Vec<usize>,
}

impl Prediction {
    pub fn var_latent(&self) -> Vec<f64> {
        self.cov_latent.diag()
    }

    pub fn var_observed(&self) -> Vec<f64> {
        self.cov_observed.diag()
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

fn require_values(spec: &KernelSpec, ctx: &GraphContext) -> Result<Vec<f64>> {
    spec.given_values(ctx.num_vertices())
        .ok_or_else(|| Error::InvalidSpec("kernel hyperparameters not fully specified".into()))
}

/// Cross-covariance between two point sets for a fully specified kernel.
pub fn assemble_covariance(spec: &KernelSpec, ctx: &GraphContext, a: &PointSet, b: &PointSet) -> Result<Matrix> {
    let theta = require_values(spec, ctx)?;
    let prep = PreparedKernel::new(&spec.kernel, ctx, &theta)?;
    check_vertices(ctx, a)?;
    check_vertices(ctx, b)?;
    if a == b {
        Ok(prep.covariance(a))
    } else {
        prep.cross_covariance(a, b)
    }
}

fn check_vertices(ctx: &GraphContext, p: &PointSet) -> Result<()> {
    let m = ctx.num_vertices();
    match p.vertices().iter().find(|&&v| v >= m) {
        Some(v) => Err(Error::DimensionMismatch(format!("vertex {v} outside a graph of {m} vertices"))),
        None => Ok(()),
    }
}

fn check_data(ctx: &GraphContext, data: &MultiDataset, noise: &NoiseModel) -> Result<()> {
    let m = ctx.num_vertices();
    if data.num_vertices() != m {
        return Err(Error::DimensionMismatch(format!("dataset has {} vertex blocks, graph has {m} vertices", data.num_vertices())));
    }
    if noise.num_vertices() != m {
        return Err(Error::DimensionMismatch(format!("noise model covers {} vertices, graph has {m}", noise.num_vertices())));
    }
    if data.is_empty() {
        return Err(Error::InvalidData("training data is empty".into()));
    }
    Ok(())
}

/// `K_M(X) + Σ` for the training points.
pub(crate) fn training_covariance(prep: &PreparedKernel, points: &PointSet, noise: &NoiseModel) -> Matrix {
    let mut k = prep.covariance(points);
    let noise_diag: Vec<f64> = points.vertices().iter().map(|&v| noise.variance(v)).collect();
    k.add_diag(&noise_diag);
    k
}

pub(crate) fn gaussian_log_density(factor: &CholFactor, residual: &[f64]) -> Result<(f64, Vec<f64>)> {
    let alpha = solve_chol_vec(factor, residual)?;
    let n = residual.len() as f64;
    let value = -0.5 * (dot(residual, &alpha) + logdet(factor)) - 0.5 * n * (2.0 * PI).ln();
    Ok((value, alpha))
}

/// `log p(Y | X, Θ)` including the `−N/2·log 2π` constant.
pub fn log_marginal_likelihood(spec: &KernelSpec, ctx: &GraphContext, data: &MultiDataset, noise: &NoiseModel) -> Result<f64> {
    check_data(ctx, data, noise)?;
    let theta = require_values(spec, ctx)?;
    let prep = PreparedKernel::new(&spec.kernel, ctx, &theta)?;
    let points = data.points();
    let factor = cholesky(&training_covariance(&prep, &points, noise))?;
    Ok(gaussian_log_density(&factor, &data.outputs())?.0)
}

#[derive(Clone, Debug)]
struct Cache {
    factor: CholFactor,
    alpha: Vec<f64>,
}

/// Hyperparameters, training data and the cached factorization of the
/// training covariance.
#[derive(Clone, Debug)]
pub struct FittedModel {
    spec: KernelSpec,
    theta: Vec<f64>,
    noise: NoiseModel,
    data: MultiDataset,
    ctx: GraphContext,
    points: PointSet,
    cache: Option<Cache>,
    log_likelihood: f64,
}

impl FittedModel {
    /// Builds the cache for `spec` at its given values.
    pub fn new(spec: KernelSpec, ctx: GraphContext, data: MultiDataset, noise: NoiseModel) -> Result<Self> {
        check_data(&ctx, &data, &noise)?;
        let theta = require_values(&spec, &ctx)?;
        let points = data.points();
        let mut model = FittedModel { spec, theta, noise, data, ctx, points, cache: None, log_likelihood: f64::NAN };
        model.rebuild()?;
        Ok(model)
    }

    /// Replaces the hyperparameters. The cache is invalid until [`rebuild`](Self::rebuild).
    pub fn set_hyperparameters(&mut self, theta: Vec<f64>, noise: NoiseModel) -> Result<()> {
        let expected = self.spec.kernel.num_params(self.ctx.num_vertices());
        if theta.len() != expected {
            return Err(Error::InvalidSpec(format!("expected {expected} kernel hyperparameters, got {}", theta.len())));
        }
        if noise.num_vertices() != self.ctx.num_vertices() {
            return Err(Error::DimensionMismatch("noise model size differs from graph".into()));
        }
        self.spec = self.spec.with_values(&theta, self.ctx.num_vertices());
        self.theta = theta;
        self.noise = noise;
        self.cache = None;
        self.log_likelihood = f64::NAN;
        Ok(())
    }

    pub fn rebuild(&mut self) -> Result<()> {
        let prep = PreparedKernel::new(&self.spec.kernel, &self.ctx, &self.theta)?;
        let factor = cholesky(&training_covariance(&prep, &self.points, &self.noise))?;
        let (value, alpha) = gaussian_log_density(&factor, &self.data.outputs())?;
        self.log_likelihood = value;
        self.cache = Some(Cache { factor, alpha });
        Ok(())
    }

    pub fn is_stale(&self) -> bool {
        self.cache.is_none()
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn hyperparameters(&self) -> &[f64] {
        &self.theta
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn data(&self) -> &MultiDataset {
        &self.data
    }

    pub fn context(&self) -> &GraphContext {
        &self.ctx
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn jitter_used(&self) -> Option<f64> {
        self.cache.as_ref().map(|c| c.factor.jitter_used())
    }

    /// Posterior over the query points. Subset queries still condition on
    /// the training data of every vertex.
    pub fn predict(&self, query: &TestQuery) -> Result<Prediction> {
        let cache = self.cache.as_ref().ok_or(Error::StaleCache)?;
        let m = self.ctx.num_vertices();
        if let Some(&v) = query.subset().vertices().iter().find(|&&v| v >= m) {
            return Err(Error::DimensionMismatch(format!("query vertex {v} outside a graph of {m} vertices")));
        }
        let test = query.points(self.data.dim())?;
        let prep = PreparedKernel::new(&self.spec.kernel, &self.ctx, &self.theta)?;
        let cross = prep.cross_covariance(&self.points, &test)?; // N × T
        let mean = cross.transpose().matvec(&cache.alpha);
        let v = solve_lower(&cache.factor, &cross)?;
        let mut cov = prep.covariance(&test).sub(&v.transpose().matmul(&v));
        cov.symmetrize();
        for i in 0..cov.rows() {
            if cov[(i, i)] < 0.0 && cov[(i, i)] >= -1e-8 {
                cov[(i, i)] = 0.0;
            }
        }
        let mut observed = cov.clone();
        let noise_diag: Vec<f64> = test.vertices().iter().map(|&v| self.noise.variance(v)).collect();
        observed.add_diag(&noise_diag);
        Ok(Prediction { mean, cov_latent: cov, cov_observed: observed, vertices: test.vertices().to_vec() })
    }
}

/// `(1/T)·‖y − μ‖²`
pub fn mse(y_true: &[f64], mean: &[f64]) -> Result<f64> {
    if y_true.len() != mean.len() {
        return Err(Error::DimensionMismatch(format!("{} targets vs {} predictions", y_true.len(), mean.len())));
    }
    if y_true.is_empty() {
        return Err(Error::InvalidData("mse of zero points".into()));
    }
    Ok(y_true.iter().zip(mean).map(|(y, m)| (y - m) * (y - m)).sum::<f64>() / y_true.len() as f64)
}

/// Gaussian log-density of `y_true` under the predictive mean and the
/// observed (`use_observed`) or latent covariance.
pub fn predictive_log_likelihood(y_true: &[f64], pred: &Prediction, use_observed: bool) -> Result<f64> {
    if y_true.len() != pred.mean.len() {
        return Err(Error::DimensionMismatch(format!("{} targets vs {} predictions", y_true.len(), pred.mean.len())));
    }
    let cov = if use_observed { &pred.cov_observed } else { &pred.cov_latent };
    let factor = cholesky(cov)?;
    let residual: Vec<f64> = y_true.iter().zip(&pred.mean).map(|(y, m)| y - m).collect();
    Ok(gaussian_log_density(&factor, &residual)?.0)
}
