//! Graph kernels: `M×M` covariances over vertices built from the graph's
//! Laplacians (or, for ICM, from free parameter vectors).
//!
//! Each family implements [`GraphKernel`] and is registered by name in a
//! [`GraphKernelRegistry`]; kernel specs pick a family at runtime through the
//! `family` field of their JSON form. Families whose matrix is a product
//! `C·Cᵀ` of a filter (global filtering, local averaging, polynomial) return
//! that product, the others return `B` directly.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;
use std::fmt::Debug;
use std::sync::{Arc, OnceLock};

use rand::RngCore;
use rand_distr::{Distribution, Normal};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::graph::{adjacency, laplacian, Graph};
use crate::numerics::{apply_matrix_function, sym_eig, EigDecomp, Matrix, MatrixFn};
use crate::params::Transform;

use super::json::ObjectReader;

/// Central-difference step on free coordinates for families without
/// closed-form parameter derivatives.
pub const FD_STEP: f64 = 1e-5;

/// Per-graph quantities shared by every graph kernel.
#[derive(Clone, Debug)]
pub struct GraphContext {
    graph: Graph,
    adjacency: Matrix,
    degrees: Vec<f64>,
    laplacian: Matrix,
    eig_laplacian: EigDecomp,
    eig_normalized: EigDecomp,
}

impl GraphContext {
    pub fn new(graph: &Graph) -> Result<Self> {
        let lap = laplacian(graph, false);
        let norm = laplacian(graph, true);
        Ok(GraphContext {
            graph: graph.clone(),
            adjacency: adjacency(graph),
            degrees: graph.degrees(),
            eig_laplacian: sym_eig(&lap)?,
            eig_normalized: sym_eig(&norm)?,
            laplacian: lap,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn num_vertices(&self) -> usize {
        self.graph.num_vertices()
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.adjacency
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn laplacian(&self) -> &Matrix {
        &self.laplacian
    }

    pub fn eig_laplacian(&self) -> &EigDecomp {
        &self.eig_laplacian
    }

    pub fn eig_normalized(&self) -> &EigDecomp {
        &self.eig_normalized
    }

    /// λ_max(L̃), clamped at zero for edgeless graphs.
    pub fn lambda_max_normalized(&self) -> f64 {
        self.eig_normalized.max_value().max(0.0)
    }

    pub fn lambda_max_laplacian(&self) -> f64 {
        self.eig_laplacian.max_value().max(0.0)
    }
}

pub trait GraphKernel: Send + Sync + Debug {
    fn family(&self) -> &'static str;

    /// Number of trainable hyperparameters on a graph with `m` vertices.
    fn num_params(&self, m: usize) -> usize;

    fn param_names(&self, m: usize) -> Vec<String>;

    fn transforms(&self, ctx: &GraphContext) -> Vec<Transform>;

    fn initial_params(&self, ctx: &GraphContext, rng: &mut dyn RngCore) -> Vec<f64>;

    fn validate(&self, ctx: &GraphContext, theta: &[f64]) -> Result<()> {
        check_len(self, ctx, theta)
    }

    fn matrix(&self, ctx: &GraphContext, theta: &[f64]) -> Result<Matrix>;

    /// `∂K_G/∂u_p` for every free coordinate `u_p`. Defaults to central
    /// differences of [`GraphKernel::matrix`] with step [`FD_STEP`].
    fn matrix_gradients(&self, ctx: &GraphContext, theta: &[f64]) -> Result<Vec<Matrix>> {
        let transforms = self.transforms(ctx);
        let mut out = Vec::with_capacity(theta.len());
        for p in 0..theta.len() {
            let u = transforms[p].to_free(theta[p]);
            let mut plus = theta.to_vec();
            let mut minus = theta.to_vec();
            plus[p] = transforms[p].to_constrained(u + FD_STEP);
            minus[p] = transforms[p].to_constrained(u - FD_STEP);
            let diff = self.matrix(ctx, &plus)?.sub(&self.matrix(ctx, &minus)?);
            out.push(diff.scaled(1.0 / (2.0 * FD_STEP)));
        }
        Ok(out)
    }

    /// Structural (non-trained) fields of the JSON form.
    fn options_json(&self, _out: &mut Map<String, Value>) {}

    /// Trained fields of the JSON form.
    fn params_json(&self, theta: &[f64], out: &mut Map<String, Value>);
}

fn single_alpha_names() -> Vec<String> {
    vec!["alpha".to_string()]
}

fn check_alpha(family: &str, alpha: f64, strict: bool) -> Result<()> {
    let ok = if strict { alpha > 0.0 } else { alpha >= 0.0 };
    if ok && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!("{family}: alpha must be {}, got {alpha}", if strict { "> 0" } else { ">= 0" })))
    }
}

fn alpha_json(theta: &[f64], out: &mut Map<String, Value>) {
    out.insert("alpha".into(), Value::from(theta[0]));
}

/// `K_G = I`; the uncoupled (single-output) case.
#[derive(Debug, Clone, Copy)]
pub struct Identity;

impl GraphKernel for Identity {
    fn family(&self) -> &'static str {
        "identity"
    }
    fn num_params(&self, _m: usize) -> usize {
        0
    }
    fn param_names(&self, _m: usize) -> Vec<String> {
        Vec::new()
    }
    fn transforms(&self, _ctx: &GraphContext) -> Vec<Transform> {
        Vec::new()
    }
    fn initial_params(&self, _ctx: &GraphContext, _rng: &mut dyn RngCore) -> Vec<f64> {
        Vec::new()
    }
    fn matrix(&self, ctx: &GraphContext, _theta: &[f64]) -> Result<Matrix> {
        Ok(Matrix::identity(ctx.num_vertices()))
    }
    fn matrix_gradients(&self, _ctx: &GraphContext, _theta: &[f64]) -> Result<Vec<Matrix>> {
        Ok(Vec::new())
    }
    fn params_json(&self, _theta: &[f64], _out: &mut Map<String, Value>) {}
}

/// `B = L†`
#[derive(Debug, Clone, Copy)]
pub struct LaplacianPinv;

impl GraphKernel for LaplacianPinv {
    fn family(&self) -> &'static str {
        "laplacian"
    }
    fn num_params(&self, _m: usize) -> usize {
        0
    }
    fn param_names(&self, _m: usize) -> Vec<String> {
        Vec::new()
    }
    fn transforms(&self, _ctx: &GraphContext) -> Vec<Transform> {
        Vec::new()
    }
    fn initial_params(&self, _ctx: &GraphContext, _rng: &mut dyn RngCore) -> Vec<f64> {
        Vec::new()
    }
    fn matrix(&self, ctx: &GraphContext, _theta: &[f64]) -> Result<Matrix> {
        apply_matrix_function(ctx.eig_laplacian(), MatrixFn::Pinv)
    }
    fn params_json(&self, _theta: &[f64], _out: &mut Map<String, Value>) {}
}

/// `C = (I + αL)⁻¹`, `K_G = C·Cᵀ`
#[derive(Debug, Clone, Copy)]
pub struct GlobalFiltering;

impl GraphKernel for GlobalFiltering {
    fn family(&self) -> &'static str {
        "global_filtering"
    }
    fn num_params(&self, _m: usize) -> usize {
        1
    }
    fn param_names(&self, _m: usize) -> Vec<String> {
        single_alpha_names()
    }
    fn transforms(&self, _ctx: &GraphContext) -> Vec<Transform> {
        vec![Transform::LogPositive]
    }
    fn initial_params(&self, _ctx: &GraphContext, _rng: &mut dyn RngCore) -> Vec<f64> {
        vec![1.0]
    }
    fn validate(&self, ctx: &GraphContext, theta: &[f64]) -> Result<()> {
        check_len(self, ctx, theta)?;
        check_alpha(self.family(), theta[0], false)
    }
    fn matrix(&self, ctx: &GraphContext, theta: &[f64]) -> Result<Matrix> {
        let a = theta[0];
        Ok(ctx.eig_laplacian().map(|l| (1.0 + a * l).powi(-2)))
    }
    fn matrix_gradients(&self, ctx: &GraphContext, theta: &[f64]) -> Result<Vec<Matrix>> {
        // d/du with α = e^u: α · (−2λ)(1 + αλ)⁻³
        let a = theta[0];
        Ok(vec![ctx.eig_laplacian().map(|l| -2.0 * a * l * (1.0 + a * l).powi(-3))])
    }
    fn params_json(&self, theta: &[f64], out: &mut Map<String, Value>) {
        alpha_json(theta, out)
    }
}

/// `C = (I + αD)⁻¹(I + αA)`, `K_G = C·Cᵀ`
#[derive(Debug, Clone, Copy)]
pub struct LocalAveraging;

impl LocalAveraging {
    fn filter(ctx: &GraphContext, alpha: f64) -> (Vec<f64>, Matrix) {
        let inv: Vec<f64> = ctx.degrees().iter().map(|d| 1.0 / (1.0 + alpha * d)).collect();
        let m = ctx.num_vertices();
        let a = ctx.adjacency();
        let c = Matrix::from_fn(m, m, |i, j| inv[i] * (if i == j { 1.0 } else { 0.0 } + alpha * a[(i, j)]));
        (inv, c)
    }
}

impl GraphKernel for LocalAveraging {
    fn family(&self) -> &'static str {
        "local_averaging"
    }
    fn num_params(&self, _m: usize) -> usize {
        1
    }
    fn param_names(&self, _m: usize) -> Vec<String> {
        single_alpha_names()
    }
    fn transforms(&self, _ctx: &GraphContext) -> Vec<Transform> {
        vec![Transform::LogPositive]
    }
    fn initial_params(&self, _ctx: &GraphContext, _rng: &mut dyn RngCore) -> Vec<f64> {
        vec![1.0]
    }
    fn validate(&self, ctx: &GraphContext, theta: &[f64]) -> Result<()> {
        check_len(self, ctx, theta)?;
        check_alpha(self.family(), theta[0], false)
    }
    fn matrix(&self, ctx: &GraphContext, theta: &[f64]) -> Result<Matrix> {
        Ok(Self::filter(ctx, theta[0]).1.gram())
    }
    fn matrix_gradients(&self, ctx: &GraphContext, theta: &[f64]) -> Result<Vec<Matrix>> {
        // dC/dα = (I + αD)⁻¹(A − D·C); chain through K = C·Cᵀ and α = e^u
        let alpha = theta[0];
        let (inv, c) = Self::filter(ctx, alpha);
        let m = ctx.num_vertices();
        let a = ctx.adjacency();
        let d = ctx.degrees();
        let dc = Matrix::from_fn(m, m, |i, j| inv[i] * (a[(i, j)] - d[i] * c[(i, j)]));
        let half = dc.matmul(&c.transpose());
        let dk = half.add(&half.transpose()).scaled(alpha);
        Ok(vec![dk])
    }
    fn params_json(&self, theta: &[f64], out: &mut Map<String, Value>) {
        alpha_json(theta, out)
    }
}

/// `B = (I + αL̃)⁻¹`
#[derive(Debug, Clone, Copy)]
pub struct RegularizedLaplacian;

impl GraphKernel for RegularizedLaplacian {
    fn family(&self) -> &'static str {
        "regularized_laplacian"
    }
    fn num_params(&self, _m: usize) -> usize {
        1
    }
    fn param_names(&self, _m: usize) -> Vec<String> {
        single_alpha_names()
    }
    fn transforms(&self, _ctx: &GraphContext) -> Vec<Transform> {
        vec![Transform::LogPositive]
    }
    fn initial_params(&self, _ctx: &GraphContext, _rng: &mut dyn RngCore) -> Vec<f64> {
        vec![1.0]
    }
    fn validate(&self, ctx: &GraphContext, theta: &[f64]) -> Result<()> {
        check_len(self, ctx, theta)?;
        check_alpha(self.family(), theta[0], false)
    }
    fn matrix(&self, ctx: &GraphContext, theta: &[f64]) -> Result<Matrix> {
        let a = theta[0];
        Ok(ctx.eig_normalized().map(|l| 1.0 / (1.0 + a * l)))
    }
    fn matrix_gradients(&self, ctx: &GraphContext, theta: &[f64]) -> Result<Vec<Matrix>> {
        let a = theta[0];
        Ok(vec![ctx.eig_normalized().map(|l| -a * l / (1.0 + a * l).powi(2))])
    }
    fn params_json(&self, theta: &[f64], out: &mut Map<String, Value>) {
        alpha_json(theta, out)
    }
}

/// `B = exp(−(α/2)·L̃)`
#[derive(Debug, Clone, Copy)]
pub struct Diffusion;

impl GraphKernel for Diffusion {
    fn family(&self) -> &'static str {
        "diffusion"
    }
    fn num_params(&self, _m: usize) -> usize {
        1
    }
    fn param_names(&self, _m: usize) -> Vec<String> {
        single_alpha_names()
    }
    fn transforms(&self, _ctx: &GraphContext) -> Vec<Transform> {
        vec![Transform::LogPositive]
    }
    fn initial_params(&self, _ctx: &GraphContext, _rng: &mut dyn RngCore) -> Vec<f64> {
        vec![1.0]
    }
    fn validate(&self, ctx: &GraphContext, theta: &[f64]) -> Result<()> {
        check_len(self, ctx, theta)?;
        check_alpha(self.family(), theta[0], false)
    }
    fn matrix(&self, ctx: &GraphContext, theta: &[f64]) -> Result<Matrix> {
        let a = theta[0];
        Ok(ctx.eig_normalized().map(|l| (-0.5 * a * l).exp()))
    }
    fn params_json(&self, theta: &[f64], out: &mut Map<String, Value>) {
        alpha_json(theta, out)
    }
}

/// `B = (αI − L̃)^p` with `α ≥ λ_max(L̃)` kept by a shifted softplus.
#[derive(Debug, Clone, Copy)]
pub struct RandomWalk {
    pub steps: u32,
}

impl GraphKernel for RandomWalk {
    fn family(&self) -> &'static str {
        "random_walk"
    }
    fn num_params(&self, _m: usize) -> usize {
        1
    }
    fn param_names(&self, _m: usize) -> Vec<String> {
        single_alpha_names()
    }
    fn transforms(&self, ctx: &GraphContext) -> Vec<Transform> {
        vec![Transform::ShiftedSoftplus { shift: ctx.lambda_max_normalized() }]
    }
    fn initial_params(&self, ctx: &GraphContext, _rng: &mut dyn RngCore) -> Vec<f64> {
        vec![self.transforms(ctx)[0].to_constrained(0.0)]
    }
    fn validate(&self, ctx: &GraphContext, theta: &[f64]) -> Result<()> {
        check_len(self, ctx, theta)?;
        let lmax = ctx.lambda_max_normalized();
        if !(theta[0] >= lmax - 1e-10 * lmax.max(1.0)) || !theta[0].is_finite() {
            return Err(Error::InvalidSpec(format!(
                "random_walk: alpha = {} is below lambda_max(normalized L) = {lmax}",
                theta[0]
            )));
        }
        Ok(())
    }
    fn matrix(&self, ctx: &GraphContext, theta: &[f64]) -> Result<Matrix> {
        let a = theta[0];
        let p = self.steps as i32;
        Ok(ctx.eig_normalized().map(|l| (a - l).powi(p)))
    }
    fn options_json(&self, out: &mut Map<String, Value>) {
        out.insert("p".into(), Value::from(self.steps));
    }
    fn params_json(&self, theta: &[f64], out: &mut Map<String, Value>) {
        alpha_json(theta, out)
    }
}

/// `B = cos(L̃·π/4)`
#[derive(Debug, Clone, Copy)]
pub struct Cosine;

impl GraphKernel for Cosine {
    fn family(&self) -> &'static str {
        "cosine"
    }
    fn num_params(&self, _m: usize) -> usize {
        0
    }
    fn param_names(&self, _m: usize) -> Vec<String> {
        Vec::new()
    }
    fn transforms(&self, _ctx: &GraphContext) -> Vec<Transform> {
        Vec::new()
    }
    fn initial_params(&self, _ctx: &GraphContext, _rng: &mut dyn RngCore) -> Vec<f64> {
        Vec::new()
    }
    fn validate(&self, ctx: &GraphContext, theta: &[f64]) -> Result<()> {
        check_len(self, ctx, theta)?;
        let lmax = ctx.lambda_max_normalized();
        if lmax > 2.0 + 1e-8 {
            return Err(Error::InvalidSpec(format!(
                "cosine kernel needs lambda_max(normalized L) <= 2, got {lmax}"
            )));
        }
        Ok(())
    }
    fn matrix(&self, ctx: &GraphContext, _theta: &[f64]) -> Result<Matrix> {
        Ok(ctx.eig_normalized().map(|l| (l * FRAC_PI_4).cos()))
    }
    fn params_json(&self, _theta: &[f64], _out: &mut Map<String, Value>) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaplacianChoice {
    Unnormalized,
    Normalized,
}

/// `B = ((2ν/α)·I + L̂)^{−ν}` for integer ν.
#[derive(Debug, Clone, Copy)]
pub struct GraphMatern {
    pub nu: u32,
    pub laplacian: LaplacianChoice,
}

impl GraphMatern {
    fn eig<'a>(&self, ctx: &'a GraphContext) -> &'a EigDecomp {
        match self.laplacian {
            LaplacianChoice::Unnormalized => ctx.eig_laplacian(),
            LaplacianChoice::Normalized => ctx.eig_normalized(),
        }
    }
}

impl GraphKernel for GraphMatern {
    fn family(&self) -> &'static str {
        "graph_matern"
    }
    fn num_params(&self, _m: usize) -> usize {
        1
    }
    fn param_names(&self, _m: usize) -> Vec<String> {
        single_alpha_names()
    }
    fn transforms(&self, _ctx: &GraphContext) -> Vec<Transform> {
        vec![Transform::LogPositive]
    }
    fn initial_params(&self, _ctx: &GraphContext, _rng: &mut dyn RngCore) -> Vec<f64> {
        vec![1.0]
    }
    fn validate(&self, ctx: &GraphContext, theta: &[f64]) -> Result<()> {
        check_len(self, ctx, theta)?;
        check_alpha(self.family(), theta[0], true)
    }
    fn matrix(&self, ctx: &GraphContext, theta: &[f64]) -> Result<Matrix> {
        let shift = 2.0 * self.nu as f64 / theta[0];
        let nu = self.nu as i32;
        let eig = self.eig(ctx);
        if let Some(&l) = eig.values.iter().find(|&&l| shift + l <= 1e-10) {
            return Err(Error::SingularForNegativePower { eigenvalue: shift + l });
        }
        Ok(eig.map(|l| (shift + l).powi(-nu)))
    }
    fn options_json(&self, out: &mut Map<String, Value>) {
        out.insert("nu".into(), Value::from(self.nu));
        let name = match self.laplacian {
            LaplacianChoice::Unnormalized => "unnormalized",
            LaplacianChoice::Normalized => "normalized",
        };
        out.insert("laplacian".into(), Value::from(name));
    }
    fn params_json(&self, theta: &[f64], out: &mut Map<String, Value>) {
        alpha_json(theta, out)
    }
}

/// `C = Σ_{i=0}^{P} (β_i/λ_max(L))·L^i`, `K_G = C·Cᵀ = C²`.
#[derive(Debug, Clone, Copy)]
pub struct Polynomial {
    pub order: usize,
}

impl Polynomial {
    fn scale(ctx: &GraphContext) -> f64 {
        let l = ctx.lambda_max_laplacian();
        if l > 1e-12 {
            l
        } else {
            1.0
        }
    }

    fn filter_values(&self, ctx: &GraphContext, beta: &[f64]) -> Vec<f64> {
        let s = Self::scale(ctx);
        ctx.eig_laplacian()
            .values
            .iter()
            .map(|&l| beta.iter().enumerate().map(|(i, b)| b * l.powi(i as i32)).sum::<f64>() / s)
            .collect()
    }
}

impl GraphKernel for Polynomial {
    fn family(&self) -> &'static str {
        "polynomial"
    }
    fn num_params(&self, _m: usize) -> usize {
        self.order + 1
    }
    fn param_names(&self, _m: usize) -> Vec<String> {
        (0..=self.order).map(|i| format!("beta_{i}")).collect()
    }
    fn transforms(&self, _ctx: &GraphContext) -> Vec<Transform> {
        vec![Transform::Identity; self.order + 1]
    }
    fn initial_params(&self, _ctx: &GraphContext, _rng: &mut dyn RngCore) -> Vec<f64> {
        (0..=self.order).map(|i| if i == 0 { 1.0 } else { 0.1 }).collect()
    }
    fn matrix(&self, ctx: &GraphContext, theta: &[f64]) -> Result<Matrix> {
        let c = self.filter_values(ctx, theta);
        let squared: Vec<f64> = c.iter().map(|v| v * v).collect();
        Ok(ctx.eig_laplacian().with_values(&squared))
    }
    fn matrix_gradients(&self, ctx: &GraphContext, theta: &[f64]) -> Result<Vec<Matrix>> {
        let c = self.filter_values(ctx, theta);
        let s = Self::scale(ctx);
        let eig = ctx.eig_laplacian();
        Ok((0..=self.order)
            .map(|i| {
                let d: Vec<f64> = eig.values.iter().zip(&c).map(|(&l, &ci)| 2.0 * ci * l.powi(i as i32) / s).collect();
                eig.with_values(&d)
            })
            .collect())
    }
    fn options_json(&self, out: &mut Map<String, Value>) {
        out.insert("order".into(), Value::from(self.order));
    }
    fn params_json(&self, theta: &[f64], out: &mut Map<String, Value>) {
        out.insert("beta".into(), Value::from(theta.to_vec()));
    }
}

/// Rank-1 intrinsic coregionalization, `B = w·wᵀ + diag(κ)`; ignores the edges.
/// Parameters are laid out as `[w_0..w_{M-1}, κ_0..κ_{M-1}]`.
#[derive(Debug, Clone, Copy)]
pub struct Icm;

impl GraphKernel for Icm {
    fn family(&self) -> &'static str {
        "icm"
    }
    fn num_params(&self, m: usize) -> usize {
        2 * m
    }
    fn param_names(&self, m: usize) -> Vec<String> {
        (0..m).map(|i| format!("w_{i}")).chain((0..m).map(|i| format!("kappa_{i}"))).collect()
    }
    fn transforms(&self, ctx: &GraphContext) -> Vec<Transform> {
        let m = ctx.num_vertices();
        let mut t = vec![Transform::Identity; m];
        t.extend(std::iter::repeat_n(Transform::LogPositive, m));
        t
    }
    fn initial_params(&self, ctx: &GraphContext, rng: &mut dyn RngCore) -> Vec<f64> {
        let m = ctx.num_vertices();
        let normal = Normal::new(0.0, 0.1).expect("valid normal");
        let mut out: Vec<f64> = (0..m).map(|_| normal.sample(rng)).collect();
        out.extend(std::iter::repeat_n(0.1, m));
        out
    }
    fn validate(&self, ctx: &GraphContext, theta: &[f64]) -> Result<()> {
        check_len(self, ctx, theta)?;
        let m = ctx.num_vertices();
        if theta[m..].iter().any(|&k| !(k >= 0.0)) {
            return Err(Error::InvalidSpec("icm: kappa entries must be >= 0".into()));
        }
        Ok(())
    }
    fn matrix(&self, ctx: &GraphContext, theta: &[f64]) -> Result<Matrix> {
        let m = ctx.num_vertices();
        let (w, kappa) = theta.split_at(m);
        let mut b = Matrix::from_fn(m, m, |i, j| w[i] * w[j]);
        b.add_diag(kappa);
        Ok(b)
    }
    fn matrix_gradients(&self, ctx: &GraphContext, theta: &[f64]) -> Result<Vec<Matrix>> {
        let m = ctx.num_vertices();
        let (w, kappa) = theta.split_at(m);
        let mut out = Vec::with_capacity(2 * m);
        for p in 0..m {
            let mut d = Matrix::zeros(m, m);
            for j in 0..m {
                d[(p, j)] += w[j];
                d[(j, p)] += w[j];
            }
            out.push(d);
        }
        for p in 0..m {
            let mut d = Matrix::zeros(m, m);
            d[(p, p)] = kappa[p];
            out.push(d);
        }
        Ok(out)
    }
    fn params_json(&self, theta: &[f64], out: &mut Map<String, Value>) {
        let m = theta.len() / 2;
        out.insert("w".into(), Value::from(theta[..m].to_vec()));
        out.insert("kappa".into(), Value::from(theta[m..].to_vec()));
    }
}

fn check_len<K: GraphKernel + ?Sized>(k: &K, ctx: &GraphContext, theta: &[f64]) -> Result<()> {
    let n = k.num_params(ctx.num_vertices());
    if theta.len() != n {
        return Err(Error::InvalidSpec(format!(
            "{} kernel expects {n} parameters on {} vertices, got {}",
            k.family(),
            ctx.num_vertices(),
            theta.len()
        )));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSpec(format!("{} kernel has non-finite parameters", k.family())));
    }
    Ok(())
}

/// A graph-kernel strategy plus its hyperparameter values, when given.
#[derive(Clone, Debug)]
pub struct GraphKernelSpec {
    pub kernel: Arc<dyn GraphKernel>,
    pub params: Option<Vec<f64>>,
}

impl GraphKernelSpec {
    pub fn new(kernel: Arc<dyn GraphKernel>, params: Vec<f64>) -> Self {
        GraphKernelSpec { kernel, params: Some(params) }
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        graph_registry().parse(value)
    }

    pub fn to_json(&self) -> Value {
        graph_kernel_json(self.kernel.as_ref(), self.params.as_deref())
    }

    /// Values to use on `ctx`: the given ones, or the family defaults
    /// (ICM defaults drawn from a fixed seed).
    pub fn resolved_params(&self, ctx: &GraphContext) -> Vec<f64> {
        match &self.params {
            Some(p) => p.clone(),
            None => {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
                self.kernel.initial_params(ctx, &mut rng)
            }
        }
    }

    pub fn matrix(&self, ctx: &GraphContext) -> Result<Matrix> {
        let theta = self.resolved_params(ctx);
        self.kernel.validate(ctx, &theta)?;
        self.kernel.matrix(ctx, &theta)
    }
}

/// `K_G` for `spec` on `g`.
pub fn graph_kernel_matrix(spec: &GraphKernelSpec, g: &Graph) -> Result<Matrix> {
    spec.matrix(&GraphContext::new(g)?)
}

pub type GraphKernelFactory = fn(&mut ObjectReader) -> Result<(Arc<dyn GraphKernel>, Option<Vec<f64>>)>;

/// Name → constructor table for graph kernels.
pub struct GraphKernelRegistry {
    factories: BTreeMap<&'static str, GraphKernelFactory>,
}

fn no_params(obj: &mut ObjectReader, kernel: Arc<dyn GraphKernel>) -> Result<(Arc<dyn GraphKernel>, Option<Vec<f64>>)> {
    let _ = obj;
    Ok((kernel, None))
}

fn with_alpha(obj: &mut ObjectReader, kernel: Arc<dyn GraphKernel>) -> Result<(Arc<dyn GraphKernel>, Option<Vec<f64>>)> {
    let alpha = obj.take_f64("alpha")?;
    Ok((kernel, alpha.map(|a| vec![a])))
}

impl GraphKernelRegistry {
    pub fn empty() -> Self {
        GraphKernelRegistry { factories: BTreeMap::new() }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("identity", |obj| no_params(obj, Arc::new(Identity)));
        r.register("laplacian", |obj| no_params(obj, Arc::new(LaplacianPinv)));
        r.register("global_filtering", |obj| with_alpha(obj, Arc::new(GlobalFiltering)));
        r.register("local_averaging", |obj| with_alpha(obj, Arc::new(LocalAveraging)));
        r.register("regularized_laplacian", |obj| with_alpha(obj, Arc::new(RegularizedLaplacian)));
        r.register("diffusion", |obj| with_alpha(obj, Arc::new(Diffusion)));
        r.register("random_walk", |obj| {
            let steps = obj.take_usize("p")?.unwrap_or(1);
            if steps == 0 {
                return Err(Error::InvalidSpec("random_walk: p must be >= 1".into()));
            }
            with_alpha(obj, Arc::new(RandomWalk { steps: steps as u32 }))
        });
        r.register("cosine", |obj| no_params(obj, Arc::new(Cosine)));
        r.register("graph_matern", |obj| {
            let nu = obj.take_usize("nu")?.unwrap_or(2);
            if nu == 0 {
                return Err(Error::InvalidSpec("graph_matern: nu must be a positive integer".into()));
            }
            let laplacian = match obj.take_string("laplacian")?.as_deref() {
                None | Some("unnormalized") => LaplacianChoice::Unnormalized,
                Some("normalized") => LaplacianChoice::Normalized,
                Some(other) => {
                    return Err(Error::InvalidSpec(format!(
                        "graph_matern: laplacian must be `unnormalized` or `normalized`, got `{other}`"
                    )))
                }
            };
            with_alpha(obj, Arc::new(GraphMatern { nu: nu as u32, laplacian }))
        });
        r.register("polynomial", |obj| {
            let order = obj.take_usize("order")?;
            let beta = obj.take_f64_vec("beta")?;
            let order = match (order, &beta) {
                (Some(p), Some(b)) if b.len() != p + 1 => {
                    return Err(Error::InvalidSpec(format!(
                        "polynomial of order {p} needs {} beta values, got {}",
                        p + 1,
                        b.len()
                    )))
                }
                (Some(p), _) => p,
                (None, Some(b)) if !b.is_empty() => b.len() - 1,
                _ => return Err(Error::InvalidSpec("polynomial needs `order` or `beta`".into())),
            };
            Ok((Arc::new(Polynomial { order }), beta))
        });
        r.register("icm", |obj| {
            let w = obj.take_f64_vec("w")?;
            let kappa = obj.take_f64_vec("kappa")?;
            let params = match (w, kappa) {
                (Some(w), Some(k)) => {
                    if w.len() != k.len() {
                        return Err(Error::InvalidSpec("icm: `w` and `kappa` lengths differ".into()));
                    }
                    let mut p = w;
                    p.extend(k);
                    Some(p)
                }
                (None, None) => None,
                _ => return Err(Error::InvalidSpec("icm must give both `w` and `kappa` or neither".into())),
            };
            Ok((Arc::new(Icm), params))
        });
        r
    }

    pub fn register(&mut self, name: &'static str, factory: GraphKernelFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn parse(&self, value: &Value) -> Result<GraphKernelSpec> {
        let mut obj = ObjectReader::new(value, "graph kernel")?;
        let family =
            obj.take_string("family")?.ok_or_else(|| Error::InvalidSpec("graph kernel needs `family`".into()))?;
        let factory = self
            .factories
            .get(family.as_str())
            .ok_or(Error::UnknownFamily { kind: "graph kernel", name: family.clone() })?;
        let (kernel, params) = factory(&mut obj)?;
        obj.finish()?;
        Ok(GraphKernelSpec { kernel, params })
    }
}

pub fn graph_registry() -> &'static GraphKernelRegistry {
    static REGISTRY: OnceLock<GraphKernelRegistry> = OnceLock::new();
    REGISTRY.get_or_init(GraphKernelRegistry::builtin)
}

pub fn graph_kernel_json(kernel: &dyn GraphKernel, theta: Option<&[f64]>) -> Value {
    let mut out = Map::new();
    out.insert("family".into(), Value::from(kernel.family()));
    kernel.options_json(&mut out);
    if let Some(theta) = theta {
        kernel.params_json(theta, &mut out);
    }
    Value::Object(out)
}
