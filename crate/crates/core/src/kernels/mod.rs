//! Multi-output kernels `k_{mm'}(x, x')` over (vertex, input) pairs.
//!
//! A [`KernelSpec`] is the declarative form: a [`MogpKernel`] structure whose
//! leaves are registry-selected data and graph kernels, plus optional
//! hyperparameter values per component. [`PreparedKernel`] is the evaluation
//! snapshot for one hyperparameter vector, with the graph-kernel matrices
//! cached.

pub mod data;
pub mod graph;
pub(crate) mod json;

use std::f64::consts::PI;
use std::sync::Arc;

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::model::PointSet;
use crate::numerics::Matrix;
use crate::params::Transform;

pub use data::{data_registry, DataKernel, DataKernelRegistry, DataKernelSpec, Matern, MaternOrder, SquaredExponential};
pub use graph::{
    graph_kernel_matrix, graph_registry, GraphContext, GraphKernel, GraphKernelRegistry, GraphKernelSpec,
};
use json::ObjectReader;

/// How graph PC fills `P_m⁻¹ + P_{m'}⁻¹`.
#[derive(Clone, Debug)]
pub enum PcBandwidth {
    /// `k_{G,2}(m, m')⁻¹·I`
    Graph(Arc<dyn GraphKernel>),
    /// `(p_m⁻¹ + p_{m'}⁻¹)·I` with `p` the vertex degrees.
    Degree,
}

#[derive(Clone, Debug)]
pub enum MogpKernel {
    /// Independent outputs sharing one data kernel (`K_G = I`).
    SogpDiag { data: Arc<dyn DataKernel> },
    Separable { data: Arc<dyn DataKernel>, graph: Arc<dyn GraphKernel> },
    Sos { terms: Vec<(Arc<dyn DataKernel>, Arc<dyn GraphKernel>)> },
    GraphPc { graph1: Arc<dyn GraphKernel>, bandwidth: PcBandwidth },
}

/// One block of the flat hyperparameter vector.
#[derive(Clone, Copy, Debug)]
pub enum Component<'a> {
    Data(&'a dyn DataKernel),
    Graph(&'a dyn GraphKernel),
    /// Graph PC amplitude and smoothing scale, `[v, ℓ]`.
    PcScale,
}

impl Component<'_> {
    pub fn num_params(&self, m: usize) -> usize {
        match self {
            Component::Data(_) => data::DATA_PARAM_COUNT,
            Component::Graph(g) => g.num_params(m),
            Component::PcScale => 2,
        }
    }

    pub fn transforms(&self, ctx: &GraphContext) -> Vec<Transform> {
        match self {
            Component::Data(d) => d.transforms().to_vec(),
            Component::Graph(g) => g.transforms(ctx),
            Component::PcScale => vec![Transform::LogPositive; 2],
        }
    }

    pub fn param_names(&self, m: usize) -> Vec<String> {
        match self {
            Component::Data(d) => d.param_names().iter().map(|s| s.to_string()).collect(),
            Component::Graph(g) => g.param_names(m),
            Component::PcScale => vec!["v".into(), "ell".into()],
        }
    }
}

impl MogpKernel {
    pub fn components(&self) -> Vec<Component<'_>> {
        match self {
            MogpKernel::SogpDiag { data } => vec![Component::Data(data.as_ref())],
            MogpKernel::Separable { data, graph } => vec![Component::Data(data.as_ref()), Component::Graph(graph.as_ref())],
            MogpKernel::Sos { terms } => terms
                .iter()
                .flat_map(|(d, g)| [Component::Data(d.as_ref()), Component::Graph(g.as_ref())])
                .collect(),
            MogpKernel::GraphPc { graph1, bandwidth } => {
                let mut c = vec![Component::PcScale, Component::Graph(graph1.as_ref())];
                if let PcBandwidth::Graph(g2) = bandwidth {
                    c.push(Component::Graph(g2.as_ref()));
                }
                c
            }
        }
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            MogpKernel::SogpDiag { .. } => "sogp",
            MogpKernel::Separable { .. } => "separable",
            MogpKernel::Sos { .. } => "sos",
            MogpKernel::GraphPc { .. } => "graph_pc",
        }
    }

    /// `(offset, len)` of each component in the flat vector.
    pub fn layout(&self, m: usize) -> Vec<(usize, usize)> {
        let mut offset = 0;
        self.components()
            .iter()
            .map(|c| {
                let n = c.num_params(m);
                let out = (offset, n);
                offset += n;
                out
            })
            .collect()
    }

    pub fn num_params(&self, m: usize) -> usize {
        self.components().iter().map(|c| c.num_params(m)).sum()
    }

    pub fn transforms(&self, ctx: &GraphContext) -> Vec<Transform> {
        self.components().iter().flat_map(|c| c.transforms(ctx)).collect()
    }

    pub fn param_names(&self, m: usize) -> Vec<String> {
        let mut out = Vec::new();
        for (idx, c) in self.components().iter().enumerate() {
            for name in c.param_names(m) {
                out.push(format!("c{idx}.{name}"));
            }
        }
        out
    }
}

/// Kernel hyperparameter count (noise excluded).
pub fn count_hyperparameters(spec: &KernelSpec, num_vertices: usize) -> usize {
    spec.kernel.num_params(num_vertices)
}

/// Declarative MOGP kernel: structure plus optional per-component values.
#[derive(Clone, Debug)]
pub struct KernelSpec {
    pub kernel: MogpKernel,
    /// One entry per [`Component`], `None` when left to default initialization.
    pub values: Vec<Option<Vec<f64>>>,
}

impl KernelSpec {
    pub fn sogp(data: DataKernelSpec) -> Self {
        KernelSpec {
            kernel: MogpKernel::SogpDiag { data: data.kernel },
            values: vec![data.params.map(|p| p.to_vec())],
        }
    }

    pub fn separable(data: DataKernelSpec, graph: GraphKernelSpec) -> Self {
        KernelSpec {
            kernel: MogpKernel::Separable { data: data.kernel, graph: graph.kernel },
            values: vec![data.params.map(|p| p.to_vec()), graph.params],
        }
    }

    pub fn sos(terms: Vec<(DataKernelSpec, GraphKernelSpec)>) -> Self {
        let mut values = Vec::new();
        let mut kernels = Vec::new();
        for (d, g) in terms {
            values.push(d.params.map(|p| p.to_vec()));
            values.push(g.params);
            kernels.push((d.kernel, g.kernel));
        }
        KernelSpec { kernel: MogpKernel::Sos { terms: kernels }, values }
    }

    /// Graph PC with `s_m s_{m'} = k_{G,1}` and bandwidth from `graph2`
    /// (`None` selects the degree variant).
    pub fn graph_pc(scale: Option<[f64; 2]>, graph1: GraphKernelSpec, graph2: Option<GraphKernelSpec>) -> Self {
        let mut values = vec![scale.map(|s| s.to_vec()), graph1.params];
        let bandwidth = match graph2 {
            Some(g2) => {
                values.push(g2.params);
                PcBandwidth::Graph(g2.kernel)
            }
            None => PcBandwidth::Degree,
        };
        KernelSpec { kernel: MogpKernel::GraphPc { graph1: graph1.kernel, bandwidth }, values }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::InvalidSpec(format!("malformed kernel JSON: {e}")))?;
        Self::from_json(&v)
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let mut obj = ObjectReader::new(value, "kernel")?;
        let variant = obj.take_string("variant")?.ok_or_else(|| Error::InvalidSpec("kernel needs `variant`".into()))?;
        let spec = match variant.as_str() {
            "sogp" => KernelSpec::sogp(DataKernelSpec::from_json(&obj.take_required("data")?)?),
            "separable" => KernelSpec::separable(
                DataKernelSpec::from_json(&obj.take_required("data")?)?,
                GraphKernelSpec::from_json(&obj.take_required("graph")?)?,
            ),
            "sos" => {
                let terms = match obj.take_required("terms")? {
                    Value::Array(items) if !items.is_empty() => items,
                    _ => return Err(Error::InvalidSpec("sos needs a non-empty `terms` array".into())),
                };
                let mut parsed = Vec::new();
                for t in &terms {
                    let mut term = ObjectReader::new(t, "sos term")?;
                    let d = DataKernelSpec::from_json(&term.take_required("data")?)?;
                    let g = GraphKernelSpec::from_json(&term.take_required("graph")?)?;
                    term.finish()?;
                    parsed.push((d, g));
                }
                KernelSpec::sos(parsed)
            }
            "graph_pc" => {
                let v = obj.take_f64("v")?;
                let ell = obj.take_f64("ell")?;
                let scale = match (v, ell) {
                    (Some(v), Some(ell)) if v > 0.0 && ell > 0.0 => Some([v, ell]),
                    (None, None) => None,
                    (Some(_), Some(_)) => return Err(Error::InvalidSpec("graph_pc needs v > 0 and ell > 0".into())),
                    _ => return Err(Error::InvalidSpec("graph_pc must give both `v` and `ell` or neither".into())),
                };
                let graph1 = GraphKernelSpec::from_json(&obj.take_required("graph1")?)?;
                let graph2 = match obj.take_required("graph2")? {
                    Value::String(s) if s == "degree" => None,
                    other => Some(GraphKernelSpec::from_json(&other)?),
                };
                KernelSpec::graph_pc(scale, graph1, graph2)
            }
            other => return Err(Error::InvalidSpec(format!("unknown kernel variant `{other}`"))),
        };
        obj.finish()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Value {
        let vals = |i: usize| self.values.get(i).and_then(|v| v.as_deref());
        let mut out = Map::new();
        out.insert("variant".into(), Value::from(self.kernel.variant_name()));
        match &self.kernel {
            MogpKernel::SogpDiag { data } => {
                out.insert("data".into(), data::data_kernel_json(data.as_ref(), vals(0)));
            }
            MogpKernel::Separable { data, graph } => {
                out.insert("data".into(), data::data_kernel_json(data.as_ref(), vals(0)));
                out.insert("graph".into(), graph::graph_kernel_json(graph.as_ref(), vals(1)));
            }
            MogpKernel::Sos { terms } => {
                let items = terms
                    .iter()
                    .enumerate()
                    .map(|(q, (d, g))| {
                        let mut t = Map::new();
                        t.insert("data".into(), data::data_kernel_json(d.as_ref(), vals(2 * q)));
                        t.insert("graph".into(), graph::graph_kernel_json(g.as_ref(), vals(2 * q + 1)));
                        Value::Object(t)
                    })
                    .collect();
                out.insert("terms".into(), Value::Array(items));
            }
            MogpKernel::GraphPc { graph1, bandwidth } => {
                if let Some(s) = vals(0) {
                    out.insert("v".into(), Value::from(s[0]));
                    out.insert("ell".into(), Value::from(s[1]));
                }
                out.insert("graph1".into(), graph::graph_kernel_json(graph1.as_ref(), vals(1)));
                let g2 = match bandwidth {
                    PcBandwidth::Graph(g2) => graph::graph_kernel_json(g2.as_ref(), vals(2)),
                    PcBandwidth::Degree => Value::from("degree"),
                };
                out.insert("graph2".into(), g2);
            }
        }
        Value::Object(out)
    }

    /// The full flat vector on `num_vertices` vertices if every component
    /// with parameters has values.
    pub fn given_values(&self, num_vertices: usize) -> Option<Vec<f64>> {
        let mut out = Vec::new();
        for (v, c) in self.values.iter().zip(self.kernel.components()) {
            match v {
                Some(v) => out.extend_from_slice(v),
                None if c.num_params(num_vertices) == 0 => {}
                None => return None,
            }
        }
        Some(out)
    }

    /// Copy of the spec with every component set from a flat vector.
    pub fn with_values(&self, theta: &[f64], num_vertices: usize) -> KernelSpec {
        let values = self
            .kernel
            .layout(num_vertices)
            .iter()
            .map(|&(off, len)| Some(theta[off..off + len].to_vec()))
            .collect();
        KernelSpec { kernel: self.kernel.clone(), values }
    }
}

#[derive(Clone, Debug)]
struct PcState {
    /// `v²·k_{G,1}(m, m')`
    amplitude: Matrix,
    /// scalar `P` per vertex pair
    bandwidth: Matrix,
    v: f64,
    ell: f64,
    k2: Option<Matrix>,
}

/// A kernel spec evaluated at one hyperparameter vector on one graph.
#[derive(Clone, Debug)]
pub struct PreparedKernel<'a> {
    kernel: &'a MogpKernel,
    ctx: &'a GraphContext,
    theta: Vec<f64>,
    layout: Vec<(usize, usize)>,
    /// `K_G` per component (identity for SOGP, empty for data components).
    graph_matrices: Vec<Option<Matrix>>,
    pc: Option<PcState>,
}

impl<'a> PreparedKernel<'a> {
    pub fn new(kernel: &'a MogpKernel, ctx: &'a GraphContext, theta: &[f64]) -> Result<Self> {
        let m = ctx.num_vertices();
        let layout = kernel.layout(m);
        let expected = kernel.num_params(m);
        if theta.len() != expected {
            return Err(Error::InvalidSpec(format!(
                "kernel expects {expected} hyperparameters, got {}",
                theta.len()
            )));
        }
        let comps = kernel.components();
        let mut graph_matrices = Vec::with_capacity(comps.len());
        for (c, &(off, len)) in comps.iter().zip(&layout) {
            let slice = &theta[off..off + len];
            match c {
                Component::Graph(g) => {
                    g.validate(ctx, slice)?;
                    graph_matrices.push(Some(g.matrix(ctx, slice)?));
                }
                Component::Data(_) | Component::PcScale => {
                    if slice.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                        return Err(Error::InvalidSpec(format!("non-positive kernel hyperparameter in {slice:?}")));
                    }
                    graph_matrices.push(None);
                }
            }
        }
        let pc = match kernel {
            MogpKernel::GraphPc { bandwidth, .. } => {
                let (v, ell) = (theta[0], theta[1]);
                let k1 = graph_matrices[1].as_ref().expect("graph1 matrix");
                let amplitude = k1.scaled(v * v);
                let (bw, k2) = match bandwidth {
                    PcBandwidth::Graph(_) => {
                        let k2 = graph_matrices[2].clone().expect("graph2 matrix");
                        for a in 0..m {
                            for b in 0..m {
                                if !(k2[(a, b)] > 1e-12) {
                                    return Err(Error::NonpositivePEntry { m: a, m_prime: b, value: k2[(a, b)] });
                                }
                            }
                        }
                        (Matrix::from_fn(m, m, |a, b| 1.0 / k2[(a, b)] + 1.0 / ell), Some(k2))
                    }
                    PcBandwidth::Degree => {
                        let d = ctx.degrees();
                        if let Some(a) = d.iter().position(|&x| !(x > 0.0)) {
                            return Err(Error::NonpositivePEntry { m: a, m_prime: a, value: d[a] });
                        }
                        (Matrix::from_fn(m, m, |a, b| 1.0 / d[a] + 1.0 / d[b] + 1.0 / ell), None)
                    }
                };
                Some(PcState { amplitude, bandwidth: bw, v, ell, k2 })
            }
            _ => None,
        };
        if let MogpKernel::SogpDiag { .. } = kernel {
            graph_matrices[0] = None;
        }
        Ok(PreparedKernel { kernel, ctx, theta: theta.to_vec(), layout, graph_matrices, pc })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn context(&self) -> &GraphContext {
        self.ctx
    }

    /// Cached `K_G` of component `idx`, if it is a graph component.
    pub fn graph_matrix(&self, idx: usize) -> Option<&Matrix> {
        self.graph_matrices.get(idx).and_then(|m| m.as_ref())
    }

    fn data_theta(&self, idx: usize) -> &[f64] {
        let (off, len) = self.layout[idx];
        &self.theta[off..off + len]
    }

    /// `k_{mm'}(x, x')` given `r² = ‖x − x'‖²` and input dimension `dim`.
    #[inline]
    pub fn eval_r2(&self, m: usize, m_prime: usize, r2: f64, dim: usize) -> f64 {
        match self.kernel {
            MogpKernel::SogpDiag { data } => {
                if m == m_prime {
                    data.eval(self.data_theta(0), r2)
                } else {
                    0.0
                }
            }
            MogpKernel::Separable { data, .. } => {
                let kg = self.graph_matrices[1].as_ref().expect("graph matrix")[(m, m_prime)];
                if kg == 0.0 {
                    0.0
                } else {
                    kg * data.eval(self.data_theta(0), r2)
                }
            }
            MogpKernel::Sos { terms } => {
                let mut s = 0.0;
                for (q, (data, _)) in terms.iter().enumerate() {
                    let kg = self.graph_matrices[2 * q + 1].as_ref().expect("graph matrix")[(m, m_prime)];
                    if kg != 0.0 {
                        s += kg * data.eval(self.data_theta(2 * q), r2);
                    }
                }
                s
            }
            MogpKernel::GraphPc { .. } => {
                let pc = self.pc.as_ref().expect("pc state");
                let p = pc.bandwidth[(m, m_prime)];
                pc.amplitude[(m, m_prime)] * gaussian_form(p, r2, dim)
            }
        }
    }

    pub fn eval(&self, m: usize, m_prime: usize, x: &[f64], x_prime: &[f64]) -> Result<f64> {
        if x.len() != x_prime.len() {
            return Err(Error::DimensionMismatch(format!("inputs of length {} and {}", x.len(), x_prime.len())));
        }
        let nv = self.ctx.num_vertices();
        if m >= nv || m_prime >= nv {
            return Err(Error::DimensionMismatch(format!("vertex pair ({m}, {m_prime}) outside 0..{nv}")));
        }
        Ok(self.eval_r2(m, m_prime, sq_dist(x, x_prime), x.len()))
    }

    /// Covariance between two point sets, `[k_{v_i v_j}(x_i, x_j)]`.
    pub fn cross_covariance(&self, a: &PointSet, b: &PointSet) -> Result<Matrix> {
        if a.dim() != b.dim() {
            return Err(Error::DimensionMismatch(format!("point sets of dimension {} and {}", a.dim(), b.dim())));
        }
        let dim = a.dim();
        Ok(Matrix::from_fn(a.len(), b.len(), |i, j| {
            self.eval_r2(a.vertex(i), b.vertex(j), sq_dist(a.x(i), b.x(j)), dim)
        }))
    }

    /// Symmetric covariance of one point set.
    pub fn covariance(&self, a: &PointSet) -> Matrix {
        let n = a.len();
        let dim = a.dim();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = self.eval_r2(a.vertex(i), a.vertex(j), sq_dist(a.x(i), a.x(j)), dim);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    /// `Σ_ij W_ij ∂K_ij/∂u_p` for every kernel hyperparameter `u_p` (free
    /// coordinates), with `K` the covariance of `points`.
    pub fn contract_gradient(&self, w: &Matrix, points: &PointSet) -> Result<Vec<f64>> {
        let n = points.len();
        if w.rows() != n || w.cols() != n {
            return Err(Error::DimensionMismatch(format!("weight matrix {}x{} for {n} points", w.rows(), w.cols())));
        }
        let m = self.ctx.num_vertices();
        let dim = points.dim();
        let comps = self.kernel.components();
        let transforms: Vec<Vec<Transform>> = comps.iter().map(|c| c.transforms(self.ctx)).collect();
        let mut grad = vec![0.0; self.theta.len()];

        // data × graph terms
        let terms: Vec<(usize, usize)> = match self.kernel {
            MogpKernel::SogpDiag { .. } => vec![(0, usize::MAX)],
            MogpKernel::Separable { .. } => vec![(0, 1)],
            MogpKernel::Sos { terms } => (0..terms.len()).map(|q| (2 * q, 2 * q + 1)).collect(),
            MogpKernel::GraphPc { .. } => Vec::new(),
        };
        for (data_idx, graph_idx) in terms {
            let data = match comps[data_idx] {
                Component::Data(d) => d,
                _ => unreachable!("data component"),
            };
            let dtheta = self.data_theta(data_idx);
            let kg = (graph_idx != usize::MAX).then(|| self.graph_matrices[graph_idx].as_ref().expect("graph"));
            let mut vertex_sums = Matrix::zeros(m, m);
            let mut data_grad = [0.0; 2];
            for i in 0..n {
                let vi = points.vertex(i);
                for j in 0..n {
                    let wij = w[(i, j)];
                    if wij == 0.0 {
                        continue;
                    }
                    let vj = points.vertex(j);
                    let g = match kg {
                        Some(kg) => kg[(vi, vj)],
                        None => {
                            if vi == vj {
                                1.0
                            } else {
                                0.0
                            }
                        }
                    };
                    if kg.is_none() && g == 0.0 {
                        continue;
                    }
                    let r2 = sq_dist(points.x(i), points.x(j));
                    if kg.is_some() {
                        vertex_sums[(vi, vj)] += wij * data.eval(dtheta, r2);
                    }
                    if g != 0.0 {
                        let dk = data.grad(dtheta, r2);
                        data_grad[0] += wij * g * dk[0];
                        data_grad[1] += wij * g * dk[1];
                    }
                }
            }
            let (off, _) = self.layout[data_idx];
            let dt = &transforms[data_idx];
            for p in 0..2 {
                grad[off + p] = data_grad[p] * dt[p].derivative(dt[p].to_free(dtheta[p]));
            }
            if graph_idx != usize::MAX {
                let g = match comps[graph_idx] {
                    Component::Graph(g) => g,
                    _ => unreachable!("graph component"),
                };
                let (goff, glen) = self.layout[graph_idx];
                let dks = g.matrix_gradients(self.ctx, &self.theta[goff..goff + glen])?;
                for (p, dk) in dks.iter().enumerate() {
                    grad[goff + p] = frobenius_inner(&vertex_sums, dk);
                }
            }
        }

        if let (MogpKernel::GraphPc { bandwidth, .. }, Some(pc)) = (self.kernel, &self.pc) {
            // k = v²·K1[a][b]·φ(P_ab, r²)
            let mut s_amp = Matrix::zeros(m, m); // Σ W·φ per vertex pair
            let mut s_bw = Matrix::zeros(m, m); // Σ W·v²K1·∂φ/∂P per vertex pair
            for i in 0..n {
                let a = points.vertex(i);
                for j in 0..n {
                    let wij = w[(i, j)];
                    if wij == 0.0 {
                        continue;
                    }
                    let b = points.vertex(j);
                    let r2 = sq_dist(points.x(i), points.x(j));
                    let p = pc.bandwidth[(a, b)];
                    let phi = gaussian_form(p, r2, dim);
                    let dphi = phi * (-(dim as f64) / (2.0 * p) + r2 / (2.0 * p * p));
                    s_amp[(a, b)] += wij * phi;
                    s_bw[(a, b)] += wij * pc.amplitude[(a, b)] * dphi;
                }
            }
            let k1 = self.graph_matrices[1].as_ref().expect("graph1");
            // u_v = ln v: ∂k/∂u_v = 2k
            grad[0] = 2.0 * pc.v * pc.v * frobenius_inner(&s_amp, k1);
            // u_ℓ = ln ℓ: ∂P/∂u_ℓ = −1/ℓ
            grad[1] = -s_bw.as_slice().iter().sum::<f64>() / pc.ell;

            let (g1off, g1len) = self.layout[1];
            if let Component::Graph(g1) = comps[1] {
                let dks = g1.matrix_gradients(self.ctx, &self.theta[g1off..g1off + g1len])?;
                for (p, dk) in dks.iter().enumerate() {
                    grad[g1off + p] = pc.v * pc.v * frobenius_inner(&s_amp, dk);
                }
            }
            if let (PcBandwidth::Graph(g2), Some(k2)) = (bandwidth, &pc.k2) {
                let (g2off, g2len) = self.layout[2];
                // ∂P/∂K2 = −1/K2²
                let weights = Matrix::from_fn(m, m, |a, b| -s_bw[(a, b)] / (k2[(a, b)] * k2[(a, b)]));
                let dks = g2.matrix_gradients(self.ctx, &self.theta[g2off..g2off + g2len])?;
                for (p, dk) in dks.iter().enumerate() {
                    grad[g2off + p] = frobenius_inner(&weights, dk);
                }
            }
        }
        Ok(grad)
    }
}

/// `(2πP)^{−D/2}·exp(−r²/(2P))` for scalar `P`.
#[inline]
fn gaussian_form(p: f64, r2: f64, dim: usize) -> f64 {
    (2.0 * PI * p).powf(-(dim as f64) / 2.0) * (-r2 / (2.0 * p)).exp()
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn frobenius_inner(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

/// `k_{mm'}(x, x')` for a fully specified kernel on graph `g`.
pub fn mogp_kernel(
    spec: &KernelSpec,
    ctx: &GraphContext,
    m: usize,
    m_prime: usize,
    x: &[f64],
    x_prime: &[f64],
) -> Result<f64> {
    let theta = spec
        .given_values(ctx.num_vertices())
        .ok_or_else(|| Error::InvalidSpec("kernel hyperparameters not fully specified".into()))?;
    PreparedKernel::new(&spec.kernel, ctx, &theta)?.eval(m, m_prime, x, x_prime)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use serde_json::json;

    fn ctx(g: &Graph) -> GraphContext {
        GraphContext::new(g).unwrap()
    }

    #[test]
    fn separable_with_identity_is_block_diagonal() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let c = ctx(&g);
        let spec = KernelSpec::from_json(&json!({
            "variant": "separable",
            "data": {"family": "se", "v2": 1.5, "ell": 0.7},
            "graph": {"family": "identity"}
        }))
        .unwrap();
        let se = DataKernelSpec::se(1.5, 0.7);
        let (x, y) = ([0.2, -0.1], [0.9, 0.4]);
        assert_eq!(mogp_kernel(&spec, &c, 1, 1, &x, &y).unwrap(), se.eval(&x, &y).unwrap());
        assert_eq!(mogp_kernel(&spec, &c, 0, 2, &x, &y).unwrap(), 0.0);
    }

    #[test]
    fn graph_pc_scalar_case() {
        // one vertex: K_{G,1} = K_{G,2} = identity(1)
        let g = Graph::empty(1);
        let c = ctx(&g);
        let spec = KernelSpec::from_json(&json!({
            "variant": "graph_pc", "v": 1.0, "ell": 1.0,
            "graph1": {"family": "identity"}, "graph2": {"family": "identity"}
        }))
        .unwrap();
        let v = mogp_kernel(&spec, &c, 0, 0, &[0.3], &[0.3]).unwrap();
        assert!((v - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-15);
        assert!((v - 0.28209).abs() < 1e-5);
    }

    #[test]
    fn graph_pc_rejects_nonpositive_bandwidth() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let c = ctx(&g);
        let spec = KernelSpec::from_json(&json!({
            "variant": "graph_pc", "v": 1.0, "ell": 1.0,
            "graph1": {"family": "identity"}, "graph2": {"family": "identity"}
        }))
        .unwrap();
        assert!(matches!(
            mogp_kernel(&spec, &c, 0, 1, &[0.0], &[0.0]),
            Err(Error::NonpositivePEntry { .. })
        ));
    }

    #[test]
    fn sos_sums_terms() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let c = ctx(&g);
        let term = json!({"data": {"family": "se", "v2": 1.0, "ell": 1.0}, "graph": {"family": "identity"}});
        let spec = KernelSpec::from_json(&json!({"variant": "sos", "terms": [term.clone(), term]})).unwrap();
        let se = DataKernelSpec::se(1.0, 1.0);
        let (x, y) = ([0.0], [0.8]);
        let v = mogp_kernel(&spec, &c, 1, 1, &x, &y).unwrap();
        assert!((v - 2.0 * se.eval(&x, &y).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn hyperparameter_counts() {
        let count = |v: Value, m: usize| count_hyperparameters(&KernelSpec::from_json(&v).unwrap(), m);
        let se = json!({"family": "se"});
        assert_eq!(count(json!({"variant": "separable", "data": se, "graph": {"family": "diffusion"}}), 10), 3);
        assert_eq!(count(json!({"variant": "separable", "data": se, "graph": {"family": "icm"}}), 45), 92);
        assert_eq!(
            count(
                json!({"variant": "graph_pc", "graph1": {"family": "diffusion"},
                       "graph2": {"family": "graph_matern", "nu": 2}}),
                10
            ),
            4
        );
        assert_eq!(count(json!({"variant": "sogp", "data": se}), 10), 2);
        assert_eq!(
            count(
                json!({"variant": "sos", "terms": [
                    {"data": se, "graph": {"family": "regularized_laplacian"}},
                    {"data": {"family": "matern", "nu": 0.5}, "graph": {"family": "polynomial", "order": 3}}
                ]}),
                10
            ),
            3 + 6
        );
    }

    #[test]
    fn json_round_trips() {
        for v in [
            json!({"variant": "separable", "data": {"family": "se", "v2": 1.0, "ell": 1.0},
                   "graph": {"family": "diffusion", "alpha": 1.0}}),
            json!({"variant": "graph_pc", "v": 1.0, "ell": 2.0, "graph1": {"family": "diffusion", "alpha": 0.5},
                   "graph2": "degree"}),
            json!({"variant": "sos", "terms": [{"data": {"family": "se"}, "graph": {"family": "cosine"}}]}),
        ] {
            assert_eq!(KernelSpec::from_json(&v).unwrap().to_json(), v);
        }
        assert!(KernelSpec::from_json(&json!({"variant": "sogp", "data": {"family": "se"}, "x": 1})).is_err());
        assert!(KernelSpec::from_json(&json!({"variant": "sos", "terms": []})).is_err());
    }
}
