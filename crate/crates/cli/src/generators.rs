//! Synthetic problems: neighbour-sum functions on random regular graphs,
//! and a sinc signal split over six vertices.

use graphmogp::graph::{random_k_regular, Graph, VertexSubset};
use graphmogp::training::child_seed;
use graphmogp::{MultiDataset, Result, TestQuery, VertexBlock};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

/// Test inputs together with their noisy targets, vertex-major.
#[derive(Clone, Debug)]
pub struct TestSet {
    pub query: TestQuery,
    pub truth: Vec<f64>,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn noise(rng: &mut ChaCha8Rng, variance: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    variance.sqrt() * z
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularConfig {
    pub m: usize,
    pub k: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub noise_variance: f64,
    pub p_range: (f64, f64),
    pub q_range: (f64, f64),
    pub r_range: (f64, f64),
    pub x_range: (f64, f64),
}

impl Default for RegularConfig {
    fn default() -> Self {
        RegularConfig {
            m: 32,
            k: 6,
            n_train: 10,
            n_test: 10,
            noise_variance: 5.0,
            p_range: (0.0, 10.0),
            q_range: (5.0, 5.0),
            r_range: (-6.0, 6.0),
            x_range: (0.0, 5.0),
        }
    }
}

/// `y_m(x) = Σ_{j ∈ N(m)} p_j cos(q_j x) + r_j x` plus Gaussian noise, with
/// inputs shared by every vertex.
#[derive(Clone, Debug)]
pub struct RegularProblem {
    pub config: RegularConfig,
    pub graph: Graph,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub train_inputs: Vec<f64>,
    pub train: MultiDataset,
}

impl RegularProblem {
    pub fn generate(config: RegularConfig, seed: u64) -> Result<Self> {
        let graph = random_k_regular(config.m, config.k, child_seed(seed, 0))?;
        let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, 1));
        let mut p = Vec::with_capacity(config.m);
        let mut q = Vec::with_capacity(config.m);
        let mut r = Vec::with_capacity(config.m);
        for _ in 0..config.m {
            p.push(uniform(&mut rng, config.p_range));
            q.push(uniform(&mut rng, config.q_range));
            r.push(uniform(&mut rng, config.r_range));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, 2));
        let train_inputs: Vec<f64> = (0..config.n_train).map(|_| uniform(&mut rng, config.x_range)).collect();
        let mut problem = RegularProblem {
            config,
            graph,
            p,
            q,
            r,
            train_inputs,
            train: MultiDataset::new(1, Vec::new())?,
        };
        let xs: Vec<Vec<f64>> = problem.train_inputs.iter().map(|&x| vec![x]).collect();
        let outputs = (0..problem.config.m)
            .map(|m| problem.train_inputs.iter().map(|&x| problem.observe(m, x, &mut rng)).collect())
            .collect();
        problem.train = MultiDataset::isotopic(&xs, outputs)?;
        Ok(problem)
    }

    pub fn latent(&self, m: usize, x: f64) -> f64 {
        self.graph
            .neighbors(m)
            .into_iter()
            .filter(|&j| j != m)
            .map(|j| self.p[j] * (self.q[j] * x).cos() + self.r[j] * x)
            .sum()
    }

    fn observe(&self, m: usize, x: f64, rng: &mut ChaCha8Rng) -> f64 {
        self.latent(m, x) + noise(rng, self.config.noise_variance)
    }

    /// Fresh shared test inputs (disjoint from the training inputs) with
    /// noisy targets at every vertex.
    pub fn sample_test(&self, seed: u64) -> Result<TestSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::with_capacity(self.config.n_test);
        while xs.len() < self.config.n_test {
            let x = uniform(&mut rng, self.config.x_range);
            if !self.train_inputs.contains(&x) && !xs.contains(&x) {
                xs.push(x);
            }
        }
        let mut truth = Vec::with_capacity(self.config.m * xs.len());
        for m in 0..self.config.m {
            for &x in &xs {
                truth.push(self.observe(m, x, &mut rng));
            }
        }
        let blocks = (0..self.config.m).map(|_| xs.iter().map(|&x| vec![x]).collect()).collect();
        Ok(TestSet { query: TestQuery::full(blocks)?, truth })
    }
}

/// Graph, training data, one test set and its targets for the regular suite.
pub fn gen_regular_experiment_data(
    m: usize,
    k: usize,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<(Graph, MultiDataset, TestQuery, Vec<f64>)> {
    let config = RegularConfig { m, k, n_train, n_test, ..Default::default() };
    let problem = RegularProblem::generate(config, seed)?;
    let test = problem.sample_test(child_seed(seed, 3))?;
    Ok((problem.graph, problem.train, test.query, test.truth))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SincConfig {
    pub block_sizes: Vec<usize>,
    pub domain: (f64, f64),
    pub noise_variance: f64,
    pub n_test: usize,
}

impl Default for SincConfig {
    fn default() -> Self {
        SincConfig { block_sizes: vec![20, 20, 20, 20, 20, 10], domain: (-15.0, 15.0), noise_variance: 1e-4, n_test: 10 }
    }
}

pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Chain 0–1–2–3–4–5 plus the mirror pairs (0,5), (1,4), (2,3); the last
/// coincides with a chain edge.
pub fn sinc_graph(m: usize) -> Result<Graph> {
    let mut edges: Vec<(usize, usize)> = (1..m).map(|i| (i - 1, i)).collect();
    for i in 0..m / 2 {
        let pair = (i, m - 1 - i);
        if !edges.contains(&pair) {
            edges.push(pair);
        }
    }
    Graph::from_edges(m, &edges)
}

/// `sin(x)/x` plus noise, vertex `m` owning the `m`-th of equal-width
/// intervals over the domain.
#[derive(Clone, Debug)]
pub struct SincProblem {
    pub config: SincConfig,
    pub graph: Graph,
    pub intervals: Vec<(f64, f64)>,
    pub train: MultiDataset,
}

impl SincProblem {
    pub fn generate(config: SincConfig, seed: u64) -> Result<Self> {
        let m = config.block_sizes.len();
        let (lo, hi) = config.domain;
        let width = (hi - lo) / m as f64;
        let intervals: Vec<(f64, f64)> = (0..m).map(|i| (lo + width * i as f64, lo + width * (i + 1) as f64)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, 0));
        let blocks = config
            .block_sizes
            .iter()
            .zip(&intervals)
            .map(|(&n, &iv)| {
                let xs: Vec<f64> = (0..n).map(|_| uniform(&mut rng, iv)).collect();
                let ys = xs.iter().map(|&x| sinc(x) + noise(&mut rng, config.noise_variance)).collect();
                VertexBlock::new(xs.into_iter().map(|x| vec![x]).collect(), ys)
            })
            .collect();
        Ok(SincProblem { graph: sinc_graph(m)?, intervals, train: MultiDataset::new(1, blocks)?, config })
    }

    pub fn target_vertex(&self) -> usize {
        self.intervals.len() - 1
    }

    /// Uniform test points in the last vertex's interval.
    pub fn sample_test(&self, seed: u64) -> Result<TestSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = self.target_vertex();
        let xs: Vec<f64> = (0..self.config.n_test).map(|_| uniform(&mut rng, self.intervals[v])).collect();
        let truth = xs.iter().map(|&x| sinc(x) + noise(&mut rng, self.config.noise_variance)).collect();
        let subset = VertexSubset::new(vec![v], self.intervals.len())?;
        let query = TestQuery::new(subset, vec![xs.into_iter().map(|x| vec![x]).collect()])?;
        Ok(TestSet { query, truth })
    }
}

/// Graph, training data, one test query on the last vertex and its targets.
pub fn gen_sinc_subgraph_data(seed: u64) -> Result<(Graph, MultiDataset, TestQuery, Vec<f64>)> {
    let problem = SincProblem::generate(SincConfig::default(), seed)?;
    let test = problem.sample_test(child_seed(seed, 1))?;
    Ok((problem.graph, problem.train, test.query, test.truth))
}
