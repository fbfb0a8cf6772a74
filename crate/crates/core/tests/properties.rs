use graphmogp::graph::{knn_graph, laplacian, random_k_regular, Graph, VertexSubset};
use graphmogp::kernels::{DataKernelSpec, GraphContext, GraphKernelSpec, KernelSpec};
use graphmogp::model::{
    assemble_covariance, log_marginal_likelihood, mse, predictive_log_likelihood, FittedModel, MultiDataset, NoiseModel,
    TestQuery, VertexBlock,
};
use graphmogp::numerics::{cholesky, kron, solve_chol_vec, sym_eig, Matrix};
use graphmogp::params::Transform;
use graphmogp::training::{fit, fit_with_noise, OptimizerConfig, ParamVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let b = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let mut a = b.gram();
    a.add_scalar_diag(0.1);
    a
}

fn random_blocks(m: usize, max_n: usize, dim: usize, rng: &mut ChaCha8Rng) -> MultiDataset {
    let blocks = (0..m)
        .map(|_| {
            let n = rng.random_range(1..=max_n);
            let inputs: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            let outputs = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            VertexBlock::new(inputs, outputs)
        })
        .collect();
    MultiDataset::new(dim, blocks).unwrap()
}

fn separable(data: DataKernelSpec, graph: serde_json::Value) -> KernelSpec {
    KernelSpec::separable(data, GraphKernelSpec::from_json(&graph).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cholesky_reconstructs(n in 1usize..12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_spd(n, &mut rng);
        let f = cholesky(&a).unwrap();
        let mut target = a.clone();
        target.add_scalar_diag(f.jitter_used());
        prop_assert!(f.reconstruct().max_abs_diff(&target) <= 1e-8 * target.max_abs());
        let b: Vec<f64> = (0..n).map(|i| i as f64 - 1.5).collect();
        let x = solve_chol_vec(&f, &b).unwrap();
        let back = a.matvec(&x);
        for i in 0..n {
            prop_assert!((back[i] - b[i]).abs() <= 1e-8 * (1.0 + b[i].abs()) * a.max_abs().max(1.0) * 1e2);
        }
    }

    #[test]
    fn eigendecomposition_reconstructs(n in 1usize..12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        a = a.add(&a.transpose()).scaled(0.5);
        let e = sym_eig(&a).unwrap();
        prop_assert!(e.with_values(&e.values).max_abs_diff(&a) <= 1e-8 * a.max_abs().max(1.0));
        let vtv = e.vectors.transpose().matmul(&e.vectors);
        prop_assert!(vtv.max_abs_diff(&Matrix::identity(n)) <= 1e-8);
        prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn transforms_round_trip(u in -20.0f64..20.0, shift in 0.0f64..3.0) {
        for t in [Transform::LogPositive, Transform::ShiftedSoftplus { shift }, Transform::Identity] {
            // θ − shift cancels catastrophically once softplus(u) ≪ shift
            if let Transform::ShiftedSoftplus { .. } = t {
                if t.to_constrained(u) - shift < 1e-3 {
                    continue;
                }
            }
            let back = t.to_free(t.to_constrained(u));
            prop_assert!((back - u).abs() <= 1e-12 * u.abs().max(1.0), "{t:?}: {u} -> {back}");
        }
    }

    #[test]
    fn regular_graphs_are_regular(half_m in 3usize..18, k in 1usize..10, seed in any::<u64>()) {
        let m = 2 * half_m;
        prop_assume!(k < m);
        let g = random_k_regular(m, k, seed).unwrap();
        prop_assert!(g.degree_counts().iter().all(|&d| d == k));
        prop_assert_eq!(g.num_edges(), m * k / 2);
        let l = laplacian(&g, false);
        for i in 0..m {
            prop_assert!(l.row(i).iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn knn_graph_is_undirected_and_covers_k(n in 3usize..20, k in 1usize..3, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let g = knn_graph(&pts, k).unwrap();
        prop_assert!(g.degree_counts().iter().all(|&d| d >= k));
        prop_assert!(adjacency_symmetric(&g));
    }

    #[test]
    fn kronecker_consistency(m in 1usize..6, nbar in 1usize..10, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = if m >= 2 { Graph::from_edges(m, &(1..m).map(|i| (i - 1, i)).collect::<Vec<_>>()).unwrap() } else { Graph::empty(1) };
        let ctx = GraphContext::new(&g).unwrap();
        let xs: Vec<Vec<f64>> = (0..nbar).map(|_| vec![rng.random_range(-2.0..2.0)]).collect();
        let data = MultiDataset::isotopic(&xs, vec![vec![0.0; nbar]; m]).unwrap();
        let gk = json!({"family": "regularized_laplacian", "alpha": rng.random_range(0.1..2.0)});
        let dk = DataKernelSpec::se(rng.random_range(0.5..2.0), rng.random_range(0.2..2.0));
        let spec = separable(dk.clone(), gk.clone());
        let p = data.points();
        let k = assemble_covariance(&spec, &ctx, &p, &p).unwrap();
        let kx = Matrix::from_fn(nbar, nbar, |i, j| dk.eval(&xs[i], &xs[j]).unwrap());
        let kg = GraphKernelSpec::from_json(&gk).unwrap().matrix(&ctx).unwrap();
        prop_assert!(k.max_abs_diff(&kron(&kg, &kx)) <= 1e-12);
    }

    #[test]
    fn observed_minus_latent_is_noise(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_k_regular(6, 2, seed).unwrap();
        let ctx = GraphContext::new(&g).unwrap();
        let data = random_blocks(6, 4, 1, &mut rng);
        let spec = separable(DataKernelSpec::se(1.0, 0.5), json!({"family": "diffusion", "alpha": 1.0}));
        let noise = NoiseModel::per_vertex((0..6).map(|_| rng.random_range(0.01..0.5)).collect()).unwrap();
        let model = FittedModel::new(spec, ctx, data, noise.clone()).unwrap();
        let q = TestQuery::new(VertexSubset::new(vec![4, 1], 6).unwrap(), vec![vec![vec![0.1], vec![0.7]], vec![vec![-0.3]]]).unwrap();
        let pred = model.predict(&q).unwrap();
        let diff = pred.cov_observed.sub(&pred.cov_latent);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { noise.variance(pred.vertices[i]) } else { 0.0 };
                prop_assert!((diff[(i, j)] - expect).abs() <= 4.0 * f64::EPSILON * pred.cov_observed.max_abs());
            }
        }
        prop_assert_eq!(&pred.vertices, &vec![4, 4, 1]);
    }

    #[test]
    fn predictive_likelihood_drops_with_residual(a in 0.0f64..3.0, b in 0.0f64..3.0, var in 0.1f64..4.0) {
        prop_assume!((a - b).abs() > 1e-9);
        let pred = graphmogp::Prediction {
            mean: vec![0.0],
            cov_latent: Matrix::from_diag(&[var]),
            cov_observed: Matrix::from_diag(&[var]),
            vertices: vec![0],
        };
        let la = predictive_log_likelihood(&[a], &pred, true).unwrap();
        let lb = predictive_log_likelihood(&[b], &pred, true).unwrap();
        prop_assert_eq!(a < b, la > lb);
        prop_assert!(mse(&[a], &[0.0]).unwrap() >= 0.0);
    }
}

fn adjacency_symmetric(g: &Graph) -> bool {
    let a = graphmogp::graph::adjacency(g);
    a.is_symmetric(0.0)
}

#[test]
fn sogp_reduction_matches_independent_fits() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..20 {
        let m = rng.random_range(2..6);
        let g = random_k_regular(2 * m, 1, rng.random()).unwrap();
        let ctx = GraphContext::new(&g).unwrap();
        let data = random_blocks(2 * m, 5, 2, &mut rng);
        let dk = DataKernelSpec::se(rng.random_range(0.5..2.0), rng.random_range(0.2..2.0));
        let noise = NoiseModel::shared(2 * m, 0.05).unwrap();
        let model = FittedModel::new(separable(dk.clone(), json!({"family": "identity"})), ctx, data.clone(), noise).unwrap();
        let tests: Vec<Vec<Vec<f64>>> = (0..2 * m).map(|_| vec![vec![0.3, -0.2], vec![1.0, 0.5]]).collect();
        let pred = model.predict(&TestQuery::full(tests.clone()).unwrap()).unwrap();

        let single = GraphContext::new(&Graph::empty(1)).unwrap();
        for v in 0..2 * m {
            let one = MultiDataset::new(2, vec![data.block(v).clone()]).unwrap();
            let sogp = FittedModel::new(KernelSpec::sogp(dk.clone()), single.clone(), one, NoiseModel::shared(1, 0.05).unwrap())
                .unwrap();
            let p = sogp.predict(&TestQuery::full(vec![tests[v].clone()]).unwrap()).unwrap();
            for i in 0..2 {
                assert!((p.mean[i] - pred.mean[2 * v + i]).abs() <= 1e-10);
                for j in 0..2 {
                    assert!((p.cov_latent[(i, j)] - pred.cov_latent[(2 * v + i, 2 * v + j)]).abs() <= 1e-10);
                }
            }
        }
        // no cross-vertex posterior covariance
        assert_eq!(pred.cov_latent[(0, 2)], 0.0);
    }
}

#[test]
fn block_diagonal_likelihood_factorizes() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
    let ctx = GraphContext::new(&g).unwrap();
    let data = random_blocks(3, 4, 1, &mut rng);
    let dk = DataKernelSpec::se(1.3, 0.4);
    let joint = log_marginal_likelihood(
        &separable(dk.clone(), json!({"family": "identity"})),
        &ctx,
        &data,
        &NoiseModel::shared(3, 0.1).unwrap(),
    )
    .unwrap();
    let single = GraphContext::new(&Graph::empty(1)).unwrap();
    let sum: f64 = (0..3)
        .map(|v| {
            let one = MultiDataset::new(1, vec![data.block(v).clone()]).unwrap();
            log_marginal_likelihood(&KernelSpec::sogp(dk.clone()), &single, &one, &NoiseModel::shared(1, 0.1).unwrap()).unwrap()
        })
        .sum();
    assert!((joint - sum).abs() <= 1e-10);
}

#[test]
fn noise_free_posterior_interpolates() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
    let ctx = GraphContext::new(&g).unwrap();
    let data = random_blocks(3, 4, 1, &mut rng);
    let spec = separable(DataKernelSpec::se(1.0, 0.3), json!({"family": "regularized_laplacian", "alpha": 0.5}));
    let model = FittedModel::new(spec, ctx, data.clone(), NoiseModel::shared(3, 0.0).unwrap()).unwrap();
    let q = TestQuery::full(data.blocks().iter().map(|b| b.inputs.clone()).collect()).unwrap();
    let pred = model.predict(&q).unwrap();
    for (m, y) in pred.mean.iter().zip(data.outputs()) {
        assert!((m - y).abs() <= 1e-6, "{m} vs {y}");
    }
}

#[test]
fn subset_query_with_every_vertex_equals_full_query() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let g = random_k_regular(6, 2, 17).unwrap();
    let ctx = GraphContext::new(&g).unwrap();
    let data = random_blocks(6, 4, 1, &mut rng);
    let spec = separable(DataKernelSpec::se(1.0, 0.5), json!({"family": "diffusion", "alpha": 1.0}));
    let model = FittedModel::new(spec, ctx, data, NoiseModel::shared(6, 0.1).unwrap()).unwrap();
    let blocks: Vec<Vec<Vec<f64>>> = (0..6).map(|v| vec![vec![v as f64 * 0.1]]).collect();
    let full = model.predict(&TestQuery::full(blocks.clone()).unwrap()).unwrap();
    let subset = model
        .predict(&TestQuery::new(VertexSubset::new((0..6).collect(), 6).unwrap(), blocks).unwrap())
        .unwrap();
    assert!(full.cov_latent.max_abs_diff(&subset.cov_latent) <= 1e-12);
    for (a, b) in full.mean.iter().zip(&subset.mean) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn monotone_information() {
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    for _ in 0..50 {
        let g = random_k_regular(4, 2, rng.random()).unwrap();
        let ctx = GraphContext::new(&g).unwrap();
        let data = random_blocks(4, 3, 1, &mut rng);
        let spec = separable(
            DataKernelSpec::se(rng.random_range(0.5..2.0), rng.random_range(0.1..1.0)),
            json!({"family": "global_filtering", "alpha": rng.random_range(0.1..2.0)}),
        );
        let noise = NoiseModel::shared(4, 0.1).unwrap();
        let q = TestQuery::new(VertexSubset::new(vec![rng.random_range(0..4)], 4).unwrap(), vec![vec![vec![0.25]]]).unwrap();
        let before = FittedModel::new(spec.clone(), ctx.clone(), data.clone(), noise.clone()).unwrap().predict(&q).unwrap();

        let mut blocks = data.blocks().to_vec();
        let v = rng.random_range(0..4);
        blocks[v].inputs.push(vec![rng.random_range(-2.0..2.0)]);
        blocks[v].outputs.push(rng.random_range(-1.0..1.0));
        let more = MultiDataset::new(1, blocks).unwrap();
        let after = FittedModel::new(spec, ctx, more, noise).unwrap().predict(&q).unwrap();
        assert!(after.cov_latent[(0, 0)] <= before.cov_latent[(0, 0)] + 1e-8);
    }
}

#[test]
fn empty_blocks_are_allowed() {
    let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
    let ctx = GraphContext::new(&g).unwrap();
    let data = MultiDataset::new(
        1,
        vec![VertexBlock::new(vec![vec![0.0]], vec![1.0]), VertexBlock::default(), VertexBlock::new(vec![vec![1.0]], vec![-1.0])],
    )
    .unwrap();
    let spec = separable(DataKernelSpec::se(1.0, 1.0), json!({"family": "diffusion", "alpha": 1.0}));
    let model = FittedModel::new(spec, ctx, data, NoiseModel::shared(3, 0.1).unwrap()).unwrap();
    let q = TestQuery::new(VertexSubset::new(vec![1], 3).unwrap(), vec![vec![vec![0.5]]]).unwrap();
    assert!(model.predict(&q).unwrap().mean[0].is_finite());
}

fn sample_separable(seed: u64) -> (GraphContext, MultiDataset, KernelSpec, NoiseModel) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
    let ctx = GraphContext::new(&g).unwrap();
    let truth = separable(DataKernelSpec::se(1.5, 0.5), json!({"family": "diffusion", "alpha": 1.0}));
    let noise = NoiseModel::shared(4, 0.05).unwrap();
    let xs: Vec<Vec<f64>> = (0..10).map(|_| vec![rng.random_range(0.0..5.0)]).collect();
    let shell = MultiDataset::isotopic(&xs, vec![vec![0.0; 10]; 4]).unwrap();
    let p = shell.points();
    let mut k = assemble_covariance(&truth, &ctx, &p, &p).unwrap();
    k.add_scalar_diag(0.05);
    let l = cholesky(&k).unwrap();
    let z: Vec<f64> = (0..40).map(|_| StandardNormal.sample(&mut rng)).collect();
    let y = l.lower().matvec(&z);
    let data = MultiDataset::isotopic(&xs, y.chunks(10).map(|c| c.to_vec()).collect()).unwrap();
    (ctx, data, truth, noise)
}

#[test]
fn fit_matches_or_beats_generating_parameters() {
    let (ctx, data, truth, noise) = sample_separable(2024);
    let at_truth = log_marginal_likelihood(&truth, &ctx, &data, &noise).unwrap();
    let spec = separable(
        DataKernelSpec::from_json(&json!({"family": "se"})).unwrap(),
        json!({"family": "diffusion"}),
    );
    let result = fit(&spec, &ctx, &data, &OptimizerConfig::default()).unwrap();
    assert!(
        result.model.log_likelihood() >= at_truth - 1e-6,
        "fitted {} vs truth {at_truth}",
        result.model.log_likelihood()
    );
    for w in result.trace().windows(2) {
        assert!(w[1].log_likelihood >= w[0].log_likelihood);
    }
}

#[test]
fn fit_is_deterministic() {
    let (ctx, data, _, _) = sample_separable(7);
    let spec = KernelSpec::from_json(&json!({"variant": "separable", "data": {"family": "se"}, "graph": {"family": "icm"}}))
        .unwrap();
    let cfg = OptimizerConfig { max_iters: 40, ..Default::default() };
    let a = fit(&spec, &ctx, &data, &cfg).unwrap();
    let b = fit(&spec, &ctx, &data, &cfg).unwrap();
    assert_eq!(a.runs, b.runs);
    assert_eq!(a.model.hyperparameters(), b.model.hyperparameters());
    let c = fit_with_noise(&spec, &ctx, &data, None, &OptimizerConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(a.runs, c.runs);
    let _ = ParamVector::pack(&spec, &ctx, a.model.hyperparameters(), a.model.noise()).unwrap();
}
