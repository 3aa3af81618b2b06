//! The three paths that dominate wall time: dense eigenvalue extraction
//! (bounds and audits), the per-step update (long horizons), and the full
//! bounds pipeline a run executes per schedule segment.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use gtdyn_core::costs::{generate_ring_dataset, CostModel, QuadraticCost, SvmCost};
use gtdyn_core::dynamics::{step, SimState};
use gtdyn_core::graphs::{build_laplacian, random_weight_balanced_digraph, WeightedDigraph};
use gtdyn_core::spectral::{bounds_for_graph, build_system_matrix, eigenvalues};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quad_cost(n: usize, m: usize, seed: u64) -> QuadraticCost {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = (0..n)
        .map(|_| DVector::from_fn(m, |_, _| rng.gen_range(-2.0..2.0)))
        .collect();
    let curvatures = (0..n)
        .map(|_| {
            let a = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
            a.transpose() * &a + DMatrix::identity(m, m)
        })
        .collect();
    QuadraticCost::new(centers, curvatures).unwrap()
}

fn svm_cost(nodes: usize) -> SvmCost {
    let data = generate_ring_dataset(120, 1.0, 3.0, 0.6, 29).unwrap();
    SvmCost::from_partition(&data, nodes, 0.2, 6, 3.0, 1.5, 0.0).unwrap()
}

fn state_for(graph: &WeightedDigraph, cost: &dyn CostModel, seed: u64) -> SimState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = graph.n();
    let x = DMatrix::from_fn(n, cost.dim(), |_, _| rng.gen_range(-1.0..1.0));
    let y = DMatrix::from_fn(n, cost.dim(), |i, j| cost.grad(i, &x.row(i).transpose())[j]);
    SimState::new(x, y).unwrap()
}

fn bench_eigenvalues(c: &mut Criterion) {
    let graph = random_weight_balanced_digraph(6, 2, 7);
    let cost = quad_cost(6, 2, 7);
    let lw = build_laplacian(graph.w()).unwrap();
    let la = build_laplacian(graph.a()).unwrap();
    let hessians = cost.constant_hessians().unwrap();
    let system = build_system_matrix(&lw, &la, &hessians, 1.0).unwrap();
    c.bench_function("eigenvalues 24x24 system matrix", |b| {
        b.iter(|| eigenvalues(black_box(system.matrix())).unwrap())
    });
    let discrete = system.discrete(0.05);
    c.bench_function("eigenvalues 24x24 sampled map", |b| {
        b.iter(|| eigenvalues(black_box(&discrete)).unwrap())
    });
}

fn bench_step(c: &mut Criterion) {
    let graph = random_weight_balanced_digraph(6, 2, 17);

    let quad = quad_cost(6, 2, 3);
    let state = state_for(&graph, &quad, 5);
    c.bench_function("step 6 nodes quadratic", |b| {
        b.iter(|| step(black_box(&state), &graph, &quad, 0.001, 0.001).unwrap())
    });

    let svm = svm_cost(6);
    let state = state_for(&graph, &svm, 5);
    c.bench_function("step 6 nodes svm 24 samples each", |b| {
        b.iter(|| step(black_box(&state), &graph, &svm, 0.001, 0.001).unwrap())
    });
}

fn bench_bounds(c: &mut Criterion) {
    let graph = random_weight_balanced_digraph(6, 2, 23);
    let cost = quad_cost(6, 2, 23);
    let hessians = cost.constant_hessians().unwrap();
    let gamma = cost.gamma();
    c.bench_function("bounds pipeline 6 nodes", |b| {
        b.iter(|| bounds_for_graph(black_box(&graph), &hessians, gamma).unwrap())
    });
}

criterion_group!(benches, bench_eigenvalues, bench_step, bench_bounds);
criterion_main!(benches);
