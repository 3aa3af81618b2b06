//! Randomized invariant checks across the public API.

use gtdyn_core::costs::{sigmoid, softplus, QuadraticCost};
use gtdyn_core::dynamics::{step, SimState};
use gtdyn_core::graphs::{
    build_laplacian, is_strongly_connected, is_weight_balanced, random_weight_balanced_digraph,
};
use gtdyn_core::spectral::{
    conjugate_pairs_ok, default_tol_zero, eigen_residual, eigenvalues, lambda2_abs_real,
    operator_norm,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn generated_graphs_pass_their_own_validators(
        seed in 0u64..1000,
        n in 2usize..9,
        cycles in 1usize..4,
    ) {
        let g = random_weight_balanced_digraph(n, cycles, seed);
        prop_assert!(is_weight_balanced(g.w(), 1e-9));
        prop_assert!(is_weight_balanced(g.a(), 1e-9));
        prop_assert!(is_strongly_connected(g.w()));
        prop_assert!(is_strongly_connected(g.a()));
        prop_assert!(g.max_row_sum() < 1.0);
    }

    #[test]
    fn consensus_states_are_exact_fixed_points(
        seed in 0u64..500,
        value in -100.0f64..100.0,
        alpha in 0.01f64..2.0,
        eta in 0.01f64..1.0,
    ) {
        let g = random_weight_balanced_digraph(4, 2, seed);
        let centers = (0..4).map(|i| DVector::from_column_slice(&[i as f64])).collect();
        let cost = QuadraticCost::homogeneous(centers).unwrap();
        let state = SimState::new(
            DMatrix::from_element(4, 1, value),
            DMatrix::zeros(4, 1),
        ).unwrap();
        let next = step(&state, &g, &cost, alpha, eta).unwrap();
        prop_assert_eq!(next.x, state.x);
        prop_assert_eq!(next.y, state.y);
    }

    #[test]
    fn softplus_slope_is_the_sigmoid(z in -50.0f64..50.0, mu in 0.5f64..10.0) {
        let h = 1e-6;
        let fd = (softplus(z + h, mu) - softplus(z - h, mu)) / (2.0 * h);
        prop_assert!((fd - sigmoid(mu * z)).abs() < 1e-4);
    }

    #[test]
    fn softplus_dominates_the_hinge(z in -500.0f64..500.0, mu in 0.5f64..10.0) {
        let s = softplus(z, mu);
        prop_assert!(s >= z.max(0.0));
        prop_assert!(s <= z.max(0.0) + (2.0f64).ln() / mu + 1e-12);
    }

    #[test]
    fn spectra_come_in_conjugate_pairs_within_the_residual_contract(
        seed in 0u64..300,
        n in 2usize..7,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-2.0..2.0));
        let spectrum = eigenvalues(&m).unwrap();
        prop_assert_eq!(spectrum.values.len(), n);
        prop_assert!(conjugate_pairs_ok(&spectrum, 1e-7 * (1.0 + operator_norm(&m))));
        let contract = 1e-8 * (1.0 + operator_norm(&m));
        for v in &spectrum.values {
            prop_assert!(eigen_residual(&m, *v) <= contract);
        }
    }

    #[test]
    fn connected_balanced_laplacians_have_a_positive_gap(seed in 0u64..400, n in 2usize..8) {
        let g = random_weight_balanced_digraph(n, 2, seed);
        let lap = build_laplacian(g.w()).unwrap();
        let l2 = lambda2_abs_real(&lap, default_tol_zero(lap.matrix())).unwrap();
        prop_assert!(l2 > 0.0);
    }
}
