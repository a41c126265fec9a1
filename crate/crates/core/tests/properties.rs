mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;

use pritz::correction::CorrectionContext;
use pritz::interp::{
    chebyshev_nodes, cl_grid_on_box, interpolate_cl, interpolate_telescoping, lagrange_basis,
    legendre_nodes, sample_grid, smolyak_set,
};
use pritz::linalg::{generalized_eigenvalues, orthonormalize, Matrix};
use pritz::pencil::{equivalence_from_box, spectral_basis, uniform_box, BoundStyle};
use pritz::ritz::{build_rmcli, build_rmcli_reduced, ReducedPencil};

fn eta_strategy(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.2f64..0.7, d).prop_map(|mut v| {
        v.sort_by(|a, b| b.total_cmp(a));
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn smolyak_sets_are_downward_closed(eta in (1usize..=4).prop_flat_map(eta_strategy), eps in 0.005f64..0.5) {
        let s = smolyak_set(&eta, eps).unwrap();
        prop_assert!(s.is_downward_closed());
        prop_assert!(s.contains(&vec![0; eta.len()]));
        // the combination technique reproduces constants
        prop_assert_eq!(s.coefficients.iter().sum::<i64>(), 1);
        for alpha in &s.indices {
            let w: f64 = alpha.iter().zip(&eta).map(|(&a, &e)| e.powi(a as i32)).product();
            prop_assert!(w >= eps * (1.0 - 1e-12));
        }
    }

    #[test]
    fn smaller_epsilon_gives_superset(eta in (1usize..=3).prop_flat_map(eta_strategy), eps in 0.01f64..0.5) {
        let big = smolyak_set(&eta, eps).unwrap();
        let small = smolyak_set(&eta, eps / 3.0).unwrap();
        prop_assert!(big.indices.iter().all(|a| small.contains(a)));
    }

    #[test]
    fn lagrange_basis_is_a_partition_of_unity(q in 1usize..8, x in -1.5f64..1.5) {
        let nodes = chebyshev_nodes(q, (-1.0, 1.0)).unwrap();
        let l = lagrange_basis(&nodes, x);
        prop_assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let nodes = legendre_nodes(q);
        let l = lagrange_basis(&nodes, x);
        prop_assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn legendre_nodes_interpolate_monomials(p in 0usize..12, k in 0usize..12) {
        let nodes = legendre_nodes(p);
        prop_assert_eq!(nodes.len(), p + 1);
        prop_assert!(nodes.windows(2).all(|w| w[0] < w[1]));
        if k <= p {
            let x = 0.37;
            let l = lagrange_basis(&nodes, x);
            let v: f64 = l.iter().zip(&nodes).map(|(w, n)| w * n.powi(k as i32)).sum();
            prop_assert!((v - x.powi(k as i32)).abs() < 1e-10);
        }
    }

    #[test]
    fn combination_matches_telescoping_sum(
        eta in (1usize..=3).prop_flat_map(eta_strategy),
        eps in 0.03f64..0.4,
        q in 1usize..4,
        seed in 0u64..1000,
    ) {
        let d = eta.len();
        let set = smolyak_set(&eta, eps).unwrap();
        let bx = uniform_box(d, (-1.0, 1.0));
        let grid = cl_grid_on_box(&set, q, (0.0, 3.0), &bx).unwrap();
        let f = |s: &[f64], t: f64| vec![(s.iter().sum::<f64>() + 0.3 * t).exp(), (1.0 + t) / (2.0 + s[0])];
        let table = sample_grid(&grid, &f);
        let mut r = rng(seed);
        let sigma = random_point(&mut r, d);
        let t = r.gen_range(0.0..3.0);
        let a = interpolate_cl(&table, &grid, &sigma, t).unwrap();
        let b = interpolate_telescoping(&set, q, (0.0, 3.0), &bx, &f, &sigma, t).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-10 * y.abs().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ritz_values_overestimate(seed in 0u64..10_000, n in 8usize..30, d in 1usize..=3, k in 2usize..8) {
        let mut r = rng(seed);
        let (op, mass) = random_pencil(&mut r, n, d, 0.6);
        let q = orthonormalize(&random_matrix(&mut r, n, k).columns(), None);
        let pencil = ReducedPencil::new(&q, &op, &mass).unwrap();
        let sigma = random_point(&mut r, d);
        let mu = pencil.values(&sigma, q.cols()).unwrap();
        let lambda = generalized_eigenvalues(&op.evaluate(&sigma).unwrap(), &mass).unwrap();
        for (m, l) in mu.iter().zip(&lambda) {
            prop_assert!(*m >= l * (1.0 - 1e-12));
        }
    }

    #[test]
    fn spectral_envelope_on_random_pencils(seed in 0u64..10_000, n in 6usize..25, d in 1usize..=3) {
        let mut r = rng(seed);
        let (op, mass) = random_pencil(&mut r, n, d, 0.5);
        let bx = uniform_box(d, (-1.0, 1.0));
        let eq = equivalence_from_box(&op, &bx, &BoundStyle::VertexSampling).unwrap();
        let at_zero = generalized_eigenvalues(op.a0(), &mass).unwrap();
        let sigma = random_point(&mut r, d);
        let at_sigma = generalized_eigenvalues(&op.evaluate(&sigma).unwrap(), &mass).unwrap();
        prop_assert!(pritz::pencil::envelope_check(&eq, &at_zero, &at_sigma));
        let coarse = equivalence_from_box(&op, &bx, &BoundStyle::CoefficientBounds { kappa: None }).unwrap();
        prop_assert!(coarse.alpha <= eq.alpha + 1e-12 && coarse.beta >= eq.beta - 1e-12);
    }

    #[test]
    fn reduced_basis_dimension_is_monotone(seed in 0u64..10_000, q in 1usize..4) {
        let mut r = rng(seed);
        let (op, mass) = random_pencil(&mut r, 40, 1, 0.5);
        let values = generalized_eigenvalues(op.a0(), &mass).unwrap();
        let rl = 0.5 * (values[5] + values[6]);
        let bx = uniform_box(1, (-1.0, 1.0));
        let eq = equivalence_from_box(&op, &bx, &BoundStyle::VertexSampling).unwrap();
        let basis = spectral_basis(op.a0(), &mass, rl).unwrap();
        let ctx = CorrectionContext::new(op, mass, basis, eq, values[4]).unwrap();
        let set = smolyak_set(&[0.5], 0.1).unwrap();
        let grid = cl_grid_on_box(&set, q, (0.0, rl), &bx).unwrap();
        let full = build_rmcli(&ctx, &grid).unwrap();
        let mut last = usize::MAX;
        for tol in [1e-10, 1e-6, 1e-3, 1e-1] {
            let red = build_rmcli_reduced(&ctx, &grid, tol).unwrap();
            prop_assert!(red.dim() <= full.dim());
            prop_assert!(red.dim() <= last);
            prop_assert!(orth_error(&red.q) < 1e-10);
            last = red.dim();
        }
        prop_assert_eq!(build_rmcli_reduced(&ctx, &grid, f64::INFINITY).unwrap().dim(), 6);
    }
}

fn orth_error(q: &Matrix) -> f64 {
    q.t_matmul(q).sub(&Matrix::identity(q.cols())).max_abs()
}
