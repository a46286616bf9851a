use manifold_admm::applications::maxbisect::cut_value;
use manifold_admm::applications::tensor::{mode_product, reversed_kronecker};
use manifold_admm::applications::{greedy_balance, mode_refold, mode_unfold, tucker_apply, DenseTensor, WeightedGraph};
use manifold_admm::io::{format_graph, format_tensor, parse_graph, parse_tensor};
use manifold_admm::manifold::qr_orthonormalize;
use manifold_admm::prox::{linear_min_on_nonneg_sphere, nearest_orthogonal, scalar_lq_prox, LqProxSpec};
use manifold_admm::ManifoldSpec;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn manifolds() -> impl Strategy<Value = ManifoldSpec> {
    prop_oneof![
        (1usize..8).prop_map(|d| ManifoldSpec::euclidean(d).unwrap()),
        (2usize..8).prop_map(|d| ManifoldSpec::sphere(d).unwrap()),
        (2usize..7, 1usize..4)
            .prop_filter("cols <= rows", |(r, c)| c <= r)
            .prop_map(|(r, c)| ManifoldSpec::stiefel(r, c).unwrap()),
    ]
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn tensor_dims() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..5, 1..5)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn tangent_projection_is_idempotent_and_nonexpansive(m in manifolds(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = m.random_point(&mut rng);
        let (r, c) = m.shape();
        let v = DMatrix::from_fn(r, c, |i, j| ((i * 7 + j * 3) as f64 + seed as f64 * 1e-3).sin());
        let p = m.tangent_project(&x, &v).unwrap().into_direction();
        let pp = m.tangent_project(&x, &p).unwrap().into_direction();
        prop_assert!((&pp - &p).norm() <= 1e-12 * (1.0 + p.norm()));
        prop_assert!(p.norm() <= v.norm() + 1e-12);
        prop_assert!(m.is_tangent(&x, &p));
    }

    #[test]
    fn retraction_stays_feasible(m in manifolds(), seed in any::<u64>(), t in 0.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = m.random_point(&mut rng);
        let v = m.random_tangent(&x, &mut rng);
        let y = m.retract(&x, &v, t).unwrap();
        prop_assert!(m.is_feasible(&y), "violation {}", m.violation(&y));
    }

    #[test]
    fn nonneg_sphere_minimizer_is_feasible_and_optimal_among_vertices(b in (1usize..6).prop_flat_map(|d| matrix(d, 1))) {
        let x = linear_min_on_nonneg_sphere(&b).unwrap();
        prop_assert!((x.norm() - 1.0).abs() < 1e-12);
        prop_assert!(x.iter().all(|v| *v >= 0.0));
        let value = b.dot(&x);
        for i in 0..b.nrows() {
            prop_assert!(value <= b[i] + 1e-12);
        }
    }

    #[test]
    fn nearest_orthogonal_is_orthonormal_and_beats_qr(b in (1usize..5, 1usize..4)
        .prop_filter("cols <= rows", |(r, c)| c <= r)
        .prop_flat_map(|(r, c)| matrix(r, c)))
    {
        let u = nearest_orthogonal(&b).unwrap();
        let gram = u.transpose() * &u;
        prop_assert!((gram - DMatrix::identity(b.ncols(), b.ncols())).norm() < 1e-10);
        if let Ok(q) = qr_orthonormalize(b.clone()) {
            prop_assert!(b.dot(&u) >= b.dot(&q) - 1e-10);
        }
    }

    #[test]
    fn lq_prox_without_penalty_is_the_quadratic_minimizer(a in 0.01f64..10.0, b in -20.0f64..20.0, q in prop::sample::select(vec![0.5, 2.0 / 3.0, 1.0])) {
        let x = scalar_lq_prox(&LqProxSpec::new(a, b, 0.0, q)).unwrap();
        prop_assert_eq!(x, -b / (2.0 * a));
    }

    #[test]
    fn lq_prox_beats_zero_and_neighbours(a in 0.1f64..5.0, b in -10.0f64..10.0, c in 0.0f64..5.0, q in prop::sample::select(vec![0.5, 2.0 / 3.0, 1.0])) {
        let spec = LqProxSpec::new(a, b, c, q);
        let x = scalar_lq_prox(&spec).unwrap();
        let fx = spec.objective(x);
        prop_assert!(fx <= spec.objective(0.0) + 1e-12);
        for d in [-1e-3, 1e-3, -0.1, 0.1] {
            prop_assert!(fx <= spec.objective(x + d) + 1e-12);
        }
    }

    #[test]
    fn unfold_refold_round_trip(dims in tensor_dims(), seed in any::<u64>()) {
        let t = DenseTensor::from_fn(&dims, |i| {
            i.iter().enumerate().map(|(k, v)| ((k + 1) * (v + 1)) as f64).sum::<f64>() + (seed % 97) as f64
        }).unwrap();
        for j in 1..=dims.len() {
            let m = mode_unfold(&t, j).unwrap();
            prop_assert_eq!(m.shape(), (dims[j - 1], t.len() / dims[j - 1]));
            prop_assert_eq!(mode_refold(&m, &dims, j).unwrap(), t.clone());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 50, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn tucker_unfolding_identity(core_dims in tensor_dims(), grow in prop::collection::vec(0usize..3, 4), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let core = DenseTensor::from_fn(&core_dims, |_| rand::Rng::random_range(&mut rng, -1.0..1.0)).unwrap();
        let factors: Vec<DMatrix<f64>> = core_dims
            .iter()
            .zip(&grow)
            .map(|(&m, &g)| DMatrix::from_fn(m + g, m, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0)))
            .collect();
        let full = tucker_apply(&core, &factors).unwrap();
        for j in 1..=core_dims.len() {
            let lhs = mode_unfold(&full, j).unwrap();
            let rhs = &factors[j - 1] * mode_unfold(&core, j).unwrap() * reversed_kronecker(&factors, j).transpose();
            prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + full.norm()));
        }
        let once = mode_product(&core, &factors[0], 1).unwrap();
        prop_assert_eq!(once.dims()[0], factors[0].nrows());
    }

    #[test]
    fn greedy_balance_always_bisects(n in (1usize..9).prop_map(|h| 2 * h), labels in prop::collection::vec(1u8..3, 18), seed in any::<u64>()) {
        let g = WeightedGraph::random(n, 0.6, 5, seed).unwrap();
        let start = &labels[..n];
        let out = greedy_balance(start, g.weights()).unwrap();
        prop_assert_eq!(out.iter().filter(|&&l| l == 1).count(), n / 2);
        prop_assert!(out.iter().all(|&l| l == 1 || l == 2));
        prop_assert!(cut_value(&out, g.weights()) >= 0.0);
    }

    #[test]
    fn graph_and_tensor_text_round_trip(n in 2usize..15, seed in any::<u64>(), dims in tensor_dims()) {
        let g = WeightedGraph::random(n, 0.5, 9, seed).unwrap();
        prop_assert_eq!(parse_graph(&format_graph(&g)).unwrap(), g);
        let t = DenseTensor::from_fn(&dims, |i| i.iter().sum::<usize>() as f64 * 0.37 - 1.1).unwrap();
        prop_assert_eq!(parse_tensor(&format_tensor(&t)).unwrap(), t);
    }
}
