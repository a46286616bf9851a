use super::*;
use crate::manifold::ManifoldSpec;

fn three_block(seed: u64) -> MultiBlockProblem {
    build_synthetic_problem(&SyntheticSpec::spheres(seed, 3, 4, 5)).unwrap()
}

#[test]
fn well_formed_problem_has_no_diagnostics() {
    let p = three_block(1);
    assert!(validate(&p).is_empty(), "{:?}", validate(&p));
}

#[test]
fn scaled_last_coupling_is_flagged() {
    let mut p = three_block(1);
    let last = p.last();
    p.blocks[last].coupling = Coupling::scaled_identity(5, 2.0);
    let d = validate(&p);
    assert!(d.iter().any(|d| matches!(d, Diagnostic::BasicModelViolation { .. })), "{d:?}");
}

#[test]
fn column_mismatch_is_flagged() {
    let mut p = three_block(1);
    p.blocks[0].coupling = Coupling::Dense(DMatrix::zeros(5, 3));
    let d = validate(&p);
    assert!(d.iter().any(|d| matches!(d, Diagnostic::DimensionMismatch { .. })));
}

struct WrongGradient;

impl SmoothObjective for WrongGradient {
    fn value(&self, x: &[Point]) -> f64 {
        0.5 * x.iter().map(|v| v.norm_squared()).sum::<f64>()
    }
    fn partial_gradient(&self, block: usize, x: &[Point]) -> Point {
        // off by a factor of two on block 0
        if block == 0 {
            &x[0] * 2.0
        } else {
            x[block].clone()
        }
    }
    fn lipschitz(&self) -> f64 {
        1.0
    }
}

#[test]
fn wrong_partial_gradient_is_flagged() {
    let blocks = vec![
        BlockSpec::new("a", ManifoldSpec::sphere(3).unwrap(), Coupling::Dense(DMatrix::identity(3, 3))),
        BlockSpec::new("z", ManifoldSpec::euclidean(3).unwrap(), Coupling::identity(3)),
    ];
    let p = MultiBlockProblem::new(blocks, Arc::new(WrongGradient), DVector::zeros(3));
    let d = validate(&p);
    assert!(d.iter().any(|d| matches!(d, Diagnostic::GradientMismatch { block: 0, .. })), "{d:?}");
    assert!(!d.iter().any(|d| matches!(d, Diagnostic::GradientMismatch { block: 1, .. })));
}

#[test]
fn synthetic_is_deterministic_per_seed() {
    let a = three_block(7);
    let b = three_block(7);
    let c = three_block(8);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = a.random_point(&mut rng);
    assert_eq!(a.objective.value(&x), b.objective.value(&x));
    assert_eq!(a.rhs, b.rhs);
    assert_eq!(a.blocks, b.blocks);
    assert_ne!(a.objective.value(&x), c.objective.value(&x));
}

#[test]
fn synthetic_lipschitz_certificate() {
    let p = build_synthetic_problem(&SyntheticSpec::spheres(3, 4, 6, 8)).unwrap();
    let l = p.lipschitz();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let x = p.random_point(&mut rng);
        let y = p.random_point(&mut rng);
        let gx = p.objective.gradient(&x);
        let gy = p.objective.gradient(&y);
        let dg: f64 = gx.iter().zip(&gy).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt();
        let dx: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt();
        assert!(dg <= l * dx * (1.0 + 1e-12) + 1e-12);
        worst = worst.max(dg / dx);
    }
    // L is tight for the quadratic part, not merely an upper bound
    let est = estimate_lipschitz(p.objective.as_ref(), &p.random_point(&mut rng), 2000, 4);
    assert!(est <= l * (1.0 + 1e-10) && est >= 0.999 * l, "{est} vs {l}");
    assert!(worst > 0.0);
}

#[test]
fn synthetic_curvature_matches_block_hessian() {
    let p = three_block(2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = p.random_point(&mut rng);
    for i in 0..p.n_blocks() {
        let c = p.objective.block_curvature(i).unwrap();
        let mut y = x.clone();
        let d = p.blocks[i].random_point(&mut rng);
        y[i] += &d;
        let dg = p.objective.partial_gradient(i, &y) - p.objective.partial_gradient(i, &x);
        assert!((dg - &d * c).norm() < 1e-10);
    }
}

#[test]
fn synthetic_lower_bound_holds_on_feasible_points() {
    let p = three_block(4);
    let lb = p.lower_bounds.unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let x = p.random_point(&mut rng);
        assert!(p.objective.value(&x) >= lb.objective);
    }
    let s = build_synthetic_problem(&SyntheticSpec::spheres(4, 3, 6, 12).with_stiefel(2)).unwrap();
    let lb = s.lower_bounds.unwrap();
    for _ in 0..200 {
        let x = s.random_point(&mut rng);
        assert!(s.objective.value(&x) >= lb.objective);
    }
    assert!(validate(&s).is_empty(), "{:?}", validate(&s));
}

fn sfo_stats(p: &MultiBlockProblem, block: usize, batch: usize, draws: usize) -> (f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = p.random_point(&mut rng);
    let g = p.objective.partial_gradient(block, &x);
    let mut mean = DMatrix::zeros(g.nrows(), g.ncols());
    let mut var = 0.0;
    for _ in 0..draws {
        let s = p.objective.stochastic_partial_gradient(block, &x, batch, &mut rng).unwrap();
        var += (&s - &g).norm_squared();
        mean += s;
    }
    mean /= draws as f64;
    ((mean - &g).norm(), g.norm(), var / draws as f64)
}

#[test]
fn sfo_is_unbiased() {
    let sigma = 0.5;
    let p = build_synthetic_problem(&SyntheticSpec::spheres(1, 3, 4, 5).with_noise(sigma)).unwrap();
    let draws = 100_000;
    let (err, gnorm, var) = sfo_stats(&p, 0, 1, draws);
    assert!(err / gnorm <= 3.0 * sigma / (gnorm * (draws as f64).sqrt()), "{err}");
    assert!(var <= 1.1 * sigma * sigma);
}

#[test]
fn sfo_variance_scales_with_batch() {
    let sigma = 0.8;
    let p = build_synthetic_problem(&SyntheticSpec::spheres(2, 3, 4, 5).with_noise(sigma)).unwrap();
    for m in [1, 4, 16] {
        let (_, _, var) = sfo_stats(&p, 1, m, 20_000);
        assert!(var <= 1.2 * sigma * sigma / m as f64, "M={m}: {var}");
    }
}

#[test]
fn lift_adds_penalized_slack() {
    let blocks = vec![
        BlockSpec::new("u", ManifoldSpec::sphere(3).unwrap(), Coupling::identity(3)),
        BlockSpec::new("v", ManifoldSpec::sphere(3).unwrap(), Coupling::scaled_identity(3, -1.0)),
    ];
    struct Inner;
    impl SmoothObjective for Inner {
        fn value(&self, x: &[Point]) -> f64 {
            x[0].dot(&x[1])
        }
        fn partial_gradient(&self, block: usize, x: &[Point]) -> Point {
            x[1 - block].clone()
        }
        fn lipschitz(&self) -> f64 {
            1.0
        }
    }
    let p = MultiBlockProblem::new(blocks, Arc::new(Inner), DVector::from_vec(vec![0.1, 0.0, 0.0]));
    assert!(!p.is_basic());
    let out = lift_general_problem(&p, 0.1).unwrap();
    assert_eq!(out.mu, Some(10.0));
    let q = out.problem;
    assert_eq!(q.n_blocks(), 3);
    assert!(q.is_basic());
    assert_eq!(q.blocks[2].manifold, ManifoldSpec::euclidean(3).unwrap());
    assert_eq!(q.lipschitz(), 10.0);
    assert!(validate(&q).is_empty(), "{:?}", validate(&q));

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut x = q.random_point(&mut rng);
    let partial: Vec<Point> = x[..2].to_vec();
    let s = -p.residual(&partial);
    x[2] = DMatrix::from_column_slice(3, 1, s.as_slice());
    assert_eq!(q.residual(&x).norm(), 0.0);
    assert!((q.objective.value(&x) - (p.objective.value(&partial) + 5.0 * s.norm_squared())).abs() < 1e-12);
}

#[test]
fn lifting_basic_problem_is_a_noop() {
    let p = three_block(1);
    let out = lift_general_problem(&p, 0.1).unwrap();
    assert!(out.mu.is_none() && out.note.is_some());
    assert_eq!(out.problem.n_blocks(), p.n_blocks());
    assert!(lift_general_problem(&p, 1.5).is_err());
}

fn stiefel_with_capped_lq() -> MultiBlockProblem {
    let s = build_synthetic_problem(&SyntheticSpec::spheres(6, 3, 4, 8).with_stiefel(2)).unwrap();
    let mut s = s;
    s.blocks[0].regularizer = Regularizer::CappedLq {
        weight: 0.1,
        q: 0.5,
        cap: 2.0,
    };
    s
}

#[test]
fn decouple_splits_regularized_manifold_block() {
    let p = stiefel_with_capped_lq();
    let part = RegularizerPartition::infer(&p);
    assert_eq!(part.i3, vec![0]);
    assert_eq!(part.i1, vec![1]);
    let q = decouple_nonconvex_regularizers(&p, &part).unwrap();
    assert_eq!(q.n_blocks(), 4);
    assert_eq!(q.blocks[0].regularizer, Regularizer::Zero);
    assert!(matches!(q.blocks[0].manifold.kind, ManifoldKind::Stiefel { rows: 4, cols: 2 }));
    assert!(q.blocks[2].manifold.is_euclidean());
    assert!(matches!(q.blocks[2].regularizer, Regularizer::CappedLq { .. }));
    assert_eq!(q.rows(), 8 + 8);
    assert!(!q.is_basic());

    // consensus rows vanish when y = x
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut x = q.random_point(&mut rng);
    x[2] = DMatrix::from_column_slice(8, 1, x[0].as_slice());
    let r = q.residual(&x);
    assert_eq!(r.rows(8, 8).norm(), 0.0);

    let orig = vec![x[0].clone(), x[1].clone(), x[3].clone()];
    assert_eq!(q.objective.value(&x), p.objective.value(&orig));
    assert_eq!(q.regularizer_value(&x), p.regularizer_value(&orig));

    let lifted = lift_general_problem(&q, 0.05).unwrap().problem;
    assert!(lifted.is_basic());
    assert!(validate(&lifted).is_empty(), "{:?}", validate(&lifted));
}

#[test]
fn decouple_with_empty_i3_is_identity() {
    let p = three_block(3);
    let part = RegularizerPartition::infer(&p);
    let q = decouple_nonconvex_regularizers(&p, &part).unwrap();
    assert_eq!(q.blocks, p.blocks);
}

#[test]
fn decouple_rejects_incomplete_partition() {
    let p = stiefel_with_capped_lq();
    let part = RegularizerPartition {
        i1: vec![],
        i2: vec![],
        i3: vec![0],
    };
    assert!(decouple_nonconvex_regularizers(&p, &part).is_err());
    let dup = RegularizerPartition {
        i1: vec![0, 1],
        i2: vec![],
        i3: vec![0],
    };
    assert!(decouple_nonconvex_regularizers(&p, &dup).is_err());
}

#[test]
fn coupling_gram_scale() {
    assert_eq!(Coupling::scaled_identity(3, -2.0).gram_scale(), Some(4.0));
    let a = DMatrix::from_row_slice(2, 1, &[-1.0, -1.0]);
    assert_eq!(Coupling::Dense(a.clone()).gram_scale(), Some(2.0));
    assert!((Coupling::Dense(a).norm() - 2f64.sqrt()).abs() < 1e-15);
    let b = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
    assert_eq!(Coupling::Dense(b).gram_scale(), None);
}
