use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::*;
use crate::manifold::ManifoldSpec;
use crate::problem::{build_synthetic_problem, BlockSpec, ConvexSet, Coupling, Regularizer, SmoothObjective, SyntheticSpec};

fn synthetic(seed: u64) -> MultiBlockProblem {
    build_synthetic_problem(&SyntheticSpec::spheres(seed, 3, 5, 6)).unwrap()
}

fn config(problem: &MultiBlockProblem, variant: Variant) -> SolverConfig {
    SolverConfig::for_problem(problem, variant).unwrap()
}

#[test]
fn variant_names_round_trip() {
    for v in Variant::ALL {
        assert_eq!(v.name().parse::<Variant>().unwrap(), v);
    }
    assert!("newton".parse::<Variant>().is_err());
}

#[test]
fn lagrangian_matches_term_by_term_evaluation() {
    let p = synthetic(3);
    let mut state = IterateState::initial(&p, 4);
    state.lambda = DVector::from_fn(p.rows(), |i, _| i as f64 - 2.5);
    let beta = 1.7;
    let mut ax = -p.rhs.clone();
    for (b, x) in p.blocks.iter().zip(&state.x) {
        ax += b.coupling.to_dense() * DVector::from_column_slice(x.as_slice());
    }
    let expected = p.objective.value(&state.x) - ax.dot(&state.lambda) + beta / 2.0 * ax.dot(&ax);
    assert!((augmented_lagrangian(&p, &state, beta) - expected).abs() < 1e-10);
    assert_eq!(augmented_lagrangian(&p, &state, 0.0) - 0.0, {
        let r = p.residual(&state.x);
        p.objective.value(&state.x) - r.dot(&state.lambda)
    });
    state.lambda.fill(0.0);
    assert_eq!(augmented_lagrangian(&p, &state, 0.0), p.objective.value(&state.x));
}

#[test]
fn lagrangian_on_feasible_point_ignores_multiplier() {
    let p = synthetic(5);
    let mut state = IterateState::initial(&p, 1);
    let n = p.last();
    let partial = -p.residual(&state.x) + DVector::from_column_slice(state.x[n].as_slice());
    state.x[n] = DMatrix::from_column_slice(p.rows(), 1, partial.as_slice());
    assert!(p.residual(&state.x).norm() < 1e-12);
    state.lambda = DVector::from_element(p.rows(), 9.0);
    let l = augmented_lagrangian(&p, &state, 4.0);
    assert!((l - p.objective.value(&state.x)).abs() < 1e-9);
}

#[test]
fn psi_matches_hand_composed_formula() {
    let p = synthetic(6);
    let cfg = config(&p, Variant::Exact);
    let mut state = IterateState::initial(&p, 2);
    let (beta, gamma) = (cfg.params.beta, cfg.params.gamma);
    assert_eq!(
        potential_psi(&p, &state, beta, gamma, Variant::Exact),
        augmented_lagrangian(&p, &state, beta)
    );
    state.prev_last = state.x[p.last()].map(|v| v + 0.25);
    let drift = 0.0625 * p.rows() as f64;
    let l = p.lipschitz();
    let d = beta - 1.0 / gamma;
    for (variant, c) in [(Variant::Exact, 3.0), (Variant::Stochastic, 4.0)] {
        let expected = augmented_lagrangian(&p, &state, beta) + c / beta * (d * d + l * l) * drift;
        assert!((potential_psi(&p, &state, beta, gamma, variant) - expected).abs() < 1e-10);
    }
}

fn check_lambda_identity(p: &MultiBlockProblem, cfg: &SolverConfig, steps: usize) {
    let n = p.last();
    let mut state = IterateState::initial(p, cfg.seed);
    for _ in 0..steps {
        let next = step(p, &state, cfg).unwrap();
        let mut mid = next.x.clone();
        mid[n] = state.x[n].clone();
        let gn = p.objective.partial_gradient(n, &mid);
        let d = cfg.params.beta - 1.0 / cfg.params.gamma;
        let expected = (&state.x[n] - &next.x[n]) * d + gn;
        let err = (DVector::from_column_slice(expected.as_slice()) - &next.lambda).norm();
        assert!(err < 1e-10, "lambda identity off by {err}");
        let primal = p.residual(&next.x).norm();
        let dl = (&state.lambda - &next.lambda).norm() / cfg.params.beta;
        assert!((primal - dl).abs() < 1e-10 * (1.0 + primal));
        assert_eq!(next.prev_last, state.x[n]);
        assert_eq!(next.k, state.k + 1);
        state = next;
    }
}

#[test]
fn lambda_identity_after_each_step() {
    let p = synthetic(1);
    for variant in [Variant::Exact, Variant::Linearized, Variant::Jacobi, Variant::LineSearch] {
        check_lambda_identity(&p, &config(&p, variant), 20);
    }
}

#[test]
fn exact_psi_strictly_decreases_for_fifty_steps() {
    let p = synthetic(1);
    let cfg = config(&p, Variant::Exact);
    let (beta, gamma) = (cfg.params.beta, cfg.params.gamma);
    let mut state = step(&p, &IterateState::initial(&p, 0), &cfg).unwrap();
    let mut psi = potential_psi(&p, &state, beta, gamma, Variant::Exact);
    for k in 0..50 {
        state = step(&p, &state, &cfg).unwrap();
        let next = potential_psi(&p, &state, beta, gamma, Variant::Exact);
        assert!(next < psi, "step {k}: {next} >= {psi}");
        psi = next;
    }
}

/// `f = 0` with a sphere block that does not enter the constraint.
struct Flat;

impl SmoothObjective for Flat {
    fn value(&self, _x: &[Point]) -> f64 {
        0.0
    }
    fn partial_gradient(&self, block: usize, x: &[Point]) -> Point {
        Point::zeros(x[block].nrows(), x[block].ncols())
    }
    fn lipschitz(&self) -> f64 {
        1.0
    }
    fn block_curvature(&self, _block: usize) -> Option<f64> {
        Some(0.0)
    }
}

#[test]
fn fixed_point_is_left_unchanged() {
    let blocks = vec![
        BlockSpec::new("u", ManifoldSpec::sphere(3).unwrap(), Coupling::Dense(DMatrix::zeros(2, 3))),
        BlockSpec::new("z", ManifoldSpec::euclidean(2).unwrap(), Coupling::identity(2)),
    ];
    let p = MultiBlockProblem::new(blocks, Arc::new(Flat), DVector::zeros(2));
    let u = DMatrix::from_column_slice(3, 1, &[0.6, 0.0, 0.8]);
    let state = IterateState::new(vec![u, DMatrix::zeros(2, 1)], DVector::zeros(2));
    for variant in [Variant::Exact, Variant::Linearized, Variant::Jacobi, Variant::LineSearch] {
        let cfg = SolverConfig::new(variant, default_parameters(1.0, variant).unwrap());
        let next = step(&p, &state, &cfg).unwrap();
        assert!((&next.x[0] - &state.x[0]).norm() < 1e-15, "{variant}");
        assert_eq!(next.x[1], state.x[1]);
        assert_eq!(next.lambda, state.lambda);
    }
}

#[test]
fn infinite_tolerance_stops_after_one_step() {
    let p = synthetic(2);
    let cfg = config(&p, Variant::Exact).with_eps(f64::INFINITY);
    let out = solve(&p, &cfg).unwrap();
    assert_eq!(out.trace.len(), 1);
    assert!(out.converged);
    assert_eq!(out.k_star, 1);
}

#[test]
fn exact_solve_reaches_tolerance() {
    let p = synthetic(1);
    let cfg = config(&p, Variant::Exact).with_eps(1e-3).with_max_iters(20_000);
    let out = solve(&p, &cfg).unwrap();
    assert!(out.converged, "last report {:?}", out.last_report);
    let r = &out.best_report;
    assert!(r.dual <= 1e-3 && r.primal <= 1e-3 && r.block_max() <= 1e-3);
    assert!(out.warnings.is_empty(), "{:?}", out.warnings);
    let budget = out.budget.unwrap();
    assert!(budget.tau > 0.0);
    assert!(out.trace.len() as f64 <= budget.iterations);
}

#[test]
fn trace_psi_is_nonincreasing_for_deterministic_variants() {
    for seed in 0..5 {
        let p = synthetic(seed);
        for variant in [Variant::Exact, Variant::Linearized] {
            let cfg = config(&p, variant).with_eps(0.0).with_max_iters(60).with_seed(seed);
            let out = solve(&p, &cfg).unwrap();
            for w in out.trace.windows(2) {
                assert!(w[1].psi <= w[0].psi + 1e-9, "{variant} seed {seed}: {} -> {}", w[0].psi, w[1].psi);
            }
        }
    }
}

#[test]
fn k_star_has_minimal_theta() {
    let p = synthetic(4);
    let cfg = config(&p, Variant::Linearized).with_eps(0.0).with_max_iters(40);
    let out = solve(&p, &cfg).unwrap();
    let min = out.trace[1..].iter().map(|r| r.theta).fold(f64::INFINITY, f64::min);
    assert_eq!(out.trace[out.k_star - 1].theta, min);
    assert_eq!(out.best_report.theta, min);
    let mut last = cfg.clone();
    last.output = OutputChoice::Last;
    let out2 = solve(&p, &last).unwrap();
    assert_eq!(out2.k_star, 40);
    assert_eq!(out2.best, out2.last);
}

#[test]
fn stationarity_needs_history() {
    let p = synthetic(1);
    let cfg = config(&p, Variant::Exact);
    let s = IterateState::initial(&p, 0);
    assert!(matches!(
        measure_stationarity(&p, &cfg, std::slice::from_ref(&s)),
        Err(Error::MissingHistory(_))
    ));
    let r = measure_stationarity(&p, &cfg, &[s.clone(), s.clone(), s]).unwrap();
    assert_eq!(r.theta, 0.0);
}

#[test]
fn constructed_stationary_point_has_zero_residuals() {
    let blocks = vec![
        BlockSpec::new("u", ManifoldSpec::sphere(3).unwrap(), Coupling::Dense(DMatrix::zeros(2, 3))),
        BlockSpec::new("z", ManifoldSpec::euclidean(2).unwrap(), Coupling::identity(2)),
    ];
    let p = MultiBlockProblem::new(blocks, Arc::new(Flat), DVector::zeros(2));
    let u = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]);
    let s = IterateState::new(vec![u, DMatrix::zeros(2, 1)], DVector::zeros(2));
    for variant in Variant::ALL {
        let cfg = SolverConfig::new(variant, default_parameters(1.0, variant).unwrap());
        let r = measure_stationarity(&p, &cfg, &[s.clone(), s.clone(), s.clone()]).unwrap();
        assert_eq!(r.max_residual(), 0.0);
    }
}

#[test]
fn block_surrogate_is_bounded_by_theta() {
    let p = synthetic(7);
    for variant in [Variant::Exact, Variant::Linearized] {
        let cfg = config(&p, variant);
        let kappa3 = (p.lipschitz()
            + cfg.params.beta * (p.n_blocks() as f64).sqrt() * p.max_coupling_norm().powi(2)
            + cfg.params.sigma_h)
            .powi(2);
        let mut hist = vec![IterateState::initial(&p, 3)];
        hist.push(step(&p, &hist[0], &cfg).unwrap());
        for _ in 0..40 {
            let next = step(&p, hist.last().unwrap(), &cfg).unwrap();
            hist.push(next);
            let r = measure_stationarity(&p, &cfg, &hist).unwrap();
            for b in &r.blocks {
                assert!(*b <= (kappa3 * r.theta).sqrt() + 1e-8);
            }
        }
    }
}

#[test]
fn jacobi_step_descends_with_l_hat() {
    let p = synthetic(8);
    let cfg = config(&p, Variant::Jacobi);
    let beta = cfg.params.beta;
    let l_hat = jacobi_lipschitz(p.lipschitz(), beta, p.n_blocks(), p.max_coupling_norm());
    assert!(cfg.params.sigma_h > l_hat);
    let mut state = IterateState::initial(&p, 0);
    for _ in 0..30 {
        let next = step(&p, &state, &cfg).unwrap();
        let mut mid = next.x.clone();
        mid[p.last()] = state.x[p.last()].clone();
        let before = lagrangian_at(&p, &state.x, &state.lambda, beta);
        let after = lagrangian_at(&p, &mid, &state.lambda, beta);
        let weight = (cfg.params.sigma_h - l_hat) / 2.0;
        let dec: f64 = (0..p.last()).map(|i| weight * (&next.x[i] - &state.x[i]).norm_squared()).sum();
        assert!(after <= before - dec + 1e-9);
        state = next;
    }
}

#[test]
fn line_search_steps_satisfy_sufficient_decrease() {
    let p = synthetic(9);
    let cfg = config(&p, Variant::LineSearch);
    let ls = cfg.line_search;
    let beta = cfg.params.beta;
    let mut state = IterateState::initial(&p, 1);
    for _ in 0..30 {
        let (next, info) = step_with_info(&p, &state, &cfg).unwrap();
        assert_eq!(info.step_sizes.len(), p.last());
        let mut x = state.x.clone();
        for i in 0..p.last() {
            let before = lagrangian_at(&p, &x, &state.lambda, beta);
            let g = p.blocks[i]
                .manifold
                .riemannian_grad(&x[i], &{
                    let gf = p.objective.partial_gradient(i, &x);
                    let y = p.residual(&x) * beta - &state.lambda;
                    gf + p.blocks[i].coupling.apply_transpose(&y, x[i].shape())
                })
                .unwrap();
            x[i] = next.x[i].clone();
            let after = lagrangian_at(&p, &x, &state.lambda, beta);
            let t = info.step_sizes[i];
            assert!(t > 0.0 && t <= ls.s);
            assert!(after <= before - 0.5 * ls.sigma * t * t * g.norm().powi(2) + 1e-12);
        }
        state = next;
    }
}

#[test]
fn unsupported_patterns_are_rejected() {
    let mut p = synthetic(1);
    p.blocks[0].regularizer = Regularizer::L1(0.1);
    let cfg = config(&p, Variant::Exact);
    assert!(matches!(step(&p, &IterateState::initial(&p, 0), &cfg), Err(Error::UnsupportedBlock { .. })));

    let mut q = synthetic(1);
    q.blocks[0].set = ConvexSet::NonnegativeOrthant;
    let cfg = config(&q, Variant::LineSearch);
    let mut s = IterateState::initial(&q, 0);
    s.x[0] = s.x[0].map(f64::abs);
    assert!(matches!(step(&q, &s, &cfg), Err(Error::UnsupportedBlock { .. })));

    let cfg = config(&synthetic(1), Variant::Stochastic);
    let r = synthetic(1);
    assert!(step(&r, &IterateState::initial(&r, 0), &cfg).is_err());
}

#[test]
fn strict_mode_rejects_infeasible_parameters() {
    let p = synthetic(1);
    let mut cfg = config(&p, Variant::Exact);
    cfg.params.gamma = 1.0;
    cfg.strict = true;
    assert!(matches!(solve(&p, &cfg), Err(Error::InfeasibleParameters(_))));
    cfg.strict = false;
    cfg.max_iters = 3;
    let out = solve(&p, &cfg).unwrap();
    assert!(!out.warnings.is_empty());
}

#[test]
fn runs_are_deterministic_per_seed() {
    let p = build_synthetic_problem(&SyntheticSpec::spheres(3, 3, 4, 5).with_noise(0.1)).unwrap();
    let cfg = config(&p, Variant::Stochastic).with_eps(0.0).with_max_iters(25).with_seed(11).with_batch(4);
    let a = solve(&p, &cfg).unwrap();
    let b = solve(&p, &cfg).unwrap();
    assert_eq!(a.trace, b.trace);
    let c = solve(&p, &cfg.clone().with_seed(12)).unwrap();
    assert_ne!(a.trace, c.trace);
}

#[test]
fn kernel_dispatch_on_euclidean_blocks() {
    let e = |set, reg| {
        BlockSpec::new("e", ManifoldSpec::euclidean(3).unwrap(), Coupling::identity(3))
            .with_set(set)
            .with_regularizer(reg)
    };
    let b = DMatrix::from_column_slice(3, 1, &[-2.0, 0.5, 4.0]);
    let whole = step::block_kernel(0, &e(ConvexSet::Whole, Regularizer::Zero), 2.0, &b).unwrap();
    assert_eq!(whole.as_slice(), &[1.0, -0.25, -2.0]);
    let nn = step::block_kernel(0, &e(ConvexSet::NonnegativeOrthant, Regularizer::Zero), 2.0, &b).unwrap();
    assert_eq!(nn.as_slice(), &[1.0, 0.0, 0.0]);
    let bx = step::block_kernel(0, &e(ConvexSet::Box { lo: -1.0, hi: 0.5 }, Regularizer::Zero), 2.0, &b).unwrap();
    assert_eq!(bx.as_slice(), &[0.5, -0.25, -1.0]);
    let l1 = step::block_kernel(0, &e(ConvexSet::Whole, Regularizer::L1(1.0)), 2.0, &b).unwrap();
    assert_eq!(l1.as_slice(), &[0.5, 0.0, -1.5]);
    let l1n = step::block_kernel(0, &e(ConvexSet::NonnegativeOrthant, Regularizer::L1(1.0)), 2.0, &b).unwrap();
    assert_eq!(l1n.as_slice(), &[0.5, 0.0, 0.0]);
    assert!(step::block_kernel(0, &e(ConvexSet::Whole, Regularizer::Zero), 0.0, &b).is_err());
}
