use manifold_admm::applications::{
    generate_mpca_data, generate_sbm, misclassification_rate, run_community, run_max_bisection, run_mpca,
    MpcaDataSpec, MpcaParams, WeightedGraph,
};
use manifold_admm::problem::{build_synthetic_problem, SyntheticSpec};
use manifold_admm::solver::{check_parameters, solve, SolverConfig, Variant};
use manifold_admm::Error;

#[test]
fn every_variant_runs_on_a_synthetic_problem() {
    let p = build_synthetic_problem(&SyntheticSpec::spheres(3, 3, 5, 6).with_noise(0.01)).unwrap();
    for v in Variant::ALL {
        let cfg = SolverConfig::for_problem(&p, v).unwrap().with_max_iters(40).with_seed(1).with_batch(4);
        let out = solve(&p, &cfg).unwrap();
        assert!(!out.trace.is_empty(), "{v}");
        assert!(out.trace.iter().all(|r| r.psi.is_finite() && r.primal.is_finite()), "{v}");
        for (b, x) in p.blocks.iter().zip(&out.best.x) {
            assert!(b.is_feasible(x), "{v}");
        }
    }
}

#[test]
fn runs_are_reproducible_per_seed() {
    let p = build_synthetic_problem(&SyntheticSpec::spheres(9, 3, 4, 5).with_noise(0.1)).unwrap();
    let cfg = SolverConfig::for_problem(&p, Variant::Stochastic).unwrap().with_max_iters(25).with_seed(4);
    let a = solve(&p, &cfg).unwrap();
    let b = solve(&p, &cfg).unwrap();
    assert_eq!(a.trace, b.trace);
    let c = solve(&p, &cfg.clone().with_seed(5)).unwrap();
    assert_ne!(a.trace, c.trace);
}

#[test]
fn strict_mode_rejects_bad_parameters() {
    let p = build_synthetic_problem(&SyntheticSpec::spheres(2, 3, 4, 4)).unwrap();
    let mut cfg = SolverConfig::for_problem(&p, Variant::Exact).unwrap().with_max_iters(5);
    cfg.params.beta = 1e-3;
    assert!(matches!(check_parameters(&p, &cfg), Err(Error::InfeasibleParameters(_))));
    let loose = solve(&p, &cfg).unwrap();
    assert!(!loose.warnings.is_empty());
    cfg.strict = true;
    assert!(matches!(solve(&p, &cfg), Err(Error::InfeasibleParameters(_))));
}

#[test]
fn max_bisection_outputs_balanced_cuts() {
    let g = WeightedGraph::random(16, 0.4, 1, 3).unwrap();
    let p = manifold_admm::applications::build_max_bisection(&g, 0.01, 1.0).unwrap();
    let cfg = SolverConfig::for_problem(&p, Variant::Exact).unwrap().with_max_iters(30).with_seed(2);
    let run = run_max_bisection(&g, 0.01, 1.0, &cfg).unwrap();
    assert_eq!(run.labels.iter().filter(|&&l| l == 1).count(), 8);
    assert!(run.cut > 0.0);
}

#[test]
fn community_recovers_a_clear_partition() {
    let (a, truth) = generate_sbm(60, 2, 0.5, 0.02, 11).unwrap();
    let p = manifold_admm::applications::build_community(&a, 2, 50.0, Some(100.0)).unwrap();
    let cfg = SolverConfig::for_problem(&p, Variant::Linearized).unwrap().with_max_iters(300).with_seed(1);
    let run = run_community(&a, 2, 50.0, Some(100.0), &cfg).unwrap();
    assert!(misclassification_rate(&run.labels, &truth, 2).unwrap() <= 0.1);
}

#[test]
fn unpenalized_mpca_fits_the_data() {
    let spec = MpcaDataSpec::cubic(3, 8, 3, 10);
    let data = generate_mpca_data(&spec, 1).unwrap();
    let params = MpcaParams {
        alpha1: 0.0,
        alpha2: 0.0,
        ..MpcaParams::default()
    };
    let run = run_mpca(&data.observed, &data.truth, &spec.core_dims, params, 200, 1).unwrap();
    assert!(run.metrics.rel_err < 1e-3, "{:?}", run.metrics);
    assert!(run.metrics.orth_violation < 1e-3);
    assert!(run.lagrangian.last().unwrap() < &run.lagrangian[0]);
}
