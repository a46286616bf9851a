use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{lagrangian_at, IterateState, SolverConfig, Variant};
use crate::error::{Error, Result};
use crate::manifold::{ManifoldKind, Point};
use crate::problem::{BlockSpec, ConvexSet, MultiBlockProblem, Regularizer};
use crate::prox::{linear_min_on_nonneg_sphere, linear_min_on_sphere, nearest_orthogonal, scalar_lq_prox};

const MAX_SHRINKS: usize = 200;
const ROUNDOFF: f64 = 8.0 * f64::EPSILON;

/// Per-step details beyond the new state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Accepted line-search step per constrained block (line-search variant).
    pub step_sizes: Vec<f64>,
    pub shrinks: Vec<usize>,
    /// `Σ_i ‖t_i g_i‖²` including `t_N = γ` (line-search variant) or
    /// `Σ_i ‖x_i^{k+1} - x_i^k‖²` otherwise.
    pub step_norm_sq: f64,
}

/// Independent random stream for iteration `k` and block `block`.
pub(crate) fn block_rng(seed: u64, k: usize, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((k as u64) << 20) ^ block as u64);
    rng
}

/// Checks that every block can be handled by `variant` and caches the
/// scalar Gram factors `A_iᵀA_i = s_i I`.
pub(crate) struct Engine<'a> {
    pub problem: &'a MultiBlockProblem,
    pub config: &'a SolverConfig,
    gram: Vec<f64>,
}

fn unsupported(block: usize, spec: &BlockSpec, why: &str) -> Error {
    Error::UnsupportedBlock {
        block,
        pattern: format!(
            "{:?} / {:?} / {:?}: {why}",
            spec.manifold.kind, spec.set, spec.regularizer
        ),
    }
}

impl<'a> Engine<'a> {
    pub fn new(problem: &'a MultiBlockProblem, config: &'a SolverConfig) -> Result<Self> {
        problem.require_basic()?;
        let p = &config.params;
        if !(p.beta > 0.0 && p.gamma > 0.0 && p.sigma_h >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need beta > 0, gamma > 0, sigma_h >= 0, got {p:?}"
            )));
        }
        let obj = &problem.objective;
        let variant = config.variant;
        let mut gram = vec![0.0; problem.n_blocks()];
        for (i, spec) in problem.blocks[..problem.last()].iter().enumerate() {
            match variant {
                Variant::LineSearch => {
                    if spec.set != ConvexSet::Whole || !spec.regularizer.is_zero() {
                        return Err(unsupported(i, spec, "line search needs X = whole space and r = 0"));
                    }
                }
                Variant::Jacobi => {
                    if !spec.has_kernel() {
                        return Err(unsupported(i, spec, "no closed-form kernel"));
                    }
                }
                _ => {
                    if !spec.has_kernel() {
                        return Err(unsupported(i, spec, "no closed-form kernel"));
                    }
                    gram[i] = spec
                        .coupling
                        .gram_scale()
                        .ok_or_else(|| unsupported(i, spec, "coupling must satisfy AᵀA = sI"))?;
                    if variant == Variant::Exact && obj.block_curvature(i).is_none() {
                        return Err(unsupported(
                            i,
                            spec,
                            "exact minimization needs f to be an isotropic quadratic in this block",
                        ));
                    }
                }
            }
        }
        if variant == Variant::Stochastic && obj.noise_variance().is_none() {
            return Err(Error::InvalidArgument(
                "stochastic variant needs a stochastic gradient oracle".into(),
            ));
        }
        if variant == Variant::LineSearch {
            let ls = &config.line_search;
            if !(ls.s > 0.0 && ls.alpha > 0.0 && ls.alpha < 1.0 && ls.sigma > 0.0) {
                return Err(Error::InvalidArgument(format!("bad line-search constants {ls:?}")));
            }
        }
        if variant == Variant::Stochastic && config.batch == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        Ok(Self { problem, config, gram })
    }

    /// `∇_i [f - <λ, Σ A x - b> + (β/2)‖Σ A x - b‖²]` given `∇_i f` and the residual.
    fn smooth_grad(&self, i: usize, gf: &Point, res: &DVector<f64>, lambda: &DVector<f64>) -> Point {
        let beta = self.config.params.beta;
        let y = res * beta - lambda;
        gf + self.problem.blocks[i].coupling.apply_transpose(&y, gf.shape())
    }

    pub fn step(&self, state: &IterateState) -> Result<(IterateState, StepInfo)> {
        state.check(self.problem)?;
        let problem = self.problem;
        let cfg = self.config;
        let beta = cfg.params.beta;
        let n = problem.last();
        let mut x = state.x.clone();
        let mut res = problem.residual(&x);
        let mut info = StepInfo::default();

        match cfg.variant {
            Variant::Jacobi => {
                let grads = problem.objective.gradient(&x);
                let sigma = cfg.params.sigma_h;
                let updated: Result<Vec<Point>> = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let g = self.smooth_grad(i, &grads[i], &res, &state.lambda);
                        let b = g - &x[i] * sigma;
                        block_kernel(i, &problem.blocks[i], sigma, &b)
                    })
                    .collect();
                for (i, xi) in updated?.into_iter().enumerate() {
                    res += problem.blocks[i].coupling.apply(&(&xi - &x[i]));
                    info.step_norm_sq += (&xi - &x[i]).norm_squared();
                    x[i] = xi;
                }
            }
            Variant::LineSearch => {
                let ls = &cfg.line_search;
                for i in 0..n {
                    let spec = &problem.blocks[i];
                    let gf = problem.objective.partial_gradient(i, &x);
                    let ge = self.smooth_grad(i, &gf, &res, &state.lambda);
                    let g = spec.manifold.tangent_project(&x[i], &ge)?.into_direction();
                    let gn2 = g.norm_squared();
                    let old = x[i].clone();
                    let l_old = lagrangian_at(problem, &x, &state.lambda, beta);
                    // decreases below the rounding error of L_β cannot be certified
                    let slack = ROUNDOFF * l_old.abs().max(1.0);
                    let mut t = ls.s;
                    let mut shrinks = 0;
                    let neg = -&g;
                    loop {
                        let cand = spec.manifold.retract(&old, &neg, t)?;
                        x[i] = cand;
                        let l_new = lagrangian_at(problem, &x, &state.lambda, beta);
                        if gn2 == 0.0 || l_new <= l_old - 0.5 * ls.sigma * t * t * gn2 + slack {
                            break;
                        }
                        shrinks += 1;
                        if shrinks > MAX_SHRINKS {
                            return Err(Error::LineSearchFailed { block: i, shrinks });
                        }
                        t *= ls.alpha;
                    }
                    res += spec.coupling.apply(&(&x[i] - &old));
                    info.step_sizes.push(t);
                    info.shrinks.push(shrinks);
                    info.step_norm_sq += t * t * gn2;
                }
            }
            variant => {
                let sigma = cfg.params.sigma_h;
                for i in 0..n {
                    let spec = &problem.blocks[i];
                    let gf = if variant == Variant::Stochastic {
                        let mut rng = block_rng(cfg.seed, state.k, i);
                        problem
                            .objective
                            .stochastic_partial_gradient(i, &x, cfg.batch, &mut rng)
                            .ok_or(Error::InvalidArgument("missing stochastic gradient".into()))?
                    } else {
                        problem.objective.partial_gradient(i, &x)
                    };
                    let curvature = match variant {
                        Variant::Exact => problem.objective.block_curvature(i).unwrap_or(0.0),
                        _ => 0.0,
                    };
                    let q = curvature + beta * self.gram[i] + sigma;
                    let b = self.smooth_grad(i, &gf, &res, &state.lambda) - &x[i] * q;
                    let xi = block_kernel(i, spec, q, &b)?;
                    res += spec.coupling.apply(&(&xi - &x[i]));
                    info.step_norm_sq += (&xi - &x[i]).norm_squared();
                    x[i] = xi;
                }
            }
        }

        // Step 2
        let gf_n = if cfg.variant == Variant::Stochastic {
            let mut rng = block_rng(cfg.seed, state.k, n);
            problem
                .objective
                .stochastic_partial_gradient(n, &x, cfg.batch, &mut rng)
                .ok_or(Error::InvalidArgument("missing stochastic gradient".into()))?
        } else {
            problem.objective.partial_gradient(n, &x)
        };
        let g_n = self.smooth_grad(n, &gf_n, &res, &state.lambda);
        let step_n = g_n * cfg.params.gamma;
        info.step_norm_sq += step_n.norm_squared();
        let old_n = x[n].clone();
        x[n] = &old_n - &step_n;
        res += DVector::from_column_slice((&x[n] - &old_n).as_slice());

        // Step 3
        let lambda = &state.lambda - res * beta;
        if !lambda.iter().all(|v| v.is_finite()) || !x.iter().all(|xi| xi.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("iterate diverged"));
        }
        Ok((
            IterateState {
                x,
                lambda,
                prev_last: old_n,
                k: state.k + 1,
            },
            info,
        ))
    }
}

/// Minimizes `(q/2)‖x‖² + <b, x> + r(x)` over the block's feasible set.
pub(crate) fn block_kernel(index: usize, spec: &BlockSpec, q: f64, b: &Point) -> Result<Point> {
    let zero = spec.regularizer.is_zero();
    let need_q = || {
        if q > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "block {index}: Euclidean subproblem needs positive curvature, got {q}"
            )))
        }
    };
    match (spec.manifold.kind, spec.set) {
        (ManifoldKind::Sphere(_), ConvexSet::Whole) if zero => linear_min_on_sphere(b),
        (ManifoldKind::Sphere(_), ConvexSet::NonnegativeOrthant) if zero => linear_min_on_nonneg_sphere(b),
        (ManifoldKind::Stiefel { .. }, ConvexSet::Whole) if zero => nearest_orthogonal(&(-b)),
        (ManifoldKind::Euclidean(_), set) => {
            need_q()?;
            match (set, spec.regularizer) {
                (ConvexSet::Whole, _) if zero => Ok(b / -q),
                (ConvexSet::NonnegativeOrthant, _) if zero => Ok(b.map(|v| (-v / q).max(0.0))),
                (ConvexSet::Box { lo, hi }, _) if zero => Ok(b.map(|v| (-v / q).clamp(lo, hi))),
                (ConvexSet::NonnegativeOrthant, Regularizer::L1(w)) => Ok(b.map(|v| (-(v + w) / q).max(0.0))),
                (ConvexSet::Whole, reg) => {
                    let mut out = b.clone();
                    for v in out.iter_mut() {
                        *v = scalar_lq_prox(&reg.scalar_spec(q / 2.0, *v))?;
                    }
                    Ok(out)
                }
                _ => Err(unsupported(index, spec, "no closed-form kernel")),
            }
        }
        _ => Err(unsupported(index, spec, "no closed-form kernel")),
    }
}

/// One full sweep of the configured variant.
pub fn step(problem: &MultiBlockProblem, state: &IterateState, config: &SolverConfig) -> Result<IterateState> {
    step_with_info(problem, state, config).map(|(s, _)| s)
}

/// [`step`] plus accepted line-search steps and step lengths.
pub fn step_with_info(
    problem: &MultiBlockProblem,
    state: &IterateState,
    config: &SolverConfig,
) -> Result<(IterateState, StepInfo)> {
    Engine::new(problem, config)?.step(state)
}
