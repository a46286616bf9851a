//! ADMM iterations, parameter rules, potential functions and stationarity
//! diagnostics.
//!
//! All variants share Steps 2 and 3:
//!
//! ```text
//! x_N ← x_N - γ ∇_N L_β(x_1', ..., x_{N-1}', x_N, λ)
//! λ   ← λ - β (Σ A_i x_i' - b)
//! ```
//!
//! and differ in how the constrained blocks are updated in Step 1.

mod params;
mod report;
mod run;
mod step;

pub use params::{
    beta_lower_bound, check_parameters, complexity_budget, default_parameters, default_parameters_for,
    gamma_interval, jacobi_lipschitz, parameter_violations, sigma_lower_bound, BudgetInputs,
    ComplexityBudget, Parameters,
};
pub use report::{measure_stationarity, StationarityReport};
pub use run::{solve, solve_from, SolveOutput, TraceRow};
pub use step::{step, step_with_info, StepInfo};

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::Point;
use crate::problem::MultiBlockProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Exact block minimization with a proximal term.
    Exact,
    /// `f` linearized at the current point, augmented term kept exact.
    Linearized,
    /// Linearized with mini-batch stochastic gradients.
    Stochastic,
    /// Curvilinear backtracking along the Riemannian gradient.
    LineSearch,
    /// `f` and the augmented term linearized at `x^k`; blocks run in parallel.
    Jacobi,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Exact,
        Variant::Linearized,
        Variant::Stochastic,
        Variant::LineSearch,
        Variant::Jacobi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Exact => "exact",
            Variant::Linearized => "linearized",
            Variant::Stochastic => "stochastic",
            Variant::LineSearch => "linesearch",
            Variant::Jacobi => "jacobi",
        }
    }

    /// Weight `c` of the `x_N` drift term in `Ψ`.
    pub fn psi_weight(self) -> f64 {
        match self {
            Variant::Stochastic => 4.0,
            _ => 3.0,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearchParams {
    /// Initial trial step `s`.
    pub s: f64,
    /// Shrink factor `α ∈ (0, 1)`.
    pub alpha: f64,
    /// Sufficient-decrease weight `σ`.
    pub sigma: f64,
    /// Retraction constants `L₁`, `L₂` and the gradient bound `C` used in
    /// the complexity budget.
    pub l1: f64,
    pub l2: f64,
    pub c: f64,
}

impl LineSearchParams {
    /// `s = 1`, `α = 1/2`, `L₁ = 2` and `σ` twice its lower bound.
    pub fn defaults(l: f64, beta: f64) -> Self {
        let (s, alpha, l1) = (1.0, 0.5, 2.0);
        let need = (6.0 * l * l * l1 * l1 / beta).max(2.0 * alpha / s);
        Self {
            s,
            alpha,
            sigma: 2.0 * need,
            l1,
            l2: 1.0,
            c: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputChoice {
    /// The iterate selected by the minimal `θ_k`.
    KStar,
    Last,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub variant: Variant,
    pub params: Parameters,
    /// Stop once every residual is at most `eps`.
    pub eps: f64,
    pub max_iters: usize,
    /// Mini-batch size `M`, stochastic variant only.
    pub batch: usize,
    pub line_search: LineSearchParams,
    pub seed: u64,
    /// Reject parameters outside the feasible region instead of warning.
    pub strict: bool,
    pub output: OutputChoice,
}

impl SolverConfig {
    pub fn new(variant: Variant, params: Parameters) -> Self {
        Self {
            variant,
            params,
            eps: 1e-3,
            max_iters: 1000,
            batch: 1,
            line_search: LineSearchParams::defaults(params.beta / 3.0, params.beta),
            seed: 0,
            strict: false,
            output: OutputChoice::KStar,
        }
    }

    /// Defaults derived from the problem's Lipschitz constant.
    pub fn for_problem(problem: &MultiBlockProblem, variant: Variant) -> Result<Self> {
        let params = default_parameters_for(problem, variant)?;
        let mut cfg = Self::new(variant, params);
        cfg.line_search = LineSearchParams::defaults(problem.lipschitz(), params.beta);
        Ok(cfg)
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_max_iters(mut self, k: usize) -> Self {
        self.max_iters = k;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_batch(mut self, batch: usize) -> Self {
        self.batch = batch;
        self
    }
}

/// Primal blocks, multiplier and the previous last block `x̄` used by `Ψ`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub x: Vec<Point>,
    pub lambda: DVector<f64>,
    pub prev_last: Point,
    pub k: usize,
}

impl IterateState {
    pub fn new(x: Vec<Point>, lambda: DVector<f64>) -> Self {
        let prev_last = x.last().cloned().unwrap_or_else(|| Point::zeros(0, 0));
        Self {
            x,
            lambda,
            prev_last,
            k: 0,
        }
    }

    /// Random feasible blocks and `λ = ∇_N f(x)`, deterministic per seed.
    pub fn initial(problem: &MultiBlockProblem, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = problem.random_point(&mut rng);
        let g = problem.objective.partial_gradient(problem.last(), &x);
        let lambda = DVector::from_column_slice(g.as_slice());
        Self::new(x, lambda)
    }

    pub fn check(&self, problem: &MultiBlockProblem) -> Result<()> {
        if self.x.len() != problem.n_blocks() {
            return Err(Error::InvalidArgument(format!(
                "state has {} blocks, problem has {}",
                self.x.len(),
                problem.n_blocks()
            )));
        }
        for (spec, xi) in problem.blocks.iter().zip(&self.x) {
            spec.manifold.check_shape(xi)?;
        }
        if self.lambda.len() != problem.rows() {
            return Err(Error::ShapeMismatch {
                expected: (problem.rows(), 1),
                actual: (self.lambda.len(), 1),
            });
        }
        if self.prev_last.shape() != self.x[problem.last()].shape() {
            return Err(Error::ShapeMismatch {
                expected: self.x[problem.last()].shape(),
                actual: self.prev_last.shape(),
            });
        }
        Ok(())
    }
}

/// `f(x) + Σ r_i(x_i) - <Σ A_i x_i - b, λ> + (β/2)‖Σ A_i x_i - b‖²`
pub fn augmented_lagrangian(problem: &MultiBlockProblem, state: &IterateState, beta: f64) -> f64 {
    lagrangian_at(problem, &state.x, &state.lambda, beta)
}

pub(crate) fn lagrangian_at(problem: &MultiBlockProblem, x: &[Point], lambda: &DVector<f64>, beta: f64) -> f64 {
    let r = problem.residual(x);
    problem.objective.value(x) + problem.regularizer_value(x) - r.dot(lambda) + 0.5 * beta * r.norm_squared()
}

/// `L_β(x, λ) + (c/β)[(β - 1/γ)² + L²]‖x̄ - x_N‖²` with `c = 4` for the
/// stochastic variant and `c = 3` otherwise.
pub fn potential_psi(problem: &MultiBlockProblem, state: &IterateState, beta: f64, gamma: f64, variant: Variant) -> f64 {
    let l = problem.lipschitz();
    let d = beta - 1.0 / gamma;
    let drift = (&state.prev_last - &state.x[problem.last()]).norm_squared();
    augmented_lagrangian(problem, state, beta) + variant.psi_weight() / beta * (d * d + l * l) * drift
}

#[cfg(test)]
mod tests;
