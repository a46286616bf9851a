use serde::{Deserialize, Serialize};

use super::{SolverConfig, Variant};
use crate::error::{Error, Result};
use crate::problem::MultiBlockProblem;

/// Penalty `β`, dual step `γ` and proximal weight `σ_H` (`H_i = σ_H I`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub beta: f64,
    pub gamma: f64,
    pub sigma_h: f64,
}

/// Smallest admissible penalty: `β` must exceed this value.
pub fn beta_lower_bound(l: f64, variant: Variant) -> f64 {
    match variant {
        Variant::Stochastic => {
            let lp = l + 1.0;
            (8.0 * lp + 8.0 * (lp * lp + 34.0 * l * l).sqrt()) / 17.0
        }
        _ => (6.0 + 18.0 * 3f64.sqrt()) / 13.0 * l,
    }
}

/// Open interval of admissible `γ` for a given `β`, `None` when empty.
pub fn gamma_interval(l: f64, beta: f64, variant: Variant) -> Option<(f64, f64)> {
    let (a, b, c, num) = match variant {
        Variant::Stochastic => (17.0, 16.0 * (l + 1.0), 128.0 * l * l, 16.0),
        _ => (13.0, 12.0 * l, 72.0 * l * l, 12.0),
    };
    let disc = a * beta * beta - b * beta - c;
    if !(disc > 0.0) {
        return None;
    }
    let s = disc.sqrt();
    let hi_den = a * beta - s;
    if !(hi_den > 0.0) {
        return None;
    }
    Some((num / (a * beta + s), num / hi_den))
}

/// Lower bound that `σ_H` must exceed.
pub fn sigma_lower_bound(l: f64, beta: f64, variant: Variant, l_hat: f64) -> f64 {
    match variant {
        Variant::Exact => 6.0 * l * l / beta,
        Variant::Linearized => 6.0 * l * l / beta + l,
        Variant::Jacobi => 6.0 * l * l / beta + l_hat,
        Variant::Stochastic => 8.0 * l * l / beta + l + 1.0,
        // the line-search variant has its own σ; σ_H is unused
        Variant::LineSearch => 0.0,
    }
}

/// `L̂ = L + βN max_i ‖A_i‖²`, the constant that replaces `L` for Jacobi updates.
pub fn jacobi_lipschitz(l: f64, beta: f64, blocks: usize, a_max: f64) -> f64 {
    l + beta * blocks as f64 * a_max * a_max
}

/// Default `(β, γ, σ_H)` for a Lipschitz constant `L`.
///
/// `β = 3L` (1.01 times the lower bound for the stochastic variant), `γ` is
/// the midpoint of the admissible interval and `σ_H` is twice its lower
/// bound. The Jacobi variant needs `max_i ‖A_i‖`; use
/// [`default_parameters_for`] there.
pub fn default_parameters(l: f64, variant: Variant) -> Result<Parameters> {
    default_parameters_inner(l, variant, 1, 1.0)
}

/// [`default_parameters`] using the problem's `L`, block count and couplings.
pub fn default_parameters_for(problem: &MultiBlockProblem, variant: Variant) -> Result<Parameters> {
    default_parameters_inner(problem.lipschitz(), variant, problem.n_blocks(), problem.max_coupling_norm())
}

fn default_parameters_inner(l: f64, variant: Variant, blocks: usize, a_max: f64) -> Result<Parameters> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::InvalidArgument(format!("Lipschitz constant must be positive, got {l}")));
    }
    let beta = match variant {
        Variant::Stochastic => 1.01 * beta_lower_bound(l, variant),
        _ => 3.0 * l,
    };
    let (lo, hi) = gamma_interval(l, beta, variant).expect("default beta lies in the feasible region");
    let gamma = 0.5 * (lo + hi);
    let l_hat = jacobi_lipschitz(l, beta, blocks, a_max);
    let sigma_h = 2.0 * sigma_lower_bound(l, beta, variant, l_hat);
    let p = Parameters { beta, gamma, sigma_h };
    debug_assert!(check_core(l, &p, variant, l_hat).is_empty());
    Ok(p)
}

fn check_core(l: f64, p: &Parameters, variant: Variant, l_hat: f64) -> Vec<String> {
    let mut out = Vec::new();
    let bl = beta_lower_bound(l, variant);
    if !(p.beta > bl) {
        out.push(format!("beta = {} must exceed {bl:.6}", p.beta));
    }
    match gamma_interval(l, p.beta, variant) {
        Some((lo, hi)) if p.gamma > lo && p.gamma < hi => {}
        Some((lo, hi)) => out.push(format!("gamma = {} must lie in ({lo:.6}, {hi:.6})", p.gamma)),
        None => out.push(format!("no admissible gamma for beta = {}", p.beta)),
    }
    if variant != Variant::LineSearch {
        let sl = sigma_lower_bound(l, p.beta, variant, l_hat);
        if !(p.sigma_h > sl) {
            out.push(format!("sigma_h = {} must exceed {sl:.6}", p.sigma_h));
        }
    }
    out
}

/// Every violated feasibility condition for `config` on `problem`, empty
/// when the parameters are admissible.
pub fn parameter_violations(problem: &MultiBlockProblem, config: &SolverConfig) -> Vec<String> {
    let l = problem.lipschitz();
    let p = &config.params;
    let l_hat = jacobi_lipschitz(l, p.beta, problem.n_blocks(), problem.max_coupling_norm());
    let mut out = check_core(l, p, config.variant, l_hat);
    if config.variant == Variant::LineSearch {
        let ls = &config.line_search;
        let need = (6.0 * l * l * ls.l1 * ls.l1 / p.beta).max(2.0 * ls.alpha / ls.s);
        if !(ls.sigma > need) {
            out.push(format!("line-search sigma = {} must exceed {need:.6}", ls.sigma));
        }
    }
    if config.variant == Variant::Stochastic && problem.objective.noise_variance().is_none() {
        out.push("stochastic variant needs an objective with a stochastic gradient oracle".into());
    }
    out
}

/// Checks `config` against the feasibility rules.
pub fn check_parameters(problem: &MultiBlockProblem, config: &SolverConfig) -> Result<()> {
    let v = parameter_violations(problem, config);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::InfeasibleParameters(v.join("; ")))
    }
}

/// Constants of the iteration-complexity bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityBudget {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    /// Stochastic variant only.
    pub kappa4: Option<f64>,
    pub tau: f64,
    /// Predicted iteration count `K(ε)`, possibly huge.
    pub iterations: f64,
    /// Smallest admissible batch size `M(ε)`, stochastic variant only.
    pub batch: Option<f64>,
}

/// Problem constants consumed by [`complexity_budget`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetInputs {
    pub lipschitz: f64,
    pub blocks: usize,
    pub a_max: f64,
    /// `Ψ` at the first iterate.
    pub psi1: f64,
    pub f_star: f64,
    pub r_star: f64,
    /// `σ²` of the gradient oracle.
    pub noise_variance: f64,
}

impl BudgetInputs {
    pub fn from_problem(problem: &MultiBlockProblem, psi1: f64) -> Option<Self> {
        let lb = problem.lower_bounds?;
        Some(Self {
            lipschitz: problem.lipschitz(),
            blocks: problem.n_blocks(),
            a_max: problem.max_coupling_norm(),
            psi1,
            f_star: lb.objective,
            r_star: lb.regularizers,
            noise_variance: problem.objective.noise_variance().unwrap_or(0.0),
        })
    }
}

/// `κ` constants, `τ` and the predicted iteration budget `K(ε)` for the
/// configured variant. Errors when `τ ≤ 0`.
pub fn complexity_budget(inputs: &BudgetInputs, config: &SolverConfig) -> Result<ComplexityBudget> {
    let BudgetInputs {
        lipschitz: l,
        blocks: n,
        a_max,
        psi1,
        f_star,
        r_star,
        noise_variance: var,
    } = *inputs;
    let Parameters { beta, gamma, sigma_h } = config.params;
    let eps = config.eps;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("complexity budget needs a finite eps > 0, got {eps}")));
    }
    let d = beta - 1.0 / gamma;
    let sqrt_n = (n as f64).sqrt();
    let a2 = a_max * a_max;
    let gap = psi1 - r_star - f_star;
    let base_n = (beta + l) / 2.0 - 1.0 / gamma;

    let budget = match config.variant {
        Variant::Exact | Variant::Linearized | Variant::Jacobi => {
            let l_hat = jacobi_lipschitz(l, beta, n, a_max);
            let block_tau = match config.variant {
                Variant::Exact => sigma_h / 2.0 - 3.0 * l * l / beta,
                Variant::Linearized => sigma_h / 2.0 - 3.0 * l * l / beta - l / 2.0,
                _ => sigma_h / 2.0 - 3.0 * l * l / beta - l_hat / 2.0,
            };
            let coef_n = base_n + 6.0 / beta * d * d + 3.0 * l * l / beta;
            let tau = (-coef_n).min(block_tau);
            let k1 = 3.0 / (beta * beta) * (d * d + l * l);
            let k2 = (d.abs() + l).powi(2);
            let k3 = (l + beta * sqrt_n * a2 + sigma_h).powi(2);
            let k = 2.0 * k1.max(k2).max(k3) / (tau * eps * eps) * gap;
            ComplexityBudget {
                kappa1: k1,
                kappa2: k2,
                kappa3: k3,
                kappa4: None,
                tau,
                iterations: k.ceil(),
                batch: None,
            }
        }
        Variant::Stochastic => {
            let coef_n = base_n + 8.0 / beta * d * d + 4.0 * l * l / beta + 0.5;
            let block_tau = sigma_h / 2.0 - 4.0 * l * l / beta - (l + 1.0) / 2.0;
            let tau = (-coef_n).min(block_tau);
            let k1 = 4.0 / (beta * beta) * (d * d + l * l);
            let k2 = 3.0 * (d.abs() + l).powi(2);
            let k3 = 2.0 * (l + beta * sqrt_n * a2 + sigma_h).powi(2);
            let k4 = 2.0 / tau * (8.0 / beta + n as f64 / 2.0);
            let kmax = k1.max(k2).max(k3);
            let k = 4.0 * kmax / (tau * eps * eps) * (gap + 2.0 * var / beta);
            let m = 2.0 * var / (eps * eps)
                * (k1 * k4 + 8.0 / (beta * beta)).max(k2 * k4 + 3.0).max(k3 * k4 + 2.0);
            ComplexityBudget {
                kappa1: k1,
                kappa2: k2,
                kappa3: k3,
                kappa4: Some(k4),
                tau,
                iterations: k.ceil(),
                batch: Some(m.ceil()),
            }
        }
        Variant::LineSearch => {
            let ls = &config.line_search;
            let l1 = ls.l1;
            let coef_n = base_n + 6.0 / beta * d * d + 3.0 * l * l / beta;
            let tau = (-coef_n).min(ls.sigma / 2.0 - 3.0 * l * l * l1 * l1 / beta);
            let k1 = 3.0 / (beta * beta) * (d * d + l * l * (l1 * l1).max(1.0));
            let k2 = (d.abs() + l).powi(2);
            let k3 = ((l + sqrt_n * beta * a2) * l1.max(1.0)
                + (ls.sigma + 2.0 * ls.l2 * ls.c + (l + beta * a2) * l1 * l1) / (2.0 * ls.alpha)
                + beta * a_max * k1.sqrt())
            .powi(2);
            let k = 3.0 * k1.max(k2).max(k3) / (tau * eps * eps) * (psi1 - f_star);
            ComplexityBudget {
                kappa1: k1,
                kappa2: k2,
                kappa3: k3,
                kappa4: None,
                tau,
                iterations: k.ceil(),
                batch: None,
            }
        }
    };
    if !(budget.tau > 0.0) {
        return Err(Error::InfeasibleParameters(format!(
            "tau = {:.6e} is not positive",
            budget.tau
        )));
    }
    Ok(budget)
}
