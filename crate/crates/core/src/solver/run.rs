use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::params::{complexity_budget, parameter_violations, BudgetInputs, ComplexityBudget};
use super::step::Engine;
use super::{measure_stationarity, IterateState, OutputChoice, SolverConfig, StationarityReport, Variant};
use crate::error::{Error, Result};
use crate::problem::MultiBlockProblem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    /// `f + Σ r_i`
    pub objective: f64,
    pub lagrangian: f64,
    pub psi: f64,
    pub theta: f64,
    pub primal: f64,
    pub dual: f64,
    pub block_max: f64,
    pub step_norm_sq: f64,
    /// Smallest accepted line-search step.
    pub min_step: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub trace: Vec<TraceRow>,
    /// Trace iteration of the returned iterate.
    pub k_star: usize,
    /// Iterate chosen by `config.output`.
    pub best: IterateState,
    pub best_report: StationarityReport,
    pub last: IterateState,
    pub last_report: StationarityReport,
    /// Present when the problem carries lower bounds and `τ > 0`.
    pub budget: Option<ComplexityBudget>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

/// [`solve_from`] starting at [`IterateState::initial`] for `config.seed`.
pub fn solve(problem: &MultiBlockProblem, config: &SolverConfig) -> Result<SolveOutput> {
    solve_from(problem, config, IterateState::initial(problem, config.seed))
}

/// Runs up to `config.max_iters` sweeps, stopping early once every residual
/// is at most `config.eps`.
///
/// Row `t` of the trace describes `x^t`. Its `θ` is
/// `‖x^t - x^{t-1}‖² + ‖x^{t-1} - x^{t-2}‖²`, and the `θ`-selected iterate is
/// the row with the smallest `θ` among `t ≥ 2`. The line-search variant uses
/// the sum of three consecutive step lengths `Σ‖t_i g_i‖²` centred on the
/// candidate instead.
pub fn solve_from(problem: &MultiBlockProblem, config: &SolverConfig, init: IterateState) -> Result<SolveOutput> {
    if config.max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
    }
    if config.eps.is_nan() || config.eps < 0.0 {
        return Err(Error::InvalidArgument(format!("eps must be nonnegative, got {}", config.eps)));
    }
    let violations = parameter_violations(problem, config);
    if config.strict && !violations.is_empty() {
        return Err(Error::InfeasibleParameters(violations.join("; ")));
    }
    let mut warnings = violations;
    let engine = Engine::new(problem, config)?;
    init.check(problem)?;

    let mut history: VecDeque<IterateState> = VecDeque::with_capacity(3);
    history.push_back(init.clone());
    history.push_back(init);

    let mut trace = Vec::new();
    let mut steps = Vec::new();
    let mut best: Option<(f64, usize, IterateState, StationarityReport)> = None;
    let mut prev_report: Option<StationarityReport> = None;
    let mut converged = false;

    for t in 1..=config.max_iters {
        let (next, info) = engine.step(history.back().expect("history is never empty"))?;
        if history.len() == 3 {
            history.pop_front();
        }
        history.push_back(next);
        let hist = history.make_contiguous();
        let report = measure_stationarity(problem, config, hist)?;
        let cur = &hist[hist.len() - 1];
        let objective = problem.objective.value(&cur.x) + problem.regularizer_value(&cur.x);
        steps.push(info.step_norm_sq);
        trace.push(TraceRow {
            iter: t,
            objective,
            lagrangian: report.lagrangian,
            psi: report.psi,
            theta: report.theta,
            primal: report.primal,
            dual: report.dual,
            block_max: report.block_max(),
            step_norm_sq: info.step_norm_sq,
            min_step: info.step_sizes.iter().copied().reduce(f64::min),
        });

        if config.variant == Variant::LineSearch {
            // candidate x^{t-1}, scored with the steps into and out of it
            if t >= 3 {
                let score = steps[t - 3..t].iter().sum::<f64>();
                if best.as_ref().is_none_or(|b| score < b.0) {
                    let prev = &hist[hist.len() - 2];
                    let rep = prev_report.clone().expect("report of the previous iterate");
                    best = Some((score, t - 1, prev.clone(), rep));
                }
            }
        } else if t >= 2 && best.as_ref().is_none_or(|b| report.theta < b.0) {
            best = Some((report.theta, t, cur.clone(), report.clone()));
        }

        if report.is_stationary(config.eps) {
            converged = true;
            prev_report = Some(report);
            break;
        }
        prev_report = Some(report);
    }

    let last = history.back().expect("history is never empty").clone();
    let last_report = prev_report.expect("at least one step ran");
    let k_last = trace.len();
    // a converged run returns the iterate that met the tolerance
    let (k_star, best_state, best_report) = match best {
        Some((_, k, s, r)) if config.output == OutputChoice::KStar && !converged => (k, s, r),
        _ => (k_last, last.clone(), last_report.clone()),
    };

    let finite_eps = config.eps > 0.0 && config.eps.is_finite();
    let budget = BudgetInputs::from_problem(problem, trace[0].psi).filter(|_| finite_eps).and_then(|inputs| {
        complexity_budget(&inputs, config)
            .map_err(|e| warnings.push(format!("complexity budget unavailable: {e}")))
            .ok()
    });

    Ok(SolveOutput {
        trace,
        k_star,
        best: best_state,
        best_report,
        last,
        last_report,
        budget,
        converged,
        warnings,
    })
}
