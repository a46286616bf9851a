use std::path::{Path, PathBuf};

use manifold_admm::applications::maxbisect::BRUTE_FORCE_MAX_NODES;
use manifold_admm::applications::{
    brute_force_bisection, build_community, build_max_bisection, generate_mpca_data, generate_sbm,
    misclassification_rate, run_community, run_max_bisection, run_mpca, CutSummary, DenseTensor, MpcaDataSpec,
    MpcaMetrics, MpcaParams, WeightedGraph,
};
use manifold_admm::io;
use manifold_admm::problem::{build_synthetic_problem, SyntheticSpec};
use manifold_admm::solver::{
    parameter_violations, solve, ComplexityBudget, Parameters, SolveOutput, SolverConfig, StationarityReport, Variant,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{CommunityArgs, MaxbisectArgs, MpcaArgs, RunArgs, SolveArgs, SynthArgs, SynthKind};
use crate::output::{ensure_dir, trace_path, verify_all, write_csv, write_json, write_text, TraceCheck};
use crate::settings::{CliError, CliResult, Defaults, Settings};

fn par_seeds<T: Send>(seeds: &[u64], f: impl Fn(u64) -> CliResult<T> + Sync) -> CliResult<Vec<T>> {
    seeds.par_iter().map(|&s| f(s)).collect()
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "instance".into())
}

fn no_lipschitz(s: &Settings, command: &str) -> CliResult<()> {
    match s.lipschitz {
        Some(_) => Err(CliError::Input(format!(
            "--lipschitz is not used by {command}; its constant comes from the instance"
        ))),
        None => Ok(()),
    }
}

fn check_verifiable(run: &RunArgs, variant: Variant) -> CliResult<()> {
    if run.verify_trace && variant == Variant::Stochastic {
        return Err(CliError::Input(
            "--verify-trace applies to deterministic variants; psi is only monotone in expectation for stochastic runs"
                .into(),
        ));
    }
    Ok(())
}

/// Runs the trace check when requested and fails if any trace rises.
fn finish_traces(run: &RunArgs, traces: &[PathBuf]) -> CliResult<Option<Vec<TraceCheck>>> {
    if !run.verify_trace {
        return Ok(None);
    }
    let checks = verify_all(traces)?;
    Ok(Some(checks))
}

fn trace_failure(checks: &Option<Vec<TraceCheck>>) -> CliResult<()> {
    if let Some(bad) = checks.as_ref().and_then(|c| c.iter().find(|c| !c.ok)) {
        return Err(CliError::Run(format!("psi rises by {:.3e} in {}", bad.max_rise, bad.file)));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct RunHeader {
    command: &'static str,
    variant: Variant,
    iters: usize,
    eps: f64,
    seeds: Vec<u64>,
}

impl RunHeader {
    fn new(command: &'static str, s: &Settings) -> Self {
        Self {
            command,
            variant: s.variant,
            iters: s.iters,
            eps: s.eps,
            seeds: s.seeds.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
struct SolveFacts {
    iterations: usize,
    k_star: usize,
    converged: bool,
    warnings: Vec<String>,
}

impl SolveFacts {
    fn from(out: &SolveOutput) -> Self {
        Self {
            iterations: out.trace.last().map_or(0, |r| r.iter),
            k_star: out.k_star,
            converged: out.converged,
            warnings: out.warnings.clone(),
        }
    }
}

// maxbisect

#[derive(Debug, Serialize)]
struct BisectionSeed {
    seed: u64,
    cut: f64,
    ratio: Option<f64>,
    #[serde(flatten)]
    solve: SolveFacts,
}

#[derive(Debug, Serialize)]
struct BisectionInstance {
    instance: String,
    nodes: usize,
    edges: usize,
    params: Parameters,
    violations: Vec<String>,
    optimum: Option<f64>,
    summary: CutSummary,
    mean_ratio: Option<f64>,
    runs: Vec<BisectionSeed>,
}

#[derive(Debug, Serialize)]
struct BisectionSummary {
    #[serde(flatten)]
    header: RunHeader,
    mu: f64,
    nu: f64,
    instances: Vec<BisectionInstance>,
    trace_checks: Option<Vec<TraceCheck>>,
}

pub fn maxbisect(a: &MaxbisectArgs) -> CliResult<()> {
    let s = Settings::resolve(
        &a.run,
        Defaults {
            variant: Variant::Exact,
            iters: 30,
            eps: 0.0,
            seeds: (0, 20),
        },
    )?;
    no_lipschitz(&s, "maxbisect")?;
    check_verifiable(&a.run, s.variant)?;
    let graphs = a
        .graphs
        .iter()
        .map(|p| Ok((stem(p), io::read_graph(p)?)))
        .collect::<CliResult<Vec<(String, WeightedGraph)>>>()?;
    if a.brute_force {
        if let Some((name, g)) = graphs.iter().find(|(_, g)| g.n() > BRUTE_FORCE_MAX_NODES) {
            return Err(CliError::Input(format!(
                "--brute-force handles at most {BRUTE_FORCE_MAX_NODES} nodes, {name} has {}",
                g.n()
            )));
        }
    }
    ensure_dir(&a.run.out)?;
    let mut instances = Vec::new();
    let mut traces = Vec::new();
    for (name, g) in &graphs {
        let problem = build_max_bisection(g, a.mu, a.nu)?;
        let cfg = s.apply(SolverConfig::for_problem(&problem, s.variant)?);
        let violations = parameter_violations(&problem, &cfg);
        if s.strict && !violations.is_empty() {
            return Err(CliError::Infeasible(violations.join("; ")));
        }
        let optimum = if a.brute_force { Some(brute_force_bisection(g.weights())?.0) } else { None };
        let runs = par_seeds(&s.seeds, |seed| {
            let run = run_max_bisection(g, a.mu, a.nu, &cfg.clone().with_seed(seed))?;
            let path = trace_path(&a.run.out, "maxbisect", name, seed);
            write_csv(&path, &run.output.trace)?;
            Ok((
                path,
                BisectionSeed {
                    seed,
                    cut: run.cut,
                    ratio: optimum.map(|o| if o > 0.0 { run.cut / o } else { 1.0 }),
                    solve: SolveFacts::from(&run.output),
                },
            ))
        })?;
        let (paths, runs): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
        traces.extend(paths);
        let cuts: Vec<f64> = runs.iter().map(|r| r.cut).collect();
        let summary = CutSummary::from_cuts(&cuts);
        let mean_ratio = optimum.map(|_| runs.iter().filter_map(|r| r.ratio).sum::<f64>() / runs.len() as f64);
        match (optimum, mean_ratio) {
            (Some(o), Some(r)) => println!(
                "{name}: mean cut {:.4} sd {:.4} best {:.4} optimum {o:.4} mean ratio {r:.4}",
                summary.mean, summary.sd, summary.best
            ),
            _ => println!("{name}: mean cut {:.4} sd {:.4} best {:.4}", summary.mean, summary.sd, summary.best),
        }
        instances.push(BisectionInstance {
            instance: name.clone(),
            nodes: g.n(),
            edges: g.edges().len(),
            params: cfg.params,
            violations,
            optimum,
            summary,
            mean_ratio,
            runs,
        });
    }
    let trace_checks = finish_traces(&a.run, &traces)?;
    write_json(
        &a.run.out.join("maxbisect_summary.json"),
        &BisectionSummary {
            header: RunHeader::new("maxbisect", &s),
            mu: a.mu,
            nu: a.nu,
            instances,
            trace_checks: trace_checks.clone(),
        },
    )?;
    trace_failure(&trace_checks)
}

// mpca

#[derive(Debug, Serialize)]
struct LagrangianRow {
    iter: usize,
    lagrangian: f64,
}

#[derive(Debug, Serialize)]
struct MpcaSeed {
    seed: u64,
    err1: f64,
    sd: f64,
    err2: f64,
    spars1: f64,
    spars2: f64,
    final_lagrangian: f64,
}

impl MpcaSeed {
    fn new(seed: u64, m: &MpcaMetrics, last: f64) -> Self {
        Self {
            seed,
            err1: m.rel_err,
            sd: m.rel_err_sd,
            err2: m.orth_violation,
            spars1: m.core_sparsity,
            spars2: m.factor_sparsity,
            final_lagrangian: last,
        }
    }
}

#[derive(Debug, Serialize)]
struct MpcaSummary {
    command: &'static str,
    iters: usize,
    seeds: Vec<u64>,
    params: MpcaParams,
    /// `truth` when noise-free tensors were available, otherwise `observed`.
    reference: &'static str,
    mean: MpcaMean,
    runs: Vec<MpcaSeed>,
}

#[derive(Debug, Serialize)]
struct MpcaMean {
    err1: f64,
    err2: f64,
    spars1: f64,
    spars2: f64,
}

fn read_tensors(paths: &[PathBuf]) -> CliResult<Vec<DenseTensor>> {
    Ok(paths.iter().map(|p| io::read_tensor(p)).collect::<manifold_admm::Result<Vec<_>>>()?)
}

pub fn mpca(a: &MpcaArgs) -> CliResult<()> {
    let s = Settings::resolve(
        &a.run,
        Defaults {
            variant: Variant::Exact,
            iters: 100,
            eps: 0.0,
            seeds: (0, 1),
        },
    )?;
    if a.run.variant.is_some() || a.run.batch.is_some() || a.run.eps.is_some() {
        return Err(CliError::Input("mpca takes no --variant, --batch or --eps; it runs a fixed number of sweeps".into()));
    }
    if a.run.verify_trace {
        return Err(CliError::Input("mpca traces record the augmented Lagrangian, not psi; drop --verify-trace".into()));
    }
    let mut params = match s.lipschitz {
        Some(l) => MpcaParams::defaults(l)?,
        None => MpcaParams::default(),
    };
    params.alpha1 = a.alpha1;
    params.alpha2 = a.alpha2;
    params.mu = a.mu;
    if let Some(b) = s.beta {
        params.beta = b;
    }
    if let Some(sg) = s.sigma_h {
        params.sigma = sg;
    }
    if let Some(g) = s.gamma {
        params.eta = g;
    }

    let files = if a.tensors.is_empty() {
        if !a.truth.is_empty() {
            return Err(CliError::Input("--truth needs --tensor".into()));
        }
        None
    } else {
        let observed = read_tensors(&a.tensors)?;
        let truth = read_tensors(&a.truth)?;
        if !truth.is_empty() && truth.len() != observed.len() {
            return Err(CliError::Input(format!("{} truth tensors for {} observed", truth.len(), observed.len())));
        }
        let order = observed[0].order();
        let core_dims = match a.core_dims.len() {
            0 => vec![a.core; order],
            n if n == order => a.core_dims.clone(),
            n => return Err(CliError::Input(format!("--core-dims has {n} entries for order-{order} tensors"))),
        };
        Some((observed, truth, core_dims))
    };
    let spec = MpcaDataSpec {
        noise: a.noise,
        ..MpcaDataSpec::cubic(a.order, a.size, a.core, a.count)
    };
    ensure_dir(&a.run.out)?;
    let runs = par_seeds(&s.seeds, |seed| {
        let (generated, instance);
        let (observed, truth, core_dims) = match &files {
            Some((o, t, c)) => {
                instance = stem(&a.tensors[0]);
                (o, if t.is_empty() { o } else { t }, c)
            }
            None => {
                generated = generate_mpca_data(&spec, seed)?;
                instance = "synthetic".to_string();
                (&generated.observed, &generated.truth, &spec.core_dims)
            }
        };
        let run = run_mpca(observed, truth, core_dims, params, s.iters, seed)?;
        let rows: Vec<LagrangianRow> = run
            .lagrangian
            .iter()
            .enumerate()
            .map(|(iter, &lagrangian)| LagrangianRow { iter, lagrangian })
            .collect();
        write_csv(&trace_path(&a.run.out, "mpca", &instance, seed), &rows)?;
        Ok(MpcaSeed::new(seed, &run.metrics, *run.lagrangian.last().expect("initial value recorded")))
    })?;
    let n = runs.len() as f64;
    let mean = MpcaMean {
        err1: runs.iter().map(|r| r.err1).sum::<f64>() / n,
        err2: runs.iter().map(|r| r.err2).sum::<f64>() / n,
        spars1: runs.iter().map(|r| r.spars1).sum::<f64>() / n,
        spars2: runs.iter().map(|r| r.spars2).sum::<f64>() / n,
    };
    println!(
        "mpca: err1 {:.4e} err2 {:.3e} spars1 {:.4} spars2 {:.4} over {} seed(s)",
        mean.err1,
        mean.err2,
        mean.spars1,
        mean.spars2,
        runs.len()
    );
    let reference = match &files {
        Some((_, t, _)) if t.is_empty() => "observed",
        _ => "truth",
    };
    write_json(
        &a.run.out.join("mpca_summary.json"),
        &MpcaSummary {
            command: "mpca",
            iters: s.iters,
            seeds: s.seeds.clone(),
            params,
            reference,
            mean,
            runs,
        },
    )
}

// community

#[derive(Debug, Serialize)]
struct CommunitySeed {
    seed: u64,
    error_rate: f64,
    #[serde(flatten)]
    solve: SolveFacts,
}

#[derive(Debug, Serialize)]
struct CommunitySummary {
    #[serde(flatten)]
    header: RunHeader,
    instance: String,
    nodes: usize,
    communities: usize,
    mu: f64,
    lipschitz: f64,
    params: Parameters,
    violations: Vec<String>,
    mean_error: f64,
    sd_error: f64,
    best_error: f64,
    runs: Vec<CommunitySeed>,
    trace_checks: Option<Vec<TraceCheck>>,
}

pub const COMMUNITY_LIPSCHITZ: f64 = 100.0;

pub fn community(a: &CommunityArgs) -> CliResult<()> {
    let s = Settings::resolve(
        &a.run,
        Defaults {
            variant: Variant::Linearized,
            iters: 300,
            eps: 0.0,
            seeds: (0, 20),
        },
    )?;
    check_verifiable(&a.run, s.variant)?;
    let adj = io::read_adjacency(&a.graph)?;
    let truth = io::read_labels(&a.labels)?;
    if truth.len() != adj.nrows() {
        return Err(CliError::Input(format!(
            "{} labels for a graph with {} nodes",
            truth.len(),
            adj.nrows()
        )));
    }
    let k = truth.iter().copied().max().unwrap_or(0);
    let l = s.lipschitz.unwrap_or(COMMUNITY_LIPSCHITZ);
    let problem = build_community(&adj, k, a.mu, Some(l))?;
    let cfg = s.apply(SolverConfig::for_problem(&problem, s.variant)?);
    let violations = parameter_violations(&problem, &cfg);
    if s.strict && !violations.is_empty() {
        return Err(CliError::Infeasible(violations.join("; ")));
    }
    ensure_dir(&a.run.out)?;
    let instance = stem(&a.graph);
    let runs = par_seeds(&s.seeds, |seed| {
        let run = run_community(&adj, k, a.mu, Some(l), &cfg.clone().with_seed(seed))?;
        let path = trace_path(&a.run.out, "community", &instance, seed);
        write_csv(&path, &run.output.trace)?;
        Ok((
            path,
            CommunitySeed {
                seed,
                error_rate: misclassification_rate(&run.labels, &truth, k)?,
                solve: SolveFacts::from(&run.output),
            },
        ))
    })?;
    let (traces, runs): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let errs: Vec<f64> = runs.iter().map(|r| r.error_rate).collect();
    let stats = CutSummary::from_cuts(&errs);
    let best = errs.iter().copied().fold(f64::INFINITY, f64::min);
    println!(
        "{instance}: error rate mean {:.2}% sd {:.2}% best {:.2}% over {} seed(s)",
        100.0 * stats.mean,
        100.0 * stats.sd,
        100.0 * best,
        runs.len()
    );
    let trace_checks = finish_traces(&a.run, &traces)?;
    write_json(
        &a.run.out.join("community_summary.json"),
        &CommunitySummary {
            header: RunHeader::new("community", &s),
            instance,
            nodes: adj.nrows(),
            communities: k,
            mu: a.mu,
            lipschitz: l,
            params: cfg.params,
            violations,
            mean_error: stats.mean,
            sd_error: stats.sd,
            best_error: best,
            runs,
            trace_checks: trace_checks.clone(),
        },
    )?;
    trace_failure(&trace_checks)
}

// solve

#[derive(Debug, Serialize)]
struct SolveSeed {
    seed: u64,
    #[serde(flatten)]
    solve: SolveFacts,
    report: StationarityReport,
    budget: Option<ComplexityBudget>,
}

#[derive(Debug, Serialize)]
struct SolveSummary {
    #[serde(flatten)]
    header: RunHeader,
    problem: SyntheticSpec,
    lipschitz: f64,
    params: Parameters,
    violations: Vec<String>,
    runs: Vec<SolveSeed>,
    trace_checks: Option<Vec<TraceCheck>>,
}

pub fn solve_cmd(a: &SolveArgs) -> CliResult<()> {
    let s = Settings::resolve(
        &a.run,
        Defaults {
            variant: Variant::Exact,
            iters: 1000,
            eps: 1e-3,
            seeds: (0, 1),
        },
    )?;
    no_lipschitz(&s, "solve")?;
    check_verifiable(&a.run, s.variant)?;
    let text = std::fs::read_to_string(&a.problem).map_err(|e| CliError::Input(format!("{}: {e}", a.problem.display())))?;
    let spec: SyntheticSpec =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", a.problem.display())))?;
    let problem = build_synthetic_problem(&spec)?;
    let cfg = s.apply(SolverConfig::for_problem(&problem, s.variant)?);
    let violations = parameter_violations(&problem, &cfg);
    if s.strict && !violations.is_empty() {
        return Err(CliError::Infeasible(violations.join("; ")));
    }
    ensure_dir(&a.run.out)?;
    let instance = stem(&a.problem);
    let runs = par_seeds(&s.seeds, |seed| {
        let out = solve(&problem, &cfg.clone().with_seed(seed))?;
        let path = trace_path(&a.run.out, "solve", &instance, seed);
        write_csv(&path, &out.trace)?;
        Ok((
            path,
            SolveSeed {
                seed,
                solve: SolveFacts::from(&out),
                report: out.best_report.clone(),
                budget: out.budget,
            },
        ))
    })?;
    let (traces, runs): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    for r in &runs {
        println!(
            "{instance} seed {}: {} iterations, k* {}, max residual {:.3e}{}",
            r.seed,
            r.solve.iterations,
            r.solve.k_star,
            r.report.max_residual(),
            if r.solve.converged { ", converged" } else { "" }
        );
    }
    let trace_checks = finish_traces(&a.run, &traces)?;
    write_json(
        &a.run.out.join("solve_summary.json"),
        &SolveSummary {
            header: RunHeader::new("solve", &s),
            problem: spec,
            lipschitz: problem.lipschitz(),
            params: cfg.params,
            violations,
            runs,
            trace_checks: trace_checks.clone(),
        },
    )?;
    trace_failure(&trace_checks)
}

// synth

#[derive(Debug, Serialize)]
struct SynthSummary {
    command: &'static str,
    kind: &'static str,
    seed: u64,
    files: Vec<String>,
}

pub fn synth(a: &SynthArgs) -> CliResult<()> {
    ensure_dir(&a.out)?;
    let seed = a.seed;
    let mut files = Vec::new();
    let mut emit = |name: String, text: String| -> CliResult<()> {
        let path = a.out.join(name);
        write_text(&path, &text)?;
        println!("{}", path.display());
        files.push(path.display().to_string());
        Ok(())
    };
    let kind = match &a.kind {
        SynthKind::Graph { n, density, max_weight } => {
            let g = WeightedGraph::random(*n, *density, *max_weight, seed)?;
            emit(format!("graph_n{n}_seed{seed}.txt"), io::format_graph(&g))?;
            "graph"
        }
        SynthKind::Tensor {
            size,
            core,
            count,
            order,
            noise,
        } => {
            let spec = MpcaDataSpec {
                noise: *noise,
                ..MpcaDataSpec::cubic(*order, *size, *core, *count)
            };
            let data = generate_mpca_data(&spec, seed)?;
            for (i, (o, t)) in data.observed.iter().zip(&data.truth).enumerate() {
                emit(format!("tensor_seed{seed}_{}.txt", i + 1), io::format_tensor(o))?;
                emit(format!("truth_seed{seed}_{}.txt", i + 1), io::format_tensor(t))?;
            }
            "tensor"
        }
        SynthKind::Sbm { n, k, p_in, p_out } => {
            let (adj, labels) = generate_sbm(*n, *k, *p_in, *p_out, seed)?;
            emit(format!("sbm_n{n}_seed{seed}.txt"), io::format_adjacency(&adj))?;
            emit(format!("sbm_n{n}_seed{seed}.labels"), io::format_labels(&labels))?;
            "sbm"
        }
        SynthKind::Problem {
            blocks,
            dim,
            rows,
            stiefel,
            noise,
        } => {
            let mut spec = SyntheticSpec::spheres(seed, *blocks, *dim, *rows);
            spec.stiefel_cols = *stiefel;
            spec.noise = *noise;
            build_synthetic_problem(&spec)?;
            let text = serde_json::to_string_pretty(&spec).map_err(|e| CliError::Run(e.to_string()))?;
            emit(format!("problem_seed{seed}.json"), text + "\n")?;
            "problem"
        }
    };
    write_json(
        &a.out.join("synth_summary.json"),
        &SynthSummary {
            command: "synth",
            kind,
            seed,
            files,
        },
    )
}
