use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "solver", version, about = "Multi-block manifold ADMM batch runner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Max bisection through the sphere relaxation, rounding and greedy balancing.
    Maxbisect(MaxbisectArgs),
    /// Sparse Tucker decomposition of a tensor collection.
    Mpca(MpcaArgs),
    /// Community detection from an adjacency list and reference labels.
    Community(CommunityArgs),
    /// Writes random instances.
    Synth(SynthArgs),
    /// Runs a synthetic problem described by a JSON spec.
    Solve(SolveArgs),
}

/// Options shared by every run command. Unset values come from `--config`,
/// then from the command defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON file with flat keys: variant, beta, gamma, sigma_h, eps, iters,
    /// batch, seed, strict_params.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Half-open seed range `N..M`.
    #[arg(long, value_parser = parse_seed_range)]
    pub seeds: Option<(u64, u64)>,
    /// exact, linearized, stochastic, linesearch or jacobi.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long = "sigma-h")]
    pub sigma_h: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Lipschitz estimate used to derive default parameters.
    #[arg(long)]
    pub lipschitz: Option<f64>,
    /// Exit with code 3 when parameters fall outside the feasible region.
    #[arg(long)]
    pub strict: bool,
    /// Re-read every written trace and check that its psi column never increases.
    #[arg(long = "verify-trace")]
    pub verify_trace: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MaxbisectArgs {
    /// Graph in `n m` / `i j w` format; repeat for several instances.
    #[arg(long = "graph", required = true)]
    pub graphs: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    pub mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub nu: f64,
    /// Also report the exhaustive optimum (small graphs only).
    #[arg(long = "brute-force")]
    pub brute_force: bool,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct MpcaArgs {
    /// Observed tensor files. Without them a synthetic collection is generated per seed.
    #[arg(long = "tensor")]
    pub tensors: Vec<PathBuf>,
    /// Noise-free tensors matching `--tensor`, used for the error metrics.
    #[arg(long = "truth")]
    pub truth: Vec<PathBuf>,
    /// Core size per mode.
    #[arg(long = "core-dims", value_delimiter = ',')]
    pub core_dims: Vec<usize>,
    /// Synthetic data: mode size, core size, number of tensors and order.
    #[arg(long, default_value_t = 10)]
    pub size: usize,
    #[arg(long, default_value_t = 3)]
    pub core: usize,
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    #[arg(long, default_value_t = 0.001)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.1)]
    pub alpha1: f64,
    #[arg(long, default_value_t = 0.01)]
    pub alpha2: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub mu: f64,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct CommunityArgs {
    /// Unweighted edge list.
    #[arg(long)]
    pub graph: PathBuf,
    /// One 1-based label per node; the community count is the largest label.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 50.0)]
    pub mu: f64,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(subcommand)]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 0, global = true)]
    pub seed: u64,
    #[arg(long, default_value = "out", global = true)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum SynthKind {
    /// Random weighted graph.
    Graph {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        density: f64,
        #[arg(long = "max-weight", default_value_t = 1)]
        max_weight: u32,
    },
    /// Sparse Tucker tensors with their noise-free versions.
    Tensor {
        #[arg(long, default_value_t = 10)]
        size: usize,
        #[arg(long, default_value_t = 3)]
        core: usize,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long, default_value_t = 0.001)]
        noise: f64,
    },
    /// Planted partition graph with its labels.
    Sbm {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long = "p-in", default_value_t = 0.2)]
        p_in: f64,
        #[arg(long = "p-out", default_value_t = 0.02)]
        p_out: f64,
    },
    /// JSON spec of a random problem for `solver solve`.
    Problem {
        #[arg(long, default_value_t = 3)]
        blocks: usize,
        #[arg(long, default_value_t = 5)]
        dim: usize,
        #[arg(long, default_value_t = 6)]
        rows: usize,
        /// Stiefel blocks with this many columns instead of spheres.
        #[arg(long)]
        stiefel: Option<usize>,
        /// Standard deviation of the stochastic gradient oracle.
        #[arg(long)]
        noise: Option<f64>,
    },
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Problem spec written by `solver synth problem`.
    #[arg(long)]
    pub problem: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
}

fn parse_seed_range(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected N..M, got `{s}`"))?;
    let a: u64 = a.trim().parse().map_err(|_| format!("bad seed `{a}`"))?;
    let b: u64 = b.trim().parse().map_err(|_| format!("bad seed `{b}`"))?;
    if b <= a {
        return Err(format!("empty seed range {a}..{b}"));
    }
    Ok((a, b))
}
