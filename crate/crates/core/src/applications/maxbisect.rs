use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{ManifoldSpec, Point};
use crate::problem::{BlockSpec, ConvexSet, Coupling, LowerBounds, MultiBlockProblem, SmoothObjective};
use crate::solver::{solve, SolveOutput, SolverConfig};

/// Undirected graph with nonnegative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    /// `(i, j, w)` with 1-based `i < j`, merged duplicates.
    edges: Vec<(usize, usize, f64)>,
    w: DMatrix<f64>,
}

impl WeightedGraph {
    /// Edges are 1-based. Duplicate edges add up.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("graph has no nodes".into()));
        }
        let mut w = DMatrix::zeros(n, n);
        for &(i, j, wt) in edges {
            if i == 0 || j == 0 || i > n || j > n {
                return Err(Error::InvalidArgument(format!("edge ({i}, {j}) outside 1..={n}")));
            }
            if i == j {
                return Err(Error::InvalidArgument(format!("self loop at node {i}")));
            }
            if !(wt >= 0.0 && wt.is_finite()) {
                return Err(Error::InvalidArgument(format!("edge ({i}, {j}) has weight {wt}")));
            }
            w[(i - 1, j - 1)] += wt;
            w[(j - 1, i - 1)] += wt;
        }
        let mut merged = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if w[(i, j)] != 0.0 {
                    merged.push((i + 1, j + 1, w[(i, j)]));
                }
            }
        }
        Ok(Self { n, edges: merged, w })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// Erdős–Rényi graph; every present edge gets weight 1, or a uniform
    /// integer in `1..=max_weight`.
    pub fn random(n: usize, density: f64, max_weight: u32, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&density) || max_weight == 0 {
            return Err(Error::InvalidArgument(format!(
                "need density in [0, 1] and max_weight >= 1, got {density}, {max_weight}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for i in 1..=n {
            for j in i + 1..=n {
                if rng.random_bool(density) {
                    edges.push((i, j, rng.random_range(1..=max_weight) as f64));
                }
            }
        }
        Self::from_edges(n, &edges)
    }
}

/// `⟨W, UUᵀ⟩ + (μ/2)‖z‖²` over blocks `u_1, ..., u_n, x, z`.
#[derive(Debug, Clone)]
pub struct BisectionObjective {
    w: DMatrix<f64>,
    mu: f64,
    lipschitz: f64,
}

impl SmoothObjective for BisectionObjective {
    fn value(&self, x: &[Point]) -> f64 {
        let n = self.w.nrows();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if self.w[(i, j)] != 0.0 {
                    s += self.w[(i, j)] * x[i].dot(&x[j]);
                }
            }
        }
        s + 0.5 * self.mu * x[n + 1].norm_squared()
    }

    fn partial_gradient(&self, block: usize, x: &[Point]) -> Point {
        let n = self.w.nrows();
        if block < n {
            let mut g = Point::zeros(2, 1);
            for (&wij, xj) in self.w.row(block).iter().zip(x) {
                if wij != 0.0 {
                    g += xj * (2.0 * wij);
                }
            }
            g
        } else if block == n {
            Point::zeros(1, 1)
        } else {
            &x[n + 1] * self.mu
        }
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn block_curvature(&self, block: usize) -> Option<f64> {
        Some(if block == self.w.nrows() + 1 { self.mu } else { 0.0 })
    }
}

/// Relaxation `min ⟨W, UUᵀ⟩ + (μ/2)‖z‖²` subject to `Σ u_i - x𝟏 + z = 0`,
/// `u_i ∈ S¹ ∩ ℝ²₊` and `n/2 - ν ≤ x ≤ n/2 + ν`.
pub fn build_max_bisection(g: &WeightedGraph, mu: f64, nu: f64) -> Result<MultiBlockProblem> {
    if g.edges.is_empty() {
        return Err(Error::InvalidArgument("graph has no edges".into()));
    }
    if !(mu > 0.0 && nu >= 0.0) {
        return Err(Error::InvalidArgument(format!("need mu > 0 and nu >= 0, got {mu}, {nu}")));
    }
    let n = g.n;
    let half = n as f64 / 2.0;
    let mut blocks = Vec::with_capacity(n + 2);
    for i in 0..n {
        blocks.push(
            BlockSpec::new(format!("u{}", i + 1), ManifoldSpec::sphere(2)?, Coupling::identity(2))
                .with_set(ConvexSet::NonnegativeOrthant),
        );
    }
    blocks.push(
        BlockSpec::new("x", ManifoldSpec::euclidean(1)?, Coupling::Dense(DMatrix::from_element(2, 1, -1.0)))
            .with_set(ConvexSet::Box {
                lo: half - nu,
                hi: half + nu,
            }),
    );
    blocks.push(BlockSpec::new("z", ManifoldSpec::euclidean(2)?, Coupling::identity(2)));
    let wnorm = g.w.clone().symmetric_eigenvalues().amax();
    let objective = BisectionObjective {
        w: g.w.clone(),
        mu,
        lipschitz: (2.0 * wnorm).max(mu),
    };
    Ok(MultiBlockProblem::new(blocks, Arc::new(objective), DVector::zeros(2)).with_lower_bounds(LowerBounds {
        objective: 0.0,
        regularizers: 0.0,
    }))
}

/// Side 1 when `U_{i1} ≥ U_{i2}`, side 2 otherwise.
pub fn round_assignment(u: &DMatrix<f64>) -> Vec<u8> {
    u.row_iter().map(|r| if r[0] >= r[1] { 1 } else { 2 }).collect()
}

/// Rows `u_1, ..., u_n` of a bisection iterate stacked as an `n × 2` matrix.
pub fn assignment_matrix(x: &[Point], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, 2, |i, k| x[i][k])
}

fn check_labels(labels: &[u8], w: &DMatrix<f64>) -> Result<()> {
    if labels.len() != w.nrows() || w.nrows() != w.ncols() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for a {}x{} weight matrix",
            labels.len(),
            w.nrows(),
            w.ncols()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l != 1 && l != 2) {
        return Err(Error::InvalidArgument(format!("side label {bad} is not 1 or 2")));
    }
    Ok(())
}

/// Moves vertices from the larger side until both sides have `n/2` nodes.
/// Each move picks the vertex with the largest cut gain, lowest index first.
pub fn greedy_balance(labels: &[u8], w: &DMatrix<f64>) -> Result<Vec<u8>> {
    check_labels(labels, w)?;
    let n = labels.len();
    if n % 2 == 1 {
        return Err(Error::InvalidArgument(format!("cannot bisect {n} nodes")));
    }
    let mut out = labels.to_vec();
    loop {
        let ones = out.iter().filter(|&&l| l == 1).count();
        if ones == n / 2 {
            return Ok(out);
        }
        let from = if ones > n / 2 { 1 } else { 2 };
        let mut best: Option<(f64, usize)> = None;
        for v in (0..n).filter(|&v| out[v] == from) {
            // edges to the own side become cut, edges to the other side stop being cut
            let gain: f64 = (0..n)
                .filter(|&j| j != v)
                .map(|j| if out[j] == from { w[(v, j)] } else { -w[(v, j)] })
                .sum();
            if best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, v));
            }
        }
        let (_, v) = best.expect("larger side is nonempty");
        out[v] = 3 - from;
    }
}

/// Total weight of edges whose endpoints have different labels.
pub fn cut_value(labels: &[u8], w: &DMatrix<f64>) -> f64 {
    let n = labels.len().min(w.nrows());
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            if labels[i] != labels[j] {
                s += w[(i, j)];
            }
        }
    }
    s
}

pub const BRUTE_FORCE_MAX_NODES: usize = 26;

/// Best bisection by enumerating every balanced split with node 1 on side 1.
pub fn brute_force_bisection(w: &DMatrix<f64>) -> Result<(f64, Vec<u8>)> {
    let n = w.nrows();
    if n % 2 == 1 || n == 0 {
        return Err(Error::InvalidArgument(format!("cannot bisect {n} nodes")));
    }
    if n > BRUTE_FORCE_MAX_NODES {
        return Err(Error::InvalidArgument(format!(
            "exhaustive bisection limited to {BRUTE_FORCE_MAX_NODES} nodes, got {n}"
        )));
    }
    let mut best = (f64::NEG_INFINITY, 0u32);
    for mask in 0u32..(1 << n) {
        if mask & 1 == 0 || mask.count_ones() as usize != n / 2 {
            continue;
        }
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                if (mask >> i & 1) != (mask >> j & 1) {
                    s += w[(i, j)];
                }
            }
        }
        if s > best.0 {
            best = (s, mask);
        }
    }
    let labels = (0..n).map(|i| if best.1 >> i & 1 == 1 { 1 } else { 2 }).collect();
    Ok((best.0, labels))
}

#[derive(Debug, Clone)]
pub struct BisectionRun {
    pub labels: Vec<u8>,
    pub cut: f64,
    /// Sides straight from rounding, before balancing.
    pub rounded: Vec<u8>,
    pub output: SolveOutput,
}

/// Solves the relaxation, rounds and balances.
pub fn run_max_bisection(g: &WeightedGraph, mu: f64, nu: f64, config: &SolverConfig) -> Result<BisectionRun> {
    let problem = build_max_bisection(g, mu, nu)?;
    let output = solve(&problem, config)?;
    let rounded = round_assignment(&assignment_matrix(&output.best.x, g.n));
    let labels = greedy_balance(&rounded, &g.w)?;
    Ok(BisectionRun {
        cut: cut_value(&labels, &g.w),
        labels,
        rounded,
        output,
    })
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutSummary {
    pub mean: f64,
    pub sd: f64,
    pub best: f64,
}

impl CutSummary {
    pub fn from_cuts(cuts: &[f64]) -> Self {
        let n = cuts.len().max(1) as f64;
        let mean = cuts.iter().sum::<f64>() / n;
        let var = if cuts.len() > 1 {
            cuts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            sd: var.sqrt(),
            best: cuts.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}
