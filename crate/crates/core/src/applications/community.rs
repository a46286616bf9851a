use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::manifold::{ManifoldSpec, Point};
use crate::problem::{BlockSpec, ConvexSet, Coupling, LowerBounds, MultiBlockProblem, SmoothObjective};
use crate::solver::{solve, SolveOutput, SolverConfig};

pub const MAX_PERMUTATION_K: usize = 10;

/// `‖A - XXᵀ‖²_F + (μ/2)‖Z‖²_F` over blocks `X, Y, Z`.
#[derive(Debug, Clone)]
pub struct CommunityObjective {
    a: DMatrix<f64>,
    k: usize,
    mu: f64,
    lipschitz: f64,
}

impl SmoothObjective for CommunityObjective {
    fn value(&self, x: &[Point]) -> f64 {
        let r = &self.a - &x[0] * x[0].transpose();
        r.norm_squared() + 0.5 * self.mu * x[2].norm_squared()
    }

    fn partial_gradient(&self, block: usize, x: &[Point]) -> Point {
        match block {
            0 => (&self.a - &x[0] * x[0].transpose()) * &x[0] * -4.0,
            1 => Point::zeros(self.a.nrows() * self.k, 1),
            _ => &x[2] * self.mu,
        }
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn block_curvature(&self, block: usize) -> Option<f64> {
        match block {
            0 => None,
            1 => Some(0.0),
            _ => Some(self.mu),
        }
    }
}

/// `min ‖A - XXᵀ‖² + (μ/2)‖Z‖²` subject to `X - Y + Z = 0`, `X` on the
/// Stiefel manifold and `Y ≥ 0`.
///
/// `L` defaults to `max(4‖A‖₂ + 12, μ)`, a bound for `‖X‖₂ ≤ 1`; pass
/// `lipschitz` to override.
pub fn build_community(a: &DMatrix<f64>, k: usize, mu: f64, lipschitz: Option<f64>) -> Result<MultiBlockProblem> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::InvalidArgument(format!("adjacency must be square, got {}x{}", n, a.ncols())));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("need 1 <= k <= n = {n}, got k = {k}")));
    }
    if a != &a.transpose() || a.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument("adjacency must be symmetric with 0/1 entries".into()));
    }
    if !(mu > 0.0) {
        return Err(Error::InvalidArgument(format!("need mu > 0, got {mu}")));
    }
    let l = match lipschitz {
        Some(l) if l > 0.0 => l,
        Some(l) => return Err(Error::InvalidArgument(format!("Lipschitz constant must be positive, got {l}"))),
        None => (4.0 * a.clone().symmetric_eigenvalues().amax() + 12.0).max(mu),
    };
    let nk = n * k;
    let blocks = vec![
        BlockSpec::new("X", ManifoldSpec::stiefel(n, k)?, Coupling::identity(nk)),
        BlockSpec::new("Y", ManifoldSpec::euclidean(nk)?, Coupling::scaled_identity(nk, -1.0))
            .with_set(ConvexSet::NonnegativeOrthant),
        BlockSpec::new("Z", ManifoldSpec::euclidean(nk)?, Coupling::identity(nk)),
    ];
    let objective = CommunityObjective {
        a: a.clone(),
        k,
        mu,
        lipschitz: l,
    };
    Ok(MultiBlockProblem::new(blocks, Arc::new(objective), DVector::zeros(nk)).with_lower_bounds(LowerBounds {
        objective: 0.0,
        regularizers: 0.0,
    }))
}

/// 1-based row argmax, ties to the smallest column.
pub fn extract_communities(x: &DMatrix<f64>) -> Vec<usize> {
    x.row_iter()
        .map(|r| {
            let mut best = 0;
            for j in 1..r.len() {
                if r[j] > r[best] {
                    best = j;
                }
            }
            best + 1
        })
        .collect()
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..k).collect();
    fn rec(i: usize, p: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == p.len() {
            out.push(p.clone());
            return;
        }
        for j in i..p.len() {
            p.swap(i, j);
            rec(i + 1, p, out);
            p.swap(i, j);
        }
    }
    rec(0, &mut p, &mut out);
    out
}

/// Smallest fraction of mismatched nodes over all relabelings of `1..=k`.
pub fn misclassification_rate(labels: &[usize], truth: &[usize], k: usize) -> Result<f64> {
    if labels.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "{} labels vs {} ground-truth labels",
            labels.len(),
            truth.len()
        )));
    }
    if k > MAX_PERMUTATION_K {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the permutation search limit {MAX_PERMUTATION_K}"
        )));
    }
    if let Some(bad) = labels.iter().chain(truth).find(|&&l| l == 0 || l > k) {
        return Err(Error::InvalidArgument(format!("label {bad} outside 1..={k}")));
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    // confusion[a][b] = #nodes with label a and truth b
    let mut confusion = vec![vec![0usize; k]; k];
    for (&l, &t) in labels.iter().zip(truth) {
        confusion[l - 1][t - 1] += 1;
    }
    let best = permutations(k)
        .iter()
        .map(|p| (0..k).map(|a| confusion[a][p[a]]).sum::<usize>())
        .max()
        .unwrap_or(0);
    Ok(1.0 - best as f64 / labels.len() as f64)
}

/// Planted partition: node `i` (0-based) lies in community `⌊ik/n⌋ + 1`.
pub fn generate_sbm(n: usize, k: usize, p_in: f64, p_out: f64, seed: u64) -> Result<(DMatrix<f64>, Vec<usize>)> {
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("need 1 <= k <= n, got n = {n}, k = {k}")));
    }
    if !((0.0..=1.0).contains(&p_in) && (0.0..=1.0).contains(&p_out)) {
        return Err(Error::InvalidArgument(format!("probabilities must lie in [0, 1], got {p_in}, {p_out}")));
    }
    let labels: Vec<usize> = (0..n).map(|i| i * k / n + 1).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if rng.random_bool(p) {
                a[(i, j)] = 1.0;
                a[(j, i)] = 1.0;
            }
        }
    }
    Ok((a, labels))
}

/// `Y` reshaped to `n × k`.
pub fn membership_matrix(y: &Point, n: usize, k: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(n, k, y.as_slice())
}

#[derive(Debug, Clone)]
pub struct CommunityRun {
    pub labels: Vec<usize>,
    pub output: SolveOutput,
}

/// Solves the model and labels nodes by the row argmax of `Y`.
pub fn run_community(a: &DMatrix<f64>, k: usize, mu: f64, lipschitz: Option<f64>, config: &SolverConfig) -> Result<CommunityRun> {
    let problem = build_community(a, k, mu, lipschitz)?;
    let output = solve(&problem, config)?;
    let labels = extract_communities(&membership_matrix(&output.best.x[1], a.nrows(), k));
    Ok(CommunityRun { labels, output })
}
