use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use super::{BlockSpec, Coupling, MultiBlockProblem, Regularizer, SmoothObjective};
use crate::error::{Error, Result};
use crate::manifold::{ManifoldSpec, Point};

/// Result of [`lift_general_problem`].
#[derive(Debug, Clone)]
pub struct LiftOutcome {
    pub problem: MultiBlockProblem,
    /// Penalty weight `μ = 1/ε` on the slack block, `None` when nothing was added.
    pub mu: Option<f64>,
    pub note: Option<String>,
}

struct LiftedObjective {
    inner: Arc<dyn SmoothObjective>,
    mu: f64,
    slack: usize,
}

impl LiftedObjective {
    fn split<'a>(&self, x: &'a [Point]) -> (&'a [Point], &'a Point) {
        let (s, rest) = x.split_last().expect("lifted problem has a slack block");
        (rest, s)
    }
}

impl SmoothObjective for LiftedObjective {
    fn value(&self, x: &[Point]) -> f64 {
        let (rest, s) = self.split(x);
        self.inner.value(rest) + 0.5 * self.mu * s.norm_squared()
    }

    fn partial_gradient(&self, block: usize, x: &[Point]) -> Point {
        let (rest, s) = self.split(x);
        if block == rest.len() {
            s * self.mu
        } else {
            self.inner.partial_gradient(block, rest)
        }
    }

    fn gradient(&self, x: &[Point]) -> Vec<Point> {
        let (rest, s) = self.split(x);
        let mut g = self.inner.gradient(rest);
        g.push(s * self.mu);
        g
    }

    fn lipschitz(&self) -> f64 {
        self.inner.lipschitz().max(self.mu)
    }

    fn block_curvature(&self, block: usize) -> Option<f64> {
        if block == self.slack {
            Some(self.mu)
        } else {
            self.inner.block_curvature(block)
        }
    }

    fn noise_variance(&self) -> Option<f64> {
        self.inner.noise_variance()
    }

    fn stochastic_partial_gradient(
        &self,
        block: usize,
        x: &[Point],
        batch: usize,
        rng: &mut dyn RngCore,
    ) -> Option<Point> {
        let (rest, s) = self.split(x);
        if block == rest.len() {
            Some(s * self.mu)
        } else {
            self.inner.stochastic_partial_gradient(block, rest, batch, rng)
        }
    }
}

/// Appends a slack block `x_{N+1} ∈ R^m` with `A_{N+1} = I` and adds
/// `(μ/2)‖x_{N+1}‖²` to the objective, `μ = 1/ε`. The new Lipschitz constant
/// is `max(L, μ)`.
///
/// A problem that is already in basic form is returned unchanged with a note.
pub fn lift_general_problem(problem: &MultiBlockProblem, eps: f64) -> Result<LiftOutcome> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0, 1), got {eps}")));
    }
    if problem.is_basic() {
        return Ok(LiftOutcome {
            problem: problem.clone(),
            mu: None,
            note: Some("problem is already in basic form; no slack block added".into()),
        });
    }
    let m = problem.rows();
    let mu = 1.0 / eps;
    let mut blocks = problem.blocks.clone();
    blocks.push(BlockSpec::new(
        format!("slack{}", blocks.len() + 1),
        ManifoldSpec::euclidean(m)?,
        Coupling::identity(m),
    ));
    let objective = LiftedObjective {
        inner: problem.objective.clone(),
        mu,
        slack: problem.n_blocks(),
    };
    let mut lifted = MultiBlockProblem::new(blocks, Arc::new(objective), problem.rhs.clone());
    lifted.lower_bounds = problem.lower_bounds;
    Ok(LiftOutcome {
        problem: lifted,
        mu: Some(mu),
        note: None,
    })
}

/// Assignment of the constrained blocks `0..N-1`.
///
/// `i1` holds blocks without regularizer, `i2` blocks whose regularized
/// subproblem is solved directly and `i3` blocks to split.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RegularizerPartition {
    pub i1: Vec<usize>,
    pub i2: Vec<usize>,
    pub i3: Vec<usize>,
}

impl RegularizerPartition {
    /// Blocks with a manifold and a nonzero regularizer go to `i3`, other
    /// regularized blocks to `i2`, the rest to `i1`.
    pub fn infer(problem: &MultiBlockProblem) -> Self {
        let mut p = Self::default();
        for (i, b) in problem.blocks[..problem.last()].iter().enumerate() {
            if b.regularizer.is_zero() {
                p.i1.push(i);
            } else if b.manifold.is_euclidean() {
                p.i2.push(i);
            } else {
                p.i3.push(i);
            }
        }
        p
    }

    fn check(&self, constrained: usize) -> Result<()> {
        let mut seen = vec![false; constrained];
        for &i in self.i1.iter().chain(&self.i2).chain(&self.i3) {
            if i >= constrained {
                return Err(Error::InvalidArgument(format!(
                    "partition index {i} is outside blocks 0..{constrained}"
                )));
            }
            if seen[i] {
                return Err(Error::InvalidArgument(format!("block {i} appears twice in the partition")));
            }
            seen[i] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!("partition does not cover block {missing}")));
        }
        Ok(())
    }
}

/// Objective over the original blocks with extra consensus copies that do not
/// enter `f`.
struct ConsensusObjective {
    inner: Arc<dyn SmoothObjective>,
    /// `source[k]` is the original block of new block `k`, `None` for copies.
    source: Vec<Option<usize>>,
}

impl ConsensusObjective {
    fn originals(&self, x: &[Point]) -> Vec<Point> {
        let mut out = vec![Point::zeros(0, 0); self.source.iter().flatten().count()];
        for (k, s) in self.source.iter().enumerate() {
            if let Some(j) = s {
                out[*j] = x[k].clone();
            }
        }
        out
    }

    fn zero_like(x: &Point) -> Point {
        Point::zeros(x.nrows(), x.ncols())
    }
}

impl SmoothObjective for ConsensusObjective {
    fn value(&self, x: &[Point]) -> f64 {
        self.inner.value(&self.originals(x))
    }

    fn partial_gradient(&self, block: usize, x: &[Point]) -> Point {
        match self.source[block] {
            Some(j) => self.inner.partial_gradient(j, &self.originals(x)),
            None => Self::zero_like(&x[block]),
        }
    }

    fn gradient(&self, x: &[Point]) -> Vec<Point> {
        let g = self.inner.gradient(&self.originals(x));
        self.source
            .iter()
            .enumerate()
            .map(|(k, s)| match s {
                Some(j) => g[*j].clone(),
                None => Self::zero_like(&x[k]),
            })
            .collect()
    }

    fn lipschitz(&self) -> f64 {
        self.inner.lipschitz()
    }

    fn block_curvature(&self, block: usize) -> Option<f64> {
        match self.source[block] {
            Some(j) => self.inner.block_curvature(j),
            None => Some(0.0),
        }
    }

    fn noise_variance(&self) -> Option<f64> {
        self.inner.noise_variance()
    }

    fn stochastic_partial_gradient(
        &self,
        block: usize,
        x: &[Point],
        batch: usize,
        rng: &mut dyn RngCore,
    ) -> Option<Point> {
        match self.source[block] {
            Some(j) => self.inner.stochastic_partial_gradient(j, &self.originals(x), batch, rng),
            None => Some(Self::zero_like(&x[block])),
        }
    }
}

/// Splits every block `i ∈ I₃` into the manifold block (regularizer dropped)
/// and a Euclidean copy `y_i` carrying `r_i`, linked by rows `y_i - x_i = 0`.
///
/// The copies are inserted before the last block, whose coupling is padded
/// with zero rows. The result is therefore in general form and has to go
/// through [`lift_general_problem`] before solving. With `I₃` empty the input
/// is returned unchanged.
pub fn decouple_nonconvex_regularizers(
    problem: &MultiBlockProblem,
    partition: &RegularizerPartition,
) -> Result<MultiBlockProblem> {
    if problem.n_blocks() < 2 {
        return Err(Error::InvalidArgument("need at least two blocks".into()));
    }
    let last = problem.last();
    partition.check(last)?;
    if partition.i3.is_empty() {
        return Ok(problem.clone());
    }
    let mut split: Vec<usize> = partition.i3.clone();
    split.sort_unstable();
    for &i in &split {
        let b = &problem.blocks[i];
        if b.manifold.is_euclidean() || b.regularizer.is_zero() {
            return Err(Error::InvalidArgument(format!(
                "block {i} ({}) needs both a manifold and a regularizer to be decoupled",
                b.name
            )));
        }
    }

    let m0 = problem.rows();
    let extra: usize = split.iter().map(|&i| problem.blocks[i].manifold.ambient_dim()).sum();
    let m = m0 + extra;

    let pad = |c: &Coupling| -> DMatrix<f64> {
        let d = c.to_dense();
        let mut out = DMatrix::zeros(m, d.ncols());
        out.rows_mut(0, m0).copy_from(&d);
        out
    };

    let mut blocks: Vec<BlockSpec> = Vec::with_capacity(problem.n_blocks() + split.len());
    let mut source = Vec::with_capacity(problem.n_blocks() + split.len());
    let mut consensus = Vec::new();
    for (i, b) in problem.blocks[..last].iter().enumerate() {
        let mut nb = b.clone();
        nb.coupling = Coupling::Dense(pad(&b.coupling));
        if split.contains(&i) {
            nb.regularizer = Regularizer::Zero;
        }
        blocks.push(nb);
        source.push(Some(i));
    }
    let mut row = m0;
    for &i in &split {
        let b = &problem.blocks[i];
        let n = b.manifold.ambient_dim();
        if let Coupling::Dense(a) = &mut blocks[i].coupling {
            a.view_mut((row, 0), (n, n)).fill_diagonal(-1.0);
        }
        let mut a = DMatrix::zeros(m, n);
        a.view_mut((row, 0), (n, n)).fill_diagonal(1.0);
        consensus.push(
            BlockSpec::new(format!("{}_copy", b.name), ManifoldSpec::euclidean(n)?, Coupling::Dense(a))
                .with_regularizer(b.regularizer),
        );
        source.push(None);
        row += n;
    }
    blocks.extend(consensus);
    let mut lb = problem.blocks[last].clone();
    lb.coupling = Coupling::Dense(pad(&lb.coupling));
    blocks.push(lb);
    source.push(Some(last));

    let mut rhs = DVector::zeros(m);
    rhs.rows_mut(0, m0).copy_from(&problem.rhs);
    let objective = ConsensusObjective {
        inner: problem.objective.clone(),
        source,
    };
    let mut out = MultiBlockProblem::new(blocks, Arc::new(objective), rhs);
    out.lower_bounds = problem.lower_bounds;
    Ok(out)
}
