//! Multi-block problem description.
//!
//! ```text
//! min  f(x_1, ..., x_N) + Σ_{i<N} r_i(x_i)
//! s.t. Σ_i A_i vec(x_i) = b,   x_i ∈ M_i ∩ X_i  (i < N),   x_N free
//! ```
//!
//! The basic form additionally has `A_N = I` and a last block without
//! regularizer or convex set. [`lift_general_problem`] and
//! [`decouple_nonconvex_regularizers`] rewrite problems outside that form.

mod synthetic;
mod transform;

pub use synthetic::{build_synthetic_problem, SyntheticObjective, SyntheticSpec};
pub use transform::{
    decouple_nonconvex_regularizers, lift_general_problem, LiftOutcome, RegularizerPartition,
};

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{ManifoldKind, ManifoldSpec, Point};
use crate::prox::{LqExponent, LqProxSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvexSet {
    Whole,
    NonnegativeOrthant,
    Box { lo: f64, hi: f64 },
}

impl ConvexSet {
    pub fn contains(&self, x: &Point) -> bool {
        match *self {
            ConvexSet::Whole => true,
            ConvexSet::NonnegativeOrthant => x.iter().all(|&v| v >= 0.0),
            ConvexSet::Box { lo, hi } => x.iter().all(|&v| v >= lo && v <= hi),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    Zero,
    L1(f64),
    Lq { weight: f64, q: f64 },
    CappedLq { weight: f64, q: f64, cap: f64 },
}

impl Regularizer {
    pub fn value(&self, x: &Point) -> f64 {
        match *self {
            Regularizer::Zero => 0.0,
            Regularizer::L1(w) => w * x.iter().map(|v| v.abs()).sum::<f64>(),
            Regularizer::Lq { weight, q } => {
                let q = LqExponent::from_f64(q).unwrap_or(LqExponent::One);
                weight * x.iter().map(|&v| q.power(v)).sum::<f64>()
            }
            Regularizer::CappedLq { weight, q, cap } => {
                let q = LqExponent::from_f64(q).unwrap_or(LqExponent::One);
                weight * x.iter().map(|&v| q.power(v).min(cap * v.abs())).sum::<f64>()
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Regularizer::Zero) || self.weight() == 0.0
    }

    pub fn weight(&self) -> f64 {
        match *self {
            Regularizer::Zero => 0.0,
            Regularizer::L1(w) => w,
            Regularizer::Lq { weight, .. } | Regularizer::CappedLq { weight, .. } => weight,
        }
    }

    pub fn is_convex(&self) -> bool {
        match *self {
            Regularizer::Zero | Regularizer::L1(_) => true,
            Regularizer::Lq { q, .. } | Regularizer::CappedLq { q, .. } => q >= 1.0,
        }
    }

    /// Scalar prox problem `a t² + b t + r(t)` for one coordinate.
    pub(crate) fn scalar_spec(&self, a: f64, b: f64) -> LqProxSpec {
        match *self {
            Regularizer::Zero => LqProxSpec::new(a, b, 0.0, 1.0),
            Regularizer::L1(w) => LqProxSpec::new(a, b, w, 1.0),
            Regularizer::Lq { weight, q } => LqProxSpec::new(a, b, weight, q),
            Regularizer::CappedLq { weight, q, cap } => LqProxSpec::new(a, b, weight, q).with_cap(cap),
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        match *self {
            Regularizer::Zero => Ok(()),
            Regularizer::L1(w) if w >= 0.0 => Ok(()),
            Regularizer::Lq { weight, q } if weight >= 0.0 => {
                LqExponent::from_f64(q).map(|_| ()).map_err(|e| e.to_string())
            }
            Regularizer::CappedLq { weight, q, cap } if weight >= 0.0 && cap > 0.0 => {
                LqExponent::from_f64(q).map(|_| ()).map_err(|e| e.to_string())
            }
            other => Err(format!("invalid regularizer {other:?}")),
        }
    }
}

/// Linear map `A_i` from a block's column-major entries to constraint space.
#[derive(Debug, Clone, PartialEq)]
pub enum Coupling {
    /// `scale * I` on `dim` entries.
    Identity { dim: usize, scale: f64 },
    Dense(DMatrix<f64>),
}

impl Coupling {
    pub fn identity(dim: usize) -> Self {
        Coupling::Identity { dim, scale: 1.0 }
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        Coupling::Identity { dim, scale }
    }

    pub fn rows(&self) -> usize {
        match self {
            Coupling::Identity { dim, .. } => *dim,
            Coupling::Dense(m) => m.nrows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Coupling::Identity { dim, .. } => *dim,
            Coupling::Dense(m) => m.ncols(),
        }
    }

    pub fn is_unit_identity(&self) -> bool {
        match self {
            Coupling::Identity { scale, .. } => *scale == 1.0,
            Coupling::Dense(m) => m.is_square() && *m == DMatrix::identity(m.nrows(), m.ncols()),
        }
    }

    /// `A vec(x)`
    pub fn apply(&self, x: &Point) -> DVector<f64> {
        let v = DVector::from_column_slice(x.as_slice());
        match self {
            Coupling::Identity { scale, .. } => v * *scale,
            Coupling::Dense(m) => m * v,
        }
    }

    /// `Aᵀ y`, reshaped to `shape`.
    pub fn apply_transpose(&self, y: &DVector<f64>, shape: (usize, usize)) -> Point {
        let v = match self {
            Coupling::Identity { scale, .. } => y * *scale,
            Coupling::Dense(m) => m.tr_mul(y),
        };
        DMatrix::from_column_slice(shape.0, shape.1, v.as_slice())
    }

    /// `s` such that `AᵀA = s·I`, when it exists (relative tolerance 1e-10).
    pub fn gram_scale(&self) -> Option<f64> {
        match self {
            Coupling::Identity { scale, .. } => Some(scale * scale),
            Coupling::Dense(m) => {
                let g = m.tr_mul(m);
                let s = g.diagonal().mean();
                let dev = (&g - DMatrix::<f64>::identity(g.nrows(), g.ncols()) * s).norm();
                (dev <= 1e-10 * s.abs().max(1.0)).then_some(s)
            }
        }
    }

    /// Spectral norm `‖A‖₂`.
    pub fn norm(&self) -> f64 {
        match self {
            Coupling::Identity { scale, .. } => scale.abs(),
            Coupling::Dense(m) => match self.gram_scale() {
                Some(s) => s.sqrt(),
                None => m.clone().singular_values().max(),
            },
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Coupling::Identity { dim, scale } => DMatrix::identity(*dim, *dim) * *scale,
            Coupling::Dense(m) => m.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    pub name: String,
    pub manifold: ManifoldSpec,
    pub set: ConvexSet,
    pub regularizer: Regularizer,
    pub coupling: Coupling,
}

impl BlockSpec {
    pub fn new(name: impl Into<String>, manifold: ManifoldSpec, coupling: Coupling) -> Self {
        Self {
            name: name.into(),
            manifold,
            set: ConvexSet::Whole,
            regularizer: Regularizer::Zero,
            coupling,
        }
    }

    pub fn with_set(mut self, set: ConvexSet) -> Self {
        self.set = set;
        self
    }

    pub fn with_regularizer(mut self, regularizer: Regularizer) -> Self {
        self.regularizer = regularizer;
        self
    }

    pub fn shape(&self) -> (usize, usize) {
        self.manifold.shape()
    }

    /// A free Euclidean block with `A = I`, no regularizer and no convex set.
    pub fn is_basic_last(&self) -> bool {
        self.manifold.is_euclidean()
            && self.set == ConvexSet::Whole
            && self.regularizer.is_zero()
            && self.coupling.is_unit_identity()
    }

    pub fn is_feasible(&self, x: &Point) -> bool {
        self.manifold.is_feasible(x) && self.set.contains(x)
    }

    /// A random feasible point.
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let p = self.manifold.random_point(rng);
        match (self.set, self.manifold.kind) {
            (ConvexSet::Whole, _) => p,
            (ConvexSet::NonnegativeOrthant, ManifoldKind::Stiefel { .. }) => p,
            (ConvexSet::NonnegativeOrthant, _) => p.map(f64::abs),
            (ConvexSet::Box { lo, hi }, ManifoldKind::Euclidean(_)) => {
                p.map(|_| if hi > lo { rng.random_range(lo..=hi) } else { lo })
            }
            (ConvexSet::Box { lo, hi }, _) => p.map(|v| v.clamp(lo, hi)),
        }
    }

    /// Whether the block's step-one subproblem has a closed-form kernel.
    pub fn has_kernel(&self) -> bool {
        let zero = self.regularizer.is_zero();
        match (self.manifold.kind, self.set) {
            (ManifoldKind::Sphere(_), ConvexSet::Whole | ConvexSet::NonnegativeOrthant) => zero,
            (ManifoldKind::Stiefel { .. }, ConvexSet::Whole) => zero,
            (ManifoldKind::Euclidean(_), ConvexSet::Whole) => true,
            (ManifoldKind::Euclidean(_), ConvexSet::NonnegativeOrthant) => {
                zero || matches!(self.regularizer, Regularizer::L1(_))
            }
            (ManifoldKind::Euclidean(_), ConvexSet::Box { .. }) => zero,
            _ => false,
        }
    }
}

/// Smooth coupling objective `f` with `L`-Lipschitz gradient.
pub trait SmoothObjective: Send + Sync {
    fn value(&self, x: &[Point]) -> f64;

    /// `∇_i f(x)`, shaped like block `i`.
    fn partial_gradient(&self, block: usize, x: &[Point]) -> Point;

    fn gradient(&self, x: &[Point]) -> Vec<Point> {
        (0..x.len()).map(|i| self.partial_gradient(i, x)).collect()
    }

    /// Declared Lipschitz constant of `∇f`.
    fn lipschitz(&self) -> f64;

    /// `Some(c)` when `f` restricted to block `i` is `(c/2)‖x_i‖²` plus a term
    /// affine in `x_i`. The exact step needs this to complete the square.
    fn block_curvature(&self, _block: usize) -> Option<f64> {
        None
    }

    /// Bound `σ²` on the variance of a single stochastic gradient draw.
    fn noise_variance(&self) -> Option<f64> {
        None
    }

    /// Mini-batch stochastic gradient: the mean of `batch` independent draws.
    fn stochastic_partial_gradient(
        &self,
        _block: usize,
        _x: &[Point],
        _batch: usize,
        _rng: &mut dyn RngCore,
    ) -> Option<Point> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBounds {
    /// `f*`
    pub objective: f64,
    /// `Σ r_i*`
    pub regularizers: f64,
}

#[derive(Clone)]
pub struct MultiBlockProblem {
    pub blocks: Vec<BlockSpec>,
    pub objective: Arc<dyn SmoothObjective>,
    pub rhs: DVector<f64>,
    pub lower_bounds: Option<LowerBounds>,
}

impl fmt::Debug for MultiBlockProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MultiBlockProblem")
            .field("blocks", &self.blocks)
            .field("rhs", &self.rhs.len())
            .field("lipschitz", &self.objective.lipschitz())
            .field("lower_bounds", &self.lower_bounds)
            .finish()
    }
}

impl MultiBlockProblem {
    pub fn new(blocks: Vec<BlockSpec>, objective: Arc<dyn SmoothObjective>, rhs: DVector<f64>) -> Self {
        Self {
            blocks,
            objective,
            rhs,
            lower_bounds: None,
        }
    }

    pub fn with_lower_bounds(mut self, bounds: LowerBounds) -> Self {
        self.lower_bounds = Some(bounds);
        self
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn lipschitz(&self) -> f64 {
        self.objective.lipschitz()
    }

    pub fn last(&self) -> usize {
        self.blocks.len() - 1
    }

    /// `max_i ‖A_i‖₂`
    pub fn max_coupling_norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.coupling.norm()).fold(0.0, f64::max)
    }

    pub fn is_basic(&self) -> bool {
        self.blocks.len() >= 2 && self.blocks[self.last()].is_basic_last()
    }

    pub fn require_basic(&self) -> Result<()> {
        if self.blocks.len() < 2 {
            return Err(Error::NotBasicForm("need at least two blocks".into()));
        }
        let last = &self.blocks[self.last()];
        if !last.is_basic_last() {
            return Err(Error::NotBasicForm(format!(
                "last block `{}` must be free Euclidean with A_N = I",
                last.name
            )));
        }
        if last.coupling.rows() != self.rows() {
            return Err(Error::NotBasicForm("last block dimension must equal constraint rows".into()));
        }
        Ok(())
    }

    /// `Σ A_i vec(x_i) - b`
    pub fn residual(&self, x: &[Point]) -> DVector<f64> {
        let mut r = -self.rhs.clone();
        for (spec, xi) in self.blocks.iter().zip(x) {
            r += spec.coupling.apply(xi);
        }
        r
    }

    pub fn regularizer_value(&self, x: &[Point]) -> f64 {
        self.blocks.iter().zip(x).map(|(b, xi)| b.regularizer.value(xi)).sum()
    }

    /// A random feasible point for every block.
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Point> {
        self.blocks.iter().map(|b| b.random_point(rng)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    DimensionMismatch { message: String },
    BasicModelViolation { message: String },
    InvalidBlock { block: usize, message: String },
    NoKernel { block: usize, message: String },
    GradientMismatch { block: usize, relative_error: f64 },
    GradientInconsistent { block: usize },
    NonFinite { message: String },
}

/// Structural and finite-difference checks. Returns an empty list for a
/// well-formed basic-form problem.
pub fn validate(problem: &MultiBlockProblem) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let n = problem.n_blocks();
    if n < 2 {
        out.push(Diagnostic::DimensionMismatch {
            message: format!("need at least two blocks, got {n}"),
        });
        return out;
    }
    let m = problem.rows();
    let mut shapes_ok = true;
    for (i, b) in problem.blocks.iter().enumerate() {
        if b.coupling.cols() != b.manifold.ambient_dim() {
            shapes_ok = false;
            out.push(Diagnostic::DimensionMismatch {
                message: format!(
                    "block {i} ({}): coupling has {} columns but block has {} entries",
                    b.name,
                    b.coupling.cols(),
                    b.manifold.ambient_dim()
                ),
            });
        }
        if b.coupling.rows() != m {
            shapes_ok = false;
            out.push(Diagnostic::DimensionMismatch {
                message: format!("block {i} ({}): coupling has {} rows, rhs has {m}", b.name, b.coupling.rows()),
            });
        }
        if let Err(message) = b.regularizer.check() {
            out.push(Diagnostic::InvalidBlock { block: i, message });
        }
        if let ConvexSet::Box { lo, hi } = b.set {
            if !(lo <= hi) {
                out.push(Diagnostic::InvalidBlock {
                    block: i,
                    message: format!("empty box [{lo}, {hi}]"),
                });
            }
        }
        if i + 1 < n && !b.has_kernel() {
            out.push(Diagnostic::NoKernel {
                block: i,
                message: format!(
                    "{:?} with {:?} and {:?} has no closed-form subproblem; decouple the regularizer",
                    b.manifold.kind, b.set, b.regularizer
                ),
            });
        }
    }
    if !problem.blocks[n - 1].is_basic_last() {
        out.push(Diagnostic::BasicModelViolation {
            message: "last block must be free Euclidean, unregularized, with A_N = I".into(),
        });
    }
    if !problem.rhs.iter().all(|v| v.is_finite()) {
        out.push(Diagnostic::NonFinite { message: "rhs".into() });
    }
    if !(problem.lipschitz() > 0.0) {
        out.push(Diagnostic::NonFinite {
            message: format!("lipschitz constant must be positive, got {}", problem.lipschitz()),
        });
    }
    if shapes_ok {
        out.extend(gradient_check(problem, 5, 0x5eed));
    }
    out
}

/// Central-difference check of every partial gradient along random unit
/// directions (`h = 1e-6`, relative error threshold `1e-4`), plus agreement
/// between the full gradient and the partial gradients.
pub fn gradient_check(problem: &MultiBlockProblem, points: usize, seed: u64) -> Vec<Diagnostic> {
    const H: f64 = 1e-6;
    const TOL: f64 = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obj = &problem.objective;
    let mut worst = vec![0.0f64; problem.n_blocks()];
    let mut inconsistent = vec![false; problem.n_blocks()];
    for _ in 0..points {
        let x = problem.random_point(&mut rng);
        let full = obj.gradient(&x);
        for (i, spec) in problem.blocks.iter().enumerate() {
            let g = obj.partial_gradient(i, &x);
            if (&g - &full[i]).norm() > 1e-10 * (1.0 + g.norm()) {
                inconsistent[i] = true;
            }
            for _ in 0..3 {
                let (r, c) = spec.shape();
                let d = DMatrix::<f64>::from_fn(r, c, |_, _| rng.sample(rand_distr::StandardNormal));
                let d = &d / d.norm();
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += &d * H;
                xm[i] -= &d * H;
                let fd = (obj.value(&xp) - obj.value(&xm)) / (2.0 * H);
                let an = g.dot(&d);
                let rel = (fd - an).abs() / g.norm().max(1.0);
                worst[i] = worst[i].max(rel);
            }
        }
    }
    let mut out = Vec::new();
    for (i, w) in worst.into_iter().enumerate() {
        if !(w <= TOL) {
            out.push(Diagnostic::GradientMismatch { block: i, relative_error: w });
        }
        if inconsistent[i] {
            out.push(Diagnostic::GradientInconsistent { block: i });
        }
    }
    out
}

/// Power iteration on gradient differences. Exact for objectives whose
/// gradient is affine (quadratic coupling); a lower estimate otherwise.
pub fn estimate_lipschitz(objective: &dyn SmoothObjective, at: &[Point], iters: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g0 = objective.gradient(at);
    let mut d: Vec<Point> = at
        .iter()
        .map(|x| DMatrix::from_fn(x.nrows(), x.ncols(), |_, _| rng.sample(rand_distr::StandardNormal)))
        .collect();
    let mut est = 0.0;
    for _ in 0..iters.max(1) {
        let norm = d.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        for v in &mut d {
            *v /= norm;
        }
        let shifted: Vec<Point> = at.iter().zip(&d).map(|(x, v)| x + v).collect();
        let g1 = objective.gradient(&shifted);
        d = g1.iter().zip(&g0).map(|(a, b)| a - b).collect();
        est = d.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
    }
    est
}

#[cfg(test)]
mod tests;
