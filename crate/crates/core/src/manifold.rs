//! Euclidean, sphere and Stiefel block constraints.
//!
//! Every block variable is stored as a dense column-major matrix. Euclidean and
//! sphere blocks are `dim x 1` columns; Stiefel blocks are `n x m` with
//! orthonormal columns. Tangent projections are the orthogonal projections of
//! the embedding space onto `T_x M`:
//!
//! ```text
//! Euclidean  v
//! Sphere     v - <x, v> x
//! Stiefel    v - x sym(x^T v),   sym(A) = (A + A^T) / 2
//! ```
//!
//! Retractions: normalization for the sphere and the Q factor of a thin QR
//! decomposition (with positive `R` diagonal) for Stiefel.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = DMatrix<f64>;

pub const DEFAULT_FEASIBILITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    Euclidean(usize),
    Sphere(usize),
    Stiefel { rows: usize, cols: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSpec {
    pub kind: ManifoldKind,
    pub tolerance: f64,
}

/// A direction in the tangent space at `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: Point,
    pub direction: Point,
}

impl TangentVector {
    pub fn norm(&self) -> f64 {
        self.direction.norm()
    }

    pub fn into_direction(self) -> Point {
        self.direction
    }
}

impl ManifoldSpec {
    pub fn euclidean(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("euclidean block needs dim >= 1".into()));
        }
        Ok(Self::with_kind(ManifoldKind::Euclidean(dim)))
    }

    pub fn sphere(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("sphere needs dim >= 1".into()));
        }
        Ok(Self::with_kind(ManifoldKind::Sphere(dim)))
    }

    pub fn stiefel(rows: usize, cols: usize) -> Result<Self> {
        if cols == 0 || rows < cols {
            return Err(Error::InvalidArgument(format!(
                "stiefel manifold needs n >= m >= 1, got n={rows} m={cols}"
            )));
        }
        Ok(Self::with_kind(ManifoldKind::Stiefel { rows, cols }))
    }

    fn with_kind(kind: ManifoldKind) -> Self {
        Self {
            kind,
            tolerance: DEFAULT_FEASIBILITY_TOL,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance.max(0.0);
        self
    }

    pub fn shape(&self) -> (usize, usize) {
        match self.kind {
            ManifoldKind::Euclidean(d) | ManifoldKind::Sphere(d) => (d, 1),
            ManifoldKind::Stiefel { rows, cols } => (rows, cols),
        }
    }

    /// Number of scalar entries of a point.
    pub fn ambient_dim(&self) -> usize {
        let (r, c) = self.shape();
        r * c
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.kind, ManifoldKind::Euclidean(_))
    }

    pub fn is_compact(&self) -> bool {
        !self.is_euclidean()
    }

    pub fn check_shape(&self, x: &Point) -> Result<()> {
        let expected = self.shape();
        let actual = x.shape();
        if expected != actual {
            return Err(Error::ShapeMismatch { expected, actual });
        }
        Ok(())
    }

    /// `|‖x‖ - 1|` on the sphere, `‖xᵀx - I‖_F` on Stiefel, zero otherwise.
    pub fn violation(&self, x: &Point) -> f64 {
        match self.kind {
            ManifoldKind::Euclidean(_) => 0.0,
            ManifoldKind::Sphere(_) => (x.norm() - 1.0).abs(),
            ManifoldKind::Stiefel { cols, .. } => {
                (x.transpose() * x - DMatrix::<f64>::identity(cols, cols)).norm()
            }
        }
    }

    pub fn is_feasible(&self, x: &Point) -> bool {
        x.shape() == self.shape() && self.violation(x) <= self.tolerance
    }

    pub fn check_feasible(&self, x: &Point) -> Result<()> {
        self.check_shape(x)?;
        let violation = self.violation(x);
        if !(violation <= self.tolerance) {
            return Err(Error::Infeasible {
                violation,
                tolerance: self.tolerance,
            });
        }
        Ok(())
    }

    /// Tangent-space membership test with relative tolerance `1e-8`.
    pub fn is_tangent(&self, x: &Point, v: &Point) -> bool {
        let scale = 1e-8 * v.norm().max(f64::MIN_POSITIVE);
        match self.kind {
            ManifoldKind::Euclidean(_) => true,
            ManifoldKind::Sphere(_) => x.dot(v).abs() <= scale,
            ManifoldKind::Stiefel { .. } => {
                let xtv = x.transpose() * v;
                (&xtv + xtv.transpose()).norm() <= scale
            }
        }
    }

    /// Orthogonal projection onto the tangent space at `x`.
    pub fn tangent_project(&self, x: &Point, v: &Point) -> Result<TangentVector> {
        self.check_feasible(x)?;
        self.check_shape(v)?;
        Ok(TangentVector {
            base: x.clone(),
            direction: self.project_unchecked(x, v),
        })
    }

    /// Riemannian gradient of a function with Euclidean gradient `euclid_grad`.
    pub fn riemannian_grad(&self, x: &Point, euclid_grad: &Point) -> Result<TangentVector> {
        self.tangent_project(x, euclid_grad)
    }

    /// Projection without shape or feasibility checks; used on solver hot paths
    /// where both have already been established.
    pub(crate) fn project_unchecked(&self, x: &Point, v: &Point) -> Point {
        match self.kind {
            ManifoldKind::Euclidean(_) => v.clone(),
            ManifoldKind::Sphere(_) => v - x * x.dot(v),
            ManifoldKind::Stiefel { .. } => {
                let xtv = x.transpose() * v;
                let sym = (&xtv + xtv.transpose()) * 0.5;
                v - x * sym
            }
        }
    }

    /// Retraction `R_x(t v)`. Requires `t >= 0`; `v` is expected to be tangent.
    pub fn retract(&self, x: &Point, v: &Point, t: f64) -> Result<Point> {
        self.check_shape(x)?;
        self.check_shape(v)?;
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidArgument(format!("step t must be finite and >= 0, got {t}")));
        }
        if t == 0.0 {
            return Ok(x.clone());
        }
        let moved = x + v * t;
        match self.kind {
            ManifoldKind::Euclidean(_) => Ok(moved),
            ManifoldKind::Sphere(_) => {
                let n = moved.norm();
                if n == 0.0 || !n.is_finite() {
                    return Err(Error::DegenerateRetraction);
                }
                Ok(moved / n)
            }
            ManifoldKind::Stiefel { .. } => qr_orthonormalize(moved),
        }
    }

    /// A random feasible point: Gaussian entries mapped onto the manifold.
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let (r, c) = self.shape();
        loop {
            let g = DMatrix::<f64>::from_fn(r, c, |_, _| rng.sample(StandardNormal));
            let p = match self.kind {
                ManifoldKind::Euclidean(_) => Ok(g),
                ManifoldKind::Sphere(_) => {
                    let n = g.norm();
                    if n > 0.0 {
                        Ok(g / n)
                    } else {
                        Err(Error::DegenerateRetraction)
                    }
                }
                ManifoldKind::Stiefel { .. } => qr_orthonormalize(g),
            };
            if let Ok(p) = p {
                return p;
            }
        }
    }

    /// A random unit-norm tangent vector at `x`.
    pub fn random_tangent<R: Rng + ?Sized>(&self, x: &Point, rng: &mut R) -> Point {
        let (r, c) = self.shape();
        loop {
            let g = DMatrix::<f64>::from_fn(r, c, |_, _| rng.sample(StandardNormal));
            let v = self.project_unchecked(x, &g);
            let n = v.norm();
            if n > 1e-12 {
                return v / n;
            }
        }
    }
}

/// Q factor of the thin QR decomposition with the sign convention `R_ii > 0`.
pub fn qr_orthonormalize(a: DMatrix<f64>) -> Result<Point> {
    let cols = a.ncols();
    if a.nrows() < cols {
        return Err(Error::InvalidArgument("QR retraction needs rows >= cols".into()));
    }
    let qr = a.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..cols {
        let d = r[(j, j)];
        if d == 0.0 || !d.is_finite() {
            return Err(Error::DegenerateRetraction);
        }
        if d < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}
