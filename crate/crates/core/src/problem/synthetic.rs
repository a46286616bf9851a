use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{BlockSpec, Coupling, LowerBounds, MultiBlockProblem, SmoothObjective};
use crate::error::{Error, Result};
use crate::manifold::{qr_orthonormalize, ManifoldSpec, Point};

/// Random instance of
///
/// ```text
/// f(x) = Σ_i <c_i, x_i> + ½ ‖Σ_i B_i vec(x_i) - d‖²
/// ```
///
/// with spheres (or Stiefel matrices) on blocks `0..N-1` and a free Euclidean
/// last block. Each `B_i` is a multiple of a matrix with orthonormal columns,
/// so `f` is an isotropic quadratic in every single block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    /// Ambient dimension of every constrained block (`N - 1` entries).
    pub dims: Vec<usize>,
    /// Constraint rows, which is also the last block's dimension.
    pub rows: usize,
    /// When set, constrained blocks are `dim x cols` Stiefel points.
    pub stiefel_cols: Option<usize>,
    /// Standard deviation `σ` of the stochastic gradient oracle.
    pub noise: Option<f64>,
}

impl SyntheticSpec {
    /// `blocks - 1` sphere blocks of dimension `dim` and `rows` constraints.
    pub fn spheres(seed: u64, blocks: usize, dim: usize, rows: usize) -> Self {
        Self {
            seed,
            dims: vec![dim; blocks.saturating_sub(1)],
            rows,
            stiefel_cols: None,
            noise: None,
        }
    }

    pub fn with_stiefel(mut self, cols: usize) -> Self {
        self.stiefel_cols = Some(cols);
        self
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise = Some(sigma);
        self
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticObjective {
    linear: Vec<Point>,
    /// `[B_1 ... B_N]`
    b: DMatrix<f64>,
    offsets: Vec<usize>,
    shapes: Vec<(usize, usize)>,
    curvature: Vec<f64>,
    d: DVector<f64>,
    lipschitz: f64,
    noise: Option<f64>,
}

impl SyntheticObjective {
    fn inner(&self, x: &[Point]) -> DVector<f64> {
        let mut r = -self.d.clone();
        for (i, xi) in x.iter().enumerate() {
            let cols = self.b.columns(self.offsets[i], xi.len());
            r += cols * DVector::from_column_slice(xi.as_slice());
        }
        r
    }

    pub fn noise(&self) -> Option<f64> {
        self.noise
    }
}

impl SmoothObjective for SyntheticObjective {
    fn value(&self, x: &[Point]) -> f64 {
        let lin: f64 = self.linear.iter().zip(x).map(|(c, xi)| c.dot(xi)).sum();
        lin + 0.5 * self.inner(x).norm_squared()
    }

    fn partial_gradient(&self, block: usize, x: &[Point]) -> Point {
        let (r, c) = self.shapes[block];
        let g = self.b.columns(self.offsets[block], r * c).tr_mul(&self.inner(x));
        &self.linear[block] + DMatrix::from_column_slice(r, c, g.as_slice())
    }

    fn gradient(&self, x: &[Point]) -> Vec<Point> {
        let res = self.inner(x);
        let g = self.b.tr_mul(&res);
        (0..x.len())
            .map(|i| {
                let (r, c) = self.shapes[i];
                let gi = g.rows(self.offsets[i], r * c);
                &self.linear[i] + DMatrix::from_column_slice(r, c, gi.as_slice())
            })
            .collect()
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn block_curvature(&self, block: usize) -> Option<f64> {
        self.curvature.get(block).copied()
    }

    fn noise_variance(&self) -> Option<f64> {
        self.noise.map(|s| s * s)
    }

    fn stochastic_partial_gradient(
        &self,
        block: usize,
        x: &[Point],
        batch: usize,
        rng: &mut dyn RngCore,
    ) -> Option<Point> {
        let sigma = self.noise?;
        let mut g = self.partial_gradient(block, x);
        let batch = batch.max(1);
        let per_coord = sigma / (g.len() as f64).sqrt() / (batch as f64).sqrt();
        // the mean of `batch` i.i.d. Gaussians is Gaussian with std / sqrt(batch)
        for v in g.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += per_coord * z;
        }
        Some(g)
    }
}

fn orthonormal_columns(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    let g = DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal));
    qr_orthonormalize(g)
}

/// Deterministic per seed. The Lipschitz constant `‖[B_1 ... B_N]‖₂²` is exact
/// and the lower bounds are `f* = -Σ‖c_i‖` (scaled by `√cols` on Stiefel
/// blocks) and `Σ r_i* = 0`.
pub fn build_synthetic_problem(spec: &SyntheticSpec) -> Result<MultiBlockProblem> {
    if spec.dims.is_empty() {
        return Err(Error::InvalidArgument("need at least two blocks".into()));
    }
    if spec.rows == 0 || spec.dims.contains(&0) {
        return Err(Error::InvalidArgument("dimensions must be positive".into()));
    }
    if let Some(s) = spec.noise {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise must be nonnegative, got {s}")));
        }
    }
    let cols = spec.stiefel_cols.unwrap_or(1);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut shapes: Vec<(usize, usize)> = spec.dims.iter().map(|&d| (d, cols)).collect();
    shapes.push((spec.rows, 1));
    let sizes: Vec<usize> = shapes.iter().map(|(r, c)| r * c).collect();
    let p = sizes.iter().copied().max().unwrap_or(1);
    let total: usize = sizes.iter().sum();

    let mut blocks = Vec::with_capacity(shapes.len());
    for (i, &(r, c)) in shapes[..shapes.len() - 1].iter().enumerate() {
        let manifold = match spec.stiefel_cols {
            Some(_) => ManifoldSpec::stiefel(r, c)?,
            None => ManifoldSpec::sphere(r)?,
        };
        let n = r * c;
        let coupling = if n <= spec.rows {
            let a: f64 = rng.random_range(0.5..1.0);
            Coupling::Dense(orthonormal_columns(spec.rows, n, &mut rng)? * a)
        } else {
            // more columns than rows: a scaled random matrix with unit-norm columns
            let mut m = DMatrix::from_fn(spec.rows, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            for mut col in m.column_iter_mut() {
                let nrm = col.norm();
                col /= nrm.max(f64::MIN_POSITIVE);
            }
            Coupling::Dense(m * 0.5)
        };
        blocks.push(BlockSpec::new(format!("x{}", i + 1), manifold, coupling));
    }
    blocks.push(BlockSpec::new(
        format!("x{}", shapes.len()),
        ManifoldSpec::euclidean(spec.rows)?,
        Coupling::identity(spec.rows),
    ));

    let mut b = DMatrix::zeros(p, total);
    let mut offsets = Vec::with_capacity(sizes.len());
    let mut curvature = Vec::with_capacity(sizes.len());
    let mut off = 0;
    for &n in &sizes {
        let s: f64 = rng.random_range(0.5..1.0);
        let q = orthonormal_columns(p, n, &mut rng)?;
        b.columns_mut(off, n).copy_from(&(q * s));
        offsets.push(off);
        curvature.push(s * s);
        off += n;
    }

    let mut linear = Vec::with_capacity(shapes.len());
    let mut f_star = 0.0;
    for (i, &(r, c)) in shapes.iter().enumerate() {
        if i + 1 == shapes.len() {
            linear.push(DMatrix::zeros(r, c));
        } else {
            let ci = DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
            f_star -= ci.norm() * (c as f64).sqrt();
            linear.push(ci);
        }
    }
    let d = DVector::from_fn(p, |_, _| rng.sample(StandardNormal));
    let rhs = DVector::from_fn(spec.rows, |_, _| rng.sample(StandardNormal));

    let sv = b.clone().singular_values().max();
    let objective = SyntheticObjective {
        linear,
        b,
        offsets,
        shapes,
        curvature,
        d,
        lipschitz: sv * sv,
        noise: spec.noise,
    };
    Ok(MultiBlockProblem::new(blocks, Arc::new(objective), rhs).with_lower_bounds(LowerBounds {
        objective: f_star,
        regularizers: 0.0,
    }))
}
