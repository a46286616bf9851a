//! Closed-form solvers for the block subproblems the solver generates.

mod poly;

pub use poly::{poly_eval, real_poly_roots};

use std::cmp::Ordering;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimizes `bᵀx` over `{‖x‖ = 1, x ≥ 0}`.
///
/// With `b⁻ = -min(b, 0)` the minimizer is `b⁻ / ‖b⁻‖` when `b⁻ ≠ 0`, otherwise
/// the unit vector `e_i` with `i = argmin_j b_j` (first index on ties). The
/// output has the shape of `b`.
pub fn linear_min_on_nonneg_sphere(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if b.is_empty() {
        return Err(Error::InvalidArgument("empty vector".into()));
    }
    if b.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("b"));
    }
    let neg = b.map(|v| (-v).max(0.0));
    let n = neg.norm();
    if n > 0.0 {
        return Ok(neg / n);
    }
    let mut best = 0;
    for (i, &v) in b.iter().enumerate() {
        if v < b[best] {
            best = i;
        }
    }
    let mut x = DMatrix::zeros(b.nrows(), b.ncols());
    x[best] = 1.0;
    Ok(x)
}

/// Minimizes `bᵀx` over the unit sphere: `-b/‖b‖`, or `e_1` when `b = 0`.
pub fn linear_min_on_sphere(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if b.is_empty() {
        return Err(Error::InvalidArgument("empty vector".into()));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("b"));
    }
    let n = b.norm();
    if n > 0.0 {
        return Ok(-b / n);
    }
    let mut x = DMatrix::zeros(b.nrows(), b.ncols());
    x[0] = 1.0;
    Ok(x)
}

/// The orthonormal-column matrix closest to `b` in Frobenius norm.
///
/// Returns `Q Pᵀ` from the thin SVD `b = Q Σ Pᵀ`, which maximizes `⟨2b, U⟩`
/// over `UᵀU = I`. The optimum is unique only when `b` has full column rank;
/// otherwise one of the optimal matrices is returned. `b = 0` maps to the
/// leading columns of the identity.
pub fn nearest_orthogonal(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, m) = b.shape();
    if m == 0 || n < m {
        return Err(Error::InvalidArgument(format!(
            "nearest orthogonal matrix needs n >= m >= 1, got {n}x{m}"
        )));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("b"));
    }
    if b.iter().all(|&v| v == 0.0) {
        return Ok(DMatrix::identity(n, m));
    }
    let svd = b.clone().svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::InvalidArgument("SVD failed".into())),
    };
    let mut out = u * v_t;
    // Columns belonging to zero singular values may lose orthonormality in
    // the bidiagonal sweep; one re-orthonormalization pass fixes it.
    let cols = out.ncols();
    if (out.transpose() * &out - DMatrix::<f64>::identity(cols, cols)).norm() > 1e-12 {
        out = crate::manifold::qr_orthonormalize(out)?;
    }
    Ok(out)
}

/// Elementwise `max(b, 0)`: the Frobenius projection onto the nonnegative orthant.
pub fn nonneg_project(b: &DMatrix<f64>) -> DMatrix<f64> {
    b.map(|v| v.max(0.0))
}

/// Supported regularizer exponents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LqExponent {
    Half,
    TwoThirds,
    One,
}

impl LqExponent {
    pub fn from_f64(q: f64) -> Result<Self> {
        const TOL: f64 = 1e-9;
        if (q - 0.5).abs() < TOL {
            Ok(Self::Half)
        } else if (q - 2.0 / 3.0).abs() < TOL {
            Ok(Self::TwoThirds)
        } else if (q - 1.0).abs() < TOL {
            Ok(Self::One)
        } else {
            Err(Error::UnsupportedExponent(q))
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Self::Half => 0.5,
            Self::TwoThirds => 2.0 / 3.0,
            Self::One => 1.0,
        }
    }

    /// `|x|^q`
    pub fn power(self, x: f64) -> f64 {
        let a = x.abs();
        match self {
            Self::Half => a.sqrt(),
            Self::TwoThirds => a.cbrt().powi(2),
            Self::One => a,
        }
    }
}

/// Scalar problem `min_x a x² + b x + c·φ(x)` with `φ(x) = |x|^q`, or the
/// capped `min(|x|^q, B|x|)` when `cap` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LqProxSpec {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub q: f64,
    pub cap: Option<f64>,
}

impl LqProxSpec {
    pub fn new(a: f64, b: f64, c: f64, q: f64) -> Self {
        Self { a, b, c, q, cap: None }
    }

    pub fn with_cap(mut self, cap: f64) -> Self {
        self.cap = Some(cap);
        self
    }

    fn validate(&self) -> Result<LqExponent> {
        if !(self.a.is_finite() && self.b.is_finite() && self.c.is_finite()) {
            return Err(Error::NonFinite("lq prox coefficients"));
        }
        if self.a <= 0.0 {
            return Err(Error::InvalidArgument(format!("need a > 0, got {}", self.a)));
        }
        if self.c < 0.0 {
            return Err(Error::InvalidArgument(format!("need c >= 0, got {}", self.c)));
        }
        if let Some(cap) = self.cap {
            if !(cap > 0.0) {
                return Err(Error::InvalidArgument(format!("cap must be positive, got {cap}")));
            }
        }
        LqExponent::from_f64(self.q)
    }

    /// Objective value, including the cap when present.
    pub fn objective(&self, x: f64) -> f64 {
        let q = LqExponent::from_f64(self.q).unwrap_or(LqExponent::One);
        let reg = match self.cap {
            Some(cap) => q.power(x).min(cap * x.abs()),
            None => q.power(x),
        };
        self.a * x * x + self.b * x + self.c * reg
    }
}

fn soft_threshold(a: f64, b: f64, weight: f64) -> f64 {
    let mag = (b.abs() - weight).max(0.0) / (2.0 * a);
    if b > 0.0 {
        -mag
    } else {
        mag
    }
}

/// Lexicographic preference: lower objective, then smaller `|x|`, then smaller `x`.
fn better(fx: f64, x: f64, fy: f64, y: f64) -> bool {
    match fx.total_cmp(&fy) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => match x.abs().total_cmp(&y.abs()) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => x < y,
        },
    }
}

fn uncapped_argmin(a: f64, b: f64, c: f64, q: LqExponent) -> Result<f64> {
    if c == 0.0 {
        return Ok(-b / (2.0 * a));
    }
    if q == LqExponent::One {
        return Ok(soft_threshold(a, b, c));
    }
    let objective = |x: f64| a * x * x + b * x + c * q.power(x);
    let cq = c * q.value();
    let mut best = 0.0;
    let mut best_f = objective(0.0);
    // x > 0 uses b, x < 0 the mirrored problem with -b.
    for sign in [1.0, -1.0] {
        let bb = sign * b;
        let (coeffs, lift): (Vec<f64>, fn(f64) -> f64) = match q {
            // z = √x: 2a z³ + b z + cq = 0
            LqExponent::Half => (vec![2.0 * a, 0.0, bb, cq], |z| z * z),
            // z = x^{1/3}: 2a z⁴ + b z + cq = 0
            LqExponent::TwoThirds => (vec![2.0 * a, 0.0, 0.0, bb, cq], |z| z * z * z),
            LqExponent::One => unreachable!(),
        };
        for z in real_poly_roots(&coeffs)? {
            if z > 0.0 {
                let x = sign * lift(z);
                let fx = objective(x);
                if better(fx, x, best_f, best) {
                    best = x;
                    best_f = fx;
                }
            }
        }
    }
    Ok(best)
}

/// Global minimizer of `a x² + b x + c|x|^q` for `q ∈ {1/2, 2/3, 1}`.
///
/// For `q < 1` the stationary points on each half-line are roots of a cubic
/// (`q = 1/2`) or quartic (`q = 2/3`) in `z = |x|^{1-q}`-type substitutions; the
/// winner is picked among them and `0`. With a cap the result is the better of
/// the uncapped minimizer and the minimizer of `a x² + b x + cB|x|`, both
/// scored on the capped objective.
pub fn scalar_lq_prox(spec: &LqProxSpec) -> Result<f64> {
    let q = spec.validate()?;
    let x1 = uncapped_argmin(spec.a, spec.b, spec.c, q)?;
    let Some(cap) = spec.cap else {
        return Ok(x1);
    };
    let x2 = soft_threshold(spec.a, spec.b, spec.c * cap);
    let (f1, f2) = (spec.objective(x1), spec.objective(x2));
    Ok(if better(f2, x2, f1, x1) { x2 } else { x1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    /// Brute-force minimum of bᵀx over the nonnegative quarter circle.
    fn quarter_circle_min(b: &[f64; 2]) -> f64 {
        (0..=20_000)
            .map(|k| {
                let t = std::f64::consts::FRAC_PI_2 * k as f64 / 20_000.0;
                b[0] * t.cos() + b[1] * t.sin()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn nonneg_sphere_examples() {
        let x = linear_min_on_nonneg_sphere(&col(&[-1.0, 2.0])).unwrap();
        assert_eq!(x, col(&[1.0, 0.0]));
        assert!((quarter_circle_min(&[-1.0, 2.0]) + 1.0).abs() < 1e-12);

        let x = linear_min_on_nonneg_sphere(&col(&[2.0, 1.0])).unwrap();
        assert_eq!(x, col(&[0.0, 1.0]));
        assert!((quarter_circle_min(&[2.0, 1.0]) - 1.0).abs() < 1e-12);

        assert_eq!(linear_min_on_nonneg_sphere(&col(&[0.0, 0.0])).unwrap(), col(&[1.0, 0.0]));
    }

    #[test]
    fn nonneg_sphere_errors() {
        assert!(linear_min_on_nonneg_sphere(&DMatrix::zeros(0, 1)).is_err());
        assert!(linear_min_on_nonneg_sphere(&col(&[f64::NAN, 1.0])).is_err());
    }

    #[test]
    fn nearest_orthogonal_examples() {
        let (s, c) = (0.3f64.sin(), 0.3f64.cos());
        let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        assert!((nearest_orthogonal(&rot).unwrap() - &rot).norm() < 1e-12);

        let d = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.5]);
        assert!((nearest_orthogonal(&d).unwrap() - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);

        assert_eq!(
            nearest_orthogonal(&DMatrix::zeros(2, 2)).unwrap(),
            DMatrix::<f64>::identity(2, 2)
        );
        assert!(nearest_orthogonal(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn nearest_orthogonal_rank_deficient_is_still_orthonormal() {
        let b = DMatrix::from_row_slice(4, 3, &[1.0, 1.0, 0.0, 2.0, 2.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        let u = nearest_orthogonal(&b).unwrap();
        assert!((u.transpose() * &u - DMatrix::<f64>::identity(3, 3)).norm() < 1e-10);
    }

    #[test]
    fn nonneg_projection_examples() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.0, 3.0]);
        assert_eq!(nonneg_project(&b), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]));
        let pos = DMatrix::from_row_slice(1, 3, &[0.0, 1.5, 2.0]);
        assert_eq!(nonneg_project(&pos), pos);
        let neg = DMatrix::from_row_slice(1, 2, &[-1.0, -0.1]);
        assert_eq!(nonneg_project(&neg), DMatrix::zeros(1, 2));
    }

    /// Dense grid minimum on [-10, 10] with step 1e-5.
    fn grid_min(spec: &LqProxSpec) -> f64 {
        (0..=2_000_000)
            .map(|k| spec.objective(-10.0 + 1e-5 * k as f64))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn scalar_prox_examples() {
        assert_eq!(scalar_lq_prox(&LqProxSpec::new(1.0, 0.0, 1.0, 0.5)).unwrap(), 0.0);

        let l1 = LqProxSpec::new(0.5, -2.0, 1.0, 1.0);
        let x = scalar_lq_prox(&l1).unwrap();
        assert!((x - 1.0).abs() < 1e-15);
        assert!((grid_min(&l1) + 0.5).abs() < 1e-9);

        let half = LqProxSpec::new(0.5, -3.0, 1.0, 0.5);
        let x = scalar_lq_prox(&half).unwrap();
        // frozen from the grid oracle: largest root of z³ - 3z + 1/2 is 1.641784
        assert!((x - 2.695_45).abs() < 1e-4, "x = {x}");
        let g = grid_min(&half);
        assert!((half.objective(x) - g).abs() < 1e-6);
        assert!((g + 2.811_842).abs() < 1e-5, "grid min {g}");
    }

    #[test]
    fn scalar_prox_rejects_bad_specs() {
        assert!(matches!(
            scalar_lq_prox(&LqProxSpec::new(1.0, 0.0, 1.0, 0.3)),
            Err(Error::UnsupportedExponent(_))
        ));
        assert!(scalar_lq_prox(&LqProxSpec::new(0.0, 0.0, 1.0, 1.0)).is_err());
        assert!(scalar_lq_prox(&LqProxSpec::new(1.0, 0.0, -1.0, 1.0)).is_err());
    }

    #[test]
    fn zero_weight_gives_unconstrained_minimizer() {
        for q in [0.5, 2.0 / 3.0, 1.0] {
            let s = LqProxSpec::new(1.7, -0.9, 0.0, q);
            assert_eq!(scalar_lq_prox(&s).unwrap(), 0.9 / 3.4);
        }
    }

    #[test]
    fn negative_branch_mirrors_positive() {
        for q in [0.5, 2.0 / 3.0, 1.0] {
            let pos = scalar_lq_prox(&LqProxSpec::new(0.8, -4.0, 1.3, q)).unwrap();
            let neg = scalar_lq_prox(&LqProxSpec::new(0.8, 4.0, 1.3, q)).unwrap();
            assert!(pos > 0.0);
            assert_eq!(pos, -neg);
        }
    }

    #[test]
    fn huge_cap_agrees_outside_window() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let cap: f64 = 1e8;
        for _ in 0..500 {
            let q = [0.5, 2.0 / 3.0][rng.random_range(0..2)];
            let s = LqProxSpec::new(rng.random_range(0.1..3.0), rng.random_range(-6.0..6.0), rng.random_range(0.0..2.0), q);
            let plain = scalar_lq_prox(&s).unwrap();
            let window = cap.powf(-1.0 / (1.0 - q));
            if plain.abs() > window {
                assert_eq!(scalar_lq_prox(&s.with_cap(cap)).unwrap(), plain);
            }
        }
    }
}
