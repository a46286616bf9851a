use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Order-`d` tensor stored row-major: the last index varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad tensor shape {dims:?}")));
        }
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::InvalidArgument(format!(
                "shape {dims:?} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::new(dims.to_vec(), vec![0.0; dims.iter().product()])
    }

    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let mut t = Self::zeros(dims)?;
        let mut idx = vec![0; dims.len()];
        for k in 0..t.data.len() {
            t.data[k] = f(&idx);
            increment(&mut idx, dims);
        }
        Ok(t)
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn offset(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.dims).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    pub fn norm_squared(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::InvalidArgument(format!(
                "tensor shapes differ: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(Self {
            dims: self.dims.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn nnz(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }
}

/// Row-major multi-index increment.
fn increment(idx: &mut [usize], dims: &[usize]) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < dims[k] {
            return;
        }
        idx[k] = 0;
    }
}

fn check_mode(t: &DenseTensor, j: usize) -> Result<()> {
    if j == 0 || j > t.order() {
        return Err(Error::InvalidArgument(format!(
            "mode {j} out of range 1..={}",
            t.order()
        )));
    }
    Ok(())
}

/// Column of entry `idx` in the mode-`j` unfolding (`j` zero-based).
fn unfold_col(idx: &[usize], dims: &[usize], j: usize) -> usize {
    let mut col = 0;
    let mut stride = 1;
    for (l, (&i, &n)) in idx.iter().zip(dims).enumerate() {
        if l != j {
            col += i * stride;
            stride *= n;
        }
    }
    col
}

/// Mode-`j` unfolding (`j` is 1-based). Columns enumerate the remaining modes
/// in ascending order with the lowest mode fastest, so that
/// `(C ×₁ U₁ ⋯ ×_d U_d)_(j) = U_j C_(j) (U_d ⊗ ⋯ ⊗ U_{j+1} ⊗ U_{j-1} ⊗ ⋯ ⊗ U₁)ᵀ`.
pub fn mode_unfold(t: &DenseTensor, j: usize) -> Result<DMatrix<f64>> {
    check_mode(t, j)?;
    let j = j - 1;
    let rows = t.dims[j];
    let cols = t.len() / rows;
    let mut m = DMatrix::zeros(rows, cols);
    let mut idx = vec![0; t.order()];
    for &v in &t.data {
        m[(idx[j], unfold_col(&idx, &t.dims, j))] = v;
        increment(&mut idx, &t.dims);
    }
    Ok(m)
}

/// Inverse of [`mode_unfold`] for a tensor of shape `dims`.
pub fn mode_refold(m: &DMatrix<f64>, dims: &[usize], j: usize) -> Result<DenseTensor> {
    let mut t = DenseTensor::zeros(dims)?;
    check_mode(&t, j)?;
    let j = j - 1;
    let cols = t.len() / dims[j];
    if m.shape() != (dims[j], cols) {
        return Err(Error::ShapeMismatch {
            expected: (dims[j], cols),
            actual: m.shape(),
        });
    }
    let mut idx = vec![0; dims.len()];
    for k in 0..t.data.len() {
        t.data[k] = m[(idx[j], unfold_col(&idx, dims, j))];
        increment(&mut idx, dims);
    }
    Ok(t)
}

/// `t ×_j U` (1-based `j`).
pub fn mode_product(t: &DenseTensor, u: &DMatrix<f64>, j: usize) -> Result<DenseTensor> {
    check_mode(t, j)?;
    if u.ncols() != t.dims[j - 1] {
        return Err(Error::ShapeMismatch {
            expected: (u.nrows(), t.dims[j - 1]),
            actual: u.shape(),
        });
    }
    let mut dims = t.dims.clone();
    dims[j - 1] = u.nrows();
    mode_refold(&(u * mode_unfold(t, j)?), &dims, j)
}

/// `C ×₁ U₁ ×₂ ⋯ ×_d U_d`
pub fn tucker_apply(core: &DenseTensor, factors: &[DMatrix<f64>]) -> Result<DenseTensor> {
    if factors.len() != core.order() {
        return Err(Error::InvalidArgument(format!(
            "core has order {}, got {} factors",
            core.order(),
            factors.len()
        )));
    }
    let mut t = core.clone();
    for (j, u) in factors.iter().enumerate() {
        t = mode_product(&t, u, j + 1)?;
    }
    Ok(t)
}

/// `T ×_l U_lᵀ` over every mode except `skip` (1-based; `None` projects all modes).
pub fn project_modes(t: &DenseTensor, factors: &[DMatrix<f64>], skip: Option<usize>) -> Result<DenseTensor> {
    if factors.len() != t.order() {
        return Err(Error::InvalidArgument(format!(
            "tensor has order {}, got {} factors",
            t.order(),
            factors.len()
        )));
    }
    let mut out = t.clone();
    for (j, u) in factors.iter().enumerate() {
        if Some(j + 1) != skip {
            out = mode_product(&out, &u.transpose(), j + 1)?;
        }
    }
    Ok(out)
}

/// `U_d ⊗ ⋯ ⊗ U_{j+1} ⊗ U_{j-1} ⊗ ⋯ ⊗ U₁` (1-based `j`).
pub fn reversed_kronecker(factors: &[DMatrix<f64>], j: usize) -> DMatrix<f64> {
    let mut k = DMatrix::from_element(1, 1, 1.0);
    for (l, u) in factors.iter().enumerate().rev() {
        if l + 1 != j {
            k = k.kronecker(u);
        }
    }
    k
}
