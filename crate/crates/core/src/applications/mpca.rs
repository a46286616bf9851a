use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::tensor::{mode_unfold, project_modes, tucker_apply, DenseTensor};
use crate::error::{Error, Result};
use crate::manifold::ManifoldSpec;
use crate::prox::{nearest_orthogonal, scalar_lq_prox, LqExponent, LqProxSpec};
use crate::solver::{default_parameters, Variant};

/// Entries of `U` below this magnitude are zeroed before scoring.
pub const FACTOR_THRESHOLD: f64 = 1e-3;

/// Weights and step sizes of the sparse MPCA iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcaParams {
    /// Core penalty weight `α₁`.
    pub alpha1: f64,
    /// Factor penalty weight `α₂`.
    pub alpha2: f64,
    pub mu: f64,
    /// Core exponent `p`.
    pub core_exponent: f64,
    /// Factor exponent `q`.
    pub factor_exponent: f64,
    pub beta: f64,
    pub sigma: f64,
    /// Step on the slack `Y`.
    pub eta: f64,
}

impl MpcaParams {
    /// `α₁ = 0.1`, `α₂ = 0.01`, `μ = 1e-6`, `p = 2/3`, `q = 1` and
    /// `(β, γ, σ)` from the exact-variant defaults for `lipschitz`, with `η = γ`.
    pub fn defaults(lipschitz: f64) -> Result<Self> {
        let p = default_parameters(lipschitz, Variant::Exact)?;
        Ok(Self {
            alpha1: 0.1,
            alpha2: 0.01,
            mu: 1e-6,
            core_exponent: 2.0 / 3.0,
            factor_exponent: 1.0,
            beta: p.beta,
            sigma: p.sigma_h,
            eta: p.gamma,
        })
    }

    fn check(&self) -> Result<()> {
        LqExponent::from_f64(self.core_exponent)?;
        LqExponent::from_f64(self.factor_exponent)?;
        let ok = self.alpha1 >= 0.0
            && self.alpha2 >= 0.0
            && self.mu >= 0.0
            && self.beta > 0.0
            && self.sigma >= 0.0
            && self.eta > 0.0;
        if !ok {
            return Err(Error::InvalidArgument(format!("invalid MPCA parameters {self:?}")));
        }
        Ok(())
    }
}

impl Default for MpcaParams {
    fn default() -> Self {
        Self::defaults(2.0).expect("positive Lipschitz constant")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcaState {
    pub params: MpcaParams,
    pub cores: Vec<DenseTensor>,
    pub u: Vec<DMatrix<f64>>,
    pub v: Vec<DMatrix<f64>>,
    pub y: Vec<DMatrix<f64>>,
    pub lambda: Vec<DMatrix<f64>>,
}

fn check_data(data: &[DenseTensor]) -> Result<&[usize]> {
    let first = data.first().ok_or_else(|| Error::InvalidArgument("no data tensors".into()))?;
    if let Some(t) = data.iter().find(|t| t.dims() != first.dims()) {
        return Err(Error::InvalidArgument(format!(
            "data tensors have shapes {:?} and {:?}",
            first.dims(),
            t.dims()
        )));
    }
    Ok(first.dims())
}

impl MpcaState {
    /// Uniformly random factors, `V = U`, `Y = Λ = 0` and cores set to the
    /// projections `T ×₁ U₁ᵀ ⋯ ×_d U_dᵀ`.
    pub fn initial(data: &[DenseTensor], core_dims: &[usize], params: MpcaParams, seed: u64) -> Result<Self> {
        params.check()?;
        let dims = check_data(data)?;
        if core_dims.len() != dims.len() {
            return Err(Error::InvalidArgument(format!(
                "core shape {core_dims:?} does not match data shape {dims:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = Vec::new();
        for (&n, &m) in dims.iter().zip(core_dims) {
            u.push(ManifoldSpec::stiefel(n, m)?.random_point(&mut rng));
        }
        let cores = data.iter().map(|t| project_modes(t, &u, None)).collect::<Result<Vec<_>>>()?;
        Ok(Self::from_parts(params, cores, u))
    }

    /// State with the given cores and factors, `V = U` and `Y = Λ = 0`.
    pub fn from_parts(params: MpcaParams, cores: Vec<DenseTensor>, u: Vec<DMatrix<f64>>) -> Self {
        let zeros: Vec<_> = u.iter().map(|m| DMatrix::zeros(m.nrows(), m.ncols())).collect();
        Self {
            params,
            cores,
            v: u.clone(),
            y: zeros.clone(),
            lambda: zeros,
            u,
        }
    }

    fn check(&self, data: &[DenseTensor]) -> Result<()> {
        self.params.check()?;
        let dims = check_data(data)?;
        if self.cores.len() != data.len() {
            return Err(Error::InvalidArgument(format!(
                "{} cores for {} data tensors",
                self.cores.len(),
                data.len()
            )));
        }
        let d = dims.len();
        if [self.u.len(), self.v.len(), self.y.len(), self.lambda.len()] != [d; 4] {
            return Err(Error::InvalidArgument(format!("need {d} factors of each kind")));
        }
        for (j, &n) in dims.iter().enumerate() {
            let shape = (n, self.u[j].ncols());
            for (name, m) in [("U", &self.u[j]), ("V", &self.v[j]), ("Y", &self.y[j]), ("Lambda", &self.lambda[j])] {
                if m.shape() != shape {
                    return Err(Error::InvalidArgument(format!(
                        "{name}{} has shape {:?}, expected {shape:?}",
                        j + 1,
                        m.shape()
                    )));
                }
            }
        }
        let core_dims: Vec<usize> = self.u.iter().map(|m| m.ncols()).collect();
        if let Some(c) = self.cores.iter().find(|c| c.dims() != core_dims.as_slice()) {
            return Err(Error::InvalidArgument(format!(
                "core shape {:?} does not match factors {core_dims:?}",
                c.dims()
            )));
        }
        Ok(())
    }

    pub fn core_dims(&self) -> Vec<usize> {
        self.u.iter().map(|m| m.ncols()).collect()
    }
}

/// ```text
/// Σ_i ‖T_i - C_i × U‖² + α₁ Σ_i ‖C_i‖_p^p + α₂ Σ_j ‖V_j‖_q^q + (μ/2) Σ_j ‖Y_j‖²
///   - Σ_j <U_j - V_j + Y_j, Λ_j> + (β/2) Σ_j ‖U_j - V_j + Y_j‖²
/// ```
pub fn mpca_lagrangian(state: &MpcaState, data: &[DenseTensor]) -> Result<f64> {
    state.check(data)?;
    let p = &state.params;
    let pc = LqExponent::from_f64(p.core_exponent)?;
    let qv = LqExponent::from_f64(p.factor_exponent)?;
    let mut total = 0.0;
    for (t, c) in data.iter().zip(&state.cores) {
        total += t.sub(&tucker_apply(c, &state.u)?)?.norm_squared();
        total += p.alpha1 * c.data().iter().map(|&x| pc.power(x)).sum::<f64>();
    }
    for j in 0..state.u.len() {
        let r = &state.u[j] - &state.v[j] + &state.y[j];
        total += p.alpha2 * state.v[j].iter().map(|&x| qv.power(x)).sum::<f64>();
        total += 0.5 * p.mu * state.y[j].norm_squared();
        total += -r.dot(&state.lambda[j]) + 0.5 * p.beta * r.norm_squared();
    }
    Ok(total)
}

/// One sweep over `U`, `V`, the cores, `Y` and `Λ`.
///
/// Each `U_j` is the polar factor of
/// `B = Σ_i T_i(j) (⊗_{l≠j} U_l) C_i(j)ᵀ + Λ_j/2 - βY_j/2 + βV_j/2 + σU_j/2`.
/// Each entry of `V_j` minimizes `((β+σ)/2)x² + α₂|x|^q - bx` with
/// `b = βY + βU - Λ + σV`, and each core entry minimizes
/// `((2+σ)/2)x² + α₁|x|^p - bx` with `b = σC + 2[T ×₁ U₁ᵀ ⋯ ×_d U_dᵀ]`.
/// `Y_j` takes a gradient step on `L_β` with rate `η`, then `Λ_j ← Λ_j - β(U_j - V_j + Y_j)`.
pub fn mpca_step(state: &MpcaState, data: &[DenseTensor]) -> Result<MpcaState> {
    state.check(data)?;
    let p = state.params;
    let d = state.u.len();
    let mut next = state.clone();

    for j in 0..d {
        let mut b = (&next.lambda[j] - &next.y[j] * p.beta + &next.v[j] * p.beta + &next.u[j] * p.sigma) * 0.5;
        for (t, c) in data.iter().zip(&next.cores) {
            let w = mode_unfold(&project_modes(t, &next.u, Some(j + 1))?, j + 1)?;
            b += w * mode_unfold(c, j + 1)?.transpose();
        }
        next.u[j] = nearest_orthogonal(&b)?;
    }

    let a_v = 0.5 * (p.beta + p.sigma);
    for j in 0..d {
        let b = &next.y[j] * p.beta + &next.u[j] * p.beta - &next.lambda[j] + &next.v[j] * p.sigma;
        let mut v = b.clone();
        for x in v.iter_mut() {
            *x = scalar_lq_prox(&LqProxSpec::new(a_v, -*x, p.alpha2, p.factor_exponent))?;
        }
        next.v[j] = v;
    }

    let a_c = 0.5 * (2.0 + p.sigma);
    for (t, c) in data.iter().zip(next.cores.iter_mut()) {
        let g = project_modes(t, &next.u, None)?;
        for (x, gv) in c.data_mut().iter_mut().zip(g.data()) {
            let b = p.sigma * *x + 2.0 * gv;
            *x = scalar_lq_prox(&LqProxSpec::new(a_c, -b, p.alpha1, p.core_exponent))?;
        }
    }

    for j in 0..d {
        let grad = &next.y[j] * (p.beta + p.mu) + &next.u[j] * p.beta - &next.v[j] * p.beta - &next.lambda[j];
        next.y[j] -= grad * p.eta;
    }

    for j in 0..d {
        let r = &next.u[j] - &next.v[j] + &next.y[j];
        next.lambda[j] -= r * p.beta;
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcaMetrics {
    /// Mean of `‖T_true - C × Ū‖² / ‖T_true‖²`.
    pub rel_err: f64,
    /// Sample standard deviation of the per-tensor relative errors.
    pub rel_err_sd: f64,
    /// `(1/d) Σ_j ‖Ū_jᵀŪ_j - I‖_F`
    pub orth_violation: f64,
    /// Fraction of nonzero core entries.
    pub core_sparsity: f64,
    /// Fraction of nonzero entries of `Ū`.
    pub factor_sparsity: f64,
}

/// `U` with entries below [`FACTOR_THRESHOLD`] in magnitude set to zero.
pub fn threshold_factor(u: &DMatrix<f64>) -> DMatrix<f64> {
    u.map(|v| if v.abs() < FACTOR_THRESHOLD { 0.0 } else { v })
}

pub fn mpca_metrics(state: &MpcaState, truth: &[DenseTensor]) -> Result<MpcaMetrics> {
    if truth.len() != state.cores.len() {
        return Err(Error::InvalidArgument(format!(
            "{} truth tensors for {} cores",
            truth.len(),
            state.cores.len()
        )));
    }
    let ubar: Vec<_> = state.u.iter().map(threshold_factor).collect();
    let mut errs = Vec::with_capacity(truth.len());
    for (t, c) in truth.iter().zip(&state.cores) {
        let diff = t.sub(&tucker_apply(c, &ubar)?)?.norm_squared();
        let denom = t.norm_squared();
        errs.push(if denom > 0.0 { diff / denom } else { diff });
    }
    let n = errs.len() as f64;
    let rel_err = errs.iter().sum::<f64>() / n;
    let rel_err_sd = if errs.len() > 1 {
        (errs.iter().map(|e| (e - rel_err).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let orth_violation = ubar
        .iter()
        .map(|u| (u.transpose() * u - DMatrix::identity(u.ncols(), u.ncols())).norm())
        .sum::<f64>()
        / ubar.len() as f64;
    let core_entries: usize = state.cores.iter().map(DenseTensor::len).sum();
    let core_nnz: usize = state.cores.iter().map(DenseTensor::nnz).sum();
    let factor_entries: usize = ubar.iter().map(|u| u.len()).sum();
    let factor_nnz: usize = ubar.iter().map(|u| u.iter().filter(|v| **v != 0.0).count()).sum();
    Ok(MpcaMetrics {
        rel_err,
        rel_err_sd,
        orth_violation,
        core_sparsity: core_nnz as f64 / core_entries as f64,
        factor_sparsity: factor_nnz as f64 / factor_entries as f64,
    })
}

/// Synthetic sparse Tucker data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcaDataSpec {
    pub dims: Vec<usize>,
    pub core_dims: Vec<usize>,
    pub tensors: usize,
    /// Fraction of nonzero core entries.
    pub core_density: f64,
    /// Fraction of nonzero factor entries.
    pub factor_density: f64,
    pub noise: f64,
}

impl MpcaDataSpec {
    /// Cubic shapes with 30% dense cores, factors of density 1/6 and noise 0.001.
    pub fn cubic(order: usize, n: usize, m: usize, tensors: usize) -> Self {
        Self {
            dims: vec![n; order],
            core_dims: vec![m; order],
            tensors,
            core_density: 0.3,
            factor_density: 1.0 / 6.0,
            noise: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MpcaData {
    pub factors: Vec<DMatrix<f64>>,
    pub cores: Vec<DenseTensor>,
    /// Noiseless `C_i × U`.
    pub truth: Vec<DenseTensor>,
    pub observed: Vec<DenseTensor>,
}

/// Orthonormal `n × m` factor with `round(density·n·m)` nonzeros on disjoint
/// row supports.
pub fn sparse_orthonormal<R: Rng + ?Sized>(n: usize, m: usize, density: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    let nnz = (density * (n * m) as f64).round() as usize;
    if m == 0 || nnz < m || nnz > n {
        return Err(Error::InvalidArgument(format!(
            "cannot place {nnz} nonzeros in an orthonormal {n}x{m} factor with disjoint row supports"
        )));
    }
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(rng);
    let mut u = DMatrix::zeros(n, m);
    for (k, &r) in rows[..nnz].iter().enumerate() {
        let v: f64 = rng.sample(StandardNormal);
        u[(r, k % m)] = if v.abs() < 0.1 { 0.1f64.copysign(v) } else { v };
    }
    for mut col in u.column_iter_mut() {
        let s = col.norm();
        col /= s;
    }
    Ok(u)
}

pub fn generate_mpca_data(spec: &MpcaDataSpec, seed: u64) -> Result<MpcaData> {
    if spec.dims.is_empty() || spec.dims.len() != spec.core_dims.len() || spec.tensors == 0 {
        return Err(Error::InvalidArgument(format!(
            "inconsistent shapes: dims {:?}, core {:?}, {} tensors",
            spec.dims, spec.core_dims, spec.tensors
        )));
    }
    if spec.dims.iter().zip(&spec.core_dims).any(|(&n, &m)| m == 0 || m > n) {
        return Err(Error::InvalidArgument(format!(
            "core shape {:?} must fit inside {:?}",
            spec.core_dims, spec.dims
        )));
    }
    if !((0.0..=1.0).contains(&spec.core_density) && spec.noise >= 0.0) {
        return Err(Error::InvalidArgument("core density must lie in [0, 1] and noise be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factors = spec
        .dims
        .iter()
        .zip(&spec.core_dims)
        .map(|(&n, &m)| sparse_orthonormal(n, m, spec.factor_density, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let size: usize = spec.core_dims.iter().product();
    let nnz = (spec.core_density * size as f64).round() as usize;
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut cores = Vec::with_capacity(spec.tensors);
    let mut truth = Vec::with_capacity(spec.tensors);
    let mut observed = Vec::with_capacity(spec.tensors);
    for _ in 0..spec.tensors {
        let mut idx: Vec<usize> = (0..size).collect();
        idx.shuffle(&mut rng);
        let mut values = vec![0.0; size];
        for &k in &idx[..nnz] {
            values[k] = rng.random_range(-1.0..=1.0);
        }
        let core = DenseTensor::new(spec.core_dims.clone(), values)?;
        let t = tucker_apply(&core, &factors)?;
        let mut obs = t.clone();
        for x in obs.data_mut() {
            *x += noise.sample(&mut rng);
        }
        cores.push(core);
        truth.push(t);
        observed.push(obs);
    }
    Ok(MpcaData {
        factors,
        cores,
        truth,
        observed,
    })
}

#[derive(Debug, Clone)]
pub struct MpcaRun {
    pub state: MpcaState,
    /// `L_β` after each sweep, starting with the initial state.
    pub lagrangian: Vec<f64>,
    pub metrics: MpcaMetrics,
}

pub fn run_mpca(
    data: &[DenseTensor],
    truth: &[DenseTensor],
    core_dims: &[usize],
    params: MpcaParams,
    iters: usize,
    seed: u64,
) -> Result<MpcaRun> {
    let mut state = MpcaState::initial(data, core_dims, params, seed)?;
    let mut lagrangian = vec![mpca_lagrangian(&state, data)?];
    for _ in 0..iters {
        state = mpca_step(&state, data)?;
        lagrangian.push(mpca_lagrangian(&state, data)?);
    }
    let metrics = mpca_metrics(&state, truth)?;
    Ok(MpcaRun {
        state,
        lagrangian,
        metrics,
    })
}
