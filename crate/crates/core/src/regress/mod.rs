//! Exact GP regression with the induced kernel, and its kernel ridge
//! regression reading.
//!
//! With `r = y − h(X)` and `A = K + σ_ε² I`, the posterior is
//!
//! ```text
//! mean(x)    = h(x) + k(X, x)ᵀ β,            β = A⁻¹ r
//! cov(x, x') = k(x, x') − k(X, x)ᵀ A⁻¹ k(X, x')
//! ```
//!
//! and `β` is also the minimiser of `‖r − Kβ‖² + σ_ε² βᵀKβ`.

mod optimize;
mod persist;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::kernel::{cross_block, cross_gram, gram, kernel_value, KernelSpec};

pub use optimize::{optimize_hyperparams, OptimizerConfig, OptimizationResult, ParamId, TraceEntry};
pub use persist::{load_model, model_to_string};

/// Jitter ladder as multiples of the mean Gram diagonal.
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

/// Frozen regression state.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub spec: KernelSpec,
    pub data: Dataset,
    pub noise_var: f64,
    pub jitter_used: f64,
    /// Prior Gram matrix `K` (no noise, no jitter).
    pub gram: DMatrix<f64>,
    pub h_train: DVector<f64>,
    pub chol: Cholesky<f64, Dyn>,
    pub beta: DVector<f64>,
    pub lml: f64,
}

/// Cholesky factor of `K + (noise + jitter) I` and the jitter used, escalating the jitter by
/// decades from `1e-10` to `1e-4` times the mean diagonal when needed.
pub fn factor_with_jitter(k: &DMatrix<f64>, noise_var: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let m = k.nrows();
    let mean_diag = k.diagonal().mean().abs();
    let mut ladder = vec![0.0];
    let mut j = JITTER_START;
    while j <= JITTER_MAX * (1.0 + 1e-9) {
        ladder.push(j * mean_diag);
        j *= 10.0;
    }
    for jitter in ladder {
        let mut a = k.clone();
        for i in 0..m {
            a[(i, i)] += noise_var + jitter;
        }
        if let Some(c) = Cholesky::new(a) {
            return Ok((c, jitter));
        }
    }
    let mut a = k.clone();
    for i in 0..m {
        a[(i, i)] += noise_var;
    }
    let min_eigenvalue = SymmetricEigen::new(a).eigenvalues.min();
    Err(Error::NotPositiveDefinite { jitter: JITTER_MAX * mean_diag, min_eigenvalue })
}

/// Factorises with a fixed jitter (used when reloading a model).
pub(crate) fn factor_exact(k: &DMatrix<f64>, shift: f64) -> Result<Cholesky<f64, Dyn>> {
    let mut a = k.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += shift;
    }
    Cholesky::new(a.clone()).ok_or_else(|| Error::NotPositiveDefinite {
        jitter: shift,
        min_eigenvalue: SymmetricEigen::new(a).eigenvalues.min(),
    })
}

fn lml_from_parts(chol: &Cholesky<f64, Dyn>, resid: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let m = resid.len() as f64;
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    -0.5 * resid.dot(beta) - 0.5 * log_det - 0.5 * m * (2.0 * std::f64::consts::PI).ln()
}

/// Assembles the Gram matrix, factorises `K + σ_ε² I` and solves for `β`.
pub fn fit(spec: &KernelSpec, data: &Dataset, noise_var: f64) -> Result<TrainedModel> {
    if !(noise_var >= 0.0 && noise_var.is_finite()) {
        return Err(Error::InvalidSpec(format!("noise variance {noise_var} must be finite and ≥ 0")));
    }
    data.validate()?;
    check_dim(spec.d_in, data.d_in())?;
    let (h_train, k) = gram(spec, &data.x)?;
    let (chol, jitter_used) = factor_with_jitter(&k, noise_var)?;
    let resid = &data.y - &h_train;
    let beta = chol.solve(&resid);
    let lml = lml_from_parts(&chol, &resid, &beta);
    Ok(TrainedModel {
        spec: spec.clone(),
        data: data.clone(),
        noise_var,
        jitter_used,
        gram: k,
        h_train,
        chol,
        beta,
        lml,
    })
}

/// Log marginal likelihood of the data under the prior plus noise.
pub fn log_marginal_likelihood(spec: &KernelSpec, data: &Dataset, noise_var: f64) -> Result<f64> {
    fit(spec, data, noise_var).map(|m| m.lml)
}

fn column(k: &DMatrix<f64>, j: usize) -> DVector<f64> {
    k.column(j).into_owned()
}

/// `Σ_i a_i b_i` in index order, shared by pointwise and batch paths.
fn ordered_dot(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

impl TrainedModel {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `L⁻¹ k(X, x)` for each column of a cross block.
    fn whiten(&self, kx: &DVector<f64>) -> DVector<f64> {
        self.chol.l_dirty().solve_lower_triangular(kx).expect("nonzero diagonal")
    }

    /// Posterior means and variances at every row of `points`, from one
    /// cross-kernel assembly. Each entry equals the pointwise result exactly.
    pub fn predict(&self, points: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let block = cross_block(&self.spec, &self.data.x, points)?;
        let n = points.nrows();
        let mut mean = DVector::zeros(n);
        let mut var = DVector::zeros(n);
        for j in 0..n {
            let kx = column(&block.k, j);
            mean[j] = block.h_b[j] + ordered_dot(&kx, &self.beta);
            let v = self.whiten(&kx);
            var[j] = block.var_b[j] - ordered_dot(&v, &v);
        }
        Ok((mean, var))
    }
}

fn as_row(x: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, x.len(), x)
}

/// Posterior mean at `x`.
pub fn posterior_mean(model: &TrainedModel, x: &[f64]) -> Result<f64> {
    check_dim(model.spec.d_in, x.len())?;
    let block = cross_block(&model.spec, &model.data.x, &as_row(x))?;
    Ok(block.h_b[0] + ordered_dot(&column(&block.k, 0), &model.beta))
}

/// Posterior covariance between `x` and `x2`.
pub fn posterior_cov(model: &TrainedModel, x: &[f64], x2: &[f64]) -> Result<f64> {
    check_dim(model.spec.d_in, x.len())?;
    check_dim(model.spec.d_in, x2.len())?;
    let (_, _, k1) = cross_gram(&model.spec, &model.data.x, &as_row(x))?;
    let (_, _, k2) = cross_gram(&model.spec, &model.data.x, &as_row(x2))?;
    let (_, _, prior) = kernel_value(&model.spec, x, x2)?;
    let v1 = model.whiten(&column(&k1, 0));
    let v2 = model.whiten(&column(&k2, 0));
    Ok(prior - ordered_dot(&v1, &v2))
}

/// `⟨f, g⟩` for `f = Σ c1_m k(p1_m, ·)` and `g = Σ c2_m k(p2_m, ·)`.
pub fn rkhs_inner(
    points1: &DMatrix<f64>,
    coeffs1: &DVector<f64>,
    points2: &DMatrix<f64>,
    coeffs2: &DVector<f64>,
    spec: &KernelSpec,
) -> Result<f64> {
    check_dim(points1.nrows(), coeffs1.len())?;
    check_dim(points2.nrows(), coeffs2.len())?;
    let (_, _, k12) = cross_gram(spec, points1, points2)?;
    let mut total = 0.0;
    for i in 0..coeffs1.len() {
        for j in 0..coeffs2.len() {
            total += coeffs1[i] * coeffs2[j] * k12[(i, j)];
        }
    }
    Ok(total)
}

/// Squared RKHS norm `βᵀ K β` of the posterior-mean correction.
pub fn rkhs_norm_sq(model: &TrainedModel) -> f64 {
    model.beta.dot(&(&model.gram * &model.beta))
}

/// `‖y − h − Kβ‖² + σ_ε² βᵀKβ` for a candidate coefficient vector.
pub fn krr_objective(model: &TrainedModel, candidate: &DVector<f64>) -> Result<f64> {
    check_dim(model.len(), candidate.len())?;
    let k_beta = &model.gram * candidate;
    let resid = &model.data.y - &model.h_train - &k_beta;
    Ok(resid.norm_squared() + model.noise_var * candidate.dot(&k_beta))
}

/// Normwise backward error of `β` as a solution of
/// `(K + (σ_ε² + jitter) I) β = y − h`.
pub fn beta_residual(model: &TrainedModel) -> f64 {
    let mut a = model.gram.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += model.noise_var + model.jitter_used;
    }
    let r = &model.data.y - &model.h_train;
    let res = &a * &model.beta - &r;
    let scale = a.norm() * model.beta.norm() + r.norm();
    if scale == 0.0 {
        0.0
    } else {
        res.norm() / scale
    }
}
