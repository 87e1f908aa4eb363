//! Exact Bayesian linear and logistic models.
//!
//! A [`GaussianLinearModel`] has features `Φ` (n×k), prior `β ~ N(0, α²I)` and
//! noise `ε ~ N(0, σ²I)`. Everything here is closed form or a small Newton
//! solve, so these routines double as oracles for the network code.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::rng::{seeded, standard_normal_vec};
use crate::spectral::{
    dense_eigh, dense_eigvalsh, effective_dimensionality_of, SpectralError, SymmetricSpectrum,
    RANK_TOLERANCE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BayesError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("features not normalized: tr(ΦΦᵀ) = {trace} but rank = {rank}")]
    NotNormalized { trace: f64, rank: usize },
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("Newton iteration did not converge in {iterations} steps (gradient norm {gradient_norm:e})")]
    Convergence { iterations: usize, gradient_norm: f64 },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

pub type Result<T> = std::result::Result<T, BayesError>;

#[derive(Debug, Clone)]
pub struct GaussianLinearModel {
    features: DMatrix<f64>,
    prior_variance: f64,
    noise_variance: f64,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(BayesError::InvalidInput(format!("{name} must be positive and finite, got {v}")))
    }
}

impl GaussianLinearModel {
    pub fn new(features: DMatrix<f64>, prior_variance: f64, noise_variance: f64) -> Result<Self> {
        check_positive("prior variance", prior_variance)?;
        check_positive("noise variance", noise_variance)?;
        if features.ncols() == 0 {
            return Err(BayesError::InvalidInput("need at least one feature".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(BayesError::InvalidInput("features contain non-finite entries".into()));
        }
        Ok(GaussianLinearModel { features, prior_variance, noise_variance })
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn prior_variance(&self) -> f64 {
        self.prior_variance
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn k(&self) -> usize {
        self.features.ncols()
    }

    /// Posterior precision `ΦᵀΦ/σ² + I/α²`.
    pub fn precision(&self) -> DMatrix<f64> {
        let mut p = self.features.tr_mul(&self.features) / self.noise_variance;
        for i in 0..self.k() {
            p[(i, i)] += 1.0 / self.prior_variance;
        }
        p
    }

    /// Nonzero eigenvalues of `ΦᵀΦ/σ²`, computed on the smaller Gram side.
    pub fn data_gram_eigenvalues(&self) -> Result<Vec<f64>> {
        if self.n() == 0 {
            return Ok(Vec::new());
        }
        let gram = if self.n() < self.k() {
            &self.features * self.features.transpose()
        } else {
            self.features.tr_mul(&self.features)
        };
        let spec = dense_eigvalsh(&(gram / self.noise_variance))?;
        let threshold = RANK_TOLERANCE * spec.max_abs();
        Ok(spec.eigenvalues().iter().copied().filter(|l| *l > threshold).collect())
    }
}

#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub covariance_spectrum: SymmetricSpectrum,
}

/// `Φ(x)` with columns `cos(jπx), sin(jπx)` for `j = 1..k/2`.
pub fn sinusoidal_features(x: &[f64], num_features: usize) -> Result<DMatrix<f64>> {
    if num_features < 2 || num_features % 2 != 0 {
        return Err(BayesError::InvalidConfig(format!(
            "number of sinusoidal features must be even and at least 2, got {num_features}"
        )));
    }
    Ok(DMatrix::from_fn(x.len(), num_features, |i, c| {
        let j = (c / 2 + 1) as f64;
        let arg = j * std::f64::consts::PI * x[i];
        if c % 2 == 0 {
            arg.cos()
        } else {
            arg.sin()
        }
    }))
}

fn check_targets(model: &GaussianLinearModel, targets: &[f64]) -> Result<()> {
    if targets.len() != model.n() {
        return Err(BayesError::Shape(format!(
            "{} targets for {} observations",
            targets.len(),
            model.n()
        )));
    }
    Ok(())
}

fn cholesky(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    Cholesky::new(m).ok_or_else(|| BayesError::NotPositiveDefinite(what.into()))
}

/// Exact posterior moments via a Cholesky factorization of the precision.
pub fn posterior(model: &GaussianLinearModel, targets: &[f64]) -> Result<PosteriorSummary> {
    check_targets(model, targets)?;
    let chol = cholesky(model.precision(), "posterior precision")?;
    let rhs = model.features.tr_mul(&DVector::from_column_slice(targets)) / model.noise_variance;
    let mean = chol.solve(&rhs);
    let covariance = chol.inverse();
    let covariance = (&covariance + covariance.transpose()) * 0.5;
    let covariance_spectrum = dense_eigh(&covariance)?;
    Ok(PosteriorSummary { mean, covariance, covariance_spectrum })
}

/// `kα² − tr Σ`: the drop in total variance from prior to posterior.
pub fn posterior_contraction_trace(model: &GaussianLinearModel, targets: &[f64]) -> Result<f64> {
    check_targets(model, targets)?;
    let chol = cholesky(model.precision(), "posterior precision")?;
    let trace = chol.inverse().trace();
    Ok(model.k() as f64 * model.prior_variance - trace)
}

/// `α² · N_eff(ΦᵀΦ/σ², α⁻²)`.
pub fn posterior_contraction_closed_form(model: &GaussianLinearModel) -> Result<f64> {
    let gamma = model.data_gram_eigenvalues()?;
    let z = 1.0 / model.prior_variance;
    Ok(model.prior_variance * effective_dimensionality_of(&gamma, z, true)?)
}

/// Contraction of the function-space covariance at the training inputs,
/// `tr(α²ΦΦᵀ) − tr(ΦΣΦᵀ) = α²r − σ²·N_eff(ΦᵀΦ, σ²/α²)`.
///
/// Requires features scaled so that `tr(ΦΦᵀ) = rank(ΦΦᵀ)`.
pub fn function_space_contraction(model: &GaussianLinearModel) -> Result<f64> {
    let sigma2 = model.noise_variance;
    // eigenvalues of ΦᵀΦ itself
    let lambdas: Vec<f64> = model.data_gram_eigenvalues()?.iter().map(|g| g * sigma2).collect();
    let rank = lambdas.len();
    let trace = model.features.norm_squared();
    if (trace - rank as f64).abs() > 1e-6 * (rank as f64).max(1.0) {
        return Err(BayesError::NotNormalized { trace, rank });
    }
    let n_eff = effective_dimensionality_of(&lambdas, sigma2 / model.prior_variance, true)?;
    Ok(model.prior_variance * rank as f64 - sigma2 * n_eff)
}

/// Expected squared error per point of the ridge posterior mean on a fresh
/// draw of noise at the training inputs:
/// `σ²(1 + N_eff(ΦΦᵀ, σ²/α²)/n)`, which is `1 + N_eff(ΦΦᵀ, α⁻²)/n` at σ = 1.
pub fn predictive_risk(model: &GaussianLinearModel) -> Result<f64> {
    let n = model.n();
    if n == 0 {
        return Err(BayesError::InvalidInput("predictive risk needs at least one observation".into()));
    }
    let sigma2 = model.noise_variance;
    let lambdas: Vec<f64> = model.data_gram_eigenvalues()?.iter().map(|g| g * sigma2).collect();
    let n_eff = effective_dimensionality_of(&lambdas, sigma2 / model.prior_variance, true)?;
    Ok(sigma2 * (1.0 + n_eff / n as f64))
}

/// `E‖f‖²_H = N_eff(K, σ²)` for a GP posterior mean with kernel `K`.
pub fn expected_rkhs_norm(kernel: &DMatrix<f64>, noise_variance: f64) -> Result<f64> {
    check_positive("noise variance", noise_variance)?;
    let spec = dense_eigvalsh(kernel)?;
    let min = spec.eigenvalues().last().copied().unwrap_or(0.0);
    if min < -RANK_TOLERANCE * spec.max_abs() {
        return Err(BayesError::InvalidInput(format!(
            "kernel is not positive semidefinite (smallest eigenvalue {min:e})"
        )));
    }
    Ok(effective_dimensionality_of(spec.eigenvalues(), noise_variance, true)?)
}

/// Orthonormal basis of `null(Φ)` from the right singular vectors.
///
/// Rows of zeros pad `Φ` to at least k×k so the SVD returns a full `V`.
pub fn nullspace_basis(features: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = features.shape();
    let padded = if n < k {
        let mut p = DMatrix::zeros(k, k);
        p.rows_mut(0, n).copy_from(features);
        p
    } else {
        features.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let smax = svd.singular_values.max();
    let threshold = RANK_TOLERANCE * smax.max(0.0);
    let null: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| smax == 0.0 || svd.singular_values[i] <= threshold)
        .collect();
    let mut basis = DMatrix::zeros(k, null.len());
    for (c, &i) in null.iter().enumerate() {
        basis.column_mut(c).copy_from(&vt.row(i).transpose());
    }
    basis
}

/// Directions in which the posterior keeps the prior variance α².
/// Empty (k×0) when `Φ` has full column rank.
pub fn undetermined_subspace(model: &GaussianLinearModel) -> DMatrix<f64> {
    nullspace_basis(&model.features)
}

/// Random unit-norm direction in the column span of `basis`, scaled by `scale`.
pub fn random_direction_in_span(basis: &DMatrix<f64>, scale: f64, seed: u64) -> DVector<f64> {
    if basis.ncols() == 0 || scale == 0.0 {
        return DVector::zeros(basis.nrows());
    }
    let mut rng = seeded(seed);
    loop {
        let coef = DVector::from_vec(standard_normal_vec(&mut rng, basis.ncols()));
        let u = basis * coef;
        let norm = u.norm();
        if norm > 0.0 {
            return u * (scale / norm);
        }
    }
}

/// Moves the posterior mean by a random null-space vector of norm
/// `perturbation_scale` and returns the largest change in a training
/// prediction.
pub fn nullspace_prediction_invariance(
    model: &GaussianLinearModel,
    targets: &[f64],
    perturbation_scale: f64,
    seed: u64,
) -> Result<f64> {
    if model.k() <= model.n() {
        return Err(BayesError::InvalidInput("null-space check needs k > n".into()));
    }
    let post = posterior(model, targets)?;
    let u = random_direction_in_span(&undetermined_subspace(model), perturbation_scale, seed);
    let base = &model.features * &post.mean;
    let moved = &model.features * (&post.mean + u);
    Ok((moved - base).amax())
}

/// Minimum-norm least squares (`ridge = 0`) or ridge solution of `Φβ ≈ y`.
pub fn ridge_fit(features: &DMatrix<f64>, targets: &[f64], ridge: f64) -> Result<DVector<f64>> {
    if targets.len() != features.nrows() {
        return Err(BayesError::Shape(format!(
            "{} targets for {} rows",
            targets.len(),
            features.nrows()
        )));
    }
    if !(ridge >= 0.0) {
        return Err(BayesError::InvalidInput(format!("ridge must be non-negative, got {ridge}")));
    }
    let y = DVector::from_column_slice(targets);
    let svd = features.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V");
    let smax = svd.singular_values.max();
    let uty = u.tr_mul(&y);
    let mut coef = DVector::zeros(svd.singular_values.len());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > RANK_TOLERANCE * smax {
            coef[i] = s * uty[i] / (s * s + ridge);
        }
    }
    Ok(vt.tr_mul(&coef))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Logit,
}

#[derive(Debug, Clone)]
pub struct GlmModel {
    pub features: DMatrix<f64>,
    pub link: Link,
    pub map_estimate: DVector<f64>,
    pub prior_variance: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Negative log posterior of logistic regression, up to a constant.
pub fn logistic_objective(features: &DMatrix<f64>, targets: &[f64], beta: &DVector<f64>, prior_variance: f64) -> f64 {
    let eta = features * beta;
    let nll: f64 = eta.iter().zip(targets).map(|(&e, &y)| softplus(e) - y * e).sum();
    nll + beta.norm_squared() / (2.0 * prior_variance)
}

/// Data-term Hessian `ΦᵀWΦ` with `W = diag(p(1−p))`.
pub fn logistic_hessian(features: &DMatrix<f64>, beta: &DVector<f64>) -> DMatrix<f64> {
    let eta = features * beta;
    let mut weighted = features.clone();
    for (i, &e) in eta.iter().enumerate() {
        let p = sigmoid(e);
        weighted.row_mut(i).scale_mut(p * (1.0 - p));
    }
    features.tr_mul(&weighted)
}

const GLM_MAX_ITERATIONS: usize = 200;
const GLM_GRADIENT_TOLERANCE: f64 = 1e-8;

/// MAP estimate of L2-penalized logistic regression by damped Newton.
pub fn glm_fit_map(features: &DMatrix<f64>, targets: &[f64], prior_variance: f64) -> Result<GlmModel> {
    check_positive("prior variance", prior_variance)?;
    if targets.len() != features.nrows() {
        return Err(BayesError::Shape(format!(
            "{} targets for {} rows",
            targets.len(),
            features.nrows()
        )));
    }
    if targets.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(BayesError::InvalidInput("logistic targets must be 0 or 1".into()));
    }
    let k = features.ncols();
    let y = DVector::from_column_slice(targets);
    let mut beta = DVector::zeros(k);
    let grad_at = |b: &DVector<f64>| {
        let p = (features * b).map(sigmoid);
        features.tr_mul(&(p - &y)) + b / prior_variance
    };
    let mut grad = grad_at(&beta);
    let mut obj = logistic_objective(features, targets, &beta, prior_variance);
    for it in 0..GLM_MAX_ITERATIONS {
        let gnorm = grad.norm();
        if gnorm <= GLM_GRADIENT_TOLERANCE {
            return Ok(GlmModel {
                features: features.clone(),
                link: Link::Logit,
                map_estimate: beta,
                prior_variance,
                gradient_norm: gnorm,
                iterations: it,
            });
        }
        let mut h = logistic_hessian(features, &beta);
        for i in 0..k {
            h[(i, i)] += 1.0 / prior_variance;
        }
        let step = cholesky(h, "logistic Hessian")?.solve(&grad);
        let mut t = 1.0;
        let slope = grad.dot(&step);
        loop {
            let candidate = &beta - &step * t;
            let cand_obj = logistic_objective(features, targets, &candidate, prior_variance);
            // near the optimum the objective change drops below rounding
            let flat = (cand_obj - obj).abs() <= 1e-14 * obj.abs().max(1.0);
            if cand_obj <= obj - 1e-4 * t * slope || (t == 1.0 && flat) || t < 1e-10 {
                beta = candidate;
                obj = cand_obj;
                break;
            }
            t *= 0.5;
        }
        grad = grad_at(&beta);
    }
    Err(BayesError::Convergence { iterations: GLM_MAX_ITERATIONS, gradient_norm: grad.norm() })
}

/// Perturbs the MAP estimate along `null(Φ)` by `perturbation_scale` and
/// returns `(max |Δ sigmoid(Φβ)|, ‖ΔH‖_F / ‖H‖_F)` for the log-likelihood
/// Hessian `H`.
pub fn glm_nullspace_invariance(glm: &GlmModel, perturbation_scale: f64, seed: u64) -> Result<(f64, f64)> {
    if glm.features.ncols() <= glm.features.nrows() {
        return Err(BayesError::InvalidInput("null-space check needs k > n".into()));
    }
    let u = random_direction_in_span(&nullspace_basis(&glm.features), perturbation_scale, seed);
    Ok(glm_perturbation_effect(glm, &u))
}

/// Prediction and relative Hessian change for an arbitrary perturbation `u`.
pub fn glm_perturbation_effect(glm: &GlmModel, u: &DVector<f64>) -> (f64, f64) {
    let moved = &glm.map_estimate + u;
    let p0 = (&glm.features * &glm.map_estimate).map(sigmoid);
    let p1 = (&glm.features * &moved).map(sigmoid);
    let h0 = logistic_hessian(&glm.features, &glm.map_estimate);
    let h1 = logistic_hessian(&glm.features, &moved);
    let denom = h0.norm();
    let hdev = if denom > 0.0 { (h1 - &h0).norm() / denom } else { (h1 - h0).norm() };
    ((p1 - p0).amax(), hdev)
}

/// Random model for tests and checks: standard normal features.
pub fn random_gaussian_features<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> DMatrix<f64> {
    DMatrix::from_vec(n, k, standard_normal_vec(rng, n * k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(n: usize, k: usize, alpha2: f64, sigma2: f64, seed: u64) -> GaussianLinearModel {
        let phi = random_gaussian_features(&mut seeded(seed), n, k);
        GaussianLinearModel::new(phi, alpha2, sigma2).unwrap()
    }

    #[test]
    fn sinusoid_values() {
        let f = sinusoidal_features(&[0.0], 4).unwrap();
        assert_eq!(f.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 1.0, 0.0]);
        let f = sinusoidal_features(&[1.0], 2).unwrap();
        assert!((f[(0, 0)] + 1.0).abs() < 1e-12 && f[(0, 1)].abs() < 1e-12);
        let f = sinusoidal_features(&[0.5], 4).unwrap();
        let want = [0.0, 1.0, -1.0, 0.0];
        for (c, w) in want.iter().enumerate() {
            assert!((f[(0, c)] - w).abs() < 1e-12);
        }
        assert!(sinusoidal_features(&[0.0], 3).is_err());
    }

    #[test]
    fn empty_data_recovers_prior() {
        let m = GaussianLinearModel::new(DMatrix::zeros(0, 3), 2.0, 1.0).unwrap();
        let p = posterior(&m, &[]).unwrap();
        assert!(p.mean.iter().all(|v| *v == 0.0));
        assert!((p.covariance.clone() - DMatrix::identity(3, 3) * 2.0).amax() < 1e-15);
        assert!(posterior_contraction_trace(&m, &[]).unwrap().abs() < 1e-14);
    }

    #[test]
    fn scalar_posterior() {
        let m = GaussianLinearModel::new(DMatrix::from_element(1, 1, 1.0), 1.0, 1.0).unwrap();
        let p = posterior(&m, &[2.0]).unwrap();
        assert!((p.covariance[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((p.mean[0] - 1.0).abs() < 1e-15);
        assert!((posterior_contraction_trace(&m, &[2.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn theorem_one_count_on_sinusoids() {
        let x: Vec<f64> = (0..10).map(|i| -0.9 + 0.2 * i as f64).collect();
        let m = GaussianLinearModel::new(sinusoidal_features(&x, 200).unwrap(), 1.0, 1.0).unwrap();
        let p = posterior(&m, &vec![0.3; 10]).unwrap();
        let at_prior = p.covariance_spectrum.eigenvalues().iter().filter(|l| (*l - 1.0).abs() < 1e-10).count();
        assert_eq!(at_prior, 190);
        let basis = undetermined_subspace(&m);
        assert_eq!(basis.ncols(), 190);
        assert!((m.features() * &basis).norm() <= 1e-8);
        let moved = &p.covariance * &basis - &basis;
        assert!(moved.amax() < 1e-8);
    }

    #[test]
    fn full_rank_square_has_empty_null_space() {
        let m = model(6, 6, 1.0, 1.0, 3);
        assert_eq!(undetermined_subspace(&m).ncols(), 0);
    }

    #[test]
    fn orthonormal_rows_closed_form() {
        let phi = random_gaussian_features(&mut seeded(4), 12, 5);
        let q = phi.qr().q(); // 12×5 orthonormal columns
        let m = GaussianLinearModel::new(q.transpose(), 3.0, 1.0).unwrap();
        let want = 3.0 * 5.0 / (1.0 + 1.0 / 3.0);
        assert!((posterior_contraction_closed_form(&m).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn zero_features() {
        let m = GaussianLinearModel::new(DMatrix::zeros(4, 3), 1.0, 1.0).unwrap();
        assert_eq!(posterior_contraction_closed_form(&m).unwrap(), 0.0);
        assert_eq!(function_space_contraction(&m).unwrap(), 0.0);
        assert_eq!(predictive_risk(&m).unwrap(), 1.0);
        assert_eq!(expected_rkhs_norm(&DMatrix::zeros(3, 3), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn rkhs_identity_kernel() {
        assert!((expected_rkhs_norm(&DMatrix::identity(6, 6), 1.0).unwrap() - 3.0).abs() < 1e-12);
        let mut bad = DMatrix::identity(2, 2);
        bad[(1, 1)] = -1.0;
        assert!(expected_rkhs_norm(&bad, 1.0).is_err());
    }

    #[test]
    fn risk_tends_to_noise_as_prior_shrinks() {
        let phi = random_gaussian_features(&mut seeded(1), 10, 4);
        let m = GaussianLinearModel::new(phi, 1e-12, 1.0).unwrap();
        assert!((predictive_risk(&m).unwrap() - 1.0).abs() < 1e-9);
        let empty = GaussianLinearModel::new(DMatrix::zeros(0, 2), 1.0, 1.0).unwrap();
        assert!(predictive_risk(&empty).is_err());
    }

    #[test]
    fn function_space_matches_direct_trace() {
        let raw = random_gaussian_features(&mut seeded(8), 7, 12);
        let phi = &raw * (7.0 / raw.norm_squared()).sqrt();
        let (a2, s2) = (2.5, 0.7);
        let m = GaussianLinearModel::new(phi.clone(), a2, s2).unwrap();
        let mut inner = phi.tr_mul(&phi);
        for i in 0..12 {
            inner[(i, i)] += s2 / a2;
        }
        let inv = inner.try_inverse().unwrap();
        let direct = a2 * (&phi * phi.transpose()).trace() - s2 * (&phi * inv * phi.transpose()).trace();
        let got = function_space_contraction(&m).unwrap();
        assert!((got - direct).abs() <= 1e-8 * direct.abs(), "{got} vs {direct}");
        let unnormalized = GaussianLinearModel::new(raw, a2, s2).unwrap();
        assert!(matches!(function_space_contraction(&unnormalized), Err(BayesError::NotNormalized { .. })));
    }

    #[test]
    fn nullspace_invariance_and_control() {
        let x: Vec<f64> = (0..10).map(|i| -0.95 + 0.21 * i as f64).collect();
        let m = GaussianLinearModel::new(sinusoidal_features(&x, 200).unwrap(), 1.0, 1.0).unwrap();
        let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
        assert_eq!(nullspace_prediction_invariance(&m, &y, 0.0, 1).unwrap(), 0.0);
        let post = posterior(&m, &y).unwrap();
        let scale = post.mean.norm();
        let dev = nullspace_prediction_invariance(&m, &y, scale, 1).unwrap();
        assert!(dev <= 1e-8 * scale * m.features().norm(), "{dev}");
        // smallest covariance eigenvalue is the most contracted direction
        let spec = &post.covariance_spectrum;
        let top = spec.eigenvectors().unwrap().column(spec.len() - 1) * scale;
        assert!((m.features() * top).amax() > 1e-3);
    }

    #[test]
    fn ridge_fit_interpolates_min_norm() {
        let phi = random_gaussian_features(&mut seeded(2), 5, 9);
        let y = [1.0, -2.0, 0.5, 0.0, 3.0];
        let beta = ridge_fit(&phi, &y, 0.0).unwrap();
        assert!((&phi * &beta - DVector::from_column_slice(&y)).amax() < 1e-10);
        // min-norm solution lies in the row space
        assert!((nullspace_basis(&phi).tr_mul(&beta)).amax() < 1e-10);
    }

    #[test]
    fn glm_trivial_and_symmetric_cases() {
        let zero = glm_fit_map(&DMatrix::zeros(3, 2), &[1.0, 0.0, 1.0], 1.0).unwrap();
        assert!(zero.map_estimate.amax() < 1e-12);
        let a = glm_fit_map(&DMatrix::from_element(1, 1, 1.0), &[1.0], 1.0).unwrap();
        let b = glm_fit_map(&DMatrix::from_element(1, 1, -1.0), &[0.0], 1.0).unwrap();
        assert!((a.map_estimate[0] - b.map_estimate[0]).abs() < 1e-12);
        assert!(glm_fit_map(&DMatrix::zeros(1, 1), &[0.5], 1.0).is_err());
    }

    #[test]
    fn glm_separable_data_stays_finite() {
        let phi = DMatrix::from_column_slice(6, 1, &[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]);
        let glm = glm_fit_map(&phi, &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0], 10.0).unwrap();
        assert!(glm.map_estimate[0].is_finite());
        assert!(glm.gradient_norm <= 1e-8);
    }

    #[test]
    fn glm_nullspace_theorem() {
        let mut rng = seeded(12);
        let phi = random_gaussian_features(&mut rng, 10, 50);
        let y: Vec<f64> = (0..10).map(|i| (i % 2) as f64).collect();
        let glm = glm_fit_map(&phi, &y, 1.0).unwrap();
        assert_eq!(glm_nullspace_invariance(&glm, 0.0, 0).unwrap(), (0.0, 0.0));
        let (dp, dh) = glm_nullspace_invariance(&glm, 10.0, 3).unwrap();
        assert!(dp <= 1e-8 && dh <= 1e-8, "{dp} {dh}");
        let row = phi.row(0).transpose();
        let row = &row / row.norm();
        let (dp, _) = glm_perturbation_effect(&glm, &row);
        assert!(dp > 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn theorem_one_spectrum(seed in 0u64..10_000, n in 1usize..12, extra in 1usize..20,
                                alpha2 in 0.1f64..5.0, sigma2 in 0.1f64..3.0) {
            let k = n + extra;
            let m = model(n, k, alpha2, sigma2, seed);
            let p = posterior(&m, &vec![0.0; n]).unwrap();
            let eig = p.covariance_spectrum.eigenvalues();
            let at_prior = eig.iter().filter(|l| (*l - alpha2).abs() <= 1e-8).count();
            prop_assert_eq!(at_prior, k - n);
            let mut want: Vec<f64> = m.data_gram_eigenvalues().unwrap().iter().map(|g| 1.0 / (g + 1.0 / alpha2)).collect();
            want.sort_by(|a, b| b.total_cmp(a));
            for (got, w) in eig[k - n..].iter().zip(&want) {
                prop_assert!((got - w).abs() <= 1e-8);
            }
        }

        #[test]
        fn trace_matches_closed_form(seed in 0u64..10_000, n in 0usize..15, k in 1usize..15,
                                     alpha2 in 0.1f64..5.0, sigma2 in 0.1f64..3.0) {
            let m = model(n, k, alpha2, sigma2, seed);
            let t = posterior_contraction_trace(&m, &vec![0.0; n]).unwrap();
            let c = posterior_contraction_closed_form(&m).unwrap();
            prop_assert!(t >= -1e-10);
            prop_assert!((t - c).abs() <= 1e-8 * c.abs().max(1e-12) + 1e-12);
        }

        #[test]
        fn adding_an_observation_never_widens(seed in 0u64..10_000, n in 1usize..10, k in 1usize..12) {
            let big = model(n + 1, k, 2.0, 0.5, seed);
            let small = GaussianLinearModel::new(big.features().rows(0, n).into_owned(), 2.0, 0.5).unwrap();
            let tb = posterior(&big, &vec![0.0; n + 1]).unwrap().covariance.trace();
            let ts = posterior(&small, &vec![0.0; n]).unwrap().covariance.trace();
            prop_assert!(tb <= ts + 1e-12);
        }
    }
}
