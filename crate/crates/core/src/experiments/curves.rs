use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{gen_bnn_regression, gen_double_descent_with, BNN_NOISE_STD};
use super::{pool, ExperimentError, Result};
use crate::bayes_linear::{
    nullspace_basis, posterior, random_direction_in_span, random_gaussian_features, ridge_fit, sinusoidal_features,
    GaussianLinearModel,
};
use crate::nn::{full_hessian, init_params, laplace_precision, output_jacobian, train, Activation, MlpSpec, TrainConfig};
use crate::rng::{derive_seed, seeded, standard_normal_vec};
use crate::spectral::{dense_eigvalsh, effective_dimensionality_of};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Sinusoidal,
    Gaussian,
}

impl std::str::FromStr for FeatureKind {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sinusoidal" => Ok(FeatureKind::Sinusoidal),
            "gaussian" => Ok(FeatureKind::Gaussian),
            other => Err(ExperimentError::InvalidConfig(format!("unknown feature kind '{other}'"))),
        }
    }
}

/// Inputs `x ~ U(−1, 1)` and features of the requested kind.
fn draw_features(kind: FeatureKind, n: usize, k: usize, seed: u64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let mut rng = seeded(seed);
    match kind {
        FeatureKind::Sinusoidal => {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let phi = sinusoidal_features(&x, k)?;
            Ok((x, phi))
        }
        FeatureKind::Gaussian => Ok((Vec::new(), random_gaussian_features(&mut rng, n, k))),
    }
}

/// Posterior contraction as observations arrive one at a time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionConfig {
    pub k: usize,
    pub n_max: usize,
    pub n_step: usize,
    pub alpha: f64,
    pub noise_std: f64,
    /// Regularizer for the covariance spectrum; `None` uses α.
    pub z_covariance: Option<f64>,
    /// Regularizer for the Hessian spectrum; `None` uses α⁻².
    pub z_hessian: Option<f64>,
    pub seed: u64,
}

impl ContractionConfig {
    pub fn new(seed: u64) -> Self {
        ContractionConfig {
            k: 200,
            n_max: 500,
            n_step: 1,
            alpha: 5.0,
            noise_std: 1.0,
            z_covariance: None,
            z_hessian: None,
            seed,
        }
    }

    pub fn z_cov(&self) -> f64 {
        self.z_covariance.unwrap_or(self.alpha)
    }

    pub fn z_hess(&self) -> f64 {
        self.z_hessian.unwrap_or(1.0 / (self.alpha * self.alpha))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionRecord {
    pub n: usize,
    pub n_eff_covariance: f64,
    pub n_eff_hessian: f64,
    /// `kα² − tr Σ`.
    pub contraction: f64,
    /// `|k − N_eff(P, 1/z) − N_eff(Σ, z)|` with `P` the posterior precision.
    pub identity_residual: f64,
}

pub fn contraction_curve(cfg: &ContractionConfig) -> Result<Vec<ContractionRecord>> {
    if cfg.n_step == 0 || !(cfg.alpha > 0.0) || !(cfg.noise_std > 0.0) {
        return Err(ExperimentError::InvalidConfig("n_step, alpha and noise_std must be positive".into()));
    }
    let (z_cov, z_hess) = (cfg.z_cov(), cfg.z_hess());
    if !(z_cov > 0.0 && z_hess > 0.0) {
        return Err(ExperimentError::InvalidConfig("regularizers must be positive".into()));
    }
    let prior = cfg.alpha * cfg.alpha;
    let noise = cfg.noise_std * cfg.noise_std;
    let (x, phi_all) = draw_features(FeatureKind::Sinusoidal, cfg.n_max, cfg.k, cfg.seed)?;
    let eps = standard_normal_vec(&mut seeded(derive_seed(cfg.seed, &[1])), cfg.n_max);
    let y: Vec<f64> = x.iter().zip(&eps).map(|(xi, e)| (std::f64::consts::PI * xi).sin() + cfg.noise_std * e).collect();
    let k = cfg.k as f64;

    let mut out = Vec::new();
    for n in (0..=cfg.n_max).step_by(cfg.n_step) {
        let record = if n == 0 {
            let cov = vec![prior; cfg.k];
            let prec = vec![1.0 / prior; cfg.k];
            let n_cov = effective_dimensionality_of(&cov, z_cov, false)?;
            let n_prec = effective_dimensionality_of(&prec, 1.0 / z_cov, false)?;
            ContractionRecord {
                n,
                n_eff_covariance: n_cov,
                n_eff_hessian: 0.0,
                contraction: 0.0,
                identity_residual: (k - n_prec - n_cov).abs(),
            }
        } else {
            let model = GaussianLinearModel::new(phi_all.rows(0, n).into_owned(), prior, noise)?;
            let post = posterior(&model, &y[..n])?;
            let cov = post.covariance_spectrum.eigenvalues();
            let prec = dense_eigvalsh(&model.precision())?;
            let n_cov = effective_dimensionality_of(cov, z_cov, false)?;
            let n_prec = effective_dimensionality_of(prec.eigenvalues(), 1.0 / z_cov, false)?;
            let n_hess = effective_dimensionality_of(&model.data_gram_eigenvalues()?, z_hess, false)?;
            ContractionRecord {
                n,
                n_eff_covariance: n_cov,
                n_eff_hessian: n_hess,
                contraction: k * prior - post.covariance.trace(),
                identity_residual: (k - n_prec - n_cov).abs(),
            }
        };
        out.push(record);
    }
    Ok(out)
}

/// Forced-eigenvalue check on one random linear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremConfig {
    pub k: usize,
    pub n: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub features: FeatureKind,
    pub tolerance: f64,
    pub seed: u64,
}

impl TheoremConfig {
    pub fn new(k: usize, n: usize, alpha: f64, seed: u64) -> Self {
        TheoremConfig { k, n, alpha, sigma: 1.0, features: FeatureKind::Sinusoidal, tolerance: 1e-8, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub k: usize,
    pub n: usize,
    pub prior_variance: f64,
    pub rank: usize,
    pub expected_prior_eigenvalues: usize,
    pub prior_variance_eigenvalues: usize,
    /// Largest gap between the remaining eigenvalues and `(γᵢ + α⁻²)⁻¹`.
    pub max_contracted_deviation: f64,
    pub nullspace_dim: usize,
    /// Largest change in a training prediction after a null-space move of norm `‖μ‖`.
    pub nullspace_prediction_deviation: f64,
    pub pass: bool,
}

pub fn theorem_check(cfg: &TheoremConfig) -> Result<TheoremReport> {
    if cfg.k == 0 || cfg.n == 0 {
        return Err(ExperimentError::InvalidConfig("k and n must be positive".into()));
    }
    let (_, phi) = draw_features(cfg.features, cfg.n, cfg.k, cfg.seed)?;
    let prior = cfg.alpha * cfg.alpha;
    let model = GaussianLinearModel::new(phi, prior, cfg.sigma * cfg.sigma)?;
    let y = standard_normal_vec(&mut seeded(derive_seed(cfg.seed, &[1])), cfg.n);
    let post = posterior(&model, &y)?;
    let gammas = model.data_gram_eigenvalues()?;
    let rank = gammas.len();
    let expected = cfg.k - rank;

    let eig = post.covariance_spectrum.eigenvalues();
    let forced = eig.iter().filter(|l| (*l - prior).abs() <= cfg.tolerance).count();
    // descending covariance eigenvalues: the α² block, then (γ + α⁻²)⁻¹ for increasing γ
    let mut contracted: Vec<f64> = gammas.iter().map(|g| 1.0 / (g + 1.0 / prior)).collect();
    contracted.sort_by(|a, b| b.total_cmp(a));
    let max_dev = eig[expected..].iter().zip(&contracted).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let basis = nullspace_basis(model.features());
    let scale = post.mean.norm().max(1.0);
    let u = random_direction_in_span(&basis, scale, derive_seed(cfg.seed, &[2]));
    let moved = model.features() * (&post.mean + &u);
    let base = model.features() * &post.mean;
    let pred_dev = (moved - &base).amax() / base.amax().max(1.0);

    Ok(TheoremReport {
        k: cfg.k,
        n: cfg.n,
        prior_variance: prior,
        rank,
        expected_prior_eigenvalues: expected,
        prior_variance_eigenvalues: forced,
        max_contracted_deviation: max_dev,
        nullspace_dim: basis.ncols(),
        nullspace_prediction_deviation: pred_dev,
        pass: forced == expected && max_dev <= cfg.tolerance && basis.ncols() == expected && pred_dev <= cfg.tolerance,
    })
}

/// Linear double-descent sweep over the feature count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleDescentConfig {
    pub n: usize,
    pub informative: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub k_step: usize,
    pub seeds: usize,
    /// Regularizer for `N_eff(ΦᵀΦ, z)`.
    pub z: f64,
    /// Ridge penalty; zero gives the minimum-norm least-squares fit.
    pub ridge: f64,
    pub seed: u64,
    pub jobs: usize,
}

impl DoubleDescentConfig {
    pub fn new(seed: u64) -> Self {
        DoubleDescentConfig { n: 200, informative: 20, k_min: 5, k_max: 400, k_step: 5, seeds: 10, z: 1.0, ridge: 0.0, seed, jobs: 1 }
    }

    pub fn k_values(&self) -> Vec<usize> {
        (self.k_min..=self.k_max).step_by(self.k_step.max(1)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleDescentRow {
    pub k: usize,
    pub seed: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub n_eff: f64,
}

impl DoubleDescentRow {
    pub const CSV_COLUMNS: [&'static str; 5] = ["k", "seed", "train_loss", "test_loss", "n_eff"];
}

fn mse(features: &DMatrix<f64>, beta: &nalgebra::DVector<f64>, targets: &[f64]) -> f64 {
    let pred = features * beta;
    pred.iter().zip(targets).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / targets.len() as f64
}

fn double_descent_rep(cfg: &DoubleDescentConfig, rep: usize) -> Result<Vec<DoubleDescentRow>> {
    let data = gen_double_descent_with(cfg.n, cfg.k_max, cfg.informative, derive_seed(cfg.seed, &[rep as u64]));
    cfg.k_values()
        .into_iter()
        .map(|k| {
            let tr = data.train_features.columns(0, k).into_owned();
            let te = data.test_features.columns(0, k).into_owned();
            let beta = ridge_fit(&tr, &data.train_targets, cfg.ridge)?;
            let gram = if cfg.n < k { &tr * tr.transpose() } else { tr.tr_mul(&tr) };
            let spectrum = dense_eigvalsh(&gram)?;
            Ok(DoubleDescentRow {
                k,
                seed: rep,
                train_loss: mse(&tr, &beta, &data.train_targets),
                test_loss: mse(&te, &beta, &data.test_targets),
                n_eff: effective_dimensionality_of(spectrum.eigenvalues(), cfg.z, true)?,
            })
        })
        .collect()
}

/// Rows ordered by `k`, then repetition.
pub fn double_descent_linear(cfg: &DoubleDescentConfig) -> Result<Vec<DoubleDescentRow>> {
    if cfg.n == 0 || cfg.seeds == 0 || cfg.k_step == 0 || cfg.k_min == 0 || cfg.k_min > cfg.k_max {
        return Err(ExperimentError::InvalidConfig("need n, seeds, k_step ≥ 1 and 1 ≤ k_min ≤ k_max".into()));
    }
    if !(cfg.z > 0.0) {
        return Err(ExperimentError::InvalidConfig(format!("z must be positive, got {}", cfg.z)));
    }
    let per_rep: Vec<Vec<DoubleDescentRow>> =
        pool(cfg.jobs)?.install(|| (0..cfg.seeds).into_par_iter().map(|r| double_descent_rep(cfg, r)).collect::<Result<_>>())?;
    let ks = cfg.k_values().len();
    Ok((0..ks).flat_map(|i| per_rep.iter().map(move |rows| rows[i])).collect())
}

/// Laplace posterior of a small tanh regression net as the data grows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnnConfig {
    pub n_values: Vec<usize>,
    pub hidden: Vec<usize>,
    pub prior_variance: f64,
    pub learning_rate: f64,
    pub steps: usize,
    /// Regularizer for the covariance spectrum.
    pub z: f64,
    pub seed: u64,
}

impl BnnConfig {
    pub fn new(seed: u64) -> Self {
        BnnConfig {
            n_values: vec![10, 50, 100, 500],
            hidden: vec![20, 20],
            prior_variance: 1.0,
            learning_rate: 0.01,
            steps: 5000,
            z: 1.0,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BnnRecord {
    pub n: usize,
    /// From the Gauss-Newton precision `JᵀJ/σ² + I/v`.
    pub n_eff_covariance: f64,
    /// From the exact Hessian precision, positive eigenvalues only.
    pub n_eff_covariance_hessian: f64,
    pub train_loss: f64,
    /// Gradient norm of the negative log posterior at the trained point.
    pub gradient_norm: f64,
    /// Precision eigenvalues at or below zero, left out of the covariance.
    pub nonpositive_eigenvalues: usize,
}

/// Adam with the learning rate annealed over three stages stands in for the
/// MAP search. The covariance uses the Gauss-Newton precision, which matches
/// the Hessian at an interpolating MAP and stays positive definite off it.
pub fn bnn_laplace_curve(cfg: &BnnConfig) -> Result<Vec<BnnRecord>> {
    if !(cfg.prior_variance > 0.0 && cfg.z > 0.0) {
        return Err(ExperimentError::InvalidConfig("prior variance and z must be positive".into()));
    }
    let spec = MlpSpec::new(3, 1, cfg.hidden.clone(), Activation::Tanh, false)?;
    let noise = BNN_NOISE_STD * BNN_NOISE_STD;
    cfg.n_values
        .iter()
        .map(|&n| {
            let data = gen_bnn_regression(n, derive_seed(cfg.seed, &[0]));
            let data_scale = n as f64 / (2.0 * noise);
            let mut tc = TrainConfig::adam(cfg.learning_rate, cfg.steps, derive_seed(cfg.seed, &[1, n as u64]));
            tc.weight_decay = 1.0 / (data_scale * cfg.prior_variance);
            let mut params = init_params(&spec, derive_seed(cfg.seed, &[2]));
            for (stage, factor) in [1.0, 0.1, 0.01].into_iter().enumerate() {
                let mut staged = tc.clone();
                staged.learning_rate *= factor;
                staged.seed = derive_seed(tc.seed, &[stage as u64]);
                params = train(&spec, &params, &data, &staged)?.params;
            }
            let identity = DMatrix::identity(spec.param_count(), spec.param_count()) / cfg.prior_variance;
            let jac = output_jacobian(&spec, &params, &data.inputs)?;
            let ggn = dense_eigvalsh(&(jac.tr_mul(&jac) / noise + &identity))?;
            let covariance: Vec<f64> = ggn.eigenvalues().iter().map(|m| 1.0 / m).collect();
            let h = full_hessian(&spec, &params, &data, 0.0)?.matrix;
            let eig = dense_eigvalsh(&(h * data_scale + identity))?;
            let positive: Vec<f64> = eig.eigenvalues().iter().filter(|m| **m > 0.0).map(|m| 1.0 / m).collect();
            let gradient_norm = laplace_precision(&spec, &params, &data, cfg.prior_variance, data_scale)?.gradient_norm();
            Ok(BnnRecord {
                n,
                n_eff_covariance: effective_dimensionality_of(&covariance, cfg.z, false)?,
                n_eff_covariance_hessian: effective_dimensionality_of(&positive, cfg.z, false)?,
                train_loss: crate::nn::loss(&spec, &params, &data, 0.0)?.data,
                gradient_norm,
                nonpositive_eigenvalues: eig.len() - positive.len(),
            })
        })
        .collect()
}
